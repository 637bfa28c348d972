"""Experiment configurations and the FE problems they describe.

Four scenarios are supported:

``uniaxial``   displacement-controlled compression of a rectangle, scalar
               reaction-force observations, learned E(eps).
``brazilian``  load-controlled diametral compression of a disc, displacement
               field observations, learned Lame moduli.
``torsion``    twisted 3D plate with a hole, used for zero-shot evaluation of a
               Lame model trained elsewhere.
``thermal``    transient conduction through a copper ring into a sample
               plate, temperature observations, learned k(T).

Configs are JSON documents with a ``schema_version`` and SI, unit-suffixed
keys.  ``default_config(kind)`` gives the reference setting of each scenario.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import adjoint as adj
from . import constitutive as cm
from . import mesh as meshmod
from .assembly import DirichletBC, NewtonConfig, RegionProperties
from .errors import InvalidArgumentError
from .fespace import build_space
from .problems import StaticElasticityProblem, TransientHeatProblem

SCHEMA_VERSION = 1
KINDS = ("uniaxial", "brazilian", "torsion", "thermal")


class ConfigError(InvalidArgumentError):
    """Invalid configuration value; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_step_cuts: int = 6


@dataclass(frozen=True)
class NetworkConfig:
    layer_widths: tuple[int, ...] = (2, 30, 30, 30, 1)
    features: str = "invariants"
    output_gain: float = 0.1
    seed: int = 0
    input_scale: float = 100.0


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    geometry: dict
    mesh: dict
    element_degree: int
    loading: dict
    material: dict
    network: NetworkConfig = field(default_factory=NetworkConfig)
    noise_fraction: float = 0.01
    train_indices: tuple[int, ...] = ()
    test_indices: tuple[int, ...] = ()
    epochs: int = 100
    checkpoint_epochs: tuple[int, ...] = ()
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("train_indices", "test_indices", "checkpoint_epochs"):
            d[k] = list(d[k])
        d["network"]["layer_widths"] = list(d["network"]["layer_widths"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in changes.items():
            target = d
            parts = key.split(".")
            for p in parts[:-1]:
                target = target[p]
            target[parts[-1]] = value
        return config_from_dict(d)


# ------------------------------------------------------------------ parsing
def _need(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    if key not in d:
        raise ConfigError(f"{path}.{key}" if path else key, "missing")
    return d[key]


def _num(value, path, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, f"must be > 0, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(path, f"must be >= 0, got {value!r}")
    return int(value) if integer else float(value)


_REQUIRED = {
    "uniaxial": {
        "geometry": ("width_m", "height_m"),
        "mesh": ("nx", "ny"),
        "loading": ("top_displacements_m",),
        "material": ("c1_pa", "c2", "poisson_ratio"),
    },
    "brazilian": {
        "geometry": ("diameter_m", "arc_half_angle_deg"),
        "mesh": ("rings",),
        "loading": ("forces_n_per_m",),
        "material": ("c1_pa", "c2"),
    },
    "torsion": {
        "geometry": ("width_m", "height_m", "hole_diameter_m", "thickness_m"),
        "mesh": ("resolution", "layers"),
        "loading": ("rotation_deg", "increments"),
        "material": ("c1_pa", "c2"),
    },
    "thermal": {
        "geometry": ("disc_diameter_m", "hole_diameter_m", "square_edge_m", "copper_thickness_m", "sample_thickness_m", "source_half_angle_deg"),
        "mesh": ("resolution",),
        "loading": ("time_step_s", "num_steps", "initial_temperature_k", "train", "test"),
        "material": ("k_r_w_per_mk", "beta", "delta", "t_r_k", "copper", "sample"),
    },
}


def validate(cfg: ExperimentConfig) -> None:
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {cfg.schema_version!r}")
    if cfg.kind not in KINDS:
        raise ConfigError("kind", f"must be one of {KINDS}, got {cfg.kind!r}")
    for section, keys in _REQUIRED[cfg.kind].items():
        block = getattr(cfg, section)
        for k in keys:
            _need(block, k, section)
    if cfg.element_degree not in (1, 2, 3):
        raise ConfigError("element_degree", "must be 1, 2 or 3")
    _num(cfg.noise_fraction, "noise_fraction", nonneg=True)
    _num(cfg.epochs, "epochs", positive=True, integer=True)
    for e in cfg.checkpoint_epochs:
        if not 1 <= e <= cfg.epochs:
            raise ConfigError("checkpoint_epochs", f"epoch {e} outside 1..{cfg.epochs}")
    opt = cfg.optimizer
    _num(opt.learning_rate, "optimizer.learning_rate", positive=True)
    if not (0 <= opt.beta1 < 1 and 0 <= opt.beta2 < 1):
        raise ConfigError("optimizer", "betas must lie in [0, 1)")
    if cfg.kind == "torsion":
        return
    n = num_records(cfg)
    for name in ("train_indices", "test_indices"):
        idx = getattr(cfg, name)
        if len(idx) < 1:
            raise ConfigError(name, "split size must be >= 1")
        lo = 1 if cfg.kind == "thermal" else 0
        hi = n if cfg.kind == "thermal" else n - 1
        for i, v in enumerate(idx):
            if not lo <= v <= hi:
                raise ConfigError(f"{name}[{i}]", f"index {v} outside {lo}..{hi}")
    if cfg.kind != "thermal" and set(cfg.train_indices) & set(cfg.test_indices):
        raise ConfigError("test_indices", "overlaps train_indices")
    if cfg.kind == "uniaxial":
        for i, v in enumerate(cfg.loading["top_displacements_m"]):
            _num(v, f"loading.top_displacements_m[{i}]")
    if cfg.kind == "brazilian":
        for i, v in enumerate(cfg.loading["forces_n_per_m"]):
            _num(v, f"loading.forces_n_per_m[{i}]")


def num_records(cfg: ExperimentConfig) -> int:
    if cfg.kind == "uniaxial":
        return len(cfg.loading["top_displacements_m"])
    if cfg.kind == "brazilian":
        return len(cfg.loading["forces_n_per_m"])
    if cfg.kind == "thermal":
        return int(cfg.loading["num_steps"])
    return 0


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "expected an object")
    d = copy.deepcopy(d)
    _need(d, "kind", "")
    try:
        net = NetworkConfig(**d.pop("network", {}))
        net = NetworkConfig(tuple(net.layer_widths), net.features, net.output_gain, net.seed, float(net.input_scale))
    except TypeError as exc:
        raise ConfigError("network", str(exc)) from None
    try:
        opt = OptimizerConfig(**d.pop("optimizer", {}))
    except TypeError as exc:
        raise ConfigError("optimizer", str(exc)) from None
    for k in ("train_indices", "test_indices", "checkpoint_epochs"):
        if k in d:
            if not isinstance(d[k], list):
                raise ConfigError(k, "expected a list")
            d[k] = tuple(int(v) for v in d[k])
    try:
        return ExperimentConfig(network=net, optimizer=opt, **d)
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(d)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.to_json() + "\n")


# ----------------------------------------------------------------- defaults
def default_config(kind: str) -> ExperimentConfig:
    if kind == "uniaxial":
        return ExperimentConfig(
            kind="uniaxial",
            geometry={"width_m": 0.05, "height_m": 0.10},
            mesh={"nx": 2, "ny": 4},
            element_degree=3,
            loading={"top_displacements_m": [-2.5e-5 * (i + 1) for i in range(10)]},
            material={"c1_pa": cm.C1, "c2": cm.C2, "poisson_ratio": cm.NU},
            network=NetworkConfig((1, 30, 30, 30, 1), "trace", 0.1, 0, 250.0),
            noise_fraction=0.01,
            train_indices=(0, 2, 4, 5, 7, 9),
            test_indices=(1, 3, 6, 8),
            epochs=200,
            checkpoint_epochs=(10, 20, 200),
            optimizer=OptimizerConfig(learning_rate=1e-3),
            seed=0,
        )
    if kind == "brazilian":
        f_max = 3.0e5
        return ExperimentConfig(
            kind="brazilian",
            geometry={"diameter_m": 0.10, "arc_half_angle_deg": 10.0},
            mesh={"rings": 4},
            element_degree=3,
            loading={"forces_n_per_m": [f_max * (i + 1) / 7 for i in range(7)]},
            material={"c1_pa": cm.C1, "c2": cm.C2},
            network=NetworkConfig((1, 30, 30, 30, 1), "trace", 0.1, 0, 250.0),
            noise_fraction=0.01,
            train_indices=(0, 2, 4, 6),
            test_indices=(1, 3, 5),
            epochs=100,
            checkpoint_epochs=(10, 100),
            optimizer=OptimizerConfig(learning_rate=1e-3),
            seed=0,
        )
    if kind == "torsion":
        return ExperimentConfig(
            kind="torsion",
            geometry={"width_m": 0.5, "height_m": 1.0, "hole_diameter_m": 0.2, "thickness_m": 0.025},
            mesh={"resolution": 2, "layers": 1},
            element_degree=2,
            loading={"rotation_deg": 2.0, "increments": 1},
            material={"c1_pa": cm.C1, "c2": cm.C2},
            noise_fraction=0.0,
            epochs=1,
            seed=0,
        )
    if kind == "thermal":
        return ExperimentConfig(
            kind="thermal",
            geometry={
                "disc_diameter_m": 0.10,
                "hole_diameter_m": 0.05,
                "square_edge_m": 0.05,
                "copper_thickness_m": 0.004,
                "sample_thickness_m": 0.003,
                "source_half_angle_deg": 30.0,
            },
            mesh={"resolution": 2},
            element_degree=1,
            loading={
                "time_step_s": 100.0,
                "num_steps": 12,
                "initial_temperature_k": 300.0,
                "train": {"amplitude_k": 150.0, "period_s": 600.0, "phase_rad": 0.0},
                "test": {"amplitude_k": 150.0, "period_s": 400.0, "phase_rad": float(np.pi / 2)},
            },
            material={
                "k_r_w_per_mk": cm.K_R,
                "beta": cm.BETA,
                "delta": cm.DELTA,
                "t_r_k": cm.T_R,
                "copper": {"density_kg_per_m3": 8960.0, "heat_capacity_j_per_kgk": 385.0, "conductivity_w_per_mk": 401.0},
                "sample": {"density_kg_per_m3": 2500.0, "heat_capacity_j_per_kgk": 800.0},
            },
            network=NetworkConfig((1, 30, 30, 1), "temperature", 0.1, 0),
            noise_fraction=0.02,
            train_indices=tuple(range(1, 13)),
            test_indices=tuple(range(1, 13)),
            epochs=150,
            checkpoint_epochs=(10, 50, 100, 150),
            optimizer=OptimizerConfig(learning_rate=1e-2),
            seed=0,
        )
    raise ConfigError("kind", f"must be one of {KINDS}, got {kind!r}")


# ------------------------------------------------------------ experiments
class StaticExperiment:
    """Quasi-static loading program; records are load steps."""

    loss_kind: str

    def __init__(self, config: ExperimentConfig, newton: NewtonConfig | None = None):
        self.config = config
        self.newton = newton or NewtonConfig()
        self.problem = self._build()

    # subclasses provide _build, ground_truth, initial_model, loads
    def split_indices(self, split: str) -> list[int]:
        return list(self.config.train_indices if split == "train" else self.config.test_indices)

    def split_loads(self, split: str) -> list[float]:
        return [self.loads[i] for i in self.split_indices(split)]

    def clean_outputs(self) -> tuple[list, list]:
        """Ground-truth outputs and states for every record (in record order)."""
        sols, outs, _ = adj.forward_static(self.problem, self.ground_truth(), list(self.loads), newton=self.newton)
        return outs, sols

    def loss_spec(self, observations) -> adj.LossSpec:
        return adj.LossSpec(self.loss_kind, list(observations))

    def gradient(self, model, split: str, observations) -> adj.GradientReport:
        return adj.grad_static(self.problem, model, self.split_loads(split), self.loss_spec(observations), newton=self.newton)

    def loss(self, model, split: str, observations) -> float:
        return adj.loss_static(self.problem, model, self.split_loads(split), self.loss_spec(observations), newton=self.newton)

    def outputs(self, model, split: str):
        sols, outs, _ = adj.forward_static(self.problem, model, self.split_loads(split), newton=self.newton)
        return outs, sols


class UniaxialExperiment(StaticExperiment):
    loss_kind = "relative_force"

    def _build(self):
        c = self.config
        g, m = c.geometry, c.mesh
        self.mesh = meshmod.generate_rectangle(g["width_m"], g["height_m"], int(m["nx"]), int(m["ny"]))
        self.space = build_space(self.mesh, c.element_degree, "vector")
        self.loads = [float(v) for v in c.loading["top_displacements_m"]]
        bottom = self.space.dofs_on("bottom")
        top_x = self.space.dofs_on("top", 0)
        top_y = self.space.dofs_on("top", 1)
        fixed = np.concatenate([bottom, top_x])
        dofs = np.concatenate([fixed, top_y])

        def bc(load):
            return DirichletBC(dofs, np.concatenate([np.zeros(len(fixed)), np.full(len(top_y), load)]), "uniaxial")

        return StaticElasticityProblem(self.space, bc, observation=("reaction", "top", (0.0, 1.0)), newton=self.newton)

    def ground_truth(self):
        mat = self.config.material
        return cm.GroundTruthSoftening(mat["c1_pa"], mat["c2"], mat["poisson_ratio"])

    def initial_model(self):
        n = self.config.network
        return cm.neural_isotropic_e(
            n.layer_widths, n.seed, n.features, n.output_gain, nu=self.config.material["poisson_ratio"], input_scale=n.input_scale
        )


class BrazilianExperiment(StaticExperiment):
    loss_kind = "relative_field"

    def _build(self):
        c = self.config
        g = c.geometry
        self.mesh = meshmod.generate_disc(g["diameter_m"], int(c.mesh["rings"]), g["arc_half_angle_deg"])
        self.space = build_space(self.mesh, c.element_degree, "vector")
        self.loads = [float(v) for v in c.loading["forces_n_per_m"]]
        self.arc_length = float(self.mesh.facet_measures(self.mesh.facets_with_tag("top_arc")).sum())
        bottom = self.space.dofs_on("bottom_arc")
        top_x = self.space.dofs_on("top_arc", 0)
        dofs = np.concatenate([bottom, top_x])
        fixed = DirichletBC(dofs, np.zeros(len(dofs)), "brazilian")

        def traction(load):
            return ("top_arc", np.array([0.0, -load / self.arc_length]))

        return StaticElasticityProblem(self.space, lambda load: fixed, traction, observation="field", newton=self.newton)

    def ground_truth(self):
        mat = self.config.material
        return cm.GroundTruthLame(mat["c1_pa"], mat["c2"])

    def initial_model(self):
        n = self.config.network
        return cm.neural_lame(n.layer_widths, n.seed, n.features, n.output_gain, input_scale=n.input_scale)


class TorsionExperiment:
    """Twisted plate: bottom face clamped, top face rotated rigidly about the long axis."""

    def __init__(self, config: ExperimentConfig, newton: NewtonConfig | None = None):
        self.config = config
        self.newton = newton or NewtonConfig()
        g, m = config.geometry, config.mesh
        footprint = meshmod.generate_plate_with_hole(g["width_m"], g["height_m"], g["hole_diameter_m"], int(m["resolution"]))
        self.mesh = meshmod.extrude(footprint, g["thickness_m"], int(m["layers"]))
        self.space = build_space(self.mesh, config.element_degree, "vector")
        self.centre = np.array([g["width_m"] / 2, g["height_m"], g["thickness_m"] / 2])
        bottom = self.space.dofs_on("bottom")
        top_nodes = self.space.nodes_on("top")
        rel = self.space.node_coords[top_nodes] - self.centre
        dofs = np.concatenate([bottom, (top_nodes[:, None] * 3 + np.arange(3)).ravel()])

        def bc(angle):
            c, s = np.cos(angle), np.sin(angle)
            ux = rel[:, 0] * (c - 1) - rel[:, 2] * s
            uz = rel[:, 0] * s + rel[:, 2] * (c - 1)
            top = np.stack([ux, np.zeros_like(ux), uz], axis=1).ravel()
            return DirichletBC(dofs, np.concatenate([np.zeros(len(bottom)), top]), "torsion")

        self.problem = StaticElasticityProblem(self.space, bc, observation="field", newton=self.newton)
        theta = np.deg2rad(float(config.loading["rotation_deg"]))
        n = int(config.loading["increments"])
        self.loads = [theta * (i + 1) / n for i in range(n)]

    def ground_truth(self):
        mat = self.config.material
        return cm.GroundTruthLame(mat["c1_pa"], mat["c2"])

    def solve(self, model) -> np.ndarray:
        sols, _, _ = adj.forward_static(self.problem, model, self.loads, newton=self.newton)
        return sols[-1]


class ThermalExperiment:
    """Copper ring heated on one arc; learned conductivity in the sample plate.

    Records are time steps 1..num_steps of the train and test programs.
    """

    loss_kind = "relative_temperature"

    def __init__(self, config: ExperimentConfig, newton: NewtonConfig | None = None):
        self.config = config
        self.newton = newton or NewtonConfig()
        g = config.geometry
        self.mesh = meshmod.generate_thermal_footprint(
            g["disc_diameter_m"], g["hole_diameter_m"], g["square_edge_m"], int(config.mesh["resolution"]), g["source_half_angle_deg"]
        )
        self.space = build_space(self.mesh, config.element_degree, "scalar")
        mat = config.material
        cu, sa = mat["copper"], mat["sample"]
        self.regions = {
            "copper": RegionProperties(
                cu["density_kg_per_m3"], cu["heat_capacity_j_per_kgk"], cm.ConstantConductivity(cu["conductivity_w_per_mk"]), g["copper_thickness_m"]
            ),
            "sample": RegionProperties(sa["density_kg_per_m3"], sa["heat_capacity_j_per_kgk"], self.ground_truth(), g["sample_thickness_m"]),
        }
        self.problems = {split: self._problem(config.loading[split]) for split in ("train", "test")}

    def boundary_program(self, program: dict):
        load = self.config.loading
        T0 = float(load["initial_temperature_k"])
        horizon = float(load["time_step_s"]) * int(load["num_steps"])
        A, tau, phi = float(program["amplitude_k"]), float(program["period_s"]), float(program["phase_rad"])

        def temperature(t):
            return T0 + A * (t / horizon) * 0.5 * (1.0 + np.sin(2 * np.pi * t / tau + phi))

        return temperature

    def _problem(self, program: dict) -> TransientHeatProblem:
        load = self.config.loading
        return TransientHeatProblem(
            self.space,
            self.regions,
            "sample",
            "left_arc",
            self.boundary_program(program),
            float(load["time_step_s"]),
            int(load["num_steps"]),
            float(load["initial_temperature_k"]),
            observed_region="sample",
            newton=self.newton,
        )

    def ground_truth(self):
        mat = self.config.material
        return cm.GroundTruthConductivity(mat["k_r_w_per_mk"], mat["beta"], mat["delta"], mat["t_r_k"])

    def initial_model(self):
        n = self.config.network
        return cm.neural_conductivity(n.layer_widths, n.seed, n.output_gain)

    def split_indices(self, split: str) -> list[int]:
        return list(self.config.train_indices if split == "train" else self.config.test_indices)

    def clean_outputs(self, split: str):
        problem = self.problems[split]
        traj = problem.forward(self.ground_truth(), self.newton)
        return adj.observe_trajectory(problem, traj, self.split_indices(split)), traj

    def loss_spec(self, observations) -> adj.LossSpec:
        return adj.LossSpec(self.loss_kind, list(observations))

    def gradient(self, model, split: str, observations) -> adj.GradientReport:
        return adj.grad_transient(self.problems[split], model, self.loss_spec(observations), self.split_indices(split), self.newton)

    def loss(self, model, split: str, observations) -> float:
        return adj.loss_transient(self.problems[split], model, self.loss_spec(observations), self.split_indices(split), self.newton)

    def outputs(self, model, split: str):
        problem = self.problems[split]
        traj = problem.forward(model, self.newton)
        return adj.observe_trajectory(problem, traj, self.split_indices(split)), traj


def build_experiment(config: ExperimentConfig, newton: NewtonConfig | None = None):
    cls = {
        "uniaxial": UniaxialExperiment,
        "brazilian": BrazilianExperiment,
        "torsion": TorsionExperiment,
        "thermal": ThermalExperiment,
    }[config.kind]
    return cls(config, newton)
