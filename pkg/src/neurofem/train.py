"""Synthetic datasets, Adam training through the FE solver, checkpoints.

Training is full batch.  Each epoch applies one Adam update and then
evaluates the loss (and its gradient, reused by the next update) at the new
parameters, so ``history[-1].train_loss`` is the loss of the returned model.
If a trial update makes a forward solve fail, the step is retried with half
the length, up to ``max_step_cuts`` times.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import constitutive as cm
from . import neural
from .errors import CheckpointError, ConvergenceError, DivergenceError, InvalidArgumentError, SingularMatrixError
from .experiments import ExperimentConfig, OptimizerConfig, ThermalExperiment

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DATASET_VERSION = 1
SPLITS = ("train", "test")


# ------------------------------------------------------------------ datasets
@dataclass
class Dataset:
    """Per-split inputs and noisy observations.

    Clean outputs are kept under ``_clean`` for diagnostics; training code
    only calls :meth:`observations`.
    """

    kind: str
    inputs: dict[str, list]
    _observations: dict[str, list]
    _clean: dict[str, list]
    noise_fraction: float
    seed: int

    def observations(self, split: str) -> list:
        return self._observations[split]

    def clean_for_diagnostics(self, split: str) -> list:
        return self._clean[split]

    def __len__(self) -> int:
        return sum(len(v) for v in self._observations.values())

    def to_dict(self) -> dict:
        def enc(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "format_version": DATASET_VERSION,
            "kind": self.kind,
            "noise_fraction": self.noise_fraction,
            "seed": self.seed,
            "splits": {
                s: {
                    "inputs": [enc(v) for v in self.inputs[s]],
                    "observations": [enc(v) for v in self._observations[s]],
                    "clean": [enc(v) for v in self._clean[s]],
                }
                for s in SPLITS
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        if d.get("format_version") != DATASET_VERSION:
            raise CheckpointError(f"unsupported dataset format_version {d.get('format_version')!r}")

        def dec(v):
            return np.asarray(v, dtype=float) if isinstance(v, list) else float(v)

        try:
            sp = d["splits"]
            return cls(
                d["kind"],
                {s: list(sp[s]["inputs"]) for s in SPLITS},
                {s: [dec(v) for v in sp[s]["observations"]] for s in SPLITS},
                {s: [dec(v) for v in sp[s]["clean"]] for s in SPLITS},
                float(d["noise_fraction"]),
                int(d["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"corrupt dataset: missing {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Dataset":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt dataset {path}: {exc}") from None


def add_noise(values: list, fraction: float, rng: np.random.Generator, offset: float = 0.0) -> list:
    """Multiplicative Gaussian noise on the excursion from ``offset``:
    ``offset + (v - offset) * (1 + fraction * xi)`` entrywise."""
    out = []
    for v in values:
        a = np.asarray(v, dtype=float)
        noisy = offset + (a - offset) * (1.0 + fraction * rng.standard_normal(a.shape)) if fraction > 0 else a.copy()
        out.append(float(noisy) if np.ndim(v) == 0 else noisy)
    return out


def generate_dataset(config: ExperimentConfig, experiment) -> Dataset:
    """Solve with the ground-truth law, then perturb the outputs."""
    rng = np.random.default_rng(config.seed)
    offset = 0.0
    if isinstance(experiment, ThermalExperiment):
        # temperatures are perturbed relative to their rise above the initial state
        offset = float(config.loading["initial_temperature_k"])
        inputs, clean = {}, {}
        for s in SPLITS:
            try:
                clean[s], _ = experiment.clean_outputs(s)
            except ConvergenceError as exc:
                raise ConvergenceError(f"{s} program: {exc}", exc.iterate, exc.report) from None
            inputs[s] = [float(experiment.problems[s].dt * n) for n in experiment.split_indices(s)]
    else:
        outs, _ = experiment.clean_outputs()
        inputs = {s: [experiment.loads[i] for i in experiment.split_indices(s)] for s in SPLITS}
        clean = {s: [outs[i] for i in experiment.split_indices(s)] for s in SPLITS}
    obs = {s: add_noise(clean[s], config.noise_fraction, rng, offset) for s in SPLITS}
    return Dataset(config.kind, inputs, obs, clean, config.noise_fraction, config.seed)


# ----------------------------------------------------------------- optimizer
@dataclass
class OptimizerState:
    """Adam moments and step count."""

    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def create(cls, config: OptimizerConfig, num_params: int) -> "OptimizerState":
        z = np.zeros(num_params)
        return cls(config.learning_rate, config.beta1, config.beta2, config.epsilon, z, z.copy(), 0)

    def advance(self, grad: np.ndarray) -> tuple["OptimizerState", np.ndarray]:
        """New state and the (unscaled-by-rejection) parameter increment."""
        if grad.shape != self.m.shape:
            raise InvalidArgumentError("gradient/moment shape mismatch")
        t = self.step + 1
        m = self.beta1 * self.m + (1 - self.beta1) * grad
        v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = m / (1 - self.beta1**t)
        vhat = v / (1 - self.beta2**t)
        delta = -self.learning_rate * mhat / (np.sqrt(vhat) + self.epsilon)
        return OptimizerState(self.learning_rate, self.beta1, self.beta2, self.epsilon, m, v, t), delta

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "m": self.m.tolist(),
            "v": self.v.tolist(),
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerState":
        return cls(d["learning_rate"], d["beta1"], d["beta2"], d["epsilon"], np.asarray(d["m"], float), np.asarray(d["v"], float), int(d["step"]))


# ------------------------------------------------------------------ training
@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_loss: float
    step_scale: float = 1.0


@dataclass
class TrainResult:
    history: list[EpochRecord]
    model: object
    state: OptimizerState
    initial_loss: float
    checkpoints: dict[int, object] = field(default_factory=dict)

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,test_loss"]
        lines += [f"{r.epoch},{r.train_loss!r},{r.test_loss!r}" for r in self.history]
        return "\n".join(lines) + "\n"


_SOLVER_FAILURES = (ConvergenceError, SingularMatrixError, FloatingPointError)


def evaluate(experiment, model, dataset: Dataset, split: str = "test") -> float:
    """Loss of ``model`` on a split.  Pure: no parameter or state mutation."""
    return experiment.loss(model, split, dataset.observations(split))


def train(
    experiment,
    dataset: Dataset,
    model,
    epochs: int,
    optimizer: OptimizerConfig | None = None,
    state: OptimizerState | None = None,
    start_epoch: int = 0,
    checkpoint_epochs=(),
    on_checkpoint: Callable[[int, object, OptimizerState, list], None] | None = None,
    evaluate_test: bool = True,
    divergence_factor: float = 1e3,
    divergence_patience: int = 10,
) -> TrainResult:
    """Run ``epochs`` Adam updates starting after epoch ``start_epoch``."""
    if epochs < 1:
        raise InvalidArgumentError("epochs must be >= 1")
    optimizer = optimizer or OptimizerConfig()
    state = state or OptimizerState.create(optimizer, model.num_params)
    obs_train = dataset.observations("train")
    report = experiment.gradient(model, "train", obs_train)
    initial = report.loss
    if not np.isfinite(initial):
        raise DivergenceError(f"initial loss is not finite ({initial})")
    history: list[EpochRecord] = []
    checkpoints = {}
    bad = 0
    theta = model.params_flat()
    for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
        new_state, delta = state.advance(report.grad)
        scale = 1.0
        for _ in range(optimizer.max_step_cuts + 1):
            trial = model.with_params(theta + scale * delta)
            try:
                trial_report = experiment.gradient(trial, "train", obs_train)
                if np.isfinite(trial_report.loss) and np.all(np.isfinite(trial_report.grad)):
                    break
            except _SOLVER_FAILURES as exc:
                log.info(json.dumps({"epoch": epoch, "rejected_step": scale, "reason": str(exc)[:200]}))
            scale *= 0.5
        else:
            raise DivergenceError(f"epoch {epoch}: forward solve failed for every trial step length", model, history)
        model, report, state = trial, trial_report, new_state
        theta = model.params_flat()
        test_loss = evaluate(experiment, model, dataset, "test") if evaluate_test else float("nan")
        rec = EpochRecord(epoch, float(report.loss), float(test_loss), scale)
        history.append(rec)
        log.info(json.dumps(rec.__dict__))
        bad = bad + 1 if report.loss > divergence_factor * initial else 0
        if bad >= divergence_patience:
            raise DivergenceError(
                f"loss above {divergence_factor:g} x initial ({initial:.3e}) for {divergence_patience} epochs; last {report.loss:.3e}",
                model,
                history,
            )
        if epoch in checkpoint_epochs:
            checkpoints[epoch] = model
            if on_checkpoint:
                on_checkpoint(epoch, model, state, list(history))
    return TrainResult(history, model, state, float(initial), checkpoints)


# --------------------------------------------------------------- checkpoints
def checkpoint_dict(model, state: OptimizerState | None, epoch: int = 0, history=None, config_hash: str | None = None) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "config_hash": config_hash,
        "model": cm.model_to_dict(model),
        "optimizer": state.to_dict() if state is not None else None,
        "history": [r.__dict__ for r in (history or [])],
    }


def save_checkpoint(path, model, state: OptimizerState | None, epoch: int = 0, history=None, config_hash: str | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model, state, epoch, history, config_hash)))


@dataclass
class Checkpoint:
    model: object
    state: OptimizerState | None
    epoch: int
    history: list[EpochRecord]
    config_hash: str | None


def load_checkpoint(path) -> Checkpoint:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    if not isinstance(d, dict) or d.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {d.get('format_version') if isinstance(d, dict) else None!r}")
    try:
        model = cm.model_from_dict(d["model"])
        state = OptimizerState.from_dict(d["optimizer"]) if d.get("optimizer") else None
        if state is not None and state.m.shape != (model.num_params,):
            raise CheckpointError("optimizer moments do not match the model")
        history = [EpochRecord(**r) for r in d.get("history", [])]
        return Checkpoint(model, state, int(d["epoch"]), history, d.get("config_hash"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None


# -------------------------------------------------------------- offline fit
def fit_elastic_offline(model, target, strains: np.ndarray, epochs: int = 3000, learning_rate: float = 3e-3) -> object:
    """Fit a neural elastic model's moduli to ``target`` at sample strains (Adam on relative MSE)."""
    strains = np.atleast_2d(strains)
    lam_t, mu_t, _, _ = target.moduli(strains)
    scale = np.maximum(np.abs(lam_t), np.abs(mu_t)).max()
    state = OptimizerState.create(OptimizerConfig(learning_rate=learning_rate), model.num_params)
    n = len(strains)
    for _ in range(epochs):
        lam, mu, _, _ = model.moduli(strains)
        r_lam, r_mu = (lam - lam_t) / scale, (mu - mu_t) / scale
        g = _moduli_param_grad(model, strains, 2 * r_lam / (n * scale), 2 * r_mu / (n * scale))
        state, delta = state.advance(g)
        model = model.with_params(model.params_flat() + delta)
    return model


def _moduli_param_grad(model, strains, c_lam, c_mu):
    """Gradient of sum(c_lam * lam + c_mu * mu) with respect to the parameters."""
    if isinstance(model, cm.NeuralLame):
        x, _ = cm.strain_features(strains, model.features, model.input_scale)
        s = model.output_scale
        return np.concatenate(
            [neural.param_vjp(model.mlp_lambda, x, (s * c_lam)[:, None]), neural.param_vjp(model.mlp_mu, x, (s * c_mu)[:, None])]
        )
    if isinstance(model, cm.NeuralIsotropicE):
        x, _ = cm.strain_features(strains, model.features, model.input_scale)
        lam_per_e, mu_per_e = cm.lame_from_young(np.ones(1), model.nu)
        c_e = c_lam * lam_per_e[0] + c_mu * mu_per_e[0]
        return neural.param_vjp(model.mlp, x, (model.output_scale * c_e)[:, None])
    raise InvalidArgumentError(f"offline fit not supported for {type(model).__name__}")


def fit_conductivity_offline(model, target, temperatures: np.ndarray, epochs: int = 3000, learning_rate: float = 3e-3):
    T = np.asarray(temperatures, dtype=float).ravel()
    k_t, _ = target.conductivity(T)
    state = OptimizerState.create(OptimizerConfig(learning_rate=learning_rate), model.num_params)
    for _ in range(epochs):
        k, _ = model.conductivity(T)
        g = model.conductivity_param_vjp(T, 2 * (k - k_t) / (k_t**2 * len(T)))
        state, delta = state.advance(g)
        model = model.with_params(model.params_flat() + delta)
    return model
