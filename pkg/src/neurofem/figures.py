"""Data series behind the result figures: force-displacement curves, deformed
shapes, k(T) samples, mean-stress fields, plus field snapshots for datasets.

Everything is written as plain CSV or legacy VTK; plotting is left to
external tools.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import adjoint as adj
from . import constitutive as cm
from .assembly import default_qdeg, strain_at_quadrature
from .experiments import BrazilianExperiment, ThermalExperiment, TorsionExperiment, UniaxialExperiment
from .fespace import FEFunction, l2_error, write_point_csv, write_vtk


def _csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


# ------------------------------------------------------------ strain samples
def quadrature_strains(space, states, qdeg=None):
    """Strains (N, nv) and volume weights (N,) at all quadrature points of ``states``."""
    qdeg = qdeg or default_qdeg(space, nonlinear=True)
    _, _, _, dx = space.quadrature_data(qdeg)
    eps = [strain_at_quadrature(space, u, qdeg).reshape(-1, cm.voigt_size(space.dim)) for u in states]
    return np.concatenate(eps), np.tile(dx.ravel(), len(states))


def strain_samples(space, states, n: int = 20, lower: float = 0.05, upper: float = 0.95) -> np.ndarray:
    """``n`` quadrature-point strains spanning the visited range of tr(eps).

    Targets are volume-weighted quantiles of tr(eps) between ``lower`` and
    ``upper``; for each target the visited strain with the nearest trace is
    returned, so samples are states the material actually experienced.
    """
    eps, w = quadrature_strains(space, states)
    tr = eps @ cm.trace_vector(eps.shape[1])
    order = np.argsort(tr, kind="stable")
    cdf = np.cumsum(w[order]) / w.sum()
    picks = []
    for q in np.linspace(lower, upper, n):
        k = min(int(np.searchsorted(cdf, q)), len(order) - 1)
        picks.append(order[k])
    return eps[np.array(picks)]


def modulus_errors(model, truth, strains) -> np.ndarray:
    """Relative error of the learned Young modulus at each strain."""
    E = model.young_modulus(strains)
    Et = truth.young_modulus(strains)
    return np.abs(E - Et) / np.abs(Et)


def conductivity_errors(model, truth, temperatures) -> np.ndarray:
    k, _ = model.conductivity(np.asarray(temperatures, dtype=float))
    kt, _ = truth.conductivity(np.asarray(temperatures, dtype=float))
    return np.abs(k - kt) / np.abs(kt)


def relative_field_error(space, u, ref) -> float:
    """||u - ref||_L2 / ||ref||_L2 of two DoF vectors on ``space``."""

    def zero(x):
        return np.zeros((len(x), space.ncomp)) if space.ncomp > 1 else np.zeros(len(x))

    return l2_error(FEFunction(space, np.asarray(u) - ref), zero) / l2_error(FEFunction(space, ref), zero)


def max_test_load_error(exp: BrazilianExperiment, model, dataset) -> float:
    """Relative L2 displacement error at the largest test load against the clean field."""
    test = exp.split_indices("test")
    k = max(range(len(test)), key=lambda j: abs(exp.loads[test[j]]))
    u, _ = exp.problem.solve(model, exp.loads[test[k]], newton=exp.newton)
    return relative_field_error(exp.space, u, dataset.clean_for_diagnostics("test")[k])


def visited_temperature_range(exp: ThermalExperiment, split: str = "train") -> tuple[float, float]:
    """Min and max sample-region temperature of the ground-truth trajectory."""
    problem = exp.problems[split]
    traj = problem.forward(exp.ground_truth(), exp.newton)
    nodes = problem.observed_nodes()
    vals = np.concatenate([T[nodes] for T in traj])
    return float(vals.min()), float(vals.max())


# --------------------------------------------------------- dataset snapshots
def dataset_snapshots(exp, dataset, out: Path) -> list[Path]:
    """VTK snapshots of the clean ground-truth fields behind each record."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if isinstance(exp, ThermalExperiment):
        for split in ("train", "test"):
            _, traj = exp.clean_outputs(split)
            for n in exp.split_indices(split):
                p = out / f"{split}_step_{n:03d}.vtk"
                write_vtk(p, exp.mesh, {"temperature": FEFunction(exp.space, traj[n]).vertex_values()})
                paths.append(p)
        return paths
    _, sols = exp.clean_outputs()
    for i, u in enumerate(sols):
        split = "train" if i in exp.split_indices("train") else "test"
        p = out / f"record_{i:03d}_{split}.vtk"
        write_vtk(p, exp.mesh, {"displacement": FEFunction(exp.space, u).vertex_values()})
        paths.append(p)
    return paths


# ------------------------------------------------------- training artefacts
def training_curves(exp, dataset, model, epoch: int, out: Path) -> list[Path]:
    out = Path(out)
    tag = f"epoch_{epoch:04d}"
    if isinstance(exp, UniaxialExperiment):
        sols, forces, _ = adj.forward_static(exp.problem, model, list(exp.loads), newton=exp.newton)
        obs = {}
        for split in ("train", "test"):
            for i, f in zip(exp.split_indices(split), dataset.observations(split)):
                obs[i] = (split, f)
        rows = [(float(u), float(F), float(obs[i][1]), obs[i][0]) for i, (u, F) in enumerate(zip(exp.loads, forces))]
        p1 = _csv(out / f"force_displacement_{tag}.csv", ["displacement_m", "force_fem_n_per_m", "force_obs_n_per_m", "split"], rows)
        tr = np.linspace(min(exp.loads) / exp.config.geometry["height_m"], 0.0, 41)
        eps = np.stack([np.zeros_like(tr), tr, np.zeros_like(tr)], axis=1)
        E, Et = model.young_modulus(eps), exp.ground_truth().young_modulus(eps)
        p2 = _csv(out / f"young_modulus_{tag}.csv", ["trace_strain", "young_fem_pa", "young_true_pa"], zip(tr.tolist(), E.tolist(), Et.tolist()))
        return [p1, p2]
    if isinstance(exp, BrazilianExperiment):
        test = exp.split_indices("test")
        k = max(range(len(test)), key=lambda j: abs(exp.loads[test[j]]))
        u, _ = exp.problem.solve(model, exp.loads[test[k]], newton=exp.newton)
        ref = dataset.clean_for_diagnostics("test")[k]
        x = exp.mesh.vertices
        uf = FEFunction(exp.space, u).vertex_values()
        ur = FEFunction(exp.space, ref).vertex_values()
        p = out / f"deformed_{tag}.csv"
        p.parent.mkdir(parents=True, exist_ok=True)
        write_point_csv(p, x, np.hstack([uf, ur]), ["ux_fem_m", "uy_fem_m", "ux_ref_m", "uy_ref_m"])
        return [p]
    if isinstance(exp, ThermalExperiment):
        lo, hi = visited_temperature_range(exp)
        T = np.linspace(lo, hi, 50)
        k, _ = model.conductivity(T)
        kt, _ = exp.ground_truth().conductivity(T)
        return [_csv(out / f"conductivity_{tag}.csv", ["temperature_k", "k_fem_w_per_mk", "k_true_w_per_mk"], zip(T.tolist(), k.tolist(), kt.tolist()))]
    return []


# ------------------------------------------------------------ zero-shot 3D
def mean_stress(space, model, u, qdeg=None) -> tuple[np.ndarray, np.ndarray]:
    """tr(sigma) / d at quadrature points (C, Q) and the matching weights."""
    qdeg = qdeg or default_qdeg(space, nonlinear=True)
    _, _, _, dx = space.quadrature_data(qdeg)
    eps = strain_at_quadrature(space, u, qdeg)
    sig = model.stress(eps.reshape(-1, eps.shape[-1]))
    p = (sig @ cm.trace_vector(sig.shape[1])) / space.dim
    return p.reshape(dx.shape), dx


def zero_shot(exp: TorsionExperiment, model, u_ref=None) -> dict:
    """Mean-stress comparison; pass ``u_ref`` to reuse a ground-truth solve."""
    truth = exp.ground_truth()
    u_ref = exp.solve(truth) if u_ref is None else u_ref
    u_nn = exp.solve(model)
    p_ref, dx = mean_stress(exp.space, truth, u_ref)
    p_nn, _ = mean_stress(exp.space, model, u_nn)
    rel = float(np.sqrt(np.sum(dx * (p_nn - p_ref) ** 2) / np.sum(dx * p_ref**2)))
    return {"u_ref": u_ref, "u_nn": u_nn, "p_ref": p_ref, "p_nn": p_nn, "weights": dx, "relative_l2": rel}


def write_zero_shot(exp: TorsionExperiment, result: dict, out: Path) -> list[Path]:
    out = Path(out)
    dx = result["weights"]
    cell_ref = (result["p_ref"] * dx).sum(axis=1) / dx.sum(axis=1)
    cell_nn = (result["p_nn"] * dx).sum(axis=1) / dx.sum(axis=1)
    vtk = out / "mean_stress.vtk"
    write_vtk(
        vtk,
        exp.mesh,
        {
            "displacement_reference": FEFunction(exp.space, result["u_ref"]).vertex_values(),
            "displacement_neural": FEFunction(exp.space, result["u_nn"]).vertex_values(),
        },
        {"mean_stress_reference": cell_ref, "mean_stress_neural": cell_nn},
    )
    xq = exp.space.quadrature_points(default_qdeg(exp.space, nonlinear=True)).reshape(-1, 3)
    csv = out / "mean_stress_points.csv"
    write_point_csv(csv, xq, np.stack([result["p_ref"].ravel(), result["p_nn"].ravel()], axis=1), ["mean_stress_reference_pa", "mean_stress_neural_pa"])
    return [vtk, csv]
