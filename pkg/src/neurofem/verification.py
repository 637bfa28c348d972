"""Solver verification: manufactured-solution convergence, patch tests and
adjoint-versus-finite-difference checks on miniature experiment pipelines.

Each check returns a plain dict with a ``passed`` flag so that the CLI can
emit it as JSON.
"""

from __future__ import annotations

import numpy as np

from . import adjoint as adj
from . import assembly as asm
from . import constitutive as cm
from . import mesh as meshmod
from .assembly import DirichletBC, NewtonConfig, RegionProperties
from .experiments import build_experiment, default_config
from .fespace import FEFunction, build_space, interpolate, l2_error

PI = np.pi
TIGHT = NewtonConfig(abs_tol=1e-300, rel_tol=1e-13, max_iter=40)
# heat residuals stagnate near 1e-12 in absolute terms
TIGHT_HEAT = NewtonConfig(abs_tol=1e-10, rel_tol=1e-13, max_iter=40)


# ------------------------------------------------------- manufactured fields
def _elastic_exact(x):
    s = np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])
    return np.stack([s, s], axis=1) * 1e-3


def _elastic_force(lam, mu):
    def f(x):
        s = np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])
        c = np.cos(PI * x[:, 0]) * np.cos(PI * x[:, 1])
        v = -(lam + mu) * PI**2 * (c - s) + 2 * mu * PI**2 * s
        return np.stack([v, v], axis=1) * 1e-3

    return f


def elasticity_error(degree: int, n: int) -> tuple[float, float]:
    """(h, L2 error) for linear plane-strain elasticity on the unit square."""
    mesh = meshmod.generate_rectangle(1.0, 1.0, n, n)
    V = build_space(mesh, degree, "vector")
    model = cm.GroundTruthSoftening(c1=1e9, c2=0.0, nu=0.3)
    lam, mu = cm.lame_from_young(np.array([1e9]), 0.3)
    dofs = np.unique(np.concatenate([V.dofs_on(t) for t in ("bottom", "top", "left", "right")]))
    bc = DirichletBC(dofs, np.zeros(len(dofs)))
    force = _elastic_force(lam[0], mu[0])
    u, _ = asm.newton_solve(
        lambda u, j: asm.assemble_elasticity(V, model, u, jacobian=j, body_force=force), np.zeros(V.ndof), bc, TIGHT
    )
    return 1.0 / n, l2_error(FEFunction(V, u), _elastic_exact)


def _heat_exact(x):
    return 300.0 + 100.0 * np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])


def heat_error(degree: int, n: int) -> tuple[float, float]:
    """(h, L2 error) for steady nonlinear conduction -div(k(T) grad T) = f."""
    mesh = meshmod.generate_rectangle(1.0, 1.0, n, n)
    V = build_space(mesh, degree, "scalar")
    k_model = cm.GroundTruthConductivity()

    def source(x):
        s = np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])
        gx = 100 * PI * np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1])
        gy = 100 * PI * np.sin(PI * x[:, 0]) * np.cos(PI * x[:, 1])
        T = 300.0 + 100.0 * s
        k, dk = k_model.conductivity(T)
        return -dk * (gx**2 + gy**2) + k * 200 * PI**2 * s

    regions = {"domain": RegionProperties(0.0, 0.0, k_model)}
    dofs = np.unique(np.concatenate([V.dofs_on(t) for t in ("bottom", "top", "left", "right")]))
    bc = DirichletBC(dofs, np.full(len(dofs), 300.0))
    T0 = np.full(V.ndof, 300.0)
    T, _ = asm.newton_solve(
        lambda T, j: asm.assemble_heat_step(V, regions, T, T0, 1.0, jacobian=j, source=source), T0, bc, TIGHT
    )
    return 1.0 / n, l2_error(FEFunction(V, T), _heat_exact)


def observed_order(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


CONVERGENCE_CASES = {
    "elasticity_p1": (elasticity_error, 1, (4, 8, 16, 32)),
    "elasticity_p3": (elasticity_error, 3, (4, 8, 16)),
    "heat_p1": (heat_error, 1, (4, 8, 16, 32)),
}


def convergence_study(tolerance: float = 0.3, expected_offset: float = 1.0, cases=None) -> dict:
    """L2 convergence orders; passes when |order - (degree + offset)| <= tolerance."""
    results, ok = {}, True
    for name in cases or CONVERGENCE_CASES:
        fn, degree, ns = CONVERGENCE_CASES[name]
        data = [fn(degree, n) for n in ns]
        hs, errs = zip(*data)
        order = observed_order(hs, errs)
        expected = degree + expected_offset
        passed = abs(order - expected) <= tolerance
        ok &= passed
        results[name] = {"h": list(hs), "l2_error": list(errs), "order": order, "expected": expected, "passed": passed}
    return {"check": "convergence", "tolerance": tolerance, "cases": results, "passed": bool(ok)}


# ------------------------------------------------------------------- patch
def _distorted_square(n: int, seed: int = 0) -> meshmod.Mesh:
    m = meshmod.generate_rectangle(1.0, 1.0, n, n)
    rng = np.random.default_rng(seed)
    v = m.vertices.copy()
    interior = (v[:, 0] > 1e-12) & (v[:, 0] < 1 - 1e-12) & (v[:, 1] > 1e-12) & (v[:, 1] < 1 - 1e-12)
    v[interior] += rng.uniform(-0.2, 0.2, size=(interior.sum(), 2)) / n
    return meshmod.Mesh(2, v, m.cells, m.facets, m.facet_tags, m.cell_tags, dict(m.legend))


def patch_test(tolerance: float = 1e-9) -> dict:
    """A linear displacement field must satisfy the discrete balance exactly.

    For each degree, the exact affine field is interpolated on a distorted
    mesh; the free-DoF residual relative to the reaction magnitude must stay
    below ``tolerance``, and solving with its boundary values must recover it.
    """
    mesh = _distorted_square(3)
    grad = np.array([[1e-3, 2e-4], [-5e-4, -2e-3]])

    def exact(x):
        return x @ grad.T + np.array([1e-4, -2e-4])

    cases, ok = {}, True
    for model_name, model in (("linear", cm.GroundTruthSoftening(c2=0.0)), ("softening", cm.GroundTruthSoftening())):
        for degree in (1, 2, 3):
            V = build_space(mesh, degree, "vector")
            u = interpolate(V, exact).dofs
            dofs = np.unique(np.concatenate([V.dofs_on(t) for t in ("bottom", "top", "left", "right")]))
            bc = DirichletBC(dofs, u[dofs])
            R = asm.assemble_elasticity(V, model, u)
            free = bc.free_mask(V.ndof)
            rel = float(np.linalg.norm(R[free]) / np.linalg.norm(R[~free]))
            sol, _ = asm.newton_solve(lambda x, j: asm.assemble_elasticity(V, model, x, jacobian=j), np.zeros(V.ndof), bc, TIGHT)
            err = float(np.abs(sol - u).max() / np.abs(u).max())
            passed = rel <= tolerance and err <= tolerance
            ok &= passed
            cases[f"{model_name}_p{degree}"] = {"relative_residual": rel, "relative_solution_error": err, "passed": passed}
    return {"check": "patch", "tolerance": tolerance, "cases": cases, "passed": bool(ok)}


# ---------------------------------------------------------------- gradients
def _perturbed(model, seed: int, scale: float = 0.3):
    theta = model.params_flat()
    rng = np.random.default_rng(seed)
    return model.with_params(theta + scale * rng.standard_normal(theta.shape) * np.maximum(np.abs(theta), 0.1))


def mini_uniaxial():
    cfg = default_config("uniaxial").replace(
        **{
            "mesh": {"nx": 1, "ny": 2},
            "element_degree": 2,
            "loading.top_displacements_m": [-1e-4, -2e-4, -3e-4],
            "train_indices": [0, 2],
            "test_indices": [1],
            "network.layer_widths": [2, 4, 1],
            "network.features": "invariants",
            "network.output_gain": 1.0,
        }
    )
    exp = build_experiment(cfg, TIGHT)
    outs, _ = exp.clean_outputs()
    obs = [o * (1 + 0.05 * (-1) ** i) for i, o in enumerate(outs)]
    return exp, [obs[i] for i in cfg.train_indices]


def mini_brazilian():
    cfg = default_config("brazilian").replace(
        **{
            "mesh": {"rings": 2},
            "element_degree": 2,
            "loading.forces_n_per_m": [5e4, 1e5, 1.5e5],
            "train_indices": [0, 2],
            "test_indices": [1],
            "network.layer_widths": [2, 2, 1],
            "network.features": "invariants",
            "network.output_gain": 1.0,
        }
    )
    exp = build_experiment(cfg, TIGHT)
    outs, _ = exp.clean_outputs()
    rng = np.random.default_rng(1)
    obs = [o * (1 + 0.05 * rng.standard_normal(o.shape)) for o in outs]
    return exp, [obs[i] for i in cfg.train_indices]


def mini_thermal():
    cfg = default_config("thermal").replace(
        **{
            "mesh": {"resolution": 1},
            "loading.num_steps": 3,
            "loading.time_step_s": 200.0,
            "train_indices": [1, 2, 3],
            "test_indices": [3],
            "network.layer_widths": [1, 6, 1],
            "network.output_gain": 1.0,
        }
    )
    exp = build_experiment(cfg, TIGHT_HEAT)
    outs, _ = exp.clean_outputs("train")
    rng = np.random.default_rng(2)
    obs = [o * (1 + 0.02 * rng.standard_normal(o.shape)) for o in outs]
    return exp, obs


MINI_PIPELINES = {"uniaxial": mini_uniaxial, "brazilian": mini_brazilian, "thermal": mini_thermal}


def gradient_check(name: str, tolerance: float = 1e-4, seed: int = 3, step: float = 1e-6, corrupt: float = 1.0) -> dict:
    """Adjoint gradient of a miniature pipeline against central differences over all parameters.

    ``corrupt`` multiplies the adjoint gradient (fault injection for testing the checker).
    """
    exp, obs = MINI_PIPELINES[name]()
    model = _perturbed(exp.initial_model(), seed)
    report = exp.gradient(model, "train", obs)
    ndof = exp.space.ndof

    def pipeline(theta):
        return exp.loss(model.with_params(theta), "train", obs)

    fd = adj.fd_check(pipeline, model.params_flat(), corrupt * report.grad, step=step, tolerance=tolerance)
    out = {
        "check": "gradients",
        "pipeline": name,
        "ndof": int(ndof),
        "num_params": int(model.num_params),
        "loss": report.loss,
        **{k: v for k, v in fd.__dict__.items()},
        "passed": bool(fd.passed),
    }
    return out


def gradient_study(tolerance: float = 1e-4, names=None) -> dict:
    results = {n: gradient_check(n, tolerance) for n in (names or MINI_PIPELINES)}
    return {"check": "gradients", "tolerance": tolerance, "cases": results, "passed": all(r["passed"] for r in results.values())}
