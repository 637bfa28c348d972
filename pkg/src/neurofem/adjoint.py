"""Relative-error losses and discrete-adjoint gradients through FE solves.

Static problems: at each converged load step solve ``J~^T lam = dL/du`` where
``J~`` is the Jacobian with Dirichlet rows replaced by identity rows, then
``dL/dtheta = (explicit part) - lam_free . dR/dtheta``.

Transient problems: keep the whole trajectory and sweep backwards; step n
couples to step n+1 only through the mass term ``-M/dt``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import assembly as asm
from .errors import InvalidArgumentError, InvalidObservationError
from .problems import StaticElasticityProblem, TransientHeatProblem

LOSS_KINDS = ("relative_force", "relative_field", "relative_temperature")


@dataclass
class LossSpec:
    """Mean relative error between FE outputs and observations.

    Scalar observations use |a - b| / |b|; field observations use the
    Euclidean norm of the DoF vectors.  ``weights`` default to 1/N.
    """

    kind: str
    observations: list
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidArgumentError(f"unknown loss kind {self.kind!r}")
        if len(self.observations) < 1:
            raise InvalidArgumentError("need at least one observation")
        n = len(self.observations)
        self.weights = np.full(n, 1.0 / n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if self.weights.shape != (n,):
            raise InvalidArgumentError("one weight per observation required")
        for i, ob in enumerate(self.observations):
            if np.linalg.norm(np.atleast_1d(ob)) == 0:
                raise InvalidObservationError(f"observation {i} is zero; relative error undefined")


def _terms(spec: LossSpec, outputs: Sequence) -> tuple[np.ndarray, list]:
    if len(outputs) != len(spec.observations):
        raise InvalidArgumentError(f"{len(outputs)} outputs for {len(spec.observations)} observations")
    vals, grads = [], []
    for out, ob in zip(outputs, spec.observations):
        if spec.kind == "relative_force":
            out, ob = float(out), float(ob)
            vals.append(abs(out - ob) / abs(ob))
            grads.append(np.sign(out - ob) / abs(ob))
        else:
            diff = np.asarray(out, dtype=float) - np.asarray(ob, dtype=float)
            nd, no = np.linalg.norm(diff), np.linalg.norm(ob)
            vals.append(nd / no)
            grads.append(diff / (nd * no) if nd > 0 else np.zeros_like(diff))
    return np.array(vals), grads


def loss(spec: LossSpec, fem_outputs: Sequence) -> float:
    vals, _ = _terms(spec, fem_outputs)
    return float(spec.weights @ vals)


def loss_and_output_grads(spec: LossSpec, fem_outputs: Sequence):
    vals, grads = _terms(spec, fem_outputs)
    return float(spec.weights @ vals), [w * g for w, g in zip(spec.weights, grads)]


@dataclass
class GradientReport:
    loss: float
    grad: np.ndarray
    outputs: list
    states: list
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"loss": self.loss, "grad": self.grad.tolist(), "diagnostics": self.diagnostics})


# ------------------------------------------------------------------- static
def forward_static(problem: StaticElasticityProblem, model, loads, states=None, newton=None):
    """Solve every load step.

    Without explicit ``states`` the steps are solved in order of increasing
    magnitude, each continued from the previous converged one, so the result
    depends only on the model parameters.
    """
    n = len(loads)
    sols, outs, reports = [None] * n, [None] * n, [None] * n
    order = sorted(range(n), key=lambda i: (abs(loads[i]), i))
    prev, prev_load = None, 0.0
    for i in order:
        if states is not None:
            prev, prev_load = states[i], (loads[i] if states[i] is not None else 0.0)
        u, rep = problem.solve(model, loads[i], prev, newton, start_load=prev_load)
        sols[i], reports[i] = u, rep
        outs[i] = problem.observe(model, u, loads[i])
        prev, prev_load = u, loads[i]
    return sols, outs, reports


def grad_static(
    problem: StaticElasticityProblem,
    model,
    loads: Sequence[float],
    spec: LossSpec,
    states=None,
    newton=None,
) -> GradientReport:
    """Loss and dL/dtheta over a quasi-static loading program."""
    sols, outs, reports = forward_static(problem, model, loads, states, newton)
    value, gouts = loss_and_output_grads(spec, outs)
    grad = np.zeros(model.num_params)
    diags = []
    for k, (load, u, g) in enumerate(zip(loads, sols, gouts)):
        dLdu, w_explicit = problem.observation_vjp(model, u, load, g)
        if w_explicit is not None:
            grad += problem.param_vjp(model, u, w_explicit)
        if not np.any(dLdu):
            diags.append({"step": k, "newton_iterations": reports[k].iterations, "adjoint": "skipped"})
            continue
        bc = problem.bc(load)
        _, J = problem.residual(model, u, load, jacobian=True)
        lam = asm.solve_linear(asm.replace_rows(J, bc), dLdu, transpose=True)
        lam[bc.dofs] = 0.0
        grad -= problem.param_vjp(model, u, lam)
        diags.append({"step": k, "newton_iterations": reports[k].iterations, "adjoint_norm": float(np.linalg.norm(lam))})
    return GradientReport(value, grad, outs, sols, diags)


def loss_static(problem, model, loads, spec, states=None, newton=None) -> float:
    _, outs, _ = forward_static(problem, model, loads, states, newton)
    return loss(spec, outs)


# ---------------------------------------------------------------- transient
def observe_trajectory(problem: TransientHeatProblem, traj, steps):
    nodes = problem.observed_nodes()
    return [traj[n][nodes] for n in steps]


def grad_transient(
    problem: TransientHeatProblem,
    model,
    spec: LossSpec,
    observe_steps: Sequence[int] | None = None,
    newton=None,
) -> GradientReport:
    """Loss and dL/dtheta through all implicit-Euler steps (reverse sweep)."""
    steps = list(observe_steps) if observe_steps is not None else list(range(1, problem.num_steps + 1))
    if len(steps) != len(spec.observations):
        raise InvalidArgumentError("trajectory/observation misalignment")
    if any(s < 1 or s > problem.num_steps for s in steps):
        raise InvalidArgumentError("observation step outside the trajectory")
    traj = problem.forward(model, newton)
    outs = observe_trajectory(problem, traj, steps)
    value, gouts = loss_and_output_grads(spec, outs)
    nodes = problem.observed_nodes()
    dLdT = [np.zeros(problem.space.ndof) for _ in traj]
    for s, g in zip(steps, gouts):
        dLdT[s][nodes] += g
    M_dt = problem.mass_matrix() / problem.dt
    grad = np.zeros(model.num_params)
    lam_next = None
    diags = []
    for n in range(problem.num_steps, 0, -1):
        rhs = dLdT[n].copy()
        if lam_next is not None:
            rhs += M_dt @ lam_next
        bc = problem.bc(n)
        if not np.any(rhs):
            lam_next = np.zeros(problem.space.ndof)
            diags.append({"step": n, "adjoint": "zero"})
            continue
        _, J = problem.step_residual(model, traj[n], traj[n - 1], jacobian=True)
        lam = asm.solve_linear(asm.replace_rows(J, bc), rhs, transpose=True)
        lam[bc.dofs] = 0.0
        grad -= problem.param_vjp(model, traj[n], lam)
        lam_next = lam
        diags.append({"step": n, "adjoint_norm": float(np.linalg.norm(lam))})
    return GradientReport(value, grad, outs, traj, diags[::-1])


def loss_transient(problem, model, spec, observe_steps=None, newton=None) -> float:
    steps = list(observe_steps) if observe_steps is not None else list(range(1, problem.num_steps + 1))
    traj = problem.forward(model, newton)
    return loss(spec, observe_trajectory(problem, traj, steps))


# --------------------------------------------------------------- FD checker
@dataclass
class FDReport:
    max_rel_error: float
    mean_rel_error: float
    worst_index: int
    indices: list[int]
    adjoint: list[float]
    finite_difference: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return json.dumps(d)


def relative_errors(adjoint: np.ndarray, fd: np.ndarray, floor_fraction: float = 1e-6) -> np.ndarray:
    """|a - f| / max(|a|, |f|, floor_fraction * max|f|)."""
    floor = floor_fraction * max(np.abs(fd).max(initial=0.0), 1e-300)
    denom = np.maximum(np.maximum(np.abs(adjoint), np.abs(fd)), floor)
    return np.abs(adjoint - fd) / denom


def fd_check(
    pipeline: Callable[[np.ndarray], float],
    params: np.ndarray,
    gradient: np.ndarray,
    samples: int | Sequence[int] | None = None,
    step: float = 1e-6,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> FDReport:
    """Compare ``gradient`` with central differences of ``pipeline`` at ``params``.

    ``samples`` selects the parameters checked: None for all, an int for a
    seeded random subset, or explicit indices.
    """
    params = np.asarray(params, dtype=float)
    n = len(params)
    if samples is None:
        idx = np.arange(n)
    elif isinstance(samples, (int, np.integer)):
        idx = np.sort(np.random.default_rng(seed).choice(n, size=min(int(samples), n), replace=False))
    else:
        idx = np.asarray(samples, dtype=np.int64)
    fd = np.empty(len(idx))
    for k, i in enumerate(idx):
        h = step * max(1.0, abs(params[i]))
        e = np.zeros(n)
        e[i] = h
        fd[k] = (pipeline(params + e) - pipeline(params - e)) / (2 * h)
    adj = np.asarray(gradient, dtype=float)[idx]
    rel = relative_errors(adj, fd)
    worst = int(np.argmax(rel))
    return FDReport(float(rel.max()), float(rel.mean()), int(idx[worst]), idx.tolist(), adj.tolist(), fd.tolist(), tolerance)
