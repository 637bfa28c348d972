"""Boundary-value problems that couple a material law to a FE solve.

``StaticElasticityProblem`` covers displacement- and load-controlled
quasi-static loading programs; ``TransientHeatProblem`` covers implicit-Euler
heat conduction driven by a boundary-temperature program.  Both expose the
pieces the adjoint needs: converged states, observations, Jacobians and
parameter VJPs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .assembly import DirichletBC, NewtonConfig, RegionProperties
from .constitutive import ElasticModel
from .errors import ConvergenceError
from .fespace import FunctionSpace


@dataclass
class StaticElasticityProblem:
    """Static balance with one load parameter per step.

    ``bc(load)`` gives the Dirichlet data, ``traction(load)`` an optional
    ``(tag, vector)`` boundary traction.  ``observation`` is ``"field"`` (the
    full displacement DoF vector) or ``("reaction", tag, direction)``.
    """

    space: FunctionSpace
    bc: Callable[[float], DirichletBC]
    traction: Callable[[float], tuple[str, np.ndarray] | None] = lambda load: None
    observation: object = "field"
    qdeg: int | None = None
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    max_cuts: int = 8

    def residual(self, model: ElasticModel, u, load, jacobian=False):
        return asm.assemble_elasticity(self.space, model, u, self.traction(load), jacobian=jacobian, qdeg=self.qdeg)

    def solve(
        self,
        model: ElasticModel,
        load: float,
        u0=None,
        newton: NewtonConfig | None = None,
        start_load: float = 0.0,
        max_cuts: int | None = None,
    ):
        """Converged state at ``load``, continuing from ``(start_load, u0)``.

        A failed Newton solve halves the load increment (up to ``max_cuts``
        times) and proceeds through intermediate loads.  ``u0`` defaults to rest
        with ``start_load = 0``.
        """
        newton = newton or self.newton
        max_cuts = self.max_cuts if max_cuts is None else max_cuts
        u = np.zeros(self.space.ndof) if u0 is None else np.asarray(u0, dtype=float)
        current = 0.0 if u0 is None else float(start_load)
        inc = load - current
        cuts, iters, norms, steps = 0, 0, [], []
        while True:
            target = load if abs(load - current) <= abs(inc) * (1 + 1e-12) else current + inc
            try:
                u, rep = asm.newton_solve(
                    lambda x, j, t=target: self.residual(model, x, t, j), u, self.bc(target), newton
                )
            except ConvergenceError as exc:
                cuts += 1
                if cuts > max_cuts:
                    raise ConvergenceError(f"load {load:g}: {exc}", exc.iterate, exc.report) from None
                inc *= 0.5
                continue
            iters += rep.iterations
            norms += rep.residual_norms
            steps += rep.step_lengths
            current = target
            if target == load:
                return u, asm.NewtonReport(True, iters, norms, steps)

    def _reaction_weights(self):
        _, tag, direction = self.observation
        return asm.reaction_weights(self.space, tag, direction)

    def observe(self, model: ElasticModel, u: np.ndarray, load: float):
        if self.observation == "field":
            return u.copy()
        w = self._reaction_weights()
        return float(w @ asm.assemble_elasticity(self.space, model, u, qdeg=self.qdeg))

    def observation_vjp(self, model, u, load, g):
        """Split d obs cotangent ``g`` into (dL/du, residual weights of the explicit theta path)."""
        if self.observation == "field":
            return np.asarray(g, dtype=float), None
        w = self._reaction_weights()
        _, J = asm.assemble_elasticity(self.space, model, u, jacobian=True, qdeg=self.qdeg)
        return float(g) * (J.T @ w), float(g) * w

    def param_vjp(self, model, u, w):
        return asm.elasticity_param_vjp(self.space, model, u, w, qdeg=self.qdeg)


@dataclass
class TransientHeatProblem:
    """Implicit-Euler heat conduction with a Dirichlet temperature program.

    ``regions`` maps region names to properties; the region named
    ``learned_region`` takes its conductivity from the model passed to
    ``forward``.  ``boundary_temperature(t)`` is imposed on ``bc_tag``.
    """

    space: FunctionSpace
    regions: dict[str, RegionProperties]
    learned_region: str
    bc_tag: str
    boundary_temperature: Callable[[float], float]
    dt: float
    num_steps: int
    initial_temperature: float = 300.0
    observed_region: str | None = None
    qdeg: int | None = None
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    max_steps: int = 64

    def __post_init__(self):
        if self.num_steps > self.max_steps:
            raise ValueError(f"{self.num_steps} steps exceed the in-memory trajectory cap {self.max_steps}")

    def regions_for(self, model) -> dict[str, RegionProperties]:
        out = dict(self.regions)
        out[self.learned_region] = replace(out[self.learned_region], model=model)
        return out

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.num_steps + 1)

    def bc(self, n: int) -> DirichletBC:
        dofs = self.space.dofs_on(self.bc_tag)
        return DirichletBC(dofs, self.boundary_temperature(n * self.dt), self.bc_tag)

    def observed_nodes(self) -> np.ndarray:
        if self.observed_region is None:
            return np.arange(self.space.ndof)
        cells = self.space.mesh.cells_with_tag(self.observed_region)
        return np.unique(self.space.cell_nodes[cells])

    def step_residual(self, model, T_new, T_old, jacobian=False):
        return asm.assemble_heat_step(self.space, self.regions_for(model), T_new, T_old, self.dt, jacobian=jacobian, qdeg=self.qdeg)

    def forward(self, model, newton: NewtonConfig | None = None) -> list[np.ndarray]:
        T = np.full(self.space.ndof, float(self.initial_temperature))
        traj = [T]
        for n in range(1, self.num_steps + 1):
            T_old = traj[-1]
            try:
                T, _ = asm.newton_solve(
                    lambda x, j: self.step_residual(model, x, T_old, j), T_old, self.bc(n), newton or self.newton
                )
            except ConvergenceError as exc:
                raise ConvergenceError(f"time step {n}: {exc}", exc.iterate, exc.report) from None
            traj.append(T)
        return traj

    def mass_matrix(self) -> sp.csr_matrix:
        """int t rho c_p phi_i phi_j (the dt-scaled part of the step Jacobian)."""
        sp_ = self.space
        qdeg = self.qdeg or asm.default_qdeg(sp_, nonlinear=True)
        _, phi, _, dx = sp_.quadrature_data(qdeg)
        w = np.zeros(sp_.mesh.num_cells)
        for name, props in self.regions.items():
            w[sp_.cell_tag_mask(name)] = props.rho * props.cp * props.thickness
        M = np.einsum("cq,qi,qj->cij", dx * w[:, None], phi, phi)
        return asm._to_csr(sp_, M)

    def param_vjp(self, model, T_new, w):
        return asm.heat_param_vjp(self.space, self.regions_for(model), T_new, w, qdeg=self.qdeg)
