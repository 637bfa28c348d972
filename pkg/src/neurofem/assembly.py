"""Residual/Jacobian assembly, Dirichlet conditions, linear and Newton solvers.

Two weak forms are assembled:

* small-strain elastostatics, ``R_i = int sigma(eps(u)) : eps(phi_i) - int_G t . phi_i``
* one implicit-Euler step of nonlinear heat conduction,
  ``R_i = int rho c_p (T - T_old)/dt phi_i + k(T) grad T . grad phi_i``

Element loops are vectorised over cells and run sequentially over quadrature
points, so results do not depend on any execution order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import ConductivityModel, ElasticModel, voigt_size
from .errors import ConvergenceError, InvalidArgumentError, SingularMatrixError
from .fespace import FEFunction, FunctionSpace, quadrature

log = logging.getLogger(__name__)


def default_qdeg(space: FunctionSpace, nonlinear: bool = False) -> int:
    return 2 * space.degree + 1 + (2 if nonlinear else 0)


# --------------------------------------------------------------- sparse data
def _sparsity(space: FunctionSpace):
    key = "coo_index"
    if key not in space._cache:
        d = space.cell_dofs
        n = d.shape[1]
        rows = np.repeat(d, n, axis=1).ravel()
        cols = np.tile(d, (1, n)).ravel()
        space._cache[key] = (rows, cols)
    return space._cache[key]


def _to_csr(space: FunctionSpace, local: np.ndarray) -> sp.csr_matrix:
    rows, cols = _sparsity(space)
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.ndof, space.ndof)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter(space: FunctionSpace, local: np.ndarray) -> np.ndarray:
    out = np.zeros(space.ndof)
    np.add.at(out, space.cell_dofs.ravel(), local.ravel())
    return out


# ------------------------------------------------------------ strain operator
def _strain_selector(dim: int) -> np.ndarray:
    """P[a, k, m]: Voigt strain a picks grad(u)[k, m] (engineering shear)."""
    nv = voigt_size(dim)
    P = np.zeros((nv, dim, dim))
    for k in range(dim):
        P[k, k, k] = 1.0
    shear = [(0, 1)] if dim == 2 else [(1, 2), (0, 2), (0, 1)]
    for a, (i, j) in enumerate(shear, start=dim):
        P[a, i, j] = P[a, j, i] = 1.0
    return P


def strain_matrices(space: FunctionSpace, qdeg: int, q: int) -> np.ndarray:
    """B at quadrature point q: (C, nv, nloc * dim) mapping local DoFs to Voigt strain."""
    _, _, dphix, _ = space.quadrature_data(qdeg)
    P = _strain_selector(space.dim)
    B = np.einsum("akm,cim->caik", P, dphix[:, q])
    return B.reshape(B.shape[0], B.shape[1], -1)


def strain_at_quadrature(space: FunctionSpace, u: np.ndarray, qdeg: int) -> np.ndarray:
    """Voigt strains (C, Q, nv) of the vector field with DoFs ``u``."""
    _, _, dphix, _ = space.quadrature_data(qdeg)
    local = u.reshape(-1, space.ncomp)[space.cell_nodes]
    grad = np.einsum("cqim,cik->cqkm", dphix, local)
    P = _strain_selector(space.dim)
    return np.einsum("akm,cqkm->cqa", P, grad)


# ------------------------------------------------------------ boundary loads
def _facet_tabulation(space: FunctionSpace, tag: str, qdeg: int):
    key = ("facet", tag, qdeg)
    if key in space._cache:
        return space._cache[key]
    mesh = space.mesh
    facets = mesh.facets_with_tag(tag)
    if "facet_owner" not in space._cache:
        owners = {f: c[0] for f, c in mesh.facet_cells().items() if len(c) == 1}
        space._cache["facet_owner"] = owners
    owners = space._cache["facet_owner"]
    cells = np.array([owners[tuple(sorted(f))] for f in facets.tolist()], dtype=np.int64)
    rule = quadrature(mesh.dim - 1, qdeg)
    xf = mesh.vertices[facets]
    pts = xf[:, :1, :] + np.einsum("fjd,qj->fqd", xf[:, 1:, :] - xf[:, :1, :], rule.points)
    fact = 1.0 if mesh.dim == 2 else 2.0
    w = mesh.facet_measures(facets)[:, None] * rule.weights[None, :] * fact
    _, _, inv = space.jacobians
    x0 = mesh.vertices[mesh.cells[cells, 0]]
    xi = np.einsum("fde,fqe->fqd", inv[cells], pts - x0[:, None, :])
    phi, _ = space.element.tabulate(xi.reshape(-1, mesh.dim))
    phi = phi.reshape(len(facets), len(rule.weights), -1)
    space._cache[key] = (cells, phi, w, pts)
    return space._cache[key]


def boundary_load(space: FunctionSpace, tag: str, value, qdeg: int | None = None) -> np.ndarray:
    """Load vector int_G value . phi_i ds over facets tagged ``tag``.

    ``value`` is a constant (vector for vector spaces) or a callable of the
    physical points (N, d).
    """
    qdeg = qdeg or space.degree + 2
    cells, phi, w, pts = _facet_tabulation(space, tag, qdeg)
    k = space.ncomp
    if callable(value):
        val = np.asarray(value(pts.reshape(-1, space.dim)), dtype=float).reshape(pts.shape[0], pts.shape[1], k)
    else:
        val = np.broadcast_to(np.asarray(value, dtype=float).reshape(1, 1, k), (pts.shape[0], pts.shape[1], k))
    local = np.einsum("fq,fqi,fqk->fik", w, phi, val)
    out = np.zeros(space.ndof)
    dofs = (space.cell_nodes[cells][:, :, None] * k + np.arange(k)).reshape(len(cells), -1)
    np.add.at(out, dofs.ravel(), local.reshape(len(cells), -1).ravel())
    return out


def facet_tag_measure(space: FunctionSpace, tag: str) -> float:
    return float(space.mesh.facet_measures(space.mesh.facets_with_tag(tag)).sum())


# ------------------------------------------------------------------ elasticity
def assemble_elasticity(
    space: FunctionSpace,
    model: ElasticModel,
    u: FEFunction | np.ndarray,
    traction: tuple[str, np.ndarray] | None = None,
    jacobian: bool = False,
    qdeg: int | None = None,
    body_force: Callable | None = None,
):
    """Residual (and optionally the sparse Jacobian) of the static balance."""
    if not space.is_vector or space.ncomp != space.dim:
        raise InvalidArgumentError("elasticity needs a vector space with mesh-dimension components")
    u = u.dofs if isinstance(u, FEFunction) else np.asarray(u, dtype=float)
    if u.shape != (space.ndof,):
        raise InvalidArgumentError(f"expected {space.ndof} dofs, got {u.shape}")
    qdeg = qdeg or default_qdeg(space, nonlinear=True)
    rule, phi, dphix, dx = space.quadrature_data(qdeg)
    C, Q = dx.shape
    eps = strain_at_quadrature(space, u, qdeg)
    nv = eps.shape[-1]
    if nv != voigt_size(space.dim):
        raise InvalidArgumentError("model/mesh dimension mismatch")
    flat = eps.reshape(-1, nv)
    if jacobian:
        sig, tan = model.stress_and_tangent(flat)
        tan = tan.reshape(C, Q, nv, nv)
    else:
        sig = model.stress(flat)
    sig = sig.reshape(C, Q, nv)
    nl = space.cell_dofs.shape[1]
    r_loc = np.zeros((C, nl))
    K_loc = np.zeros((C, nl, nl)) if jacobian else None
    for q in range(Q):
        B = strain_matrices(space, qdeg, q)
        r_loc += dx[:, q, None] * np.einsum("cai,ca->ci", B, sig[:, q])
        if jacobian:
            K_loc += dx[:, q, None, None] * np.einsum("cai,cab,cbj->cij", B, tan[:, q], B)
    R = _scatter(space, r_loc)
    if body_force is not None:
        xq = space.quadrature_points(qdeg)
        f = np.asarray(body_force(xq.reshape(-1, space.dim))).reshape(C, Q, space.dim)
        f_loc = np.einsum("cq,qi,cqk->cik", dx, phi, f).reshape(C, -1)
        R -= _scatter(space, f_loc)
    if traction is not None:
        tag, t = traction
        R -= boundary_load(space, tag, t)
    if jacobian:
        return R, _to_csr(space, K_loc)
    return R


def elasticity_param_vjp(
    space: FunctionSpace, model: ElasticModel, u: np.ndarray, w: np.ndarray, qdeg: int | None = None
) -> np.ndarray:
    """w . dR/dtheta, accumulated per quadrature point through the stress VJP."""
    qdeg = qdeg or default_qdeg(space, nonlinear=True)
    _, _, _, dx = space.quadrature_data(qdeg)
    eps = strain_at_quadrature(space, u, qdeg)
    eps_w = strain_at_quadrature(space, w, qdeg)
    nv = eps.shape[-1]
    return model.stress_param_vjp(eps.reshape(-1, nv), (dx[..., None] * eps_w).reshape(-1, nv))


# ------------------------------------------------------------------------ heat
@dataclass(frozen=True)
class RegionProperties:
    rho: float
    cp: float
    model: ConductivityModel
    thickness: float = 1.0


def _region_arrays(space: FunctionSpace, regions: dict[str, RegionProperties]):
    mesh = space.mesh
    groups = []
    covered = np.zeros(mesh.num_cells, dtype=bool)
    for name, props in regions.items():
        mask = space.cell_tag_mask(name)
        covered |= mask
        groups.append((np.flatnonzero(mask), props))
    if not covered.all():
        missing = sorted({mesh.legend.get(int(t), str(t)) for t in mesh.cell_tags[~covered]})
        raise InvalidArgumentError(f"missing thermal properties for regions {missing}")
    return groups


def assemble_heat_step(
    space: FunctionSpace,
    regions: dict[str, RegionProperties],
    T_new: np.ndarray,
    T_old: np.ndarray,
    dt: float,
    jacobian: bool = False,
    qdeg: int | None = None,
    source: Callable | None = None,
):
    """Residual (and Jacobian) of one implicit-Euler step.

    ``source(x)`` is an optional volumetric heat source evaluated at the
    quadrature points.  Region thickness multiplies every term (a 2D plan-view
    plate model; use 1.0 for true 2D/3D problems).
    """
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    T_new = T_new.dofs if isinstance(T_new, FEFunction) else np.asarray(T_new, dtype=float)
    T_old = T_old.dofs if isinstance(T_old, FEFunction) else np.asarray(T_old, dtype=float)
    qdeg = qdeg or default_qdeg(space, nonlinear=True)
    _, phi, dphix, dx = space.quadrature_data(qdeg)
    C, Q = dx.shape
    loc_new = T_new[space.cell_nodes]
    loc_old = T_old[space.cell_nodes]
    Tq = loc_new @ phi.T
    dTdt = (loc_new - loc_old) @ phi.T / dt
    gradT = np.einsum("cqid,ci->cqd", dphix, loc_new)
    k = np.zeros((C, Q))
    dk = np.zeros((C, Q))
    mass = np.zeros(C)
    thick = np.zeros(C)
    for cells, props in _region_arrays(space, regions):
        kk, dkk = props.model.conductivity(Tq[cells])
        k[cells], dk[cells] = kk, dkk
        mass[cells] = props.rho * props.cp
        thick[cells] = props.thickness
    wq = dx * thick[:, None]
    r_loc = np.einsum("cq,qi->ci", wq * mass[:, None] * dTdt, phi)
    r_loc += np.einsum("cq,cqd,cqid->ci", wq * k, gradT, dphix)
    if source is not None:
        xq = space.quadrature_points(qdeg)
        f = np.asarray(source(xq.reshape(-1, space.dim))).reshape(C, Q)
        r_loc -= np.einsum("cq,qi->ci", wq * f, phi)
    R = _scatter(space, r_loc)
    if not jacobian:
        return R
    K = np.einsum("cq,qi,qj->cij", wq * mass[:, None] / dt, phi, phi)
    K += np.einsum("cq,cqid,cqjd->cij", wq * k, dphix, dphix)
    K += np.einsum("cq,cqid,cqd,qj->cij", wq * dk, dphix, gradT, phi)
    return R, _to_csr(space, K)


def heat_param_vjp(
    space: FunctionSpace,
    regions: dict[str, RegionProperties],
    T_new: np.ndarray,
    w: np.ndarray,
    qdeg: int | None = None,
) -> np.ndarray:
    """w . dR/dtheta for the (single) neural conductivity among the regions."""
    qdeg = qdeg or default_qdeg(space, nonlinear=True)
    _, phi, dphix, dx = space.quadrature_data(qdeg)
    loc = T_new[space.cell_nodes]
    Tq = loc @ phi.T
    gradT = np.einsum("cqid,ci->cqd", dphix, loc)
    gradW = np.einsum("cqid,ci->cqd", dphix, w[space.cell_nodes])
    total = None
    for cells, props in _region_arrays(space, regions):
        if not props.model.is_neural:
            continue
        ct = dx[cells] * props.thickness * np.einsum("cqd,cqd->cq", gradT[cells], gradW[cells])
        g = props.model.conductivity_param_vjp(Tq[cells].ravel(), ct.ravel())
        total = g if total is None else total + g
    if total is None:
        raise InvalidArgumentError("no neural conductivity among the regions")
    return total


# ---------------------------------------------------------------- Dirichlet
@dataclass
class DirichletBC:
    dofs: np.ndarray
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=np.int64).ravel()
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float), self.dofs.shape).copy()
        if len(np.unique(self.dofs)) != len(self.dofs):
            raise InvalidArgumentError("duplicate constrained dofs")

    @staticmethod
    def combine(*bcs: "DirichletBC") -> "DirichletBC":
        """Merge conditions; later ones win on shared DoFs."""
        merged: dict[int, float] = {}
        for bc in bcs:
            merged.update(zip(bc.dofs.tolist(), bc.values.tolist()))
        keys = np.array(sorted(merged), dtype=np.int64)
        return DirichletBC(keys, np.array([merged[k] for k in keys.tolist()]), "+".join(b.source for b in bcs))

    def free_mask(self, ndof: int) -> np.ndarray:
        if self.dofs.size and (self.dofs.min() < 0 or self.dofs.max() >= ndof):
            raise InvalidArgumentError("constrained dof index out of range")
        mask = np.ones(ndof, dtype=bool)
        mask[self.dofs] = False
        return mask

    def impose(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float)
        out[self.dofs] = self.values
        return out


def apply_dirichlet(matrix: sp.spmatrix, residual: np.ndarray, bc: DirichletBC, current: np.ndarray):
    """Symmetric elimination of constrained DoFs for the Newton update system.

    Returns (A, r) such that solving ``A du = -r`` yields an update with
    ``du_c = prescribed - current`` on constrained DoFs.
    """
    n = matrix.shape[0]
    free = bc.free_mask(n).astype(float)
    excess = np.zeros(n)
    excess[bc.dofs] = np.asarray(current, dtype=float)[bc.dofs] - bc.values
    r = np.asarray(residual, dtype=float) - matrix @ excess
    r[bc.dofs] = excess[bc.dofs]
    P = sp.diags(free)
    A = (P @ matrix @ P + sp.diags(1.0 - free)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    return A, r


def replace_rows(matrix: sp.spmatrix, bc: DirichletBC) -> sp.csr_matrix:
    """Jacobian of the BC-augmented residual: constrained rows become identity rows."""
    n = matrix.shape[0]
    free = bc.free_mask(n).astype(float)
    A = (sp.diags(free) @ matrix + sp.diags(1.0 - free)).tocsr()
    A.eliminate_zeros()
    return A


# ---------------------------------------------------------------- linear solve
@dataclass(frozen=True)
class LinearSolverConfig:
    method: str = "lu"
    rtol: float = 1e-12
    maxiter: int = 10000


def solve_linear(matrix, rhs, config: LinearSolverConfig | None = None, transpose: bool = False) -> np.ndarray:
    """Direct sparse LU by default; Jacobi-preconditioned CG for SPD systems."""
    config = config or LinearSolverConfig()
    A = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    if config.method == "lu":
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from None
        x = lu.solve(b, trans="T" if transpose else "N")
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("LU solve produced non-finite values")
        return x
    if config.method == "cg":
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SingularMatrixError("CG needs a positive diagonal")
        M = sp.diags(1.0 / diag)
        x, info = spla.cg(A, b, rtol=config.rtol, maxiter=config.maxiter, M=M)
        if info != 0:
            raise ConvergenceError(f"CG did not converge (info={info})", iterate=x)
        return x
    raise InvalidArgumentError(f"unknown linear solver {config.method!r}")


# ---------------------------------------------------------------------- Newton
@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 25
    backtrack: float = 0.5
    max_halvings: int = 8
    linear: LinearSolverConfig = field(default_factory=LinearSolverConfig)

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_iter >= 1):
            raise InvalidArgumentError("Newton tolerances must be positive and max_iter >= 1")


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual_norms: list[float]
    step_lengths: list[float]

    def to_json_lines(self) -> str:
        return "\n".join(
            json.dumps({"iteration": i, "residual_norm": r}) for i, r in enumerate(self.residual_norms)
        )


def newton_solve(
    assemble: Callable[[np.ndarray, bool], object],
    u0: np.ndarray,
    bc: DirichletBC,
    config: NewtonConfig | None = None,
    on_iteration: Callable[[dict], None] | None = None,
) -> tuple[np.ndarray, NewtonReport]:
    """Solve R(u) = 0 subject to ``bc`` with backtracking Newton.

    ``assemble(u, jacobian)`` returns R or (R, J).  Convergence: the free
    residual norm drops below ``abs_tol + rel_tol * scale`` where the scale is
    the larger of the initial free residual and the current constrained
    (reaction) residual, so warm starts are judged against the load level.
    """
    config = config or NewtonConfig()
    u = np.array(u0, dtype=float)
    free = bc.free_mask(len(u))

    def norms(R):
        return float(np.linalg.norm(R[free])), float(np.linalg.norm(R[~free]))

    R, J = assemble(u, True)
    if not np.array_equal(u[bc.dofs], bc.values):
        # tangent predictor: linearised response to the boundary-value increment
        A, r = apply_dirichlet(J, R, bc, u)
        u = u + solve_linear(A, -r, config.linear)
        u[bc.dofs] = bc.values
        R, J = assemble(u, True)
    rn, rc = norms(R)
    scale0 = rn
    history, steps = [rn], []

    def emit(i, r, a=None):
        rec = {"iteration": i, "residual_norm": r}
        if a is not None:
            rec["step"] = a
        log.debug(json.dumps(rec))
        if on_iteration:
            on_iteration(rec)

    emit(0, rn)
    for it in range(1, config.max_iter + 1):
        if rn <= config.abs_tol + config.rel_tol * max(scale0, rc):
            return u, NewtonReport(True, it - 1, history, steps)
        A, r = apply_dirichlet(J, R, bc, u)
        du = solve_linear(A, -r, config.linear)
        alpha, best = 1.0, None
        for _ in range(config.max_halvings + 1):
            trial = u + alpha * du
            Rt = assemble(trial, False)
            tn = norms(Rt)[0]
            if best is None or tn < best[0]:
                best = (tn, alpha, trial)
            if tn < rn:
                break
            alpha *= config.backtrack
        _, alpha, u = best
        steps.append(alpha)
        R, J = assemble(u, True)
        rn, rc = norms(R)
        history.append(rn)
        emit(it, rn, alpha)
    if rn <= config.abs_tol + config.rel_tol * max(scale0, rc):
        return u, NewtonReport(True, config.max_iter, history, steps)
    report = NewtonReport(False, config.max_iter, history, steps)
    raise ConvergenceError(f"Newton did not converge in {config.max_iter} iterations (|R|={rn:.3e})", iterate=u, report=report)


# ---------------------------------------------------------------- reactions
def reaction_weights(space: FunctionSpace, tag: str, direction) -> np.ndarray:
    """w with F = w . R: direction components on every DoF of nodes on ``tag``."""
    try:
        nodes = space.nodes_on(tag)
    except KeyError as exc:
        raise InvalidArgumentError(str(exc)) from None
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.size != space.ncomp:
        raise InvalidArgumentError("direction must have one entry per component")
    w = np.zeros(space.ndof)
    for c in range(space.ncomp):
        w[nodes * space.ncomp + c] = d[c]
    return w


def reaction_force(space: FunctionSpace, model: ElasticModel, u, tag: str, direction, qdeg: int | None = None) -> float:
    """Force exerted by the support on the body over ``tag`` along ``direction``.

    Sum of the unconstrained residual over the tag's DoFs (per unit thickness in 2D).
    """
    w = reaction_weights(space, tag, direction)
    R = assemble_elasticity(space, model, u, qdeg=qdeg)
    return float(w @ R)
