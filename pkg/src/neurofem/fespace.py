"""Lagrange finite-element spaces on simplicial meshes.

Degrees 1-3, scalar or vector valued, on triangles and tetrahedra.  The
nodal basis is built by inverting the monomial Vandermonde matrix at the
equispaced barycentric lattice, so the same code covers every degree and
dimension.  Vector DoFs are interleaved: node ``i`` component ``c`` is DoF
``i * ncomp + c``.

Also hosts the encode/process/decode operator over FE DoFs (``encode``,
``decode``, ``spon_apply``), which is what makes a trained output evaluable
at arbitrary points of the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import product
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_jacobi

from .errors import InvalidArgumentError, PointLocationError
from .mesh import Mesh
from .neural import forward

LOCATE_TOL = 1e-10


# ---------------------------------------------------------------- quadrature
@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def quadrature(dim: int, degree: int) -> QuadratureRule:
    """Collapsed-coordinate Gauss-Jacobi rule on the reference simplex.

    Exact for polynomials of total degree <= ``degree``; weights sum to the
    reference measure 1/dim!.
    """
    n = max(1, math.ceil((degree + 1) / 2))
    if dim == 1:
        t, w = roots_jacobi(n, 0, 0)
        return QuadratureRule(((t + 1) / 2)[:, None], w / 2, degree)
    rules = []
    for a in range(dim - 1, -1, -1):
        t, w = roots_jacobi(n, a, 0)
        rules.append(((t + 1) / 2, w / 2 ** (a + 1)))
    pts, wts = [], []
    for idx in product(range(n), repeat=dim):
        c = [rules[k][0][i] for k, i in enumerate(idx)]
        wt = np.prod([rules[k][1][i] for k, i in enumerate(idx)])
        x = np.empty(dim)
        scale = 1.0
        for k in range(dim):
            x[k] = c[k] * scale
            scale *= 1 - c[k]
        pts.append(x)
        wts.append(wt)
    return QuadratureRule(np.array(pts), np.array(wts), degree)


# ------------------------------------------------------------ reference basis
def _lattice(dim: int, degree: int) -> list[tuple[int, ...]]:
    """Barycentric multi-indices (a_0..a_dim), sum = degree: vertices, then edges, faces, interior."""
    pts = [a for a in product(range(degree + 1), repeat=dim + 1) if sum(a) == degree]
    return sorted(pts, key=lambda a: (sum(1 for v in a if v), [-v for v in a]))


def _monomials(dim: int, degree: int) -> list[tuple[int, ...]]:
    return [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]


@dataclass(frozen=True)
class ReferenceElement:
    dim: int
    degree: int

    @cached_property
    def lattice(self) -> list[tuple[int, ...]]:
        return _lattice(self.dim, self.degree)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Reference coordinates of the Lagrange nodes."""
        return np.array([a[1:] for a in self.lattice], dtype=float) / self.degree

    @cached_property
    def _exps(self) -> np.ndarray:
        return np.array(_monomials(self.dim, self.degree))

    @cached_property
    def _coeffs(self) -> np.ndarray:
        V = self._vander(self.nodes)
        return np.linalg.inv(V)

    def _vander(self, x: np.ndarray) -> np.ndarray:
        return np.prod(x[:, None, :] ** self._exps[None, :, :], axis=2)

    def _vander_grad(self, x: np.ndarray) -> np.ndarray:
        e = self._exps
        out = np.zeros((len(x), len(e), self.dim))
        for d in range(self.dim):
            ed = e.copy()
            coef = ed[:, d].astype(float)
            ed[:, d] = np.maximum(ed[:, d] - 1, 0)
            out[:, :, d] = coef * np.prod(x[:, None, :] ** ed[None, :, :], axis=2)
        return out

    @property
    def ndof(self) -> int:
        return len(self.lattice)

    def tabulate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Basis values (npts, nloc) and reference gradients (npts, nloc, dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = self._vander(x) @ self._coeffs
        grads = np.einsum("pmd,mi->pid", self._vander_grad(x), self._coeffs)
        return vals, grads


def tabulate(space: "FunctionSpace", reference_points) -> tuple[np.ndarray, np.ndarray]:
    return space.element.tabulate(reference_points)


# ---------------------------------------------------------------- the space
@dataclass(eq=False)
class FunctionSpace:
    mesh: Mesh
    degree: int
    ncomp: int
    element: ReferenceElement
    cell_nodes: np.ndarray
    node_coords: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def num_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def ndof(self) -> int:
        return self.num_nodes * self.ncomp

    @property
    def is_vector(self) -> bool:
        return self.ncomp > 1

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        """(ncells, nloc * ncomp) global DoFs, component fastest."""
        k = self.ncomp
        return (self.cell_nodes[:, :, None] * k + np.arange(k)).reshape(len(self.cell_nodes), -1)

    @cached_property
    def jacobians(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Affine map data per cell: J (C, d, d), det J (C,), inv J (C, d, d)."""
        x = self.mesh.vertices[self.mesh.cells]
        J = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))
        return J, np.linalg.det(J), np.linalg.inv(J)

    def quadrature_data(self, qdeg: int):
        """Quadrature tabulation: (rule, phi (Q, nloc), dphi_x (C, Q, nloc, d), dx (C, Q))."""
        key = ("q", qdeg)
        if key not in self._cache:
            rule = quadrature(self.dim, qdeg)
            phi, dphi = self.element.tabulate(rule.points)
            _, det, inv = self.jacobians
            dphix = np.einsum("qid,cde->cqie", dphi, inv)
            dx = np.abs(det)[:, None] * rule.weights[None, :]
            self._cache[key] = (rule, phi, dphix, dx)
        return self._cache[key]

    def quadrature_points(self, qdeg: int) -> np.ndarray:
        rule = quadrature(self.dim, qdeg)
        J, _, _ = self.jacobians
        x0 = self.mesh.vertices[self.mesh.cells[:, 0]]
        return x0[:, None, :] + np.einsum("cde,qe->cqd", J, rule.points)

    def scalar(self) -> "FunctionSpace":
        if self.ncomp == 1:
            return self
        return FunctionSpace(self.mesh, self.degree, 1, self.element, self.cell_nodes, self.node_coords)

    def nodes_on(self, tag: str) -> np.ndarray:
        """Global node indices lying on facets with the given tag."""
        key = ("tag", tag)
        if key not in self._cache:
            facets = self.mesh.facets_with_tag(tag)
            verts = set(np.unique(facets).tolist())
            # a node lies on a tagged facet iff all its supporting vertices belong to one such facet
            facet_sets = [frozenset(f) for f in facets.tolist()]
            found = set()
            lattice = self.element.lattice
            for c, cell in enumerate(self.mesh.cells.tolist()):
                if not verts.intersection(cell):
                    continue
                for loc, a in enumerate(lattice):
                    support = frozenset(cell[j] for j, v in enumerate(a) if v)
                    if any(support <= fs for fs in facet_sets):
                        found.add(int(self.cell_nodes[c, loc]))
            self._cache[key] = np.array(sorted(found), dtype=np.int64)
        return self._cache[key]

    def dofs_on(self, tag: str, component: int | None = None) -> np.ndarray:
        nodes = self.nodes_on(tag)
        if component is None:
            return (nodes[:, None] * self.ncomp + np.arange(self.ncomp)).ravel()
        return nodes * self.ncomp + component

    def cell_tag_mask(self, name: str) -> np.ndarray:
        return self.mesh.cell_tags == self.mesh.tag(name)


def build_space(mesh: Mesh, degree: int, value_shape: str | int = "scalar") -> FunctionSpace:
    """Build a continuous Lagrange space.

    ``value_shape`` is ``"scalar"``, ``"vector"`` (mesh dimension components)
    or an explicit component count.
    """
    if degree not in (1, 2, 3):
        raise InvalidArgumentError(f"degree must be 1, 2 or 3, got {degree}")
    if value_shape == "scalar":
        ncomp = 1
    elif value_shape == "vector":
        ncomp = mesh.dim
    else:
        ncomp = int(value_shape)
    el = ReferenceElement(mesh.dim, degree)
    keys: dict[tuple, int] = {}
    cell_nodes = np.empty((mesh.num_cells, el.ndof), dtype=np.int64)
    coords = []
    verts = mesh.vertices
    lattice = el.lattice
    for c, cell in enumerate(mesh.cells.tolist()):
        for loc, a in enumerate(lattice):
            key = tuple(sorted((cell[j], v) for j, v in enumerate(a) if v))
            idx = keys.get(key)
            if idx is None:
                idx = keys[key] = len(coords)
                coords.append(sum(v * verts[cell[j]] for j, v in enumerate(a)) / degree)
            cell_nodes[c, loc] = idx
    return FunctionSpace(mesh, degree, ncomp, el, cell_nodes, np.array(coords))


# -------------------------------------------------------------- FE functions
@dataclass(eq=False)
class FEFunction:
    space: FunctionSpace
    dofs: np.ndarray

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=float)
        if self.dofs.shape != (self.space.ndof,):
            raise InvalidArgumentError(f"expected {self.space.ndof} dofs, got shape {self.dofs.shape}")

    def nodal_values(self) -> np.ndarray:
        """(num_nodes,) for scalars, (num_nodes, ncomp) for vectors."""
        if self.space.ncomp == 1:
            return self.dofs
        return self.dofs.reshape(-1, self.space.ncomp)

    def vertex_values(self) -> np.ndarray:
        """Values at mesh vertices (vertex nodes come first in every cell)."""
        sp = self.space
        nodes = np.empty(sp.mesh.num_vertices, dtype=np.int64)
        nodes[sp.mesh.cells.ravel()] = sp.cell_nodes[:, : sp.dim + 1].ravel()
        return self.nodal_values()[nodes]

    def __call__(self, points) -> np.ndarray:
        return evaluate_at_points(self, points)


def interpolate(space: FunctionSpace, fn) -> FEFunction:
    """Nodal interpolation of ``fn`` (points (N, d) -> (N,) or (N, ncomp))."""
    vals = np.asarray(fn(space.node_coords), dtype=float)
    if vals.ndim == 0:
        vals = np.full(space.num_nodes, float(vals))
    if space.ncomp > 1 and vals.shape != (space.num_nodes, space.ncomp):
        vals = np.broadcast_to(vals, (space.num_nodes, space.ncomp))
    return FEFunction(space, np.array(vals, dtype=float).ravel())


def locate(space: FunctionSpace, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing cell and reference coordinates for each point.

    Candidates come from the nearest cell centroids; anything not found there
    falls back to a scan over all cells.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = space.mesh
    x0 = mesh.vertices[mesh.cells[:, 0]]
    _, _, inv = space.jacobians
    if "kdtree" not in space._cache:
        space._cache["kdtree"] = cKDTree(mesh.vertices[mesh.cells].mean(axis=1))
    tree = space._cache["kdtree"]
    k = min(mesh.num_cells, 12)
    _, cand = tree.query(points, k=k)
    cand = np.asarray(cand).reshape(len(points), k)
    cells = np.full(len(points), -1, dtype=np.int64)
    xi_out = np.zeros((len(points), space.dim))

    def barycentric_ok(cidx, p):
        xi = np.einsum("...de,...e->...d", inv[cidx], p - x0[cidx])
        lam = np.concatenate([1 - xi.sum(axis=-1, keepdims=True), xi], axis=-1)
        return xi, lam.min(axis=-1) >= -LOCATE_TOL

    xi, ok = barycentric_ok(cand, points[:, None, :])
    hit = ok.any(axis=1)
    first = ok.argmax(axis=1)
    rows = np.flatnonzero(hit)
    cells[rows] = cand[rows, first[rows]]
    xi_out[rows] = xi[rows, first[rows]]
    for r in np.flatnonzero(~hit):
        xi_all, ok_all = barycentric_ok(np.arange(mesh.num_cells), points[r][None, :])
        idx = np.flatnonzero(ok_all)
        if idx.size == 0:
            raise PointLocationError(f"point {points[r].tolist()} lies outside the mesh")
        cells[r] = idx[0]
        xi_out[r] = xi_all[idx[0]]
    return cells, xi_out


def evaluate_at_points(f: FEFunction, points) -> np.ndarray:
    """Evaluate u(x) = sum_i u_i phi_i(x) at physical points."""
    sp = f.space
    cells, xi = locate(sp, points)
    phi, _ = sp.element.tabulate(xi)
    nodal = f.nodal_values()
    local = nodal[sp.cell_nodes[cells]]
    if sp.ncomp == 1:
        return np.einsum("pi,pi->p", phi, local)
    return np.einsum("pi,pic->pc", phi, local)


def gradient_at_quadrature(f: FEFunction, qdeg: int) -> np.ndarray:
    """Physical gradient at quadrature points: (C, Q, d) or (C, Q, ncomp, d)."""
    sp = f.space
    _, _, dphix, _ = sp.quadrature_data(qdeg)
    local = f.nodal_values()[sp.cell_nodes]
    if sp.ncomp == 1:
        return np.einsum("cqid,ci->cqd", dphix, local)
    return np.einsum("cqid,cik->cqkd", dphix, local)


def l2_error(f: FEFunction, exact, qdeg: int | None = None) -> float:
    """L2 norm of (f - exact) computed by quadrature."""
    sp = f.space
    qdeg = qdeg or 2 * sp.degree + 3
    _, phi, _, dx = sp.quadrature_data(qdeg)
    xq = sp.quadrature_points(qdeg)
    local = f.nodal_values()[sp.cell_nodes]
    if sp.ncomp == 1:
        uh = np.einsum("qi,ci->cq", phi, local)
        ex = np.asarray(exact(xq.reshape(-1, sp.dim))).reshape(uh.shape)
        return float(np.sqrt(np.sum(dx * (uh - ex) ** 2)))
    uh = np.einsum("qi,cik->cqk", phi, local)
    ex = np.asarray(exact(xq.reshape(-1, sp.dim))).reshape(uh.shape)
    return float(np.sqrt(np.sum(dx[..., None] * (uh - ex) ** 2)))


# ----------------------------------------------- encode / process / decode
def encode(f: FEFunction) -> np.ndarray:
    """DoF vector of f; for f already in the space this is the Galerkin coefficient set."""
    return f.dofs.copy()


def decode(space: FunctionSpace, dofs) -> FEFunction:
    dofs = np.asarray(dofs, dtype=float)
    if dofs.shape != (space.ndof,):
        raise InvalidArgumentError(f"decode expects {space.ndof} coefficients, got {dofs.shape}")
    return FEFunction(space, dofs.copy())


def spon_apply(encoder_space: FunctionSpace, processor, decoder_space: FunctionSpace, f: FEFunction) -> FEFunction:
    """Apply decode . processor . encode to ``f``."""
    if f.space is not encoder_space and f.space.ndof != encoder_space.ndof:
        raise InvalidArgumentError("input function does not live in the encoder space")
    widths = processor.config.layer_widths
    if widths[0] != encoder_space.ndof or widths[-1] != decoder_space.ndof:
        raise InvalidArgumentError(
            f"processor maps R^{widths[0]} -> R^{widths[-1]}, "
            f"spaces need R^{encoder_space.ndof} -> R^{decoder_space.ndof}"
        )
    return decode(decoder_space, forward(processor, encode(f)))


# -------------------------------------------------------------------- output
_VTK_CELL = {2: 5, 3: 10}


def write_vtk(path, mesh: Mesh, point_data: dict[str, np.ndarray] | None = None, cell_data=None) -> None:
    """Legacy ASCII VTK unstructured grid with vertex-based point data."""
    lines = ["# vtk DataFile Version 3.0", "neurofem field", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.num_vertices} double")
    for x in mesh.vertices.tolist():
        x = list(x) + [0.0] * (3 - len(x))
        lines.append(" ".join(f"{v:.17g}" for v in x))
    n = mesh.dim + 1
    lines.append(f"CELLS {mesh.num_cells} {mesh.num_cells * (n + 1)}")
    lines += [f"{n} " + " ".join(map(str, c)) for c in mesh.cells.tolist()]
    lines.append(f"CELL_TYPES {mesh.num_cells}")
    lines += [str(_VTK_CELL[mesh.dim])] * mesh.num_cells

    def block(data):
        out = []
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.17g}" for v in arr]
            else:
                a3 = np.zeros((len(arr), 3))
                a3[:, : arr.shape[1]] = arr
                out.append(f"VECTORS {name} double")
                out += [" ".join(f"{v:.17g}" for v in row) for row in a3]
        return out

    if point_data:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        lines += block(point_data)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.num_cells}")
        lines += block(cell_data)
    Path(path).write_text("\n".join(lines) + "\n")


def write_point_csv(path, points: np.ndarray, values: np.ndarray, value_names=None) -> None:
    points = np.atleast_2d(points)
    values = np.asarray(values, dtype=float).reshape(len(points), -1)
    coords = ["x", "y", "z"][: points.shape[1]]
    names = value_names or (["value"] if values.shape[1] == 1 else [f"value_{k}" for k in range(values.shape[1])])
    rows = [",".join(coords + list(names))]
    for p, v in zip(points, values):
        rows.append(",".join(f"{t:.17g}" for t in list(p) + list(v)))
    Path(path).write_text("\n".join(rows) + "\n")
