"""Simplicial meshes with tagged boundaries and regions.

Triangles in 2D, tetrahedra in 3D.  Generators cover the experiment geometries
(rectangle, disc, plate with a hole, disc/square thermal footprint); ``extrude``
lifts any 2D footprint to a tetrahedral slab.  Gmsh MSH 2.2 ASCII and a JSON
dump are the on-disk formats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, MeshOrientationError, MeshParseError


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh.

    ``legend`` maps integer tags to names; facet tags and region (cell) tags
    share one legend so every name is unique.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    cell_tags: np.ndarray
    legend: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("vertices", "cells", "facets", "facet_tags", "cell_tags"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        names = list(self.legend.values())
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"duplicate tag names in legend: {names}")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def tag(self, name: str) -> int:
        for k, v in self.legend.items():
            if v == name:
                return k
        raise KeyError(f"unknown tag {name!r}; known: {sorted(self.legend.values())}")

    def facets_with_tag(self, name: str) -> np.ndarray:
        return self.facets[self.facet_tags == self.tag(name)]

    def cells_with_tag(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.cell_tags == self.tag(name))

    def tagged_vertices(self, name: str) -> np.ndarray:
        return np.unique(self.facets_with_tag(name))

    def cell_volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.cells)

    def measure(self) -> float:
        return float(self.cell_volumes().sum())

    def facet_measures(self, facets: np.ndarray | None = None) -> np.ndarray:
        f = self.facets if facets is None else facets
        x = self.vertices[f]
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    @property
    def h(self) -> float:
        """Longest edge length."""
        edges = self.edges()
        return float(np.linalg.norm(self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]], axis=1).max())

    def edges(self) -> np.ndarray:
        pairs = np.concatenate([self.cells[:, [i, j]] for i, j in combinations(range(self.dim + 1), 2)])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    def facet_cells(self) -> dict[tuple, list[int]]:
        """Map every (sorted) facet of the mesh to the cells containing it."""
        out: dict[tuple, list[int]] = {}
        for c, cell in enumerate(self.cells):
            for local in combinations(sorted(cell.tolist()), self.dim):
                out.setdefault(local, []).append(c)
        return out

    def interface_facets(self, region_a: str, region_b: str) -> list[tuple]:
        ta, tb = self.tag(region_a), self.tag(region_b)
        found = []
        for f, owners in self.facet_cells().items():
            if len(owners) == 2 and {int(self.cell_tags[o]) for o in owners} == {ta, tb}:
                found.append(f)
        return found

    def check(self) -> None:
        """Validate index ranges, orientation and boundary-facet ownership."""
        if self.cells.size and self.cells.max() >= self.num_vertices:
            raise InvalidArgumentError("cell references a vertex index out of range")
        vol = self.cell_volumes()
        bad = np.flatnonzero(vol <= 0)
        if bad.size:
            raise MeshOrientationError(int(bad[0]))
        owners = self.facet_cells()
        for f in self.facets:
            key = tuple(sorted(f.tolist()))
            if len(owners.get(key, [])) != 1:
                raise InvalidArgumentError(f"boundary facet {key} is not owned by exactly one cell")
        used = set(np.unique(self.facet_tags).tolist()) | set(np.unique(self.cell_tags).tolist())
        missing = used - set(self.legend)
        if missing:
            raise InvalidArgumentError(f"tags {sorted(missing)} missing from legend")

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "facets": self.facets.tolist(),
            "facet_tags": self.facet_tags.tolist(),
            "cell_tags": self.cell_tags.tolist(),
            "legend": {str(k): v for k, v in self.legend.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mesh":
        dim = int(d["dim"])
        return cls(
            dim=dim,
            vertices=np.asarray(d["vertices"], dtype=float).reshape(-1, dim),
            cells=np.asarray(d["cells"], dtype=np.int64).reshape(-1, dim + 1),
            facets=np.asarray(d["facets"], dtype=np.int64).reshape(-1, dim),
            facet_tags=np.asarray(d["facet_tags"], dtype=np.int64),
            cell_tags=np.asarray(d["cell_tags"], dtype=np.int64),
            legend={int(k): v for k, v in d["legend"].items()},
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path) -> "Mesh":
        return cls.from_dict(json.loads(Path(path).read_text()))


def signed_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    x = vertices[cells]
    edges = x[:, 1:] - x[:, :1]
    d = x.shape[2]
    return np.linalg.det(edges) / math.factorial(d)


def _oriented(vertices, cells):
    cells = np.array(cells, dtype=np.int64)
    neg = signed_volumes(vertices, cells) < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
    return cells


def _check_positive(*values, names):
    for v, n in zip(values, names):
        if not v > 0:
            raise InvalidArgumentError(f"{n} must be positive, got {v}")


def _quads_to_triangles(grid: np.ndarray, alternate: bool = True) -> list:
    """Split a structured (nr+1, nt+1) vertex-index grid into triangles."""
    cells = []
    n0, n1 = grid.shape
    for i in range(n0 - 1):
        for j in range(n1 - 1):
            a, b, c, d = grid[i, j], grid[i, j + 1], grid[i + 1, j + 1], grid[i + 1, j]
            if alternate and (i + j) % 2:
                cells += [(a, b, d), (b, c, d)]
            else:
                cells += [(a, b, c), (a, c, d)]
    return cells


# ---------------------------------------------------------------- generators
def generate_rectangle(width: float, height: float, nx: int, ny: int) -> Mesh:
    """Structured triangulation of [0, width] x [0, height] with 2*nx*ny cells.

    Diagonals alternate in a checkerboard so the mesh has no preferred shear
    direction.  Boundary tags: bottom, top, left, right.
    """
    _check_positive(width, height, names=("width", "height"))
    if nx < 1 or ny < 1:
        raise InvalidArgumentError("nx and ny must be >= 1")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    grid = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    cells = _oriented(vertices, _quads_to_triangles(grid))
    legend = {0: "domain", 1: "bottom", 2: "top", 3: "left", 4: "right"}
    facets, tags = [], []
    for j in range(nx):
        facets += [(grid[0, j], grid[0, j + 1]), (grid[ny, j + 1], grid[ny, j])]
        tags += [1, 2]
    for i in range(ny):
        facets += [(grid[i + 1, 0], grid[i, 0]), (grid[i, nx], grid[i + 1, nx])]
        tags += [3, 4]
    return Mesh(2, vertices, cells, np.array(facets), np.array(tags), np.zeros(len(cells), int), legend)


def _angle_overlaps(a0, a1, centre, half):
    """Whether the arc from angle a0 to a1 (CCW, radians) overlaps centre +/- half."""
    lo, hi = centre - half, centre + half
    span = (a1 - a0) % (2 * math.pi)
    for shift in (-2 * math.pi, 0.0, 2 * math.pi):
        s = a0 + shift
        if s < hi and s + span > lo:
            return True
    return False


def generate_disc(diameter: float, rings: int, arc_half_angle_deg: float = 10.0) -> Mesh:
    """Concentric-ring triangulation of a disc centred at the origin.

    Ring k carries 6k vertices, with a vertex at the top and bottom poles.
    Boundary facets overlapping +/- ``arc_half_angle_deg`` around the poles are
    tagged top_arc / bottom_arc, the rest ``free``.
    """
    _check_positive(diameter, names=("diameter",))
    if rings < 1:
        raise InvalidArgumentError("rings must be >= 1")
    R = 0.5 * diameter
    verts = [(0.0, 0.0)]
    ring_idx = [[0]]
    ring_ang = [[0.0]]
    for k in range(1, rings + 1):
        n = 6 * k
        ang = math.pi / 2 + 2 * math.pi * np.arange(n) / n
        r = R * k / rings
        start = len(verts)
        verts += [(r * math.cos(a), r * math.sin(a)) for a in ang]
        ring_idx.append(list(range(start, start + n)))
        ring_ang.append(list(ang))
    vertices = np.array(verts)
    cells = [(0, ring_idx[1][j], ring_idx[1][(j + 1) % 6]) for j in range(6)]
    for k in range(2, rings + 1):
        inner, outer = ring_idx[k - 1], ring_idx[k]
        ai = np.unwrap(np.array(ring_ang[k - 1] + [ring_ang[k - 1][0] + 2 * math.pi]))
        ao = np.unwrap(np.array(ring_ang[k] + [ring_ang[k][0] + 2 * math.pi]))
        i = j = 0
        ni, no = len(inner), len(outer)
        while i < ni or j < no:
            # advance on whichever ring has the smaller next angle
            if j < no and (i >= ni or ao[j + 1] <= ai[i + 1] + 1e-12):
                cells.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
                j += 1
            else:
                cells.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
                i += 1
    cells = _oriented(vertices, cells)
    legend = {0: "domain", 1: "bottom_arc", 2: "top_arc", 3: "free"}
    half = math.radians(arc_half_angle_deg)
    outer, ang = ring_idx[rings], ring_ang[rings]
    facets, tags = [], []
    n = len(outer)
    for j in range(n):
        a0, a1 = ang[j], ang[j] + 2 * math.pi / n
        facets.append((outer[j], outer[(j + 1) % n]))
        if _angle_overlaps(a0, a1, math.pi / 2, half):
            tags.append(2)
        elif _angle_overlaps(a0, a1, -math.pi / 2, half):
            tags.append(1)
        else:
            tags.append(3)
    return Mesh(2, vertices, cells, np.array(facets), np.array(tags), np.zeros(len(cells), int), legend)


def _loft(inner: np.ndarray, outer: np.ndarray, layers: int, first_index: int = 0):
    """Vertices and triangles filling the band between two matched closed loops.

    ``inner``/``outer`` are (n, 2) loops in the same (CCW) order; ``layers``
    radial layers of quads are split into triangles.  Returns (vertices,
    cells, index grid of shape (layers+1, n)).
    """
    n = len(inner)
    pts = []
    for k in range(layers + 1):
        s = k / layers
        pts.append((1 - s) * inner + s * outer)
    vertices = np.concatenate(pts)
    grid = first_index + np.arange((layers + 1) * n).reshape(layers + 1, n)
    grid = np.concatenate([grid, grid[:, :1]], axis=1)
    return vertices, _quads_to_triangles(grid), grid[:, :-1]


def _rectangle_loop(width, height, n_w, n_h, centre):
    """CCW loop around a rectangle starting at its top-right corner."""
    cx, cy = centre
    x0, x1, y0, y1 = cx - width / 2, cx + width / 2, cy - height / 2, cy + height / 2
    top = [(x1 - width * t / n_w, y1) for t in range(n_w)]
    left = [(x0, y1 - height * t / n_h) for t in range(n_h)]
    bottom = [(x0 + width * t / n_w, y0) for t in range(n_w)]
    right = [(x1, y0 + height * t / n_h) for t in range(n_h)]
    return np.array(top + left + bottom + right)


def generate_plate_with_hole(width: float, height: float, hole_diameter: float, resolution: int) -> Mesh:
    """Rectangle [0, width] x [0, height] with a centred circular hole.

    The hole is a polygon whose vertices are the radial projections of the
    outer boundary vertices, giving 8*resolution*(1 + height/width)
    segments (at least 8*resolution).  Tags: bottom, top, left, right, hole.
    """
    _check_positive(width, height, hole_diameter, names=("width", "height", "hole_diameter"))
    if resolution < 1:
        raise InvalidArgumentError("resolution must be >= 1")
    r = 0.5 * hole_diameter
    if not r < 0.5 * min(width, height):
        raise InvalidArgumentError(f"hole of diameter {hole_diameter} does not fit in a {width} x {height} plate")
    centre = np.array([width / 2, height / 2])
    n_w = 4 * resolution
    n_h = max(4 * resolution, int(round(4 * resolution * height / width)))
    outer = _rectangle_loop(width, height, n_w, n_h, centre)
    d = outer - centre
    inner = centre + r * d / np.linalg.norm(d, axis=1, keepdims=True)
    layers = 2 * resolution
    vertices, cells, grid = _loft(inner, outer, layers)
    cells = _oriented(vertices, cells)
    legend = {0: "domain", 1: "bottom", 2: "top", 3: "left", 4: "right", 5: "hole"}
    n = len(outer)
    facets, tags = [], []
    ring_out, ring_in = grid[-1], grid[0]
    for j in range(n):
        a, b = ring_out[j], ring_out[(j + 1) % n]
        mid = 0.5 * (vertices[a] + vertices[b])
        if abs(mid[1] - height) < 1e-12 * height:
            tag = 2
        elif abs(mid[1]) < 1e-12 * height:
            tag = 1
        elif mid[0] < width / 2:
            tag = 3
        else:
            tag = 4
        facets.append((a, b))
        tags.append(tag)
        facets.append((ring_in[(j + 1) % n], ring_in[j]))
        tags.append(5)
    return Mesh(2, vertices, cells, np.array(facets), np.array(tags), np.zeros(len(cells), int), legend)


def generate_thermal_footprint(
    disc_diameter: float,
    hole_diameter: float,
    square_edge: float,
    resolution: int,
    source_half_angle_deg: float = 30.0,
) -> Mesh:
    """Plan view of a holed copper disc carrying a square sample over its hole.

    The square covers the hole, so the footprint is the full disc split into a
    ``sample`` region (the square) and a ``copper`` region (the rest), meeting
    on a conforming interface.  Boundary tags: ``left_arc`` (heat source,
    +/- ``source_half_angle_deg`` around the negative x axis) and ``rim``.
    """
    _check_positive(disc_diameter, hole_diameter, square_edge, names=("disc_diameter", "hole_diameter", "square_edge"))
    if resolution < 1:
        raise InvalidArgumentError("resolution must be >= 1")
    R, a = 0.5 * disc_diameter, 0.5 * square_edge
    if square_edge < hole_diameter:
        raise InvalidArgumentError("square must cover the hole (square_edge >= hole_diameter)")
    if not a * math.sqrt(2) < R:
        raise InvalidArgumentError("square does not fit inside the disc")
    if not hole_diameter < disc_diameter:
        raise InvalidArgumentError("hole larger than disc")
    n = 4 * resolution
    # square interior grid (n+1)^2, boundary loop extracted CCW from (a, a)
    xs = np.linspace(-a, a, n + 1)
    X, Y = np.meshgrid(xs, xs)
    sq_vertices = np.column_stack([X.ravel(), Y.ravel()])
    sq_grid = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    sq_cells = _quads_to_triangles(sq_grid)
    loop = (
        [sq_grid[n, n - t] for t in range(n)]
        + [sq_grid[n - t, 0] for t in range(n)]
        + [sq_grid[0, t] for t in range(n)]
        + [sq_grid[t, n] for t in range(n)]
    )
    loop = np.array(loop)
    m = len(loop)
    ang = math.pi / 4 + 2 * math.pi * np.arange(m) / m
    outer = R * np.column_stack([np.cos(ang), np.sin(ang)])
    layers = resolution + 1
    inner = sq_vertices[loop]
    rows = [loop]
    extra = []
    for k in range(1, layers + 1):
        s = k / layers
        rows.append(len(sq_vertices) + len(extra) + np.arange(m))
        extra.extend((1 - s) * inner + s * outer)
    grid = np.array(rows)
    grid = np.concatenate([grid, grid[:, :1]], axis=1)
    band_cells = _quads_to_triangles(grid)
    vertices = np.concatenate([sq_vertices, np.array(extra)])
    cells = _oriented(vertices, np.array(sq_cells + band_cells))
    legend = {1: "copper", 2: "sample", 3: "left_arc", 4: "rim"}
    cell_tags = np.array([2] * len(sq_cells) + [1] * len(band_cells))
    ring = grid[-1, :-1]
    half = math.radians(source_half_angle_deg)
    facets, tags = [], []
    for j in range(m):
        facets.append((ring[j], ring[(j + 1) % m]))
        tags.append(3 if _angle_overlaps(ang[j], ang[j] + 2 * math.pi / m, math.pi, half) else 4)
    return Mesh(2, vertices, cells, np.array(facets), np.array(tags), cell_tags, legend)


def extrude(mesh2d: Mesh, thickness: float, layers: int) -> Mesh:
    """Extrude a triangle mesh along z into tetrahedra.

    Each prism is split into three tetrahedra with every quad face cut along
    the diagonal joining the lower vertex index at the bottom to the higher
    index at the top, which keeps neighbouring prisms conforming.  Side facets
    inherit the 2D facet tags; bottom and top faces get ``zmin`` / ``zmax``.
    """
    if mesh2d.dim != 2:
        raise InvalidArgumentError("extrude expects a 2D mesh")
    _check_positive(thickness, names=("thickness",))
    if layers < 1:
        raise InvalidArgumentError("layers must be >= 1")
    area = mesh2d.cell_volumes()
    bad = np.flatnonzero(area <= 0)
    if bad.size:
        raise MeshOrientationError(int(bad[0]))
    nv = mesh2d.num_vertices
    zs = np.linspace(0.0, thickness, layers + 1)
    vertices = np.concatenate([np.column_stack([mesh2d.vertices, np.full(nv, z)]) for z in zs])
    tets, cell_tags = [], []
    for c, tri in enumerate(mesh2d.cells):
        a, b, cc = sorted(tri.tolist())
        for l in range(layers):
            lo, hi = l * nv, (l + 1) * nv
            tets += [
                (a + lo, b + lo, cc + lo, cc + hi),
                (a + lo, b + lo, b + hi, cc + hi),
                (a + lo, a + hi, b + hi, cc + hi),
            ]
            cell_tags += [mesh2d.cell_tags[c]] * 3
    tets = _oriented(vertices, tets)
    legend = dict(mesh2d.legend)
    top = max(legend) + 1
    zmin, zmax = top, top + 1
    legend[zmin], legend[zmax] = "zmin", "zmax"
    facets, tags = [], []
    for (p, q), t in zip(mesh2d.facets.tolist(), mesh2d.facet_tags.tolist()):
        p, q = min(p, q), max(p, q)
        for l in range(layers):
            lo, hi = l * nv, (l + 1) * nv
            facets += [(p + lo, q + lo, q + hi), (p + lo, p + hi, q + hi)]
            tags += [t, t]
    for tri in mesh2d.cells.tolist():
        facets.append(tuple(tri))
        tags.append(zmin)
        facets.append(tuple(v + layers * nv for v in tri))
        tags.append(zmax)
    return Mesh(3, vertices, tets, np.array(facets), np.array(tags), np.array(cell_tags), legend)


# ------------------------------------------------------------------ MSH 2.2
_MSH_NODES = {1: 2, 2: 3, 4: 4, 15: 1}


def read_msh(path) -> Mesh:
    """Read the Gmsh MSH 2.2 ASCII subset: nodes, lines, triangles, tetrahedra.

    The first tag of each element is its physical group; highest-dimensional
    elements become cells (physical group -> region tag), elements one
    dimension lower become boundary facets.
    """
    lines = Path(path).read_text().splitlines()
    names: dict[int, str] = {}
    nodes: dict[int, tuple] = {}
    elements: list[tuple[int, int, list[int], int]] = []
    i = 0

    def expect_end(section, j):
        if j >= len(lines) or lines[j].strip() != f"$End{section}":
            raise MeshParseError(f"missing $End{section}", j + 1)

    while i < len(lines):
        head = lines[i].strip()
        if head == "$MeshFormat":
            parts = lines[i + 1].split()
            if not parts or not parts[0].startswith("2"):
                raise MeshParseError(f"unsupported MSH version {parts[:1]}", i + 2)
            if len(parts) > 1 and parts[1] != "0":
                raise MeshParseError("binary MSH is not supported", i + 2)
            expect_end("MeshFormat", i + 2)
            i += 3
        elif head == "$PhysicalNames":
            count = _parse_int(lines, i + 1)
            for k in range(count):
                ln = i + 2 + k
                parts = lines[ln].split(maxsplit=2)
                if len(parts) < 3:
                    raise MeshParseError("malformed physical name", ln + 1)
                names[int(parts[1])] = parts[2].strip().strip('"')
            expect_end("PhysicalNames", i + 2 + count)
            i += 3 + count
        elif head == "$Nodes":
            count = _parse_int(lines, i + 1)
            for k in range(count):
                ln = i + 2 + k
                parts = lines[ln].split() if ln < len(lines) else []
                if len(parts) != 4:
                    raise MeshParseError("malformed node record", ln + 1)
                try:
                    nodes[int(parts[0])] = tuple(float(p) for p in parts[1:])
                except ValueError as exc:
                    raise MeshParseError(f"malformed node record: {exc}", ln + 1) from None
            expect_end("Nodes", i + 2 + count)
            i += 3 + count
        elif head == "$Elements":
            count = _parse_int(lines, i + 1)
            for k in range(count):
                ln = i + 2 + k
                try:
                    parts = [int(p) for p in lines[ln].split()]
                    etype, ntags = parts[1], parts[2]
                except (ValueError, IndexError):
                    raise MeshParseError("malformed element record", ln + 1) from None
                if etype not in _MSH_NODES:
                    raise MeshParseError(f"unsupported element type {etype}", ln + 1)
                conn = parts[3 + ntags:]
                if len(conn) != _MSH_NODES[etype]:
                    raise MeshParseError(f"element type {etype} expects {_MSH_NODES[etype]} nodes", ln + 1)
                phys = parts[3] if ntags > 0 else 0
                elements.append((etype, phys, conn, ln + 1))
            expect_end("Elements", i + 2 + count)
            i += 3 + count
        elif head.startswith("$"):
            # skip unknown sections
            end = "$End" + head[1:]
            while i < len(lines) and lines[i].strip() != end:
                i += 1
            i += 1
        else:
            i += 1
    if not nodes:
        raise MeshParseError("no $Nodes section")
    dim = 3 if any(e[0] == 4 for e in elements) else 2
    cell_type, facet_type = (4, 2) if dim == 3 else (2, 1)
    ids = sorted(nodes)
    index = {nid: k for k, nid in enumerate(ids)}
    vertices = np.array([nodes[n][:dim] for n in ids])

    def conn_idx(conn, ln):
        try:
            return [index[c] for c in conn]
        except KeyError as exc:
            raise MeshParseError(f"element references unknown node {exc.args[0]}", ln) from None

    cells = [conn_idx(c, ln) for t, _, c, ln in elements if t == cell_type]
    cell_tags = [p for t, p, _, _ in elements if t == cell_type]
    facets = [conn_idx(c, ln) for t, _, c, ln in elements if t == facet_type]
    facet_tags = [p for t, p, _, _ in elements if t == facet_type]
    legend = {t: names.get(t, f"tag_{t}") for t in sorted(set(cell_tags) | set(facet_tags))}
    return Mesh(
        dim,
        vertices,
        np.array(cells, dtype=np.int64).reshape(-1, dim + 1),
        np.array(facets, dtype=np.int64).reshape(-1, dim),
        np.array(facet_tags, dtype=np.int64),
        np.array(cell_tags, dtype=np.int64),
        legend,
    )


def _parse_int(lines, j):
    try:
        return int(lines[j].strip())
    except (ValueError, IndexError):
        raise MeshParseError("expected an integer count", j + 1) from None


def write_msh(mesh: Mesh, path) -> None:
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    cell_dim = mesh.dim
    out.append("$PhysicalNames")
    used_cells = set(mesh.cell_tags.tolist())
    out.append(str(len(mesh.legend)))
    for t, name in sorted(mesh.legend.items()):
        d = cell_dim if t in used_cells else cell_dim - 1
        out.append(f'{d} {t} "{name}"')
    out.append("$EndPhysicalNames")
    out += ["$Nodes", str(mesh.num_vertices)]
    for k, x in enumerate(mesh.vertices.tolist()):
        xyz = list(x) + [0.0] * (3 - len(x))
        out.append(f"{k + 1} " + " ".join(repr(float(v)) for v in xyz))
    out.append("$EndNodes")
    cell_type, facet_type = (4, 2) if mesh.dim == 3 else (2, 1)
    recs = []
    for f, t in zip(mesh.facets.tolist(), mesh.facet_tags.tolist()):
        recs.append((facet_type, t, f))
    for c, t in zip(mesh.cells.tolist(), mesh.cell_tags.tolist()):
        recs.append((cell_type, t, c))
    out += ["$Elements", str(len(recs))]
    for k, (etype, t, conn) in enumerate(recs):
        out.append(f"{k + 1} {etype} 2 {t} {t} " + " ".join(str(v + 1) for v in conn))
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")
