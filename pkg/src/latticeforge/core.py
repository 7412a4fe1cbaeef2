"""Geometry and graph primitives shared by every other module.

Coordinates are absolute cell units.  Symmetry operations are signed
permutation matrices acting about a frame center, so every image of a
dyadic coordinate stays exactly representable.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MIN_SIDE = 1e-9

# Engineering property order used everywhere a 9-vector appears.
PROPERTY_KEYS = ("E_x", "E_y", "E_z", "G_yz", "G_xz", "G_xy", "nu_yz", "nu_xz", "nu_xy")


class LatticeError(ValueError):
    """Raised for malformed cells or invalid geometric requests."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class UnitCell:
    """Vertex coordinates plus an undirected edge list for one periodic cell.

    Edges are stored as ``(i, j)`` with ``i < j``, no self-loops and no
    duplicates.  Use :func:`canonical_clean` to build a cell from an
    unnormalized edge list.
    """

    vertices: np.ndarray
    edges: tuple = ()
    name: str | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise LatticeError("vertex coordinates must be finite")
        n = len(v)
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        seen = set()
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise LatticeError(f"edge ({i}, {j}) references a vertex outside 0..{n - 1}")
            if i == j:
                raise LatticeError(f"self-loop at vertex {i}")
            if i > j:
                raise LatticeError(f"edge ({i}, {j}) not normalized to i < j")
            if (i, j) in seen:
                raise LatticeError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if edges and n < 2:
            raise LatticeError("a cell with edges needs at least 2 vertices")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "edges", edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=int).reshape(-1, 2)

    def with_vertices(self, vertices) -> "UnitCell":
        return UnitCell(vertices, self.edges, self.name)

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass(frozen=True)
class Frame:
    """Axis-aligned cubic reference frame; faces at ``center +- side/2``."""

    center: np.ndarray
    side: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        if not self.side > 0:
            raise LatticeError(f"frame side must be positive, got {self.side}")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "side", float(self.side))

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.side / 2

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.side / 2

    @classmethod
    def unit(cls) -> "Frame":
        return cls((0.5, 0.5, 0.5), 1.0)


def bounding_frame(cell: UnitCell) -> Frame:
    """Tight bounding cube: center of the AABB, side = largest extent."""
    v = cell.vertices
    if len(v) == 0:
        raise LatticeError("empty cell")
    lo, hi = v.min(axis=0), v.max(axis=0)
    return Frame((lo + hi) / 2, max(float(np.max(hi - lo)), MIN_SIDE))


# ---------------------------------------------------------------------------
# symmetry operations


def _signed_permutations():
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=int)
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            mats.append(m)
    return mats


_ALL48 = _signed_permutations()


def _key(m) -> tuple:
    return tuple(int(x) for x in np.asarray(m).ravel())


def _sort_ops(mats):
    # identity first, then a fixed lexicographic order on the matrix entries
    ident = _key(np.eye(3, dtype=int))
    return sorted(mats, key=lambda m: (_key(m) != ident, tuple(-x for x in _key(m))))


CUBE_ROTATIONS = tuple(_frozen(m, int) for m in _sort_ops([m for m in _ALL48 if round(np.linalg.det(m)) == 1]))


@dataclass(frozen=True)
class SymmetryGroup:
    """A finite group of isometries of the frame, each a signed permutation
    matrix applied about the frame center."""

    name: str
    ops: tuple = field(repr=False)

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    @classmethod
    def preset(cls, name: str) -> "SymmetryGroup":
        if isinstance(name, SymmetryGroup):
            return name
        if name == "inversion":
            mats = [np.eye(3, dtype=int), -np.eye(3, dtype=int)]
        elif name == "mirrors":
            mats = [np.diag(s) for s in itertools.product((1, -1), repeat=3)]
        elif name == "cubic":
            mats = list(_ALL48)
        else:
            raise LatticeError(f"unknown symmetry preset {name!r} (inversion, mirrors, cubic)")
        return cls(name, tuple(_frozen(m, int) for m in _sort_ops(mats)))

    def is_closed(self) -> bool:
        keys = {_key(m) for m in self.ops}
        return all(_key(a @ b) in keys for a in self.ops for b in self.ops)


SYMMETRY_PRESETS = ("inversion", "mirrors", "cubic")


def apply_symmetry(op, p, frame: Frame) -> np.ndarray:
    """Image of point(s) ``p`` under ``op`` acting about ``frame.center``."""
    p = np.asarray(p, dtype=float)
    c = frame.center
    return c + (p - c) @ np.asarray(op).T


def inverse_op(op) -> np.ndarray:
    return np.asarray(op).T


def is_cube_rotation(r) -> bool:
    k = _key(r)
    return any(k == _key(m) for m in CUBE_ROTATIONS)


def rotation_z90() -> np.ndarray:
    return np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]])


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class CellTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3, dtype=int))
    scale: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.rotation).round().astype(int)
        if r.shape != (3, 3) or not is_cube_rotation(r):
            raise LatticeError("rotation must be one of the 24 cube rotations")
        if not self.scale > 0:
            raise LatticeError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", _frozen(r, int))
        object.__setattr__(self, "scale", float(self.scale))


def transform_cell(cell: UnitCell, t: CellTransform, radius: float):
    """Rotate about the bounding-frame center, then scale about it.

    Returns the new cell and the co-scaled strut radius, which keeps the
    relative density (and relative moduli) unchanged.
    """
    if not radius > 0:
        raise LatticeError("radius must be positive")
    c = bounding_frame(cell).center
    v = c + t.scale * ((cell.vertices - c) @ t.rotation.T)
    return UnitCell(v, cell.edges, cell.name), radius * t.scale


def _axis_map(r):
    """axis_map[j] = i where the rotation sends axis j onto axis i."""
    r = np.asarray(r)
    return [int(np.nonzero(r[:, j])[0][0]) for j in range(3)]


def permute_properties(p, rotation) -> np.ndarray:
    """Re-express a 9-component engineering vector after a cube rotation.

    Moduli permute with the axes.  Poisson ratios are directional: when a
    rotation reverses a stored pair the reciprocal relation
    ``nu_ab / E_a = nu_ba / E_b`` recovers the missing one exactly.
    """
    if not is_cube_rotation(np.asarray(rotation).round().astype(int)):
        raise LatticeError("rotation must be one of the 24 cube rotations")
    p = np.asarray(p, dtype=float)
    amap = _axis_map(rotation)
    inv = [0, 0, 0]
    for j, i in enumerate(amap):
        inv[i] = j
    E = p[0:3]
    shear_idx = {frozenset((1, 2)): 3, frozenset((0, 2)): 4, frozenset((0, 1)): 5}
    nu_idx = {(1, 2): 6, (0, 2): 7, (0, 1): 8}

    def nu(a, b):
        if (a, b) in nu_idx:
            return p[nu_idx[(a, b)]]
        return p[nu_idx[(b, a)]] * E[a] / E[b]

    out = np.empty(9)
    for i in range(3):
        out[i] = E[inv[i]]
    for pair, k in shear_idx.items():
        a, b = sorted(pair)
        out[k] = p[shear_idx[frozenset((inv[a], inv[b]))]]
    for (a, b), k in nu_idx.items():
        out[k] = nu(inv[a], inv[b])
    return out


# ---------------------------------------------------------------------------
# graph helpers


def canonical_clean(cell_or_vertices, edges: Iterable[Sequence[int]] | None = None, name=None) -> UnitCell:
    """Drop self-loops and duplicate edges, normalize pairs to ``i < j``.

    Accepts either a :class:`UnitCell` or raw ``(vertices, edges)``.  Edge
    order is first-occurrence order; vertex order is preserved.
    """
    if isinstance(cell_or_vertices, UnitCell):
        vertices = cell_or_vertices.vertices
        edges = cell_or_vertices.edges if edges is None else edges
        name = cell_or_vertices.name if name is None else name
    else:
        vertices = cell_or_vertices
    seen = {}
    for i, j in edges or ():
        i, j = int(i), int(j)
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        seen.setdefault(key, None)
    return UnitCell(vertices, tuple(seen), name)


def sorted_edges(cell: UnitCell) -> UnitCell:
    return UnitCell(cell.vertices, tuple(sorted(cell.edges)), cell.name)


def connected_components(cell: UnitCell):
    """Union-find labeling; returns ``(labels, count)`` with labels 0..count-1
    numbered by first appearance."""
    n = cell.n_vertices
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in cell.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    labels = np.empty(n, dtype=int)
    relabel = {}
    for v in range(n):
        labels[v] = relabel.setdefault(find(v), len(relabel))
    return labels, len(relabel)
