"""Reference unit cells in the unit frame [0, 1]^3.

Boundary struts are listed in full (a cube edge appears in every cell that
touches it); the homogenizer's sharing weights account for the overlap.
"""
from __future__ import annotations

import itertools

import numpy as np

from .core import LatticeError, UnitCell, canonical_clean

_NAMES = ("simple_cubic", "bcc", "fcc", "octet", "kelvin", "diamond")


def _corners():
    return [tuple(float(c) for c in p) for p in itertools.product((0.0, 1.0), repeat=3)]


def _face_centers():
    out = []
    for axis in range(3):
        for val in (0.0, 1.0):
            p = [0.5, 0.5, 0.5]
            p[axis] = val
            out.append(tuple(p))
    return out


def _edges_at_distance(pts, dist, extra=lambda a, b: True):
    pts = np.asarray(pts)
    out = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if abs(np.linalg.norm(pts[i] - pts[j]) - dist) < 1e-9 and extra(pts[i], pts[j]):
                out.append((i, j))
    return out


def _simple_cubic():
    pts = _corners()
    return pts, _edges_at_distance(pts, 1.0)


def _bcc():
    pts = _corners() + [(0.5, 0.5, 0.5)]
    return pts, [(i, 8) for i in range(8)]


def _fcc():
    pts = _corners() + _face_centers()
    # corner to the centers of the three faces it touches
    return pts, _edges_at_distance(pts, np.sqrt(0.5), lambda a, b: (a == 0.5).sum() + (b == 0.5).sum() == 2)


def _octet():
    pts = _corners() + _face_centers()
    return pts, _edges_at_distance(pts, np.sqrt(0.5))


def _kelvin():
    # truncated octahedron: permutations of (0, +-1/4, +-1/2) about the center;
    # its six square faces lie on the cube faces
    pts = []
    for perm in itertools.permutations(range(3)):
        for s1, s2 in itertools.product((1, -1), repeat=2):
            off = [0.0, 0.0, 0.0]
            off[perm[1]] = 0.25 * s1
            off[perm[2]] = 0.5 * s2
            pts.append(tuple(0.5 + o for o in off))
    pts = sorted(set(pts))
    return pts, _edges_at_distance(pts, np.sqrt(2) / 4)


def _diamond():
    # one tetrahedral node per octant, bonded to its outer corner and the
    # three adjacent face centers; mirror-closed form of the diamond motif
    pts = _corners() + _face_centers()
    octants = [tuple(float(c) for c in p) for p in itertools.product((0.25, 0.75), repeat=3)]
    pts = pts + octants
    edges = []
    arr = np.asarray(pts)
    for k, q in enumerate(octants):
        qi = 14 + k
        for i in range(14):
            if abs(np.linalg.norm(arr[i] - np.asarray(q)) - np.sqrt(3) / 4) < 1e-9:
                edges.append((i, qi))
    return pts, edges


_BUILDERS = {
    "simple_cubic": _simple_cubic,
    "bcc": _bcc,
    "fcc": _fcc,
    "octet": _octet,
    "kelvin": _kelvin,
    "diamond": _diamond,
}


def names() -> list[str]:
    """All catalog entry names, in a fixed order."""
    return list(_NAMES)


def make(name: str) -> UnitCell:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise LatticeError(f"unknown catalog entry {name!r}; known: {', '.join(_NAMES)}") from None
    pts, edges = builder()
    return canonical_clean(np.array(pts, dtype=float), sorted(edges), name=name)
