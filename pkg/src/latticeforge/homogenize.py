"""Effective elastic stiffness of a periodic strut lattice.

Struts are 3D Euler-Bernoulli frame elements with circular sections.  The
cell is loaded by the six unit macroscopic strains with periodic
fluctuations; boundary struts are weighted by how many cells share them.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import PROPERTY_KEYS, Frame, LatticeError, UnitCell, bounding_frame

DEFAULT_TOL = 0.02


class MechanismError(LatticeError):
    """The periodic cell has zero-energy deformation modes."""


class PeriodicityError(LatticeError):
    """A boundary vertex has no partner on the opposite face."""


@dataclass(frozen=True)
class MaterialSpec:
    E_s: float = 1.0
    nu_s: float = 0.3

    def __post_init__(self):
        if not self.E_s > 0:
            raise LatticeError("E_s must be positive")
        if not -1 < self.nu_s < 0.5:
            raise LatticeError("nu_s must lie in (-1, 0.5)")

    @property
    def G_s(self) -> float:
        return self.E_s / (2 * (1 + self.nu_s))


@dataclass(frozen=True)
class StrutSection:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise LatticeError("strut radius must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def inertia(self) -> float:
        return math.pi * self.radius**4 / 4

    @property
    def polar(self) -> float:
        return math.pi * self.radius**4 / 2


@dataclass(frozen=True)
class StiffnessMatrix:
    """6x6 Voigt stiffness (xx, yy, zz, yz, xz, xy; engineering shears)."""

    C: np.ndarray

    def is_symmetric(self, rtol=1e-8) -> bool:
        return bool(np.abs(self.C - self.C.T).max() <= rtol * np.linalg.norm(self.C))

    def is_psd(self, rtol=1e-10) -> bool:
        return bool(np.linalg.eigvalsh(self.C).min() >= -rtol * np.linalg.norm(self.C))


@dataclass(frozen=True)
class ElasticProperties:
    E_x: float
    E_y: float
    E_z: float
    G_yz: float
    G_xz: float
    G_xy: float
    nu_yz: float
    nu_xz: float
    nu_xy: float
    rel_density: float | None = None

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PROPERTY_KEYS])

    def as_dict(self) -> dict:
        d = {k: float(getattr(self, k)) for k in PROPERTY_KEYS}
        d["rel_density"] = None if self.rel_density is None else float(self.rel_density)
        return d


# ---------------------------------------------------------------------------
# elements


def on_faces(p, frame: Frame, tol: float):
    """Per-axis face flag: -1 on the min face, +1 on the max face, 0 otherwise."""
    p = np.asarray(p, dtype=float)
    t = tol * frame.side
    flags = np.zeros(p.shape, dtype=int)
    flags[np.abs(p - frame.lo) <= t] = -1
    flags[np.abs(p - frame.hi) <= t] = 1
    return flags


def sharing_weight(p1, p2, frame: Frame, tol: float = DEFAULT_TOL) -> float:
    """2**-m, m = axes on which both endpoints lie on the same face."""
    f1, f2 = on_faces(p1, frame, tol), on_faces(p2, frame, tol)
    m = int(np.sum((f1 != 0) & (f1 == f2)))
    return 2.0**-m


def local_axes(p1, p2) -> np.ndarray:
    """Rows: local x (along the strut), local y, local z."""
    d = np.asarray(p2, float) - np.asarray(p1, float)
    ex = d / np.linalg.norm(d)
    g = np.array([0.0, 0.0, 1.0])
    if abs(ex @ g) > 0.999:
        g = np.array([0.0, 1.0, 0.0])
    ez = np.cross(ex, g)
    ez /= np.linalg.norm(ez)
    ey = np.cross(ez, ex)
    return np.vstack([ex, ey, ez])


def local_stiffness(L: float, section: StrutSection, material: MaterialSpec) -> np.ndarray:
    E, G = material.E_s, material.G_s
    A, I, J = section.area, section.inertia, section.polar
    k = np.zeros((12, 12))
    ea, gj = E * A / L, G * J / L
    b1, b2, b3, b4 = 12 * E * I / L**3, 6 * E * I / L**2, 4 * E * I / L, 2 * E * I / L
    k[0, 0] = k[6, 6] = ea
    k[0, 6] = -ea
    k[3, 3] = k[9, 9] = gj
    k[3, 9] = -gj
    # bending in the local x-y plane (v, theta_z)
    k[1, 1] = k[7, 7] = b1
    k[1, 7] = -b1
    k[1, 5] = k[1, 11] = b2
    k[5, 7] = k[7, 11] = -b2
    k[5, 5] = k[11, 11] = b3
    k[5, 11] = b4
    # bending in the local x-z plane (w, theta_y)
    k[2, 2] = k[8, 8] = b1
    k[2, 8] = -b1
    k[2, 4] = k[2, 10] = -b2
    k[4, 8] = k[8, 10] = b2
    k[4, 4] = k[10, 10] = b3
    k[4, 10] = b4
    return np.triu(k) + np.triu(k, 1).T


def element_stiffness(p1, p2, section: StrutSection, material: MaterialSpec, min_length: float = 1e-9) -> np.ndarray:
    """12x12 global-frame stiffness of one strut (dofs: u, v, w, rx, ry, rz
    at each end)."""
    L = float(np.linalg.norm(np.asarray(p2, float) - np.asarray(p1, float)))
    if L <= min_length:
        raise LatticeError("zero-length strut")
    lam = local_axes(p1, p2)
    T = np.kron(np.eye(4), lam)
    return T.T @ local_stiffness(L, section, material) @ T


# ---------------------------------------------------------------------------
# periodicity


def periodic_pairs(cell: UnitCell, frame: Frame | None = None, tol: float = DEFAULT_TOL):
    """``(master, slave, axis)`` for every max-face vertex and its min-face
    partner; a bijection per axis."""
    frame = frame or bounding_frame(cell)
    v = cell.vertices
    t = tol * frame.side
    pairs = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        lo = np.nonzero(np.abs(v[:, axis] - frame.lo[axis]) <= t)[0]
        hi = np.nonzero(np.abs(v[:, axis] - frame.hi[axis]) <= t)[0]
        taken = set()
        for s in hi:
            cand = [m for m in lo if m not in taken and np.max(np.abs(v[m, others] - v[s, others])) <= t]
            if not cand:
                raise PeriodicityError(f"vertex {s} on the max face of axis {'xyz'[axis]} has no partner; refine first")
            m = min(cand, key=lambda m: (np.linalg.norm(v[m, others] - v[s, others]), m))
            taken.add(m)
            pairs.append((int(m), int(s), axis))
        for m in lo:
            if m not in taken:
                raise PeriodicityError(f"vertex {m} on the min face of axis {'xyz'[axis]} has no partner; refine first")
    return pairs


def _representatives(n, pairs):
    """Map each vertex to (root vertex, integer period shift)."""
    adj = [[] for _ in range(n)]
    for m, s, axis in pairs:
        e = np.zeros(3, dtype=int)
        e[axis] = 1
        adj[m].append((s, e))
        adj[s].append((m, -e))
    rep = [-1] * n
    shift = np.zeros((n, 3), dtype=int)
    for root in range(n):
        if rep[root] >= 0:
            continue
        rep[root] = root
        queue = deque([root])
        while queue:
            a = queue.popleft()
            for b, e in adj[a]:
                if rep[b] < 0:
                    rep[b] = root
                    shift[b] = shift[a] + e
                    queue.append(b)
                elif np.any(shift[b] != shift[a] + e):
                    raise PeriodicityError(f"inconsistent periodic images for vertex {b}")
    return rep, shift


def strain_tensor(voigt) -> np.ndarray:
    e = np.asarray(voigt, dtype=float)
    return np.array(
        [
            [e[0], e[5] / 2, e[4] / 2],
            [e[5] / 2, e[1], e[3] / 2],
            [e[4] / 2, e[3] / 2, e[2]],
        ]
    )


class PeriodicSystem:
    """Assembled free-free stiffness plus the periodic reduction of one cell.

    Holds one factorization of the reduced operator; each macroscopic strain
    is then a single back-substitution.
    """

    def __init__(self, cell: UnitCell, section: StrutSection, material: MaterialSpec | None = None,
                 frame: Frame | None = None, tol: float = DEFAULT_TOL):
        material = material or MaterialSpec()
        frame = frame or bounding_frame(cell)
        if cell.n_edges == 0:
            raise MechanismError("kinematic mechanism detected: cell has no struts")
        v = cell.vertices
        n = len(v)
        self.frame = frame
        self.volume = frame.side**3
        lengths = np.linalg.norm(v[cell.edge_array()[:, 0]] - v[cell.edge_array()[:, 1]], axis=1)
        if section.radius > 0.25 * lengths.min():
            warnings.warn(
                f"strut radius {section.radius:g} exceeds a quarter of the shortest strut ({lengths.min():g})",
                stacklevel=2,
            )

        K = np.zeros((6 * n, 6 * n))
        for (i, j), L in zip(cell.edges, lengths):
            if L <= 1e-9 * frame.side:
                raise LatticeError(f"zero-length strut ({i}, {j})")
            w = sharing_weight(v[i], v[j], frame, tol)
            ke = w * element_stiffness(v[i], v[j], section, material)
            dofs = np.r_[6 * i : 6 * i + 6, 6 * j : 6 * j + 6]
            K[np.ix_(dofs, dofs)] += ke
        self.K = K

        rep, shift = _representatives(n, periodic_pairs(cell, frame, tol))
        roots = sorted(set(rep))
        col = {r: k for k, r in enumerate(roots)}
        T = np.zeros((6 * n, 6 * len(roots)))
        for i in range(n):
            c = col[rep[i]]
            T[6 * i : 6 * i + 6, 6 * c : 6 * c + 6] = np.eye(6)
        # pin the translational fluctuation of the lowest-index vertex
        pinned = set(range(6 * col[rep[0]], 6 * col[rep[0]] + 3))
        free = [k for k in range(T.shape[1]) if k not in pinned]
        self.T = T[:, free]
        self.effective_positions = v[rep] + frame.side * shift

        Kr = self.T.T @ K @ self.T
        Kr = (Kr + Kr.T) / 2
        evals = np.linalg.eigvalsh(Kr)
        scale = max(abs(evals).max(), 1e-300)
        zero = int(np.sum(evals <= 1e-12 * scale))
        if zero:
            raise MechanismError(f"kinematic mechanism detected: {zero} zero-energy mode(s)")
        self._factor = scipy.linalg.cho_factor(Kr)

    def affine(self, voigt) -> np.ndarray:
        eps = strain_tensor(voigt)
        a = np.zeros(self.K.shape[0])
        u = self.effective_positions @ eps.T
        for d in range(3):
            a[d::6] = u[:, d]
        return a

    def displacement(self, voigt) -> np.ndarray:
        """Full nodal displacement (affine + periodic fluctuation)."""
        a0 = self.affine(voigt)
        q = scipy.linalg.cho_solve(self._factor, -self.T.T @ (self.K @ a0))
        return a0 + self.T @ q

    def energy(self, voigt) -> float:
        a = self.displacement(voigt)
        return 0.5 * float(a @ self.K @ a)

    def stiffness(self) -> np.ndarray:
        A = np.column_stack([self.displacement(e) for e in np.eye(6)])
        C = A.T @ self.K @ A / self.volume
        return (C + C.T) / 2


def homogenize(cell: UnitCell, section: StrutSection, material: MaterialSpec | None = None,
               frame: Frame | None = None, tol: float = DEFAULT_TOL) -> StiffnessMatrix:
    """Effective 6x6 stiffness from the six unit-strain periodic solves."""
    return StiffnessMatrix(PeriodicSystem(cell, section, material, frame, tol).stiffness())


def stiffness_from_energies(system: PeriodicSystem) -> np.ndarray:
    """C via polarization of the minimized strain energy (21 independent
    entries)."""
    eye = np.eye(6)
    U = [system.energy(e) for e in eye]
    C = np.zeros((6, 6))
    for k in range(6):
        for l in range(k, 6):
            Ukl = system.energy(eye[k] + eye[l])
            C[k, l] = C[l, k] = (2 * Ukl - 2 * U[k] - 2 * U[l]) / (2 * system.volume)
    return C


def extract_engineering(C, rel_density: float | None = None) -> ElasticProperties:
    C = C.C if isinstance(C, StiffnessMatrix) else np.asarray(C, dtype=float)
    try:
        if np.linalg.cond(C) > 1e14:
            raise np.linalg.LinAlgError
        S = np.linalg.inv(C)
    except np.linalg.LinAlgError:
        raise LatticeError("stiffness matrix is singular") from None
    return ElasticProperties(
        E_x=1 / S[0, 0],
        E_y=1 / S[1, 1],
        E_z=1 / S[2, 2],
        G_yz=1 / S[3, 3],
        G_xz=1 / S[4, 4],
        G_xy=1 / S[5, 5],
        nu_yz=-S[2, 1] / S[1, 1],
        nu_xz=-S[2, 0] / S[0, 0],
        nu_xy=-S[1, 0] / S[0, 0],
        rel_density=rel_density,
    )


def relative_density(cell: UnitCell, section: StrutSection, frame: Frame | None = None, tol: float = DEFAULT_TOL) -> float:
    """Strut volume fraction with shared boundary struts counted fractionally."""
    frame = frame or bounding_frame(cell)
    v = cell.vertices
    total = 0.0
    for i, j in cell.edges:
        total += sharing_weight(v[i], v[j], frame, tol) * section.area * np.linalg.norm(v[j] - v[i])
    return total / frame.side**3


def properties(cell: UnitCell, radius: float, material: MaterialSpec | None = None,
               frame: Frame | None = None, tol: float = DEFAULT_TOL) -> ElasticProperties:
    """Homogenize and extract in one call."""
    section = StrutSection(radius)
    C = homogenize(cell, section, material, frame, tol)
    return extract_engineering(C, relative_density(cell, section, frame, tol))


def isotropic_stiffness(E: float, nu: float) -> np.ndarray:
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(3), np.arange(3)] += 2 * mu
    C[np.arange(3, 6), np.arange(3, 6)] = mu
    return C
