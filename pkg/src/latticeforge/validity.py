"""Intra-cell (connected + symmetric) and inter-cell (inside the frame)
validity, and threshold sweeps over populations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Frame, LatticeError, SymmetryGroup, UnitCell, apply_symmetry, bounding_frame, connected_components

FRAME_POLICIES = ("unit", "fit")


@dataclass(frozen=True)
class ValidityReport:
    threshold: float
    intra_valid: bool
    inter_valid: bool
    worst_pair: float  # fraction of frame side
    n_components: int
    worst_excess: float  # fraction of frame side; <= 0 means inside

    @property
    def valid(self) -> bool:
        return self.intra_valid and self.inter_valid


def resolve_frame(cell: UnitCell, frame) -> Frame:
    """``frame`` may be a :class:`Frame`, ``"unit"`` or ``"fit"``."""
    if isinstance(frame, Frame):
        return frame
    if frame is None or frame == "unit":
        return Frame.unit()
    if frame == "fit":
        return bounding_frame(cell)
    raise LatticeError(f"unknown frame policy {frame!r}; expected one of {FRAME_POLICIES}")


def worst_pair_distance(cell: UnitCell, group: SymmetryGroup, frame: Frame) -> float:
    """max over (vertex, op) of the distance from the op-image to its nearest
    vertex, as a fraction of the frame side."""
    v = cell.vertices
    worst = 0.0
    for op in group:
        if np.array_equal(op, np.eye(3)):
            continue
        img = apply_symmetry(op, v, frame)
        d = np.sqrt(((img[:, None, :] - v[None, :, :]) ** 2).sum(-1)).min(axis=1)
        worst = max(worst, float(d.max()))
    return worst / frame.side


def worst_boundary_excess(cell: UnitCell, frame: Frame) -> float:
    v = cell.vertices
    excess = np.maximum(frame.lo - v, v - frame.hi)
    return float(excess.max()) / frame.side


def intra_cell_valid(cell: UnitCell, threshold: float, group="inversion", frame="unit") -> ValidityReport:
    if cell.n_vertices == 0:
        raise LatticeError("empty cell")
    if threshold < 0:
        raise LatticeError("threshold must be non-negative")
    group = SymmetryGroup.preset(group)
    frame = resolve_frame(cell, frame)
    _, ncomp = connected_components(cell)
    pair = worst_pair_distance(cell, group, frame)
    ok = ncomp == 1 and pair <= threshold
    return ValidityReport(threshold, ok, False, pair, ncomp, float("nan"))


def inter_cell_valid(cell: UnitCell, threshold: float, frame="unit") -> ValidityReport:
    if threshold < 0:
        raise LatticeError("threshold must be non-negative")
    frame = resolve_frame(cell, frame)
    excess = worst_boundary_excess(cell, frame) if cell.n_vertices else 0.0
    return ValidityReport(threshold, False, excess <= threshold, float("nan"), 0, excess)


def evaluate(cell: UnitCell, thresholds: Sequence[float], group="inversion", frame="unit") -> list[ValidityReport]:
    """Both metrics at every threshold; geometry is computed once."""
    if cell.n_vertices == 0:
        raise LatticeError("empty cell")
    group = SymmetryGroup.preset(group)
    frame = resolve_frame(cell, frame)
    _, ncomp = connected_components(cell)
    pair = worst_pair_distance(cell, group, frame)
    excess = worst_boundary_excess(cell, frame)
    return [
        ValidityReport(float(t), ncomp == 1 and pair <= t, excess <= t, pair, ncomp, excess)
        for t in thresholds
    ]


@dataclass(frozen=True)
class ThresholdSweep:
    thresholds: tuple
    intra_pct: tuple
    inter_pct: tuple
    n: int

    def rows(self):
        return list(zip(self.thresholds, self.intra_pct, self.inter_pct, [self.n] * len(self.thresholds)))


def _check_thresholds(thresholds):
    t = [float(x) for x in thresholds]
    if not t:
        raise LatticeError("no thresholds given")
    if any(b <= a for a, b in zip(t, t[1:])):
        raise LatticeError("thresholds must be strictly increasing")
    if t[0] < 0:
        raise LatticeError("thresholds must be non-negative")
    return t


def sweep(population: Sequence[UnitCell], thresholds: Sequence[float], group="inversion", frame="unit") -> ThresholdSweep:
    """Percentage of the population intra- and inter-valid at each threshold."""
    if len(population) == 0:
        raise LatticeError("empty population")
    t = _check_thresholds(thresholds)
    intra = np.zeros(len(t))
    inter = np.zeros(len(t))
    for cell in population:
        for k, rep in enumerate(evaluate(cell, t, group, frame)):
            intra[k] += rep.intra_valid
            inter[k] += rep.inter_valid
    n = len(population)
    return ThresholdSweep(tuple(t), tuple(float(x) for x in 100.0 * intra / n), tuple(float(x) for x in 100.0 * inter / n), n)
