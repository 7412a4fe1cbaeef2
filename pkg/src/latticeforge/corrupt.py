"""Synthetic failure modes for clean cells: node/edge removal and insertion
plus Gaussian coordinate noise.

Randomness comes from numpy's PCG64.  Pair ``k`` of a dataset built with
seed ``s`` uses the seed ``SeedSequence([s, k]).generate_state(1, uint64)[0]``,
so any single pair can be regenerated without replaying the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import catalog
from .core import Frame, LatticeError, UnitCell, bounding_frame, canonical_clean


@dataclass(frozen=True)
class CorruptionConfig:
    sigma: float = 0.01
    p_node_remove: float = 0.05
    p_node_add: float = 0.05
    p_edge_remove: float = 0.1
    p_edge_add: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise LatticeError("sigma must be non-negative")
        for name in ("p_node_remove", "p_node_add", "p_edge_remove", "p_edge_add"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise LatticeError(f"{name} must lie in [0, 1], got {p}")


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0])


def corrupt(cell: UnitCell, cfg: CorruptionConfig, frame: Frame | None = None) -> UnitCell:
    """Apply, in order: node removal, node insertion, edge removal, edge
    insertion, coordinate noise.  Deterministic in ``(cell, cfg)``."""
    if cell.n_vertices == 0:
        raise LatticeError("empty cell")
    frame = frame or bounding_frame(cell)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    verts = np.array(cell.vertices)
    edges = list(cell.edges)
    n = len(verts)

    drop = rng.random(n) < cfg.p_node_remove
    keep_min = min(2, n)
    if (~drop).sum() < keep_min:
        for i in np.nonzero(drop)[0][: keep_min - (~drop).sum()]:
            drop[i] = False
    new_index = np.cumsum(~drop) - 1
    verts = verts[~drop]
    edges = [(int(new_index[i]), int(new_index[j])) for i, j in edges if not (drop[i] or drop[j])]

    n_add = math.ceil(cfg.p_node_add * len(verts))
    if n_add:
        added = frame.lo + frame.side * rng.random((n_add, 3))
        verts = np.vstack([verts, added])

    gone = rng.random(len(edges)) < cfg.p_edge_remove
    edges = [e for e, g in zip(edges, gone) if not g]

    n_new = math.ceil(cfg.p_edge_add * len(edges))
    present = set(edges)
    nv = len(verts)
    capacity = nv * (nv - 1) // 2 - len(present)
    for _ in range(min(n_new, capacity)):
        while True:
            i, j = rng.integers(0, nv, size=2)
            e = (int(min(i, j)), int(max(i, j)))
            if i != j and e not in present:
                break
        present.add(e)
        edges.append(e)

    if cfg.sigma > 0:
        verts = verts + rng.normal(0.0, cfg.sigma * frame.side, size=verts.shape)
    return canonical_clean(verts, edges, name=cell.name)


@dataclass(frozen=True)
class CorruptedPair:
    corrupted: UnitCell
    clean: UnitCell
    name: str
    seed: int
    index: int


def make_pairs(entries: Sequence[str], cfg: CorruptionConfig, n_per_entry: int, seed: int) -> list[CorruptedPair]:
    """``n_per_entry`` corrupted copies of each catalog entry, in entry order."""
    if n_per_entry < 1:
        raise LatticeError("n_per_entry must be >= 1")
    cleans = [catalog.make(name) for name in entries]
    pairs = []
    k = 0
    for name, clean in zip(entries, cleans):
        for _ in range(n_per_entry):
            s = derive_seed(seed, k)
            pairs.append(CorruptedPair(corrupt(clean, replace(cfg, seed=s)), clean, name, s, k))
            k += 1
    return pairs
