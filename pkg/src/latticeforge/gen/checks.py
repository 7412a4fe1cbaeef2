"""Numerical checks used by the tests and the acceptance run: finite
difference gradient probes and index-matched coordinate RMSD."""
from __future__ import annotations

import numpy as np
import torch

from .model import DTYPE
from .train import Batch, loss_terms


def matched_rmsd(x, ref) -> float:
    """RMSD after greedy nearest-neighbour index matching.

    Rows of ``x`` are matched in order of their distance to the closest
    reference point; each reference point is used once.
    """
    x, ref = np.asarray(x, float), np.asarray(ref, float)
    if len(x) != len(ref):
        raise ValueError("point sets differ in size")
    d = np.linalg.norm(x[:, None] - ref[None], axis=-1)
    free = np.ones(len(ref), dtype=bool)
    total = 0.0
    for i in np.argsort(d.min(axis=1), kind="stable"):
        cand = np.where(free, d[i], np.inf)
        j = int(np.argmin(cand))
        free[j] = False
        total += d[i, j] ** 2
    return float(np.sqrt(total / len(x)))


def fd_gradient_check(params, batch: Batch, t, eps, schedule, cfg, probes: int = 3, h: float = 1e-5,
                      floor: float = 1e-8, seed: int = 0):
    """Compare autograd with central differences at random entries of every
    tensor.  Returns ``[(name, index, analytic, numeric, rel_err), ...]``.

    ``rel_err = |a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    coord, edge = loss_terms(leaves, batch, t, eps, schedule, cfg)
    grads = torch.autograd.grad(coord + cfg.edge_weight * edge, list(leaves.values()))
    grads = dict(zip(leaves, grads))

    def loss_at(name, flat_idx, delta):
        p = {k: v.detach() for k, v in params.items()}
        q = p[name].clone().reshape(-1)
        q[flat_idx] += delta
        p[name] = q.reshape(p[name].shape)
        with torch.no_grad():
            c, e = loss_terms(p, batch, t, eps, schedule, cfg)
        return float(c + cfg.edge_weight * e)

    rows = []
    for name, value in params.items():
        size = value.numel()
        for k in rng.choice(size, size=min(probes, size), replace=False):
            a = float(grads[name].reshape(-1)[k])
            n = (loss_at(name, int(k), h) - loss_at(name, int(k), -h)) / (2 * h)
            err = abs(a - n) / max(abs(a), abs(n), floor)
            rows.append((name, int(k), a, n, err))
    return rows
