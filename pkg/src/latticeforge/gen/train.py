"""Training data, the joint denoising/edge loss, the training loop and
ancestral sampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..core import CUBE_ROTATIONS, CellTransform, UnitCell, bounding_frame, canonical_clean, permute_properties, transform_cell
from .model import DTYPE, GenConfig, edge_logits, edge_probabilities, init_params, predict_x0
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)


@dataclass
class ModelParams:
    """Trainable tensors plus everything needed to use them."""

    params: dict
    config: GenConfig = field(default_factory=GenConfig)
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    prop_mean: np.ndarray = field(default_factory=lambda: np.zeros(9))
    prop_std: np.ndarray = field(default_factory=lambda: np.ones(9))
    # property vectors (raw) and vertex counts of the training cells
    ref_props: np.ndarray = field(default_factory=lambda: np.zeros((0, 9)))
    ref_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def normalize(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.prop_mean) / self.prop_std

    def typical_count(self, p) -> int:
        """Vertex count of the training cell whose properties are closest."""
        if len(self.ref_counts) == 0:
            raise ValueError("model carries no reference cells; pass n_vertices explicitly")
        z = self.normalize(p)
        zr = (self.ref_props - self.prop_mean) / self.prop_std
        return int(self.ref_counts[int(np.argmin(((zr - z) ** 2).sum(1)))])


@dataclass
class Batch:
    x0: torch.Tensor  # (B, N, 3)
    adj: torch.Tensor  # (B, N, N)
    p: torch.Tensor  # (B, 9) normalized
    mask: torch.Tensor  # (B, N) bool


def make_batch(cells: Sequence[UnitCell], props: np.ndarray, n_max: int) -> Batch:
    """Pad to the largest cell in the batch (at most ``n_max``)."""
    B = len(cells)
    if any(c.n_vertices > n_max for c in cells):
        big = max(cells, key=lambda c: c.n_vertices)
        raise ValueError(f"cell {big.name} has {big.n_vertices} vertices > n_max={n_max}")
    n_max = max(c.n_vertices for c in cells)
    x0 = np.zeros((B, n_max, 3))
    adj = np.zeros((B, n_max, n_max))
    mask = np.zeros((B, n_max), dtype=bool)
    for b, cell in enumerate(cells):
        n = cell.n_vertices
        x0[b, :n] = cell.vertices
        mask[b, :n] = True
        for i, j in cell.edges:
            adj[b, i, j] = adj[b, j, i] = 1.0
    return Batch(torch.tensor(x0, dtype=DTYPE), torch.tensor(adj, dtype=DTYPE),
                 torch.tensor(np.asarray(props), dtype=DTYPE), torch.tensor(mask))


def to_diffusion(x):
    """Unit-frame coordinates -> the [-1, 1] space the denoiser works in."""
    return 2.0 * x - 1.0


def from_diffusion(z):
    return 0.5 * (z + 1.0)


def loss_terms(params, batch: Batch, t, eps, schedule: NoiseSchedule, cfg: GenConfig):
    """(coordinate MSE, edge BCE) for given steps ``t`` (B,) and noise ``eps``.

    The coordinate term is measured in the denoiser's [-1, 1] space.
    """
    ab = torch.tensor(schedule.alpha_bar, dtype=DTYPE)[t][:, None, None]
    m3 = batch.mask[..., None]
    z0 = torch.where(m3, to_diffusion(batch.x0), torch.zeros_like(batch.x0))
    zt = torch.where(m3, ab.sqrt() * z0 + (1 - ab).sqrt() * eps, z0)
    z0_hat = predict_x0(params, zt, t, batch.p, batch.mask, cfg)
    coord = ((z0_hat - z0) ** 2)[m3.expand_as(z0_hat)].mean()
    lg = edge_logits(params, batch.x0, batch.p)
    N = batch.mask.shape[1]
    pair = batch.mask[:, :, None] & batch.mask[:, None, :] & ~torch.eye(N, dtype=torch.bool)[None]
    edge = F.binary_cross_entropy_with_logits(lg[pair], batch.adj[pair])
    return coord, edge


def sample_noise(batch: Batch, schedule: NoiseSchedule, gen: torch.Generator):
    B = batch.x0.shape[0]
    t = torch.randint(1, schedule.T + 1, (B,), generator=gen)
    eps = torch.randn(batch.x0.shape, generator=gen, dtype=DTYPE)
    return t, eps


def train_step(params, batch: Batch, schedule: NoiseSchedule, cfg: GenConfig, gen: torch.Generator):
    """One loss evaluation with gradients for every named tensor.

    Returns ``(loss, coord_loss, edge_loss, grads)``.
    """
    t, eps = sample_noise(batch, schedule, gen)
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    coord, edge = loss_terms(leaves, batch, t, eps, schedule, cfg)
    loss = coord + cfg.edge_weight * edge
    grads = torch.autograd.grad(loss, list(leaves.values()))
    return loss.item(), coord.item(), edge.item(), dict(zip(leaves, grads))


def property_stats(props: np.ndarray):
    props = np.asarray(props, dtype=float)
    mean = props.mean(axis=0)
    std = props.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(np.abs(mean), 1e-300), std, 1.0)
    return mean, std


def augment(cell: UnitCell, props, rng: np.random.Generator, scale_range=(0.9, 1.0)):
    """Random cube rotation and uniform scale about the cell center, plus a
    vertex relabeling; returns the new cell and its property vector.

    Training coordinates live in the unit frame, so the scaled cell is
    re-expressed in its own bounding frame afterwards.
    """
    rot = CUBE_ROTATIONS[int(rng.integers(len(CUBE_ROTATIONS)))]
    lo, hi = scale_range
    scale = float(lo + (hi - lo) * rng.random())
    moved, _ = transform_cell(cell, CellTransform(rot, scale), 1.0)
    fr = bounding_frame(moved)
    perm = rng.permutation(cell.n_vertices)
    inv = np.argsort(perm)
    v = (moved.vertices[perm] - fr.center) / fr.side + 0.5
    e = [(inv[i], inv[j]) for i, j in cell.edges]
    return canonical_clean(v, e, name=cell.name), permute_properties(props, rot)


@dataclass
class TrainLog:
    coord: list = field(default_factory=list)
    edge: list = field(default_factory=list)


def train(cells: Sequence[UnitCell], props: np.ndarray, cfg: GenConfig | None = None,
          schedule: NoiseSchedule | None = None, augment_data: bool = True,
          model: ModelParams | None = None, steps_per_epoch: int | None = None):
    """Fit the denoiser and edge scorer jointly with Adam.

    Each epoch draws ``cfg.copies_per_epoch`` augmented copies of every cell
    and sweeps them in minibatches.  Returns ``(model, log)`` where the log
    holds per-epoch mean losses.
    """
    cfg = cfg or GenConfig()
    schedule = schedule or NoiseSchedule()
    props = np.asarray(props, dtype=float).reshape(len(cells), 9)
    if model is None:
        mean, std = property_stats(props)
        model = ModelParams(init_params(cfg), cfg, schedule, mean, std, props.copy(),
                            np.array([c.n_vertices for c in cells], dtype=np.int64))
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    gen = torch.Generator().manual_seed(cfg.seed)
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in model.params.items()}
    opt = torch.optim.Adam(list(leaves.values()), lr=cfg.lr)
    # cosine decay to lr_final_frac * lr over the run
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda e: cfg.lr_final_frac + (1 - cfg.lr_final_frac) * 0.5 * (1 + np.cos(np.pi * e / max(cfg.epochs, 1)))
    )
    history = TrainLog()
    for epoch in range(cfg.epochs):
        if augment_data:
            pool = [augment(c, p, rng, cfg.scale_range) for c, p in zip(cells, props) for _ in range(cfg.copies_per_epoch)]
        else:
            pool = [(c, p) for c, p in zip(cells, props) for _ in range(cfg.copies_per_epoch)]
        order = rng.permutation(len(pool))
        chunks = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        if steps_per_epoch is not None:
            chunks = chunks[:steps_per_epoch]
        ec, ee = [], []
        for chunk in chunks:
            batch = make_batch([pool[i][0] for i in chunk], model.normalize(np.array([pool[i][1] for i in chunk])), cfg.n_max)
            t, eps = sample_noise(batch, schedule, gen)
            coord, edge = loss_terms(leaves, batch, t, eps, schedule, cfg)
            loss = coord + cfg.edge_weight * edge
            opt.zero_grad()
            loss.backward()
            opt.step()
            ec.append(coord.item())
            ee.append(edge.item())
        sched.step()
        history.coord.append(float(np.mean(ec)))
        history.edge.append(float(np.mean(ee)))
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d coord %.5f edge %.5f", epoch + 1, history.coord[-1], history.edge[-1])
    model.params = {k: v.detach().clone() for k, v in leaves.items()}
    return model, history


def sample(model: ModelParams, p, n_vertices: int | None = None, seed: int = 0, normalized: bool = False) -> np.ndarray:
    """Ancestral sampling with the clean-coordinate parameterization.

    ``p`` is a raw property vector unless ``normalized``.  Returns an
    ``(n_vertices, 3)`` array.
    """
    cfg, sch = model.config, model.schedule
    if n_vertices is None:
        n_vertices = model.typical_count(p)
    if not 1 <= n_vertices <= cfg.n_max:
        raise ValueError(f"n_vertices must lie in 1..{cfg.n_max}")
    z = np.asarray(p, dtype=float) if normalized else model.normalize(p)
    gen = torch.Generator().manual_seed(int(seed))
    pt = torch.tensor(z, dtype=DTYPE)[None]
    mask = torch.ones((1, n_vertices), dtype=torch.bool)
    x = torch.randn((1, n_vertices, 3), generator=gen, dtype=DTYPE)
    with torch.no_grad():
        for t in range(sch.T, 0, -1):
            x0_hat = predict_x0(model.params, x, torch.tensor([t]), pt, mask, cfg)
            c0, ct, var = sch.posterior(t)
            mean = c0 * x0_hat + ct * x
            if t > 1:
                x = mean + np.sqrt(var) * torch.randn(x.shape, generator=gen, dtype=DTYPE)
            else:
                x = mean
    return from_diffusion(x[0]).numpy().copy()


def predict_edges(model: ModelParams, coords, p, threshold: float | None = None, normalized: bool = False):
    """Edge probabilities for a vertex set; with ``threshold`` also the hard
    edge list ``[(i, j), ...]`` with ``i < j``."""
    z = np.asarray(p, dtype=float) if normalized else model.normalize(p)
    prob = edge_probabilities(model.params, np.asarray(coords, dtype=float), z)
    if threshold is None:
        return prob
    i, j = np.nonzero(np.triu(prob > threshold, 1))
    return prob, [(int(a), int(b)) for a, b in zip(i, j)]
