"""Property-conditioned set denoiser and pairwise edge scorer.

Everything is a pure function of a flat ``{name: tensor}`` dict so the
parameters can be saved, finite-difference checked and optimized without
module wrappers.  Vertices carry no positional encoding: the denoiser is
permutation equivariant over the vertex axis.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

DTYPE = torch.float64
PROP_DIM = 9


@dataclass(frozen=True)
class GenConfig:
    n_max: int = 32
    d: int = 64
    heads: int = 4
    blocks: int = 4
    d_edge: int = 32
    lr: float = 2e-3
    lr_final_frac: float = 0.05
    batch_size: int = 32
    epochs: int = 200
    copies_per_epoch: int = 32
    scale_range: tuple = (0.9, 1.0)
    edge_weight: float = 1.0
    train_radius: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")
        if self.n_max < 24:
            raise ValueError("n_max must hold the largest catalog cell (24)")
        object.__setattr__(self, "scale_range", tuple(float(s) for s in self.scale_range))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["scale_range"] = list(self.scale_range)
        return d


def param_shapes(cfg: GenConfig) -> "OrderedDict[str, tuple]":
    d, de = cfg.d, cfg.d_edge
    s = OrderedDict()
    s["embed.w"] = (3, d)
    s["embed.b"] = (d,)
    s["time.w"] = (d, d)
    s["time.b"] = (d,)
    for b in range(cfg.blocks):
        p = f"block{b}."
        for name in ("ln1", "ln2", "ln3"):
            s[p + name + ".g"] = (d,)
            s[p + name + ".b"] = (d,)
        s[p + "attn.q"] = (d, d)
        s[p + "attn.k"] = (d, d)
        s[p + "attn.v"] = (d, d)
        s[p + "attn.o"] = (d, d)
        s[p + "attn.ob"] = (d,)
        s[p + "cond.q"] = (PROP_DIM, d)
        s[p + "cond.qb"] = (d,)
        s[p + "cond.o"] = (d, d)
        s[p + "cond.ob"] = (d,)
        s[p + "ff.w1"] = (d, 4 * d)
        s[p + "ff.b1"] = (4 * d,)
        s[p + "ff.w2"] = (4 * d, d)
        s[p + "ff.b2"] = (d,)
    s["out_ln.g"] = (d,)
    s["out_ln.b"] = (d,)
    s["head.w"] = (d, 3)
    s["head.b"] = (3,)
    s["edge.w1"] = (3 + PROP_DIM, de)
    s["edge.b1"] = (de,)
    s["edge.w2"] = (de, de)
    s["edge.b2"] = (de,)
    s["edge_head.w"] = (3 * de, 1)
    s["edge_head.b"] = (1,)
    return s


def init_params(cfg: GenConfig, seed: int | None = None) -> "OrderedDict[str, torch.Tensor]":
    g = torch.Generator().manual_seed(cfg.seed if seed is None else seed)
    params = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            t = torch.ones(shape, dtype=DTYPE)
        elif len(shape) == 1:
            t = torch.zeros(shape, dtype=DTYPE)
        else:
            t = torch.randn(shape, generator=g, dtype=DTYPE) / math.sqrt(shape[0])
            if name in ("head.w",) or name.endswith((".o", "ff.w2")):
                t = t * 0.1
        params[name] = t
    return params


def _ln(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * g + b


def timestep_features(t, d: int):
    """Sinusoidal features of integer steps, shape (B, d)."""
    t = torch.as_tensor(t, dtype=DTYPE).reshape(-1, 1)
    half = d // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=DTYPE) / half)
    ang = t * freqs
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


def _split(x, heads):
    B, N, d = x.shape
    return x.reshape(B, N, heads, d // heads).transpose(1, 2)


def predict_x0(params, x_t, t, p, mask, cfg: GenConfig):
    """Predict clean coordinates from ``x_t`` (B, N, 3) at steps ``t`` (B,),
    conditioned on normalized properties ``p`` (B, 9).  ``mask`` (B, N)
    marks real vertices; padded rows come back as zero."""
    x_t = torch.as_tensor(x_t, dtype=DTYPE)
    p = torch.as_tensor(p, dtype=DTYPE)
    mask = torch.as_tensor(mask, dtype=torch.bool)
    if not torch.isfinite(p).all():
        raise ValueError("property vector has non-finite entries")
    B, N, _ = x_t.shape
    H, d = cfg.heads, cfg.d
    dh = d // H
    keymask = mask[:, None, None, :]  # (B,1,1,N)
    neg = torch.finfo(DTYPE).min

    x_in = torch.where(mask[..., None], x_t, torch.zeros_like(x_t))
    h = x_in @ params["embed.w"] + params["embed.b"]
    temb = F.silu(timestep_features(t, d) @ params["time.w"] + params["time.b"])
    h = h + temb[:, None, :]
    for b in range(cfg.blocks):
        pre = f"block{b}."
        a = _ln(h, params[pre + "ln1.g"], params[pre + "ln1.b"])
        q = _split(a @ params[pre + "attn.q"], H)
        k = _split(a @ params[pre + "attn.k"], H)
        v = _split(a @ params[pre + "attn.v"], H)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(dh)
        w = torch.softmax(scores.masked_fill(~keymask, neg), dim=-1)
        o = (w @ v).transpose(1, 2).reshape(B, N, d)
        h = h + o @ params[pre + "attn.o"] + params[pre + "attn.ob"]

        # one query slot from the properties; keys/values from the tokens
        c = _ln(h, params[pre + "ln2.g"], params[pre + "ln2.b"])
        cq = (p @ params[pre + "cond.q"] + params[pre + "cond.qb"]).reshape(B, H, 1, dh)
        ck = _split(c @ params[pre + "attn.k"], H)
        cv = _split(c @ params[pre + "attn.v"], H)
        cs = (cq @ ck.transpose(-1, -2)) / math.sqrt(dh)
        cw = torch.softmax(cs.masked_fill(~keymask, neg), dim=-1)
        co = (cw @ cv).reshape(B, 1, d)
        h = h + co @ params[pre + "cond.o"] + params[pre + "cond.ob"]

        f = _ln(h, params[pre + "ln3.g"], params[pre + "ln3.b"])
        f = F.gelu(f @ params[pre + "ff.w1"] + params[pre + "ff.b1"])
        h = h + f @ params[pre + "ff.w2"] + params[pre + "ff.b2"]
    h = _ln(h, params["out_ln.g"], params["out_ln.b"])
    out = h @ params["head.w"] + params["head.b"]
    return torch.where(mask[..., None], out, torch.zeros_like(out))


def edge_logits(params, coords, p):
    """Symmetric (B, N, N) logits from per-vertex encodings of (xyz, props)."""
    coords = torch.as_tensor(coords, dtype=DTYPE)
    p = torch.as_tensor(p, dtype=DTYPE)
    B, N, _ = coords.shape
    z = torch.cat([coords, p[:, None, :].expand(B, N, p.shape[-1])], dim=-1)
    h = F.silu(z @ params["edge.w1"] + params["edge.b1"])
    h = F.silu(h @ params["edge.w2"] + params["edge.b2"])
    hi = h[:, :, None, :].expand(B, N, N, h.shape[-1])
    hj = h[:, None, :, :].expand(B, N, N, h.shape[-1])
    pair = torch.cat([hi, hj, (hi - hj).abs()], dim=-1)
    logit = (pair @ params["edge_head.w"] + params["edge_head.b"])[..., 0]
    return (logit + logit.transpose(1, 2)) / 2


def edge_probabilities(params, coords, p) -> np.ndarray:
    """Single-cell convenience: (N, N) symmetric probabilities, zero diagonal."""
    with torch.no_grad():
        lg = edge_logits(params, torch.tensor(np.array(coords), dtype=DTYPE)[None], torch.as_tensor(p, dtype=DTYPE)[None])[0]
        prob = torch.sigmoid(lg).numpy().copy()
    np.fill_diagonal(prob, 0.0)
    return prob
