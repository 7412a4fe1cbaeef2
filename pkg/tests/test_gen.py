import importlib

import numpy as np
import pytest
import torch

from latticeforge import catalog
from latticeforge.gen import (
    GenConfig,
    ModelParams,
    NoiseSchedule,
    edge_logits,
    forward_noise,
    init_params,
    make_batch,
    param_shapes,
    predict_edges,
    predict_x0,
    sample,
    train,
    train_step,
)
from latticeforge.gen.checks import fd_gradient_check, matched_rmsd
from latticeforge.gen.modelfile import (
    CorruptFileError,
    ShapeMismatchError,
    VersionMismatchError,
    from_bytes,
    load_model,
    save_model,
    to_bytes,
)
from latticeforge.gen.train import augment, loss_terms, sample_noise

torch.set_num_threads(1)
SMALL = GenConfig(d=16, heads=2, blocks=2, d_edge=8, epochs=2, copies_per_epoch=2, batch_size=4)


def _params(cfg=SMALL, seed=0, jitter=0.1):
    p = init_params(cfg, seed)
    g = torch.Generator().manual_seed(seed + 1)
    return {k: v + jitter * torch.randn(v.shape, generator=g, dtype=torch.float64) for k, v in p.items()}


# schedule ------------------------------------------------------------------


def test_schedule_shape():
    s = NoiseSchedule()
    assert s.alpha_bar[0] == 1.0 and len(s.alpha_bar) == 101
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert s.betas[1] == pytest.approx(1e-4) and s.betas[-1] == pytest.approx(0.02)


def test_forward_noise_examples(rng):
    s = NoiseSchedule()
    x0 = rng.random((5, 3))
    eps = rng.normal(size=(5, 3))
    assert np.array_equal(forward_noise(x0, 0, eps, s), x0)
    assert np.allclose(forward_noise(x0, 40, np.zeros_like(x0), s), np.sqrt(s.alpha_bar[40]) * x0)
    mask = np.array([1, 1, 0, 1, 0], bool)
    xt = forward_noise(x0, 40, eps, s, mask)
    assert np.array_equal(xt[~mask], x0[~mask])
    with pytest.raises(ValueError):
        forward_noise(x0, 101, eps, s)


def test_forward_noise_variance(rng):
    s = NoiseSchedule()
    t = 60
    x0 = np.full((100000, 1), 0.3)
    xt = forward_noise(x0, t, rng.normal(size=x0.shape), s)
    var = np.var(xt - np.sqrt(s.alpha_bar[t]) * x0)
    assert var == pytest.approx(1 - s.alpha_bar[t], rel=0.02)


def test_posterior_recovers_x0_at_t1():
    s = NoiseSchedule()
    c0, ct, var = s.posterior(1)
    assert var == pytest.approx(0.0, abs=1e-15) and c0 == pytest.approx(1.0)


# model ---------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(d=30, heads=4)
    with pytest.raises(ValueError):
        GenConfig(n_max=16)


def test_param_names_complete():
    shapes = param_shapes(SMALL)
    assert set(shapes) == set(init_params(SMALL))
    assert shapes["edge.w1"] == (12, 8) and shapes["edge_head.w"] == (24, 1)
    assert shapes["block0.cond.q"] == (9, 16)


def _inputs(rng, B=2, N=10):
    x = torch.tensor(rng.normal(size=(B, N, 3)))
    p = torch.tensor(rng.normal(size=(B, 9)))
    mask = torch.ones((B, N), dtype=torch.bool)
    mask[1, 7:] = False
    return x, torch.tensor([5, 80]), p, mask


def test_predict_shape_and_padding(rng):
    x, t, p, mask = _inputs(rng)
    out = predict_x0(_params(), x, t, p, mask, SMALL)
    assert out.shape == x.shape
    assert torch.all(out[1, 7:] == 0)


def test_permutation_equivariance(rng):
    x, t, p, mask = _inputs(rng)
    params = _params()
    perm = torch.tensor(rng.permutation(10))
    a = predict_x0(params, x, t, p, mask, SMALL)
    b = predict_x0(params, x[:, perm], t, p, mask[:, perm], SMALL)
    assert torch.allclose(a[:, perm], b, atol=1e-10)
    la, lb = edge_logits(params, x, p), edge_logits(params, x[:, perm], p)
    assert torch.allclose(la[:, perm][:, :, perm], lb, atol=1e-10)


def test_masked_positions_ignored(rng):
    x, t, p, mask = _inputs(rng)
    params = _params()
    a = predict_x0(params, x, t, p, mask, SMALL)
    x2 = x.clone()
    x2[1, 7:] += 100.0
    b = predict_x0(params, x2, t, p, mask, SMALL)
    assert torch.allclose(a[mask], b[mask], atol=0, rtol=0)


def test_nonfinite_props(rng):
    x, t, p, mask = _inputs(rng)
    p[0, 0] = float("nan")
    with pytest.raises(ValueError):
        predict_x0(_params(), x, t, p, mask, SMALL)


def test_edge_probabilities(rng):
    model = ModelParams(_params(), SMALL)
    prob = predict_edges(model, rng.random((9, 3)), rng.normal(size=9))
    assert np.array_equal(prob, prob.T)
    assert np.all(np.diag(prob) == 0)
    _, e = predict_edges(model, rng.random((9, 3)), rng.normal(size=9), threshold=0.5)
    assert all(i < j for i, j in e)


# training ------------------------------------------------------------------


def test_batch_padding(cells):
    b = make_batch([cells["bcc"], cells["octet"]], np.zeros((2, 9)), 32)
    assert b.x0.shape == (2, 14, 3)
    assert not b.mask[0, 9:].any() and b.mask[1].all()
    assert torch.all(b.x0[0, 9:] == 0)
    assert torch.equal(b.adj, b.adj.transpose(1, 2))
    assert torch.all(torch.diagonal(b.adj, dim1=1, dim2=2) == 0)
    with pytest.raises(ValueError):
        make_batch([cells["kelvin"]], np.zeros((1, 9)), 23)


def test_coord_loss_zero_for_exact_prediction(cells, monkeypatch):
    tr = importlib.import_module("latticeforge.gen.train")

    b = make_batch([cells["octet"], cells["bcc"]], np.zeros((2, 9)), 32)
    # the denoiser predicts in diffusion space
    monkeypatch.setattr(tr, "predict_x0", lambda params, xt, t, p, mask, cfg: tr.to_diffusion(b.x0))
    s = NoiseSchedule()
    t, eps = sample_noise(b, s, torch.Generator().manual_seed(0))
    coord, edge = loss_terms(_params(), b, t, eps, s, SMALL)
    assert float(coord) == 0.0 and float(edge) > 0


def test_train_step_deterministic(cells):
    b = make_batch([cells["octet"], cells["kelvin"]], np.zeros((2, 9)), 32)
    s = NoiseSchedule()
    params = _params()
    r1 = train_step(params, b, s, SMALL, torch.Generator().manual_seed(4))
    r2 = train_step(params, b, s, SMALL, torch.Generator().manual_seed(4))
    assert r1[0] == r2[0]
    assert all(torch.equal(r1[3][k], r2[3][k]) for k in params)
    assert set(r1[3]) == set(params)


def test_fd_gradients_small(cells):
    b = make_batch([cells["octet"], cells["bcc"]], np.random.default_rng(0).normal(size=(2, 9)), 32)
    s = NoiseSchedule()
    t, eps = sample_noise(b, s, torch.Generator().manual_seed(2))
    rows = fd_gradient_check(_params(), b, t, eps, s, SMALL, probes=3)
    assert {r[0] for r in rows} == set(param_shapes(SMALL))
    assert max(r[4] for r in rows) <= 1e-5


def test_augment_preserves_structure(cells, rng):
    c = cells["diamond"]
    p = np.arange(1.0, 10.0)
    out, q = augment(c, p, rng)
    assert out.n_vertices == c.n_vertices and out.n_edges == c.n_edges
    assert out.vertices.min() >= -1e-12 and out.vertices.max() <= 1 + 1e-12
    assert sorted(q[:3]) == sorted(p[:3])


def test_matched_rmsd():
    ref = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    assert matched_rmsd(ref[[2, 0, 1]], ref) == 0.0
    assert matched_rmsd(ref + [0, 0, 0.1], ref) == pytest.approx(0.1)


def _tiny_model(cells):
    cs = [cells["bcc"], cells["octet"]]
    props = np.random.default_rng(0).random((2, 9))
    return train(cs, props, SMALL)


def test_train_and_sample(cells):
    model, log = _tiny_model(cells)
    assert len(log.coord) == SMALL.epochs
    p = model.ref_props[1]
    x1 = sample(model, p, 14, seed=3)
    x2 = sample(model, p, 14, seed=3)
    assert x1.shape == (14, 3) and np.array_equal(x1, x2)
    assert sample(model, p, seed=3).shape == (14, 3)  # typical count
    with pytest.raises(ValueError):
        sample(model, p, 0, seed=1)


def test_training_deterministic(cells):
    a, _ = _tiny_model(cells)
    b, _ = _tiny_model(cells)
    assert to_bytes(a) == to_bytes(b)


# model file ----------------------------------------------------------------


def test_model_roundtrip(tmp_path, cells):
    model, _ = _tiny_model(cells)
    path = tmp_path / "m.lfm"
    save_model(model, path)
    back = load_model(path)
    assert back.config == model.config and back.schedule == model.schedule
    assert all(torch.equal(back.params[k], model.params[k]) for k in model.params)
    assert np.array_equal(back.prop_mean, model.prop_mean)
    assert to_bytes(back) == path.read_bytes()


def test_model_truncated(cells):
    data = to_bytes(_tiny_model(cells)[0])
    with pytest.raises(CorruptFileError, match="corrupt file"):
        from_bytes(data[: len(data) // 2])
    flipped = bytearray(data)
    flipped[100] ^= 1
    with pytest.raises(CorruptFileError):
        from_bytes(bytes(flipped))


def _rewrite_header(data, edit):
    import hashlib
    import json
    import struct

    hlen = struct.unpack("<Q", data[8:16])[0]
    header = json.loads(data[16 : 16 + hlen])
    edit(header)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = data[:8] + struct.pack("<Q", len(head)) + head + data[16 + hlen : -32]
    return blob + hashlib.sha256(blob).digest()


def test_model_version_mismatch(cells):
    data = to_bytes(_tiny_model(cells)[0])
    bad = _rewrite_header(data, lambda h: h.update(format_version=99))
    with pytest.raises(VersionMismatchError, match="version mismatch"):
        from_bytes(bad)


def test_model_shape_mismatch(cells):
    data = to_bytes(_tiny_model(cells)[0])

    def edit(h):
        h["config"]["d"] = 32

    with pytest.raises(ShapeMismatchError):
        from_bytes(_rewrite_header(data, edit))
