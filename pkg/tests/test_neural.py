from __future__ import annotations

import numpy as np
import pytest

from humanscene.core import Predicate
from humanscene.neural import (
    CheckpointError,
    GraphTransformer,
    ModelConfig,
    ModelInput,
    OptimizerState,
    Tensor,
    TrainConfig,
    TrainingDiverged,
    adamw_update,
    compute_gradients,
    ema_update,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from humanscene.neural import autodiff as ad


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


UNARY = {
    "relu": lambda a: ad.relu(a),
    "gelu": lambda a: ad.gelu(a),
    "softmax": lambda a: ad.softmax(a, axis=-1),
    "log_softmax": lambda a: ad.log_softmax(a, axis=-1),
    "mean": lambda a: ad.mean(a, axis=0, keepdims=True),
    "transpose": lambda a: ad.transpose(a, (1, 0)),
    "reshape": lambda a: ad.reshape(a, (4, 3)),
    "getitem": lambda a: a[1:, ::2],
    "take_along": lambda a: ad.take_along(a, np.array([[0], [2], [1]]), axis=-1),
    "neg_sub": lambda a: 2.0 - (-a) * a,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_match_finite_differences(name):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4)) + 0.05  # keep away from the relu kink
    w = rng.normal(size=UNARY[name](Tensor(x)).shape)

    def f(arr):
        return float((UNARY[name](Tensor(arr)).data * w).sum())

    t = Tensor(x.copy(), requires_grad=True)
    ad.tsum(UNARY[name](t) * w).backward()
    assert np.allclose(t.grad, numeric_grad(f, x.copy()), atol=1e-6)


def test_binary_ops_with_broadcasting():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4,))
    for op in (ad.add, ad.sub, ad.mul):
        ta, tb = Tensor(a.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)
        ad.tsum(op(ta, tb)).backward()
        ga = numeric_grad(lambda x: float(op(Tensor(x), Tensor(b)).data.sum()), a.copy())
        gb = numeric_grad(lambda x: float(op(Tensor(a), Tensor(x)).data.sum()), b.copy())
        assert np.allclose(ta.grad, ga, atol=1e-6) and np.allclose(tb.grad, gb, atol=1e-6)


def test_matmul_einsum_concat_grads():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
    ta, tb = Tensor(a.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)
    ad.tsum(ad.matmul(ta, tb)).backward()
    assert np.allclose(tb.grad, numeric_grad(lambda x: float((a @ x).sum()), b.copy()), atol=1e-6)

    c = rng.normal(size=(2, 3, 4))
    tc = Tensor(c.copy(), requires_grad=True)
    w = rng.normal(size=(2, 3))
    ad.tsum(ad.einsum("bij,bij->bi", tc, Tensor(c)) * w).backward()
    assert np.allclose(tc.grad, c * w[..., None], atol=1e-9)

    x, y = Tensor(a.copy(), requires_grad=True), Tensor(c.copy(), requires_grad=True)
    out = ad.concat([x, y], axis=-1)
    ad.tsum(out * np.arange(8.0)).backward()
    assert np.allclose(x.grad, np.broadcast_to(np.arange(4.0), a.shape))
    assert np.allclose(y.grad, np.broadcast_to(np.arange(4.0, 8.0), c.shape))


def test_layer_norm_and_embedding_grads():
    rng = np.random.default_rng(3)
    x, g, b = rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=5)
    w = rng.normal(size=(3, 5))
    tx, tg, tb = (Tensor(v.copy(), requires_grad=True) for v in (x, g, b))
    ad.tsum(ad.layer_norm(tx, tg, tb) * w).backward()
    f = lambda arr: float((ad.layer_norm(Tensor(arr), Tensor(g), Tensor(b)).data * w).sum())  # noqa: E731
    assert np.allclose(tx.grad, numeric_grad(f, x.copy()), atol=1e-5)

    table = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    idx = np.array([[0, 1, 1], [3, 3, 3]])
    ad.tsum(ad.embedding(table, idx)).backward()
    assert table.grad[:, 0].tolist() == [1, 2, 0, 3]


def test_dropout_identity_when_off():
    x = Tensor(np.ones((4, 4)))
    assert ad.dropout(x, 0.0, None) is x or np.array_equal(ad.dropout(x, 0.0, None).data, x.data)
    y = ad.dropout(x, 0.5, np.random.default_rng(0))
    assert set(np.unique(y.data)) <= {0.0, 2.0}


# ---------------------------------------------------------------- model


def _inputs(cfg: ModelConfig, B=2, n=4, seed=0, layout=False):
    rng = np.random.default_rng(seed)
    valid = np.ones((B, n), dtype=bool)
    if B > 1:
        valid[1, -1] = False
    rel = rng.integers(0, 12, size=(B, n, n))
    return ModelInput(
        rng.integers(0, cfg.num_categories + 1, size=(B, n)),
        rng.integers(0, cfg.num_features + 1, size=(B, n)),
        rng.integers(0, 5, size=(B, n)),
        rel,
        valid,
        rng.integers(0, cfg.timesteps + 1, size=B),
        rng.normal(size=(B, cfg.ctx_dim)),
        rng.normal(size=(B, n, 8)) if layout else None,
    )


def _graph_loss(net, inp, targets):
    def loss(p):
        out = net.forward(p, inp)
        total = None
        for key, tgt in targets.items():
            lp = ad.log_softmax(out[key], axis=-1)
            term = ad.mean(ad.take_along(lp, tgt[..., None], axis=-1))
            total = term if total is None else total + term
        return -total

    return loss


@pytest.mark.parametrize("kind", ["graph", "layout"])
def test_gradient_check_small_denoiser(kind):
    cfg = ModelConfig(6, 5, kind, layers=2, heads=2, width=16, ctx_dim=8, timesteps=10)
    net = GraphTransformer(cfg)
    params = net.init_params(seed=1, dtype=np.float64)
    inp = _inputs(cfg, layout=kind == "layout")
    rng = np.random.default_rng(5)
    if kind == "graph":
        B, n = inp.categories.shape
        targets = {
            "category": rng.integers(0, 7, (B, n)), "feature": rng.integers(0, 6, (B, n)),
            "action": rng.integers(0, 5, (B, n)), "relation": rng.integers(0, 12, (B, n, n)),
        }
        loss = _graph_loss(net, inp, targets)
    else:
        target = rng.normal(size=inp.layout.shape)

        def loss(p):
            d = net.forward(p, inp)["layout"] - target
            return ad.mean(d * d)

    errors = gradient_check(params, loss, h=1e-5, entries_per_block=3)
    assert set(errors) == set(params)
    assert max(errors.values()) <= 1e-3, sorted(errors.items(), key=lambda kv: -kv[1])[:3]


def test_forward_shapes_and_validation():
    cfg = ModelConfig(6, 5, "graph", layers=1, heads=2, width=16, ctx_dim=8, timesteps=10)
    net = GraphTransformer(cfg)
    p = net.init_params()
    out = net.forward(p, _inputs(cfg))
    assert out["category"].shape == (2, 4, 7) and out["feature"].shape == (2, 4, 6)
    assert out["action"].shape == (2, 4, 5) and out["relation"].shape == (2, 4, 4, 12)
    bad = _inputs(cfg)
    bad.t[0] = 11
    with pytest.raises(ValueError):
        net.forward(p, bad)
    with pytest.raises(ValueError):
        ModelInput(np.zeros((1, 2), int), np.zeros((1, 3), int), np.zeros((1, 2), int), np.zeros((1, 2, 2), int),
                   np.ones((1, 2), bool), np.zeros(1, int), np.zeros((1, 8)))
    with pytest.raises(ValueError):
        ModelConfig(6, 5, "graph", heads=3, width=16)


def test_node_permutation_equivariance():
    cfg = ModelConfig(6, 5, "graph", layers=2, heads=2, width=16, ctx_dim=8, timesteps=10)
    net = GraphTransformer(cfg)
    p = net.init_params(dtype=np.float64)
    inp = _inputs(cfg, B=1, n=5)
    perm = np.array([3, 0, 4, 1, 2])
    pinp = ModelInput(
        inp.categories[:, perm], inp.features[:, perm], inp.actions[:, perm], inp.relations[:, perm][:, :, perm],
        inp.valid[:, perm], inp.t, inp.ctx,
    )
    a, b = net.forward(p, inp), net.forward(p, pinp)
    assert np.allclose(a["category"].data[:, perm], b["category"].data, atol=1e-10)
    assert np.allclose(a["relation"].data[:, perm][:, :, perm], b["relation"].data, atol=1e-10)


def test_padding_does_not_change_valid_outputs():
    cfg = ModelConfig(6, 5, "layout", layers=2, heads=2, width=16, ctx_dim=1, timesteps=10)
    net = GraphTransformer(cfg)
    p = net.init_params(dtype=np.float64)
    inp = _inputs(ModelConfig(6, 5, "layout", ctx_dim=1, timesteps=10), B=1, n=3, layout=True)
    inp.valid[:] = True
    pad = ModelInput(
        np.pad(inp.categories, ((0, 0), (0, 2))), np.pad(inp.features, ((0, 0), (0, 2))),
        np.pad(inp.actions, ((0, 0), (0, 2))), np.pad(inp.relations, ((0, 0), (0, 2), (0, 2)), constant_values=10),
        np.pad(inp.valid, ((0, 0), (0, 2))), inp.t, inp.ctx, np.pad(inp.layout, ((0, 0), (0, 2), (0, 0))),
    )
    a = net.forward(p, inp)["layout"].data
    b = net.forward(p, pad)["layout"].data[:, :3]
    assert np.allclose(a, b, atol=1e-10)


def test_adamw_matches_reference_formula():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.5, 0.1])}
    cfg = TrainConfig(learning_rate=0.1, weight_decay=0.01, grad_clip=0.0)
    state = OptimizerState.create(params)
    adamw_update(params, grads, state, cfg)
    # first step: bias-corrected m/sqrt(v) = sign(g)
    expected = np.array([1.0, -2.0]) - 0.1 * (np.sign([0.5, 0.1]) / (1 + 1e-8 / np.abs([0.5, 0.1])) + 0.01 * np.array([1.0, -2.0]))
    assert np.allclose(params["w"], expected)


def test_gradient_clipping_bounds_update():
    params = {"w": np.zeros(3)}
    cfg = TrainConfig(learning_rate=1.0, weight_decay=0.0, grad_clip=1.0)
    state = OptimizerState.create(params)
    adamw_update(params, {"w": np.array([300.0, 400.0, 0.0])}, state, cfg)
    assert state.m["w"] == pytest.approx([0.1 * 0.6, 0.1 * 0.8, 0.0])


def test_ema_update():
    params = {"w": np.array([1.0])}
    state = OptimizerState.create({"w": np.array([0.0])})
    ema_update(params, state, 0.9)
    assert state.ema["w"] == pytest.approx([0.1])


def test_train_step_reduces_loss_and_detects_divergence():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(32, 3))
    y = X @ np.array([1.0, -2.0, 0.5])
    params = {"w": np.zeros(3)}

    def loss(p):
        r = ad.matmul(Tensor(X), p["w"]) - y
        return ad.mean(r * r)

    state = OptimizerState.create(params)
    cfg = TrainConfig(learning_rate=0.05, weight_decay=0.0)
    first = train_step(params, loss, state, cfg)
    for _ in range(100):
        last = train_step(params, loss, state, cfg)
    assert last < 0.5 * first
    assert state.step == 101

    def bad(p):
        return ad.tsum(p["w"]) * float("nan")

    with pytest.raises(TrainingDiverged):
        train_step(params, bad, state, cfg)


def test_compute_gradients_unused_params_get_zeros():
    loss, grads = compute_gradients({"a": np.ones(2), "b": np.ones(3)}, lambda p: ad.tsum(p["a"] * p["a"]))
    assert loss == 2.0 and grads["a"].tolist() == [2.0, 2.0] and grads["b"].tolist() == [0, 0, 0]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    net = GraphTransformer(ModelConfig(6, 5, "graph", layers=1, heads=2, width=16, ctx_dim=8))
    params = net.init_params(seed=4)
    ema = {k: v * 0.5 for k, v in params.items()}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"kind": "graph", "note": "x"}, params, ema)
    header, p2, e2 = load_checkpoint(path)
    assert header["note"] == "x"
    for k in params:
        assert p2[k].tobytes() == params[k].tobytes() and e2[k].tobytes() == ema[k].tobytes()
    save_checkpoint(tmp_path / "again.ckpt", {"kind": "graph", "note": "x"}, p2, e2)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {}, {"w": np.ones((2, 2), dtype=np.float32)})
    data = path.read_bytes()
    (tmp_path / "short.ckpt").write_bytes(data[:-3])
    (tmp_path / "long.ckpt").write_bytes(data + b"xx")
    (tmp_path / "junk.ckpt").write_bytes(b"not a checkpoint")
    for name in ("short", "long", "junk"):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / f"{name}.ckpt")
    _, p, ema = load_checkpoint(path)
    assert ema is None and p["w"].dtype == np.float32


def test_relation_vocabulary_size_matches_model():
    # mask token sits one past the 11 predicates
    cfg = ModelConfig(3, 3, "graph", layers=1, heads=2, width=16, ctx_dim=4)
    out = GraphTransformer(cfg).forward(GraphTransformer(cfg).init_params(), _inputs(cfg, B=1, n=2))
    assert out["relation"].shape[-1] == len(Predicate) + 1
