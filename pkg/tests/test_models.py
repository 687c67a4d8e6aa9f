import json

import numpy as np
import pytest

from idealdefer.models import (
    MlpParams,
    OptimizerConfig,
    TrainingDivergedError,
    cross_entropy_objective,
    deferral_features,
    feature_dim,
    init_mlp,
    load_checkpoint,
    loss_and_grad,
    mlp_forward,
    params_from_json,
    params_to_json,
    save_checkpoint,
    train_mlp,
)


def test_zero_network_outputs_zero(rng):
    p = MlpParams([np.zeros((4, 6)), np.zeros((6, 2))], [np.zeros(6), np.zeros(2)])
    assert np.array_equal(mlp_forward(p, rng.normal(size=(3, 4))), np.zeros((3, 2)))


def test_identity_layer(rng):
    x = rng.normal(size=(5, 3))
    assert np.array_equal(mlp_forward(MlpParams([np.eye(3)], [np.zeros(3)]), x), x)


def test_forward_matches_explicit_loop(rng):
    p = init_mlp([3, 5, 4, 2], rng)
    x = rng.normal(size=(6, 3))
    out = []
    for row in x:
        h = row
        for i, (W, b) in enumerate(zip(p.weights, p.biases)):
            h = sum(h[j] * W[j] for j in range(len(h))) + b
            if i < len(p.weights) - 1:
                h = np.array([max(v, 0.0) for v in h])
        out.append(h)
    assert np.allclose(mlp_forward(p, x), np.array(out), atol=1e-12)


def test_forward_rejects_wrong_width(rng):
    with pytest.raises(ValueError):
        mlp_forward(init_mlp([3, 2], rng), np.ones((2, 4)))


def test_params_validation():
    with pytest.raises(ValueError):
        MlpParams([np.zeros((2, 3))], [np.zeros(2)])
    with pytest.raises(ValueError):
        MlpParams([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])


def test_flat_round_trip(rng):
    p = init_mlp([4, 3, 2], rng)
    q = p.with_flat(p.flat())
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))


def test_features_one_hot():
    f = deferral_features(np.eye(10)[3])
    assert f.shape == (21,)
    assert f[0] == 0.0 and f[1] == 1.0 and np.all(f[2:11] == 0.0)
    assert np.array_equal(f[11:], np.eye(10)[3])


def test_features_uniform():
    f = deferral_features(np.full(10, 0.1))
    assert f[0] == pytest.approx(np.log(10), abs=1e-12)
    assert np.allclose(f[1:11], 0.1)


@pytest.mark.parametrize("L, dim", [(4, 9), (10, 21), (12, 23)])
def test_feature_dimension(L, dim, rng):
    assert deferral_features(rng.dirichlet(np.ones(L), size=3)).shape == (3, dim)
    assert feature_dim(L) == dim


def test_cross_entropy_gradient_is_softmax_minus_onehot(rng):
    logits = rng.normal(size=(4, 3))
    y = np.array([0, 2, 1, 1])
    _, g = cross_entropy_objective(logits, y)
    p = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    assert np.allclose(g, (p - np.eye(3)[y]) / 4)


def test_loss_and_grad_matches_finite_difference(rng):
    p = init_mlp([3, 4, 2], rng)
    X, y = rng.normal(size=(7, 3)), rng.integers(2, size=7)
    obj = lambda out: cross_entropy_objective(out, y)
    _, g = loss_and_grad(p, X, obj)
    theta, h = p.flat(), 1e-6
    for i in range(0, theta.size, 5):
        e = np.zeros_like(theta)
        e[i] = h
        fd = (loss_and_grad(p.with_flat(theta + e), X, obj)[0]
              - loss_and_grad(p.with_flat(theta - e), X, obj)[0]) / (2 * h)
        assert g.flat()[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def _blobs(rng, n=200):
    y = rng.integers(2, size=n)
    X = rng.normal(size=(n, 2)) * 0.5 + np.where(y[:, None] == 1, 3.0, -3.0)
    return X, y


def _fit(X, y, epochs, seed):
    p0 = init_mlp([2, 8, 2], np.random.default_rng(seed))
    cfg = OptimizerConfig(learning_rate=3e-3, weight_decay=1e-4, epochs=epochs, batch_size=32)
    return p0, *train_mlp(p0, X, lambda out, idx: cross_entropy_objective(out, y[idx]),
                          len(y), cfg, np.random.default_rng(seed + 1))


def test_separable_blobs_are_learned(rng):
    X, y = _blobs(rng)
    _, p, hist = _fit(X, y, 200, 0)
    assert np.mean(mlp_forward(p, X).argmax(1) == y) >= 0.99
    assert np.mean(hist[-10:]) < np.mean(hist[:10])


def test_zero_epochs_returns_initialisation(rng):
    X, y = _blobs(rng)
    p0, p, hist = _fit(X, y, 0, 0)
    assert hist == [] and all(np.array_equal(a, b) for a, b in zip(p0.arrays(), p.arrays()))


def test_training_is_bitwise_deterministic(rng):
    X, y = _blobs(rng)
    _, a, ha = _fit(X, y, 20, 4)
    _, b, hb = _fit(X, y, 20, 4)
    assert ha == hb and all(np.array_equal(u, v) for u, v in zip(a.arrays(), b.arrays()))


def test_divergence_is_detected(rng):
    X = rng.normal(size=(10, 2))
    bad = lambda out, idx: (float("nan"), np.zeros_like(out))
    with pytest.raises(TrainingDivergedError):
        train_mlp(init_mlp([2, 1], rng), X, bad, 10, OptimizerConfig(epochs=1), rng)


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0), dict(epochs=-1), dict(batch_size=0),
                                    dict(weight_decay=-1e-3)])
def test_optimizer_config_rejects(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_checkpoint_round_trip(tmp_path, rng):
    p = init_mlp([5, 4, 3], rng)
    path = tmp_path / "m.json"
    save_checkpoint(p, path, {"role": "base"})
    q, meta = load_checkpoint(path)
    assert meta == {"role": "base"}
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))


def test_checkpoint_rejects_foreign_documents(rng):
    doc = params_to_json(init_mlp([2, 1], rng))
    with pytest.raises(ValueError):
        params_from_json({**doc, "format": "other"})
    with pytest.raises(ValueError):
        params_from_json({**doc, "version": 99})
    json.dumps(doc)
