import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from idealdefer.core import (
    Dataset,
    PointLossKind,
    ProbVector,
    argmax_predict,
    check_probs,
    load_jsonl,
    loss_table,
    point_loss,
    point_losses,
    save_jsonl,
)


def prob_vectors(min_size=2, max_size=8):
    raw = arrays(np.float64, st.integers(min_size, max_size),
                 elements=st.floats(0.0, 1.0, allow_nan=False))
    return raw.filter(lambda a: a.sum() > 1e-3).map(lambda a: a / a.sum())


@pytest.mark.parametrize("kind, probs, label, expected", [
    (PointLossKind("zero-one"), [0, 0, 1.0], 2, 0.0),
    (PointLossKind("prob01"), [0.5, 0.5], 0, 1.0),
    (PointLossKind("gce", q=0.7), [0.0, 1.0], 1, 0.0),
    (PointLossKind("gce", q=1.0), [0.25, 0.75], 0, 0.75),
    (PointLossKind("cross-entropy"), [0.5, 0.5], 1, np.log(2.0)),
    (PointLossKind("topk", k=2), [0.1, 0.6, 0.3], 2, 0.0),
    (PointLossKind("topk", k=1), [0.1, 0.6, 0.3], 2, 1.0),
])
def test_point_loss_examples(kind, probs, label, expected):
    assert point_loss(kind, np.array(probs), label) == pytest.approx(expected, abs=1e-12)


def test_gce_q1_matches_direct_formula():
    p = 0.25
    assert point_loss(PointLossKind("gce", q=1.0), np.array([p, 1 - p]), 0) == \
        pytest.approx((1 - p ** 1.0) / 1.0)


def test_cross_entropy_is_clamped():
    value = point_loss(PointLossKind("cross-entropy"), np.array([1.0, 0.0]), 1)
    assert np.isfinite(value)
    assert value == pytest.approx(-np.log(1e-12))


@pytest.mark.parametrize("probs, label", [([0.5, 0.5], 2), ([0.5, 0.5], -1), ([0.7, 0.7], 0),
                                          ([-0.1, 1.1], 0)])
def test_point_loss_rejects_bad_input(probs, label):
    with pytest.raises(ValueError):
        point_loss(PointLossKind("zero-one"), np.array(probs), label)


@pytest.mark.parametrize("probs, expected", [([0.1, 0.7, 0.2], 1), ([0.5, 0.5], 0),
                                             (np.eye(5)[3], 3)])
def test_argmax_examples(probs, expected):
    assert argmax_predict(np.array(probs)) == expected


@pytest.mark.parametrize("kwargs", [{"tag": "gce", "q": 0.0}, {"tag": "gce", "q": 1.5},
                                    {"tag": "topk", "k": 0}, {"tag": "hinge"}])
def test_point_loss_kind_validation(kwargs):
    with pytest.raises(ValueError):
        PointLossKind(**kwargs)


def test_topk_larger_than_L_rejected():
    with pytest.raises(ValueError):
        point_loss(PointLossKind("topk", k=4), np.array([0.2, 0.3, 0.5]), 0)


@given(prob_vectors(), st.data())
def test_bounded_losses(p, data):
    y = data.draw(st.integers(0, len(p) - 1))
    assert point_loss(PointLossKind("zero-one"), p, y) in (0.0, 1.0)
    assert 0.0 <= point_loss(PointLossKind("prob01"), p, y) <= 2.0 + 1e-12
    for q in (0.3, 0.7, 1.0):
        assert 0.0 <= point_loss(PointLossKind("gce", q=q), p, y) <= 1.0 / q + 1e-12
    k = data.draw(st.integers(1, len(p)))
    assert point_loss(PointLossKind("topk", k=k), p, y) in (0.0, 1.0)


@given(prob_vectors(), st.data())
def test_zero_one_matches_argmax(p, data):
    y = data.draw(st.integers(0, len(p) - 1))
    assert point_loss(PointLossKind("zero-one"), p, y) == 1.0 - float(argmax_predict(p) == y)


@given(prob_vectors(), st.data())
def test_top1_agrees_with_zero_one_on_unique_max(p, data):
    if np.sum(p == p.max()) > 1:
        return
    y = data.draw(st.integers(0, len(p) - 1))
    assert point_loss(PointLossKind("topk", k=1), p, y) == point_loss(PointLossKind("zero-one"), p, y)


def test_loss_table_matches_pointwise(rng):
    P = rng.dirichlet(np.ones(4), size=6)
    kind = PointLossKind("gce")
    table = loss_table(kind, P)
    for i in range(6):
        for y in range(4):
            assert table[i, y] == pytest.approx(point_loss(kind, P[i], y))
    assert np.allclose(point_losses(kind, P, np.arange(6) % 4), table[np.arange(6), np.arange(6) % 4])


def test_probvector_validation():
    assert len(ProbVector(np.array([0.25, 0.75]))) == 2
    with pytest.raises(ValueError):
        ProbVector(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        check_probs(np.array([[0.5, 0.5], [0.9, 0.2]]))


def test_point_loss_kind_round_trip():
    for kind in (PointLossKind("gce", q=0.5), PointLossKind("topk", k=5), PointLossKind("prob01")):
        assert PointLossKind.from_dict(kind.to_dict()) == kind
    assert PointLossKind.from_dict("gce") == PointLossKind("gce")


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([0, 3]), 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 3)), np.array([], dtype=int), 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([0, 1]), 3, split="validation")
    d = Dataset(np.arange(6.0).reshape(3, 2), np.array([0, 1, 0]), 2)
    ex = list(d.examples)
    assert ex[1].label == 1 and np.array_equal(ex[1].features, [2.0, 3.0])
    with pytest.raises(ValueError):
        d.bayes_posterior()


def test_jsonl_round_trip(tmp_path):
    d = Dataset(np.array([[0.1, -2.5], [1e-17, 3.0]]), np.array([1, 0]), 2, split="test")
    path = tmp_path / "d.jsonl"
    save_jsonl(d, path)
    back = load_jsonl(path, 2, split="test")
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)
    assert json.loads(path.read_text().splitlines()[0]) == {"x": [0.1, -2.5], "y": 1}


@pytest.mark.parametrize("line", ['{"x": [1.0], "y": 1.5}', '{"x": [1.0]}', '{"x": [1.0], "y": 7}'])
def test_jsonl_rejects_bad_records(tmp_path, line):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(ValueError):
        load_jsonl(path, 2)
