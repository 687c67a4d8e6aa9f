import os

import numpy as np
import pytest

from idealdefer.config import default_config
from idealdefer.core import Dataset
from idealdefer.experiment import (
    FAILURE_MARKER,
    CurvePoint,
    DeferralCurve,
    curves_from_csv,
    curves_to_csv,
    fit_heads,
    evaluate,
    prepare,
    random_baseline_curve,
    run_experiment,
    system_accuracy,
)

SMALL = dict(n_samples=1600, head_epochs=4, seeds=2, twostage_costs=[0.0, 0.1], plot=False)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    cfg = default_config(**SMALL, out=str(out))
    curves, summary = run_experiment(cfg, seed=3)
    return cfg, curves, summary, out


def _probs(pred, L=3):
    return np.eye(L)[pred]


def test_system_accuracy_examples():
    y = np.array([0, 1, 2, 1])
    test = Dataset(np.zeros((4, 1)), y, 3, split="test")
    model, expert = _probs([0, 0, 2, 0]), _probs([1, 1, 2, 1])
    assert system_accuracy(model, expert, np.zeros(4, bool), test) == 0.5
    assert system_accuracy(model, expert, np.ones(4, bool), test) == 0.75
    fix = np.array([False, True, False, True])
    assert system_accuracy(model, expert, fix, test) == 1.0
    with pytest.raises(ValueError):
        system_accuracy(model, expert, np.zeros(3, bool), test)


def test_random_baseline_examples():
    c = random_baseline_curve(0.6, 0.8, [0.0, 0.25, 1.0])
    assert c.accuracies == pytest.approx([0.6, 0.65, 0.8])
    with pytest.raises(ValueError):
        random_baseline_curve(1.2, 0.5, [0.1])


def test_curve_invariants():
    with pytest.raises(ValueError):
        DeferralCurve("x", [CurvePoint(0.1, 0.2, 0.5), CurvePoint(0.2, 0.1, 0.5)])
    with pytest.raises(ValueError):
        DeferralCurve("x", [CurvePoint(0.1, 0.1, 1.5)])


def test_csv_round_trip_exact(small_run):
    _, curves, _, out = small_run
    text = open(os.path.join(out, "curves.csv")).read()
    assert text.splitlines()[0] == "method,target_rate,realized_rate,accuracy,std"
    back = {c.method: c for c in curves_from_csv(text)}
    assert all(back[m].points == c.points for m, c in curves.items())
    assert curves_to_csv(list(back.values())) == text


def test_run_writes_artifacts_and_monotone_curves(small_run):
    cfg, curves, summary, out = small_run
    assert {"curves.csv", "curves.json"} <= set(os.listdir(out))
    assert set(curves) == set(cfg.methods) | {"random", "chow-oracle"}
    for c in curves.values():
        assert np.all(np.diff([p.realized_rate for p in c.points]) >= 0)
        assert np.all((c.accuracies >= 0) & (c.accuracies <= 1))
    assert summary["selected_cost"] in cfg.twostage_costs


def test_conf_curve_matches_direct_thresholding(tmp_path):
    cfg = default_config(**SMALL, methods=["conf"], base_corruption=None, out=str(tmp_path))
    prep = prepare(cfg, seed=5)
    curves, _ = evaluate(cfg, prep, fit_heads(cfg, prep, seed=5), seed=5)
    # direct route: sort dev confidences, take the floor(r n)-th smallest, defer at or below it
    dev = prep.model.predict_proba(prep.deferral.X).max(axis=1)
    pt = prep.model.predict_proba(prep.test.X)
    conf_t = pt.max(axis=1)
    m_pred = pt.argmax(1)
    e_pred = prep.expert.predict_proba(prep.test.X).argmax(1)
    srt = np.sort(dev)
    for point in curves["conf"].points:
        k = int(np.floor(point.target_rate * len(dev) + 1e-9))
        tau = srt[k - 1] if k > 0 else -np.inf
        defer = conf_t <= tau
        acc = np.mean(np.where(defer, e_pred, m_pred) == prep.test.y)
        assert point.accuracy == pytest.approx(round(acc, 6), abs=1e-12)
        assert point.realized_rate == pytest.approx(round(defer.mean(), 6), abs=1e-12)


def test_expert_equal_to_model_gives_flat_curves(tmp_path):
    cfg = default_config(**SMALL, expert_is_model=True, out=str(tmp_path))
    curves, summary = run_experiment(cfg, seed=1)
    base = summary["model_accuracy"]
    for c in curves.values():
        for p in c.points:
            assert abs(p.accuracy - base) <= 2 * p.std + 1e-12


def test_failure_marker_written(tmp_path, monkeypatch):
    import idealdefer.experiment as ex

    def boom(*a, **k):
        raise RuntimeError("head training exploded")

    monkeypatch.setattr(ex, "fit_heads", boom)
    cfg = default_config(**SMALL, out=str(tmp_path))
    with pytest.raises(RuntimeError):
        ex.run_experiment(cfg)
    assert "exploded" in open(tmp_path / FAILURE_MARKER).read()
    monkeypatch.undo()
    cfg2 = default_config(**SMALL, methods=["conf"], out=str(tmp_path))
    ex.run_experiment(cfg2)
    assert not (tmp_path / FAILURE_MARKER).exists()


def test_experiment_is_deterministic(tmp_path):
    cfg = default_config(**SMALL, methods=["conf", "drcpe"])
    a, _ = run_experiment(cfg, seed=2, out_dir=str(tmp_path / "a"))
    b, _ = run_experiment(cfg, seed=2, out_dir=str(tmp_path / "b"))
    assert (tmp_path / "a" / "curves.csv").read_bytes() == (tmp_path / "b" / "curves.csv").read_bytes()
