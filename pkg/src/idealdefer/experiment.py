"""Deferral curves and the end-to-end benchmark pipeline."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .core import PointLossKind, argmax_predict, loss_table
from .estimators import HEADS, ConfDeferral, train_classifier
from .rules import threshold_from_rate
from .synth import apply_corruption, gen_mixture, three_way_split

CSV_HEADER = ("method", "target_rate", "realized_rate", "accuracy", "std")
DECIMALS = 6
ORACLE = "chow-oracle"
RANDOM = "random"
FAILURE_MARKER = "FAILED"


@dataclass(frozen=True)
class CurvePoint:
    target_rate: float
    realized_rate: float
    accuracy: float
    std: float = 0.0


@dataclass(frozen=True)
class DeferralCurve:
    """System accuracy against deferral rate for one method."""

    method: str
    points: tuple
    seed: Optional[int] = None

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        for p in pts:
            if not 0.0 <= p.accuracy <= 1.0:
                raise ValueError(f"{self.method}: accuracy {p.accuracy} outside [0, 1]")
        targets = [p.target_rate for p in pts]
        if targets != sorted(targets):
            raise ValueError(f"{self.method}: target rates must be ascending")
        realized = [p.realized_rate for p in pts]
        if any(b < a for a, b in zip(realized, realized[1:])):
            raise ValueError(f"{self.method}: realized rates must be non-decreasing")

    @property
    def rates(self):
        return np.array([p.target_rate for p in self.points])

    @property
    def accuracies(self):
        return np.array([p.accuracy for p in self.points])

    @property
    def stds(self):
        return np.array([p.std for p in self.points])

    def rounded(self, decimals=6):
        """Copy with every value rounded as it would be written to CSV."""
        pts = [CurvePoint(*(round(float(v), decimals) for v in
                            (p.target_rate, p.realized_rate, p.accuracy, p.std)))
               for p in self.points]
        return DeferralCurve(self.method, pts, self.seed)

    def at(self, rate):
        for p in self.points:
            if abs(p.target_rate - rate) < 1e-12:
                return p
        raise KeyError(rate)


def _predictions(obj, X):
    if hasattr(obj, "predict"):
        return np.asarray(obj.predict(X))
    return argmax_predict(obj)


def system_accuracy(model, expert, defer_mask, test) -> float:
    """Accuracy of the combined predictor on ``test``.

    ``model`` and ``expert`` are fitted classifiers or precomputed
    ``(n, L)`` probability arrays for ``test``.
    """
    mask = np.asarray(defer_mask, dtype=bool)
    if mask.shape != (len(test),):
        raise ValueError(f"defer mask has length {mask.size}, test set has {len(test)}")
    pred = np.where(mask, _predictions(expert, test.X), _predictions(model, test.X))
    return float(np.mean(pred == test.y))


def random_baseline_curve(model_acc, expert_acc, rates) -> DeferralCurve:
    """Linear interpolation between never and always deferring."""
    for a in (model_acc, expert_acc):
        if not 0.0 <= a <= 1.0:
            raise ValueError("accuracies must lie in [0, 1]")
    pts = [CurvePoint(float(r), float(r), float((1.0 - r) * model_acc + r * expert_acc))
           for r in rates]
    return DeferralCurve(RANDOM, pts)


def chow_oracle_scores(posterior, model_probs, expert_probs, jitter_rng=None):
    """Expected zero-one loss advantage of the model, ``E[l_e - l_h]``.

    A tiny seeded jitter breaks ties so that rate calibration is well defined.
    """
    kind = PointLossKind("zero-one")
    lm = loss_table(kind, model_probs)
    le = loss_table(kind, expert_probs)
    score = np.sum(posterior * (le - lm), axis=1)
    if jitter_rng is not None:
        score = score + 1e-9 * jitter_rng.random(len(score))
    return score


def curve_points(dev_scores, test_scores, rates, model_pred, expert_pred, y):
    """Calibrate on ``dev_scores`` per rate, then score the combined system on test."""
    test_scores = np.asarray(test_scores, dtype=float)
    out = []
    for r in rates:
        tau, _ = threshold_from_rate(dev_scores, r)
        mask = test_scores <= tau
        acc = float(np.mean(np.where(mask, expert_pred, model_pred) == y))
        out.append((float(r), float(mask.mean()), acc))
    return out


def _aggregate(method, runs, rates, seed):
    """Mean and population std over restarts, rounded so the CSV round-trips."""
    arr = np.array(runs, dtype=float)  # (restarts, rates, 2) -> realized, accuracy
    pts = []
    realized_prev = 0.0
    for i, r in enumerate(rates):
        real = round(float(arr[:, i, 0].mean()), DECIMALS)
        real = max(real, realized_prev)
        realized_prev = real
        pts.append(CurvePoint(float(r), real, round(float(arr[:, i, 1].mean()), DECIMALS),
                              round(float(arr[:, i, 1].std()), DECIMALS)))
    return DeferralCurve(method, pts, seed)


@dataclass
class PreparedData:
    train: object
    deferral: object
    test: object
    model: object
    expert: object


def _seeds(seed):
    return np.random.SeedSequence(seed).generate_state(6)


def generate_splits(config: ExperimentConfig, seed=None):
    """Draw the mixture sample and cut base-train / deferral-train / test."""
    seed = config.seed if seed is None else seed
    s = _seeds(seed)
    data = gen_mixture(config.mixture_spec(), config.n_samples, rng=np.random.default_rng(s[0]))
    return three_way_split(data, tuple(config.fractions), seed=int(s[1]))


def train_models(config: ExperimentConfig, train, seed=None):
    """Corrupt the training split per role and fit the base model and the expert."""
    seed = config.seed if seed is None else seed
    s = _seeds(seed)
    base_c = config.base_corruption_spec()
    expert_c = config.expert_corruption_spec()
    base_train = train if base_c is None else apply_corruption(train, base_c, int(s[2]))
    model = train_classifier(base_train, config.base_hidden, seed=int(s[4]))
    if config.expert_is_model:
        return model, model
    expert_train = train if expert_c is None else apply_corruption(train, expert_c, int(s[3]))
    return model, train_classifier(expert_train, config.expert_hidden, seed=int(s[5]))


def prepare(config: ExperimentConfig, seed=None) -> PreparedData:
    train, deferral, test = generate_splits(config, seed)
    model, expert = train_models(config, train, seed)
    return PreparedData(train, deferral, test, model, expert)


def head_seed(seed, restart):
    return int(np.random.SeedSequence([seed, restart]).generate_state(1)[0])


def make_head(config: ExperimentConfig, method, random_state, c=None):
    cls = HEADS[method]
    if cls is ConfDeferral:
        return cls()
    kw = {"epochs": config.head_epochs, "random_state": random_state}
    if method == "drcpe":
        kw.update(loss=config.dr_loss, point_loss=config.point_loss, gamma=config.gamma,
                  gamma_expert=config.gamma_expert)
    if method == "twostage-exp":
        kw["c"] = c
    return cls(**kw)


def fit_heads(config: ExperimentConfig, prep: PreparedData, seed=None):
    """Train every configured head on the clean deferral split.

    Returns ``{method: {cost_or_None: [head per restart]}}``.
    """
    seed = config.seed if seed is None else seed
    d = prep.deferral
    pm, pe = prep.model.predict_proba(d.X), prep.expert.predict_proba(d.X)
    out = {}
    for method in config.methods:
        costs = config.twostage_costs if method == "twostage-exp" else [None]
        restarts = 1 if method == "conf" else config.seeds
        out[method] = {
            c: [make_head(config, method, head_seed(seed, i), c).fit(pm, d.y, pe)
                for i in range(restarts)]
            for c in costs
        }
    return out


def _head_runs(heads, pm_d, pm_t, rates, model_pred, expert_pred, y):
    runs = []
    for h in heads:
        pts = curve_points(h.decision_function(pm_d), h.decision_function(pm_t), rates,
                           model_pred, expert_pred, y)
        runs.append([(real, acc) for _, real, acc in pts])
    return runs


def evaluate(config: ExperimentConfig, prep: PreparedData, heads, seed=None):
    """Curves on the test split, plus a summary dictionary."""
    seed = config.seed if seed is None else seed
    rates = list(config.target_rates)
    d, t = prep.deferral, prep.test
    pm_d, pe_d = prep.model.predict_proba(d.X), prep.expert.predict_proba(d.X)
    pm_t, pe_t = prep.model.predict_proba(t.X), prep.expert.predict_proba(t.X)
    mp_t, ep_t = argmax_predict(pm_t), argmax_predict(pe_t)
    mp_d, ep_d = argmax_predict(pm_d), argmax_predict(pe_d)
    model_acc = float(np.mean(mp_t == t.y))
    expert_acc = float(np.mean(ep_t == t.y))
    curves: Dict[str, DeferralCurve] = {}
    summary = {"seed": seed, "model_accuracy": model_acc, "expert_accuracy": expert_acc,
               "selected_cost": None, "raw": {}}
    for method, by_cost in heads.items():
        chosen = None
        if len(by_cost) > 1:
            # pick the expert cost by mean deferral-split accuracy over the rate grid
            dev_means = {c: np.mean(_head_runs(hs, pm_d, pm_d, rates, mp_d, ep_d, d.y),
                                    axis=0)[:, 1].mean() for c, hs in by_cost.items()}
            chosen = max(dev_means, key=lambda c: (dev_means[c], -c))
            summary["selected_cost"] = chosen
        else:
            chosen = next(iter(by_cost))
        runs = _head_runs(by_cost[chosen], pm_d, pm_t, rates, mp_t, ep_t, t.y)
        summary["raw"][method] = [[acc for _, acc in run] for run in runs]
        curves[method] = _aggregate(method, runs, rates, seed)
    curves[RANDOM] = _aggregate(RANDOM, [[(p.realized_rate, p.accuracy) for p in
                                          random_baseline_curve(model_acc, expert_acc,
                                                                rates).points]], rates, seed)
    if d.posterior is not None and t.posterior is not None:
        rng = np.random.default_rng(head_seed(seed, 10 ** 6))
        od = chow_oracle_scores(d.bayes_posterior(), pm_d, pe_d, rng)
        ot = chow_oracle_scores(t.bayes_posterior(), pm_t, pe_t, rng)
        pts = curve_points(od, ot, rates, mp_t, ep_t, t.y)
        curves[ORACLE] = _aggregate(ORACLE, [[(real, acc) for _, real, acc in pts]], rates, seed)
    return curves, summary


def curves_to_csv(curves: Sequence[DeferralCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in curves:
        for p in c.points:
            w.writerow([c.method] + [f"{v:.{DECIMALS}f}" for v in
                                     (p.target_rate, p.realized_rate, p.accuracy, p.std)])
    return buf.getvalue()


def curves_from_csv(text, seed=None) -> List[DeferralCurve]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"expected header {','.join(CSV_HEADER)}")
    grouped: Dict[str, list] = {}
    for row in rows[1:]:
        if not row:
            continue
        method, *vals = row
        grouped.setdefault(method, []).append(CurvePoint(*(float(v) for v in vals)))
    return [DeferralCurve(m, pts, seed) for m, pts in grouped.items()]


def write_outputs(out_dir, config, curves, summary):
    os.makedirs(out_dir, exist_ok=True)
    ordered = list(curves.values())
    with open(os.path.join(out_dir, "curves.csv"), "w", newline="") as fh:
        fh.write(curves_to_csv(ordered))
    doc = {"config": config.to_dict(), "summary": summary,
           "curves": {c.method: [p.__dict__ for p in c.points] for c in ordered}}
    with open(os.path.join(out_dir, "curves.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    if config.plot:
        from .plot import curves_svg
        with open(os.path.join(out_dir, "curves.svg"), "w") as fh:
            fh.write(curves_svg(ordered, title=f"seed {summary['seed']}"))


def run_experiment(config: ExperimentConfig, seed=None, out_dir=None):
    """Full pipeline for one experiment seed; writes CSV, JSON and SVG to ``out_dir``.

    On error whatever curves exist are written next to a ``FAILED`` marker
    and the exception propagates.
    """
    seed = config.seed if seed is None else seed
    out_dir = config.out if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, FAILURE_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    curves, summary = {}, {"seed": seed}
    try:
        prep = prepare(config, seed)
        heads = fit_heads(config, prep, seed)
        curves, summary = evaluate(config, prep, heads, seed)
    except Exception as exc:
        with open(marker, "w") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        if curves:
            write_outputs(out_dir, config, curves, summary)
        raise
    write_outputs(out_dir, config, curves, summary)
    return curves, summary
