"""Named property checks over the whole package, runnable from the CLI.

Each check returns ``(passed, detail)``; :func:`run_checks` times them and
assembles a JSON-serialisable report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .baselines import twostage_objective
from .config import ConfigError, ExperimentConfig
from .core import PointLossKind, loss_table
from .drcpe import (
    SPECS,
    drcpe_objective,
    exact_joint_drcpe_loss,
    gap_bounds,
    marginal_drcpe_loss,
    pointwise_optimal_score,
)
from .experiment import curves_from_csv, curves_to_csv, random_baseline_curve
from .ideal import (
    CHI2_GENERATOR,
    KL_GENERATOR,
    kl_joint_weight,
    kl_marginal_weight,
    normalize_weights,
    phi_ideal_ratio,
)
from .models import (
    cross_entropy_objective,
    init_mlp,
    loss_and_grad,
    min_abs_preactivation,
    mlp_forward,
    squared_objective,
)
from .rules import (
    chow_defer_batch,
    cost_from_ratio_threshold,
    dr_defer_from_weights,
    scorer_threshold_equiv,
    tilt_posterior,
)

BOUNDED_LOSSES = (PointLossKind("zero-one"), PointLossKind("prob01"), PointLossKind("gce"),
                  PointLossKind("topk", k=2))
GAMMAS = (0.25, 0.5, 1.0)


@dataclass
class DiscreteInstance:
    """Finite ``X`` with an exact label posterior and fixed model/expert outputs."""

    px: np.ndarray
    posterior: np.ndarray
    model_probs: np.ndarray
    expert_probs: np.ndarray
    kind: PointLossKind

    @property
    def model_losses(self):
        return loss_table(self.kind, self.model_probs)

    @property
    def expert_losses(self):
        return loss_table(self.kind, self.expert_probs)


def random_instance(rng, max_classes=5, max_points=20, kind=None) -> DiscreteInstance:
    L = int(rng.integers(2, max_classes + 1))
    n = int(rng.integers(1, max_points + 1))
    if kind is None:
        kind = BOUNDED_LOSSES[rng.integers(len(BOUNDED_LOSSES))]
    if kind.tag == "topk" and kind.k > L:
        kind = PointLossKind("topk", k=1)
    return DiscreteInstance(
        px=rng.dirichlet(np.ones(n)),
        posterior=rng.dirichlet(np.full(L, 0.7), size=n),
        model_probs=rng.dirichlet(np.ones(L), size=n),
        expert_probs=rng.dirichlet(np.ones(L), size=n),
        kind=kind,
    )


def _taus(rng, log_ratios, k=5):
    centre = float(np.median(log_ratios))
    spread = float(np.ptp(log_ratios)) + 0.1
    return np.exp(centre + spread * rng.uniform(-0.75, 0.75, size=k))


def check_chow_marginal(seed=0, instances=200):
    """Marginal ratio rule equals Chow's rule at the converted cost."""
    rng = np.random.default_rng(seed)
    points = mismatches = deferred = 0
    for _ in range(instances):
        inst = random_instance(rng)
        gamma = float(rng.choice(GAMMAS))
        eta, lm, le = inst.posterior, inst.model_losses, inst.expert_losses
        wm, zm = normalize_weights(kl_marginal_weight(np.sum(eta * lm, axis=1), gamma), inst.px)
        we, ze = normalize_weights(kl_marginal_weight(np.sum(eta * le, axis=1), gamma), inst.px)
        for tau in _taus(rng, np.log(wm) - np.log(we)):
            by_ratio = dr_defer_from_weights(wm, we, tau)
            c = cost_from_ratio_threshold(tau, zm, ze, gamma)
            by_chow = chow_defer_batch(eta, lm, le, c)
            mismatches += int(np.sum(by_ratio != by_chow))
            deferred += int(np.sum(by_ratio))
            points += len(by_ratio)
    return mismatches == 0, {"points": points, "mismatches": mismatches, "deferred": deferred}


def check_joint_containment(seed=1, instances=200):
    """Joint ratio deferral implies Chow deferral under the expert-tilted posterior."""
    rng = np.random.default_rng(seed)
    points = violations = deferred = 0
    for _ in range(instances):
        inst = random_instance(rng)
        gamma = float(rng.choice(GAMMAS))
        eta, lm, le = inst.posterior, inst.model_losses, inst.expert_losses
        wm, zm = normalize_weights(np.sum(eta * kl_joint_weight(lm, gamma), axis=1), inst.px)
        we, ze = normalize_weights(np.sum(eta * kl_joint_weight(le, gamma), axis=1), inst.px)
        tilted = tilt_posterior(eta, le, gamma).entries
        for tau in _taus(rng, np.log(wm) - np.log(we)):
            joint = dr_defer_from_weights(wm, we, tau)
            c = cost_from_ratio_threshold(tau, zm, ze, gamma)
            chow = chow_defer_batch(tilted, lm, le, c)
            violations += int(np.sum(joint & ~chow))
            deferred += int(np.sum(joint))
            points += len(joint)
    return violations == 0, {"points": points, "violations": violations, "deferred": deferred}


def check_jensen_sandwich(seed=2, instances=500, slack=1e-9):
    """Marginal loss never exceeds joint loss; their gap sits inside the variance bounds."""
    rng = np.random.default_rng(seed)
    admissible = ("squared", "logistic")
    worst_order = -np.inf
    worst_bound = -np.inf
    failures = 0
    for _ in range(instances):
        inst = random_instance(rng)
        spec = SPECS[admissible[rng.integers(len(admissible))]]
        g, ge = (float(v) for v in rng.uniform(0.2, 2.0, size=2))
        s = rng.uniform(-2.0, 2.0, size=len(inst.px))
        args = (inst.posterior, inst.model_losses, inst.expert_losses, g, ge)
        marg = marginal_drcpe_loss(spec, s, *args, px=inst.px)
        joint = exact_joint_drcpe_loss(spec, s, *args, px=inst.px)
        b = gap_bounds(spec, s, *args, loss_bound=inst.kind.upper_bound(), px=inst.px)
        order_excess = marg - joint
        bound_excess = max(b.lower - b.actual, b.actual - b.upper)
        worst_order = max(worst_order, order_excess)
        worst_bound = max(worst_bound, bound_excess)
        if order_excess > slack or not b.holds(slack) or abs((joint - marg) - b.actual) > slack:
            failures += 1
    return failures == 0, {"instances": instances, "failures": failures,
                           "max_marginal_minus_joint": worst_order,
                           "max_bound_excess": worst_bound}


def _closed_form(kind, ph, pe):
    if kind == "squared":
        return (ph - pe) / (ph + pe) if ph + pe > 0 else None
    if kind in ("lsif", "kliep"):
        return ph / pe if pe > 0 else None
    return float(np.log(ph / pe)) if ph > 0 and pe > 0 else None


def check_gamma_limits(seed=3, instances=200, gamma=1e-6, rtol=1e-4):
    """Pointwise-optimal scores at tiny temperature approach the zero-one closed forms."""
    rng = np.random.default_rng(seed)
    zero_one = PointLossKind("zero-one")
    worst = 0.0
    compared = 0
    for _ in range(instances):
        L = int(rng.integers(2, 6))
        eta = rng.dirichlet(np.ones(L))
        h, e = rng.integers(L, size=2)
        lm = loss_table(zero_one, np.eye(L)[h])[0]
        le = loss_table(zero_one, np.eye(L)[e])[0]
        W = float(eta @ kl_joint_weight(lm, gamma))
        We = float(eta @ kl_joint_weight(le, gamma))
        for kind in SPECS:
            want = _closed_form(kind, eta[h], eta[e])
            if want is None:
                continue
            got = pointwise_optimal_score(kind, W, We)
            err = abs(got - want) / max(abs(want), 1e-12)
            if want == 0.0:
                err = abs(got)
            worst = max(worst, err)
            compared += 1
    return worst <= rtol, {"compared": compared, "max_rel_error": worst}


def check_phi_ratio(seed=4, instances=100, atol=1e-8):
    """The general phi solver reproduces normalised KL weights and its own constraint."""
    rng = np.random.default_rng(seed)
    worst_kl = worst_norm = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 30))
        losses = rng.uniform(0.0, 1.0, size=n)
        p = rng.dirichlet(np.ones(n))
        gamma = float(rng.uniform(0.25, 2.0))
        r_kl, _ = phi_ideal_ratio(losses, p, gamma, KL_GENERATOR)
        ref, _ = normalize_weights(kl_joint_weight(losses, gamma), p)
        worst_kl = max(worst_kl, float(np.max(np.abs(r_kl - ref))))
        r_chi, _ = phi_ideal_ratio(losses, p, gamma, CHI2_GENERATOR)
        worst_norm = max(worst_norm, abs(float(p @ r_kl) - 1.0), abs(float(p @ r_chi) - 1.0))
    ok = worst_kl <= atol and worst_norm <= atol
    return ok, {"max_kl_error": worst_kl, "max_normalisation_error": worst_norm}


def check_lemma5(seed=5, tuples=10_000):
    """Ratio thresholding and mapped score thresholding give the same decision."""
    rng = np.random.default_rng(seed)
    kinds = list(SPECS)
    mismatches = deferred = 0
    for _ in range(tuples):
        kind = kinds[rng.integers(len(kinds))]
        pi = float(rng.uniform(0.05, 0.95))
        tau = float(np.exp(rng.uniform(-3.0, 3.0)))
        if kind == "squared":
            s = float(rng.uniform(-0.999, 0.999))
        elif kind == "logistic":
            s = float(rng.uniform(-6.0, 6.0))
        else:
            s = float(np.exp(rng.uniform(-4.0, 4.0)))
        by_ratio, by_score = scorer_threshold_equiv(kind, s, pi, tau)
        mismatches += by_ratio != by_score
        deferred += by_ratio
    return mismatches == 0, {"tuples": tuples, "mismatches": int(mismatches),
                             "deferred": int(deferred)}


# gradient checks ---------------------------------------------------------

def _objective_cases(rng, n=12):
    """Objective builders: name -> (output size, objective factory)."""
    cases = {}
    cases["cross-entropy"] = (4, lambda: (lambda y: lambda out: cross_entropy_objective(out, y))(
        rng.integers(4, size=n)))
    for kind in SPECS:
        def make(kind=kind):
            wm = rng.uniform(0.05, 1.0, size=n)
            we = rng.uniform(0.05, 1.0, size=n)
            return lambda out: drcpe_objective(kind, out, wm, we)
        cases[f"drcpe-{kind}"] = (1, make)

    def diff01():
        target = rng.integers(-1, 2, size=n).astype(float)
        return lambda out: squared_objective(out, target)

    def maxprob():
        target = rng.uniform(0.1, 1.0, size=n)
        return lambda out: squared_objective(out, target)

    def twostage():
        conf = rng.uniform(0.1, 1.0, size=n)
        hit_m = rng.random(n) < 0.5
        hit_e = rng.random(n) < 0.5
        c = float(rng.choice([0.0, 0.05, 0.2]))
        return lambda out: twostage_objective(out, conf, hit_m, hit_e, c)

    cases["estimate-diff01"] = (1, diff01)
    cases["estimate-maxprob"] = (1, maxprob)
    cases["twostage-exp"] = (1, twostage)
    return cases


def _fd_gradient(params, X, objective, h):
    theta = params.flat()
    grad = np.empty_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        out_up = mlp_forward(params.with_flat(up), X)
        out_dn = mlp_forward(params.with_flat(dn), X)
        if out_up.shape[1] == 1:
            out_up, out_dn = out_up[:, 0], out_dn[:, 0]
        grad[j] = (objective(out_up)[0] - objective(out_dn)[0]) / (2.0 * h)
    return grad


def gradient_error(params, X, objective, h=1e-6):
    """Relative l2 distance between backprop and central differences."""
    _, g = loss_and_grad(params, X, objective)
    analytic = np.concatenate([a.ravel() for a in g.arrays()])
    numeric = _fd_gradient(params, X, objective, h)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(seed=6, points=100, rtol=1e-5, kink_margin=1e-3):
    """Backprop through every trainable objective matches central differences."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name, (out_dim, factory) in _objective_cases(rng).items():
        errs = []
        while len(errs) < points:
            params = init_mlp([5, 6, 4, out_dim], rng)
            X = rng.normal(size=(12, 5))
            if min_abs_preactivation(params, X) < kink_margin:
                continue
            errs.append(gradient_error(params, X, factory()))
        worst[name] = max(errs)
    return all(v <= rtol for v in worst.values()), {"max_rel_error": worst}


def check_determinism(seed=7):
    """Two trainings with the same seed give bitwise-equal parameters and losses."""
    from .estimators import DRCPEDeferral
    rng = np.random.default_rng(seed)
    pm = rng.dirichlet(np.ones(5), size=200)
    pe = rng.dirichlet(np.ones(5), size=200)
    y = rng.integers(5, size=200)
    fits = [DRCPEDeferral(epochs=5, random_state=3).fit(pm, y, pe) for _ in range(2)]
    same_params = np.array_equal(fits[0].params_.flat(), fits[1].params_.flat())
    same_loss = fits[0].loss_curve_ == fits[1].loss_curve_
    return same_params and same_loss, {"params_equal": bool(same_params),
                                       "losses_equal": bool(same_loss)}


def check_config_rejection():
    """A negative temperature is rejected with a message naming it."""
    try:
        ExperimentConfig.from_dict({"gamma": -0.5})
    except ConfigError as exc:
        return "gamma" in str(exc), {"rejected": True, "message": str(exc)}
    return False, {"rejected": False}


def check_csv_roundtrip():
    curve = random_baseline_curve(0.6123457, 0.8, [0.0, 0.05, 0.25, 1.0]).rounded()
    text = curves_to_csv([curve])
    back = curves_from_csv(text)
    same = len(back) == 1 and back[0].points == curve.points
    return same and curves_to_csv(back) == text, {"rows": len(curve.points)}


@dataclass(frozen=True)
class Check:
    name: str
    func: Callable
    groups: tuple


CHECKS: Dict[str, Check] = {c.name: c for c in (
    Check("chow-marginal", check_chow_marginal, ("theory",)),
    Check("joint-containment", check_joint_containment, ("theory",)),
    Check("jensen-sandwich", check_jensen_sandwich, ("theory",)),
    Check("gamma-limits", check_gamma_limits, ("theory",)),
    Check("phi-ratio", check_phi_ratio, ("theory",)),
    Check("lemma5", check_lemma5, ("theory",)),
    Check("gradients", check_gradients, ("training",)),
    Check("determinism", check_determinism, ("training",)),
    Check("config-rejection", check_config_rejection, ("harness",)),
    Check("csv-roundtrip", check_csv_roundtrip, ("harness",)),
)}
GROUPS = sorted({g for c in CHECKS.values() for g in c.groups})


def select(selector="all"):
    """Resolve a comma-separated list of check names, group names or ``all``."""
    names = []
    for token in (t.strip() for t in selector.split(",")):
        if token == "all":
            picked = list(CHECKS)
        elif token in CHECKS:
            picked = [token]
        elif token in GROUPS:
            picked = [n for n, c in CHECKS.items() if token in c.groups]
        else:
            raise KeyError(f"unknown check or group {token!r}; "
                           f"known: all, {', '.join(GROUPS)}, {', '.join(CHECKS)}")
        names += [n for n in picked if n not in names]
    return names


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def run_checks(selector="all"):
    """Run the selected checks; an exception inside a check counts as a failure."""
    entries = []
    for name in select(selector):
        start = time.perf_counter()
        try:
            ok, detail = CHECKS[name].func()
        except Exception as exc:  # report, do not crash the suite
            ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
        entries.append({"name": name, "passed": bool(ok), "seconds":
                        round(time.perf_counter() - start, 3), "detail": _jsonable(detail)})
    return {"selector": selector, "passed": all(e["passed"] for e in entries),
            "checks": entries}
