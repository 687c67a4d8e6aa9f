"""Density-ratio losses for deferral scorers.

A scorer ``s`` is trained to separate two reweightings of the data law:
the model's ideal weights play the positive class and the expert's the
negative class. Thresholding ``s`` then thresholds the ideal density ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, logit

DR_KINDS = ("squared", "logistic", "lsif", "kliep")


@dataclass(frozen=True)
class DrLossSpec:
    """Partial losses of a proper composite loss together with its link.

    ``score_domain`` is the open interval of admissible scorer outputs.
    ``positive_scores`` says whether the trained network output is passed
    through a softplus before reaching the partial losses.
    """

    kind: str
    partial_pos: Callable
    partial_neg: Callable
    dpartial_pos: Callable
    dpartial_neg: Callable
    link: Callable
    link_inverse: Callable
    score_domain: tuple

    @property
    def positive_scores(self):
        return self.score_domain[0] == 0.0

    def in_domain(self, v):
        v = np.asarray(v, dtype=float)
        lo, hi = self.score_domain
        return (v > lo) & (v < hi)


def _log1pexp(v):
    return np.logaddexp(0.0, v)


SQUARED = DrLossSpec(
    kind="squared",
    partial_pos=lambda v: (v - 1.0) ** 2,
    partial_neg=lambda v: (v + 1.0) ** 2,
    dpartial_pos=lambda v: 2.0 * (v - 1.0),
    dpartial_neg=lambda v: 2.0 * (v + 1.0),
    link=lambda p: 2.0 * np.asarray(p, dtype=float) - 1.0,
    link_inverse=lambda v: (np.asarray(v, dtype=float) + 1.0) / 2.0,
    score_domain=(-np.inf, np.inf),
)

LOGISTIC = DrLossSpec(
    kind="logistic",
    partial_pos=lambda v: _log1pexp(-v),
    partial_neg=lambda v: _log1pexp(v),
    dpartial_pos=lambda v: -expit(-v),
    dpartial_neg=lambda v: expit(v),
    link=lambda p: logit(np.asarray(p, dtype=float)),
    link_inverse=lambda v: expit(np.asarray(v, dtype=float)),
    score_domain=(-np.inf, np.inf),
)

LSIF = DrLossSpec(
    kind="lsif",
    partial_pos=lambda v: -v,
    partial_neg=lambda v: 0.5 * v ** 2,
    dpartial_pos=lambda v: -np.ones_like(np.asarray(v, dtype=float)),
    dpartial_neg=lambda v: np.asarray(v, dtype=float),
    link=lambda p: np.asarray(p, dtype=float) / (1.0 - np.asarray(p, dtype=float)),
    link_inverse=lambda v: np.asarray(v, dtype=float) / (1.0 + np.asarray(v, dtype=float)),
    score_domain=(0.0, np.inf),
)

KLIEP = DrLossSpec(
    kind="kliep",
    partial_pos=lambda v: -np.log(v),
    partial_neg=lambda v: np.asarray(v, dtype=float),
    dpartial_pos=lambda v: -1.0 / np.asarray(v, dtype=float),
    dpartial_neg=lambda v: np.ones_like(np.asarray(v, dtype=float)),
    link=LSIF.link,
    link_inverse=LSIF.link_inverse,
    score_domain=(0.0, np.inf),
)

SPECS = {s.kind: s for s in (SQUARED, LOGISTIC, LSIF, KLIEP)}


def get_spec(kind) -> DrLossSpec:
    if isinstance(kind, DrLossSpec):
        return kind
    try:
        return SPECS[kind]
    except KeyError:
        raise ValueError(f"unknown DR loss {kind!r}; expected one of {DR_KINDS}") from None


def dr_partial(spec: DrLossSpec, sign: int, v):
    """Partial loss ``l_{+1}(v)`` or ``l_{-1}(v)``."""
    spec = get_spec(spec)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    v_arr = np.asarray(v, dtype=float)
    if not np.all(spec.in_domain(v_arr)):
        raise ValueError(f"{spec.kind}: score outside domain {spec.score_domain}")
    out = spec.partial_pos(v_arr) if sign == 1 else spec.partial_neg(v_arr)
    return float(out) if np.ndim(out) == 0 else out


# network output u -> score s. lsif/kliep need s > 0.

def score_from_output(spec: DrLossSpec, u):
    u = np.asarray(u, dtype=float)
    return _log1pexp(u) if spec.positive_scores else u


def score_output_grad(spec: DrLossSpec, u):
    u = np.asarray(u, dtype=float)
    return expit(u) if spec.positive_scores else np.ones_like(u)


def _pos_partial_from_output(spec, u):
    # -log(softplus(u)) loses precision once softplus(u) underflows; there it equals -u.
    if spec.kind == "kliep":
        u = np.asarray(u, dtype=float)
        sp = _log1pexp(u)
        safe = u > -30
        return np.where(safe, -np.log(np.where(safe, sp, 1.0)), -u)
    return spec.partial_pos(score_from_output(spec, u))


def drcpe_objective(spec, u, model_w, expert_w):
    """Mean weighted partial loss and its gradient in the raw network output ``u``."""
    spec = get_spec(spec)
    u = np.asarray(u, dtype=float)
    s = score_from_output(spec, u)
    lp = _pos_partial_from_output(spec, u)
    ln = spec.partial_neg(s)
    n = u.shape[0]
    loss = float(np.mean(model_w * lp + expert_w * ln))
    ds = score_output_grad(spec, u)
    if spec.kind == "kliep":
        # d/du -log(softplus(u)) = -sigmoid(u) / softplus(u), stable form
        dlp = np.where(u > -30, -expit(u) / np.maximum(s, 1e-300), -1.0)
    else:
        dlp = spec.dpartial_pos(s) * ds
    grad = (model_w * dlp + expert_w * spec.dpartial_neg(s) * ds) / n
    return loss, grad


def joint_drcpe_loss(spec, scores, model_w, expert_w):
    """Empirical joint DR-CPE loss: mean of ``w l_{+1}(s) + w_e l_{-1}(s)``.

    ``model_w`` and ``expert_w`` are per-example ``exp(-loss / gamma)`` values,
    so the mean is an unbiased estimate of the population loss.
    """
    spec = get_spec(spec)
    s = np.asarray(scores, dtype=float)
    wm = np.asarray(model_w, dtype=float)
    we = np.asarray(expert_w, dtype=float)
    if not (s.shape == wm.shape == we.shape):
        raise ValueError("scores and weights must have equal lengths")
    if np.any(wm < 0) or np.any(we < 0):
        raise ValueError("weights must be non-negative")
    return float(np.mean(wm * dr_partial(spec, 1, s) + we * dr_partial(spec, -1, s)))


def _conditional_weights(posterior, model_losses, expert_losses, gamma, gamma_expert):
    eta = np.asarray(posterior, dtype=float)
    lm = np.asarray(model_losses, dtype=float)
    le = np.asarray(expert_losses, dtype=float)
    if not (eta.shape == lm.shape == le.shape) or eta.ndim != 2:
        raise ValueError("posterior and loss tables must all have shape (n, L)")
    if np.any(lm < 0) or np.any(le < 0):
        raise ValueError("losses must be non-negative")
    joint_m = np.sum(eta * np.exp(-lm / gamma), axis=1)
    joint_e = np.sum(eta * np.exp(-le / gamma_expert), axis=1)
    mean_m = np.sum(eta * lm, axis=1)
    mean_e = np.sum(eta * le, axis=1)
    marg_m = np.exp(-mean_m / gamma)
    marg_e = np.exp(-mean_e / gamma_expert)
    var_m = np.sum(eta * (lm - mean_m[:, None]) ** 2, axis=1)
    var_e = np.sum(eta * (le - mean_e[:, None]) ** 2, axis=1)
    return joint_m, joint_e, marg_m, marg_e, var_m, var_e


def _px(px, n):
    if px is None:
        return np.full(n, 1.0 / n)
    px = np.asarray(px, dtype=float)
    if px.shape != (n,) or np.any(px < 0) or abs(px.sum() - 1.0) > 1e-9:
        raise ValueError("px must be a distribution over the n points")
    return px


def exact_joint_drcpe_loss(spec, scores, posterior, model_losses, expert_losses,
                           gamma, gamma_expert, px=None):
    """Joint DR-CPE loss computed with the exact label posterior at each point."""
    spec = get_spec(spec)
    if posterior is None:
        raise ValueError("exact loss needs the analytic label posterior")
    jm, je, *_ = _conditional_weights(posterior, model_losses, expert_losses, gamma, gamma_expert)
    s = np.asarray(scores, dtype=float)
    w = _px(px, len(s))
    return float(w @ (jm * dr_partial(spec, 1, s) + je * dr_partial(spec, -1, s)))


def marginal_drcpe_loss(spec, scores, posterior, model_losses, expert_losses,
                        gamma, gamma_expert, px=None):
    """Marginal DR-CPE loss; needs the exact posterior to form ``E_y[loss]``.

    Parameters
    ----------
    scores : array-like, shape (n,)
    posterior : array-like, shape (n, L)
        Label posterior at each point. ``None`` is refused.
    model_losses, expert_losses : array-like, shape (n, L)
        Loss of the model/expert prediction at each point against every label.
    px : array-like, shape (n,), optional
        Law over the points; uniform when omitted.
    """
    spec = get_spec(spec)
    if posterior is None:
        raise ValueError("the marginal loss needs the analytic label posterior; "
                         "an empirical estimate would be biased")
    _, _, mm, me, _, _ = _conditional_weights(posterior, model_losses, expert_losses,
                                              gamma, gamma_expert)
    s = np.asarray(scores, dtype=float)
    w = _px(px, len(s))
    return float(w @ (mm * dr_partial(spec, 1, s) + me * dr_partial(spec, -1, s)))


def pointwise_optimal_score(spec, W, W_e):
    """Minimiser of ``W l_{+1}(s) + W_e l_{-1}(s)`` over ``s``."""
    spec = get_spec(spec)
    W = float(W)
    W_e = float(W_e)
    if W < 0 or W_e < 0 or W + W_e <= 0:
        raise ValueError("weights must be non-negative and not both zero")
    if spec.kind == "squared":
        return (W - W_e) / (W + W_e)
    if W_e <= 0:
        raise ValueError(f"{spec.kind}: optimal score is unbounded when W_e = 0")
    if spec.kind in ("lsif", "kliep"):
        return W / W_e
    if W <= 0:
        raise ValueError("logistic: optimal score is unbounded when W = 0")
    return float(np.log(W / W_e))


@dataclass(frozen=True)
class GapBounds:
    lower: float
    upper: float
    actual: float

    def holds(self, slack=1e-9):
        return self.lower - slack <= self.actual <= self.upper + slack


def gap_bounds(spec, scores, posterior, model_losses, expert_losses, gamma, gamma_expert,
               loss_bound, px=None) -> GapBounds:
    """Sandwich on the joint-minus-marginal loss gap.

    The gap is bounded by the conditional loss variances, scaled by
    ``1 / (2 gamma^2)`` from above and additionally by ``exp(-B / gamma)``
    from below. Needs ``0 <= loss <= B`` and non-negative partial losses.
    """
    spec = get_spec(spec)
    s = np.asarray(scores, dtype=float)
    lp = np.asarray(dr_partial(spec, 1, s))
    ln = np.asarray(dr_partial(spec, -1, s))
    if np.any(lp < 0) or np.any(ln < 0):
        raise ValueError(f"{spec.kind}: partial losses are negative at the given scores")
    lm = np.asarray(model_losses, dtype=float)
    le = np.asarray(expert_losses, dtype=float)
    if np.any(lm > loss_bound) or np.any(le > loss_bound):
        raise ValueError("losses exceed the stated bound")
    jm, je, mm, me, vm, ve = _conditional_weights(posterior, lm, le, gamma, gamma_expert)
    w = _px(px, len(s))
    term_m = w @ (lp * vm) / (2.0 * gamma ** 2)
    term_e = w @ (ln * ve) / (2.0 * gamma_expert ** 2)
    upper = term_m + term_e
    lower = np.exp(-loss_bound / gamma) * term_m + np.exp(-loss_bound / gamma_expert) * term_e
    actual = w @ ((jm - mm) * lp + (je - me) * ln)
    return GapBounds(float(lower), float(upper), float(actual))


def ratio_from_score(spec, s, pi):
    """Density ratio implied by a score: ``(1-pi)/pi * q / (1-q)`` with ``q = link^-1(s)``."""
    spec = get_spec(spec)
    if not 0.0 < pi < 1.0:
        raise ValueError("pi must lie in (0, 1)")
    q = np.asarray(spec.link_inverse(s), dtype=float)
    if np.any((q <= 0.0) | (q >= 1.0)):
        raise ValueError(f"{spec.kind}: score maps outside the open unit interval")
    r = (1.0 - pi) / pi * q / (1.0 - q)
    return float(r) if r.ndim == 0 else r


def score_threshold(spec, pi, tau):
    """Score cut equivalent to thresholding the ratio at ``tau``."""
    spec = get_spec(spec)
    if tau <= 0:
        raise ValueError("tau must be positive")
    return float(spec.link(pi * tau / (1.0 - pi + pi * tau)))


__all__ = [
    "DR_KINDS", "DrLossSpec", "SQUARED", "LOGISTIC", "LSIF", "KLIEP", "SPECS", "get_spec",
    "dr_partial", "score_from_output", "drcpe_objective", "joint_drcpe_loss",
    "exact_joint_drcpe_loss", "marginal_drcpe_loss", "pointwise_optimal_score",
    "GapBounds", "gap_bounds", "ratio_from_score", "score_threshold",
]
