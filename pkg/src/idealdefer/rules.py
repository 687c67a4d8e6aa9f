"""Deferral decision rules and threshold calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_probs
from .drcpe import get_spec, ratio_from_score, score_threshold

# relative slack on ratio comparisons so that a score sitting exactly on the
# mapped cut is not flipped by one ulp of round-trip error through the link
RATIO_RTOL = 1e-12


@dataclass(frozen=True)
class DeferralDecisionConfig:
    cost: float = 0.0
    tau: float = 1.0
    target_rate: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.target_rate <= 1.0:
            raise ValueError("target_rate must lie in [0, 1]")


@dataclass(frozen=True)
class TiltedPosterior:
    entries: np.ndarray
    gamma: float


def _same_length(*arrays):
    arrs = [np.asarray(a, dtype=float) for a in arrays]
    if len({a.shape for a in arrs}) != 1:
        raise ValueError("inputs must have the same length")
    return arrs


def chow_defer(posterior, model_losses, expert_losses, c) -> bool:
    """Bayes-optimal rule: defer when ``E_y[loss_e - loss_h] <= c``."""
    eta, lm, le = _same_length(posterior, model_losses, expert_losses)
    return bool(eta @ (le - lm) <= c)


def chow_defer_batch(posterior, model_losses, expert_losses, c):
    """Row-wise :func:`chow_defer` for ``(n, L)`` tables."""
    eta, lm, le = _same_length(posterior, model_losses, expert_losses)
    return np.sum(eta * (le - lm), axis=-1) <= c


def tilt_posterior(posterior, expert_losses, gamma) -> TiltedPosterior:
    """Reweight the posterior by ``exp(-loss_e / gamma)`` and renormalise."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    eta = check_probs(posterior)
    le = np.asarray(expert_losses, dtype=float)
    if le.shape != eta.shape:
        raise ValueError("posterior and expert losses must have the same shape")
    # shifting by the row minimum cancels in the normalisation
    shifted = le - le.min(axis=-1, keepdims=True)
    num = eta * np.exp(-shifted / gamma)
    z = num.sum(axis=-1, keepdims=True)
    if np.any(z <= 0):
        raise FloatingPointError("tilted posterior has zero mass")
    return TiltedPosterior(num / z, float(gamma))


def dr_defer_from_weights(w_model, w_expert, tau):
    """Defer when the ideal weight ratio ``w_model / w_expert`` is at most ``tau``.

    A zero expert weight never defers.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    wm = np.asarray(w_model, dtype=float)
    we = np.asarray(w_expert, dtype=float)
    if np.any(wm < 0) or np.any(we < 0):
        raise ValueError("weights must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(we > 0, wm / np.where(we > 0, we, 1.0) <= tau, False)
    return bool(out) if out.ndim == 0 else out


def cost_from_ratio_threshold(tau, z_model, z_expert, gamma):
    """Chow cost matching a ratio threshold on normalised KL weights."""
    return gamma * np.log(tau * z_model / z_expert)


def ratio_threshold_from_cost(c, z_model, z_expert, gamma):
    return float(np.exp(c / gamma) * z_expert / z_model)


def threshold_from_rate(scores, target_rate):
    """Cut ``tau`` so that ``scores <= tau`` fires on about ``target_rate`` of the set.

    ``tau`` is the ``floor(target_rate * n)``-th smallest score (the lower
    empirical quantile). Ties at ``tau`` all defer, so the realised rate can
    exceed the target.

    Returns
    -------
    tau : float
    realized_rate : float
    """
    s = np.sort(np.asarray(scores, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("need at least one calibration score")
    if not 0.0 <= target_rate <= 1.0:
        raise ValueError("target_rate must lie in [0, 1]")
    k = int(np.floor(target_rate * s.size + 1e-9))
    if k == 0:
        tau = float(np.nextafter(s[0], -np.inf))
    else:
        tau = float(s[k - 1])
    realized = float(np.count_nonzero(s <= tau)) / s.size
    return tau, realized


def scorer_threshold_equiv(spec, s, pi, tau):
    """Evaluate the ratio-threshold and score-threshold forms of the same rule."""
    spec = get_spec(spec)
    ratio = ratio_from_score(spec, s, pi)
    by_ratio = bool(ratio <= tau * (1.0 + RATIO_RTOL))
    by_score = bool(s <= score_threshold(spec, pi, tau))
    return by_ratio, by_score
