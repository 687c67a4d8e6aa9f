"""Ideal-distribution reweightings.

KL-regularised ideal distributions are exponential tilts of the data
distribution; for a general phi-divergence the optimal reweighting is
``max(0, (phi*)'_+((b - L) / gamma))`` with ``b`` fixed by normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def _check_gamma(gamma):
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"temperature gamma must be positive, got {gamma}")


def kl_joint_weight(loss_value, gamma):
    """Unnormalised joint KL weight ``exp(-loss / gamma)`` of one labelled example.

    Vectorised over ``loss_value``. Averaging these over the label posterior
    gives the joint ideal weight of ``x``; the caller does that averaging.
    """
    _check_gamma(gamma)
    loss = np.asarray(loss_value, dtype=float)
    if np.any(loss < 0):
        raise ValueError("losses must be non-negative")
    out = np.exp(-loss / gamma)
    return float(out) if out.ndim == 0 else out


def kl_marginal_weight(expected_loss, gamma):
    """Unnormalised marginal KL weight ``exp(-E_y[loss] / gamma)``.

    ``expected_loss`` must be the exact posterior expectation; plugging in a
    single observed label gives a biased estimate, so training code never
    calls this.
    """
    return kl_joint_weight(expected_loss, gamma)


def normalize_weights(raw, probabilities):
    """Divide by ``Z = sum_i p_i raw_i`` so the weights average to one under ``p``."""
    raw = np.asarray(raw, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if raw.shape != p.shape:
        raise ValueError("weights and probabilities have different shapes")
    if np.any(raw < 0):
        raise ValueError("weights must be non-negative")
    z = float(np.dot(p, raw))
    if not z > 0:
        raise ValueError("weights have zero mass under the given probabilities")
    return raw / z, z


@dataclass
class IdealWeightSet:
    """Per-example unnormalised ideal weights for the model and the expert."""

    model_weights: np.ndarray
    expert_weights: np.ndarray
    gamma: float
    gamma_expert: float
    z_model: Optional[float] = None
    z_expert: Optional[float] = None

    def __post_init__(self):
        _check_gamma(self.gamma)
        _check_gamma(self.gamma_expert)
        self.model_weights = np.asarray(self.model_weights, dtype=float)
        self.expert_weights = np.asarray(self.expert_weights, dtype=float)
        if self.model_weights.shape != self.expert_weights.shape:
            raise ValueError("model and expert weights have different shapes")
        if np.any(self.model_weights < 0) or np.any(self.expert_weights < 0):
            raise ValueError("weights must be non-negative")

    @classmethod
    def joint(cls, model_losses, expert_losses, gamma, gamma_expert, probabilities=None):
        """Joint weights from per-example losses.

        With ``probabilities`` (an ``(n,)`` law over the examples) the
        normalisers are its weighted means; otherwise empirical means.
        """
        wm = np.atleast_1d(kl_joint_weight(model_losses, gamma))
        we = np.atleast_1d(kl_joint_weight(expert_losses, gamma_expert))
        p = (np.full(len(wm), 1.0 / len(wm)) if probabilities is None
             else np.asarray(probabilities, dtype=float))
        return cls(wm, we, gamma, gamma_expert,
                   z_model=float(p @ wm), z_expert=float(p @ we))

    def ratios(self):
        """Normalised weight ratio ``(w / Z) / (w_e / Z_e)``."""
        if self.z_model is None or self.z_expert is None:
            raise ValueError("normalisers are not set")
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.model_weights / self.z_model) / (self.expert_weights / self.z_expert)


@dataclass(frozen=True)
class PhiGenerator:
    """A divergence generator described through its convex conjugate."""

    name: str
    conj: Callable[[np.ndarray], np.ndarray]
    conj_right_deriv: Callable[[np.ndarray], np.ndarray]
    domain_note: str = ""


# phi(x) = x log x  ->  phi*(p) = exp(p - 1)
KL_GENERATOR = PhiGenerator(
    name="kl",
    conj=lambda p: np.exp(np.asarray(p, dtype=float) - 1.0),
    conj_right_deriv=lambda p: np.exp(np.asarray(p, dtype=float) - 1.0),
    domain_note="finite on all of R",
)

# phi(x) = (x - 1)^2  ->  phi*(p) = p + p^2 / 4
CHI2_GENERATOR = PhiGenerator(
    name="chi2",
    conj=lambda p: np.asarray(p, dtype=float) + np.asarray(p, dtype=float) ** 2 / 4.0,
    conj_right_deriv=lambda p: 1.0 + np.asarray(p, dtype=float) / 2.0,
    domain_note="finite on all of R; the ratio is clipped at zero outside",
)

GENERATORS = {"kl": KL_GENERATOR, "chi2": CHI2_GENERATOR}


class BracketError(RuntimeError):
    """No interval straddling the normalisation constraint was found."""


def _ratios_at(b, losses, gamma, gen):
    return np.maximum(0.0, gen.conj_right_deriv((b - losses) / gamma))


def phi_ideal_ratio(loss_values, probabilities, gamma, gen: PhiGenerator = KL_GENERATOR,
                    max_iter=200, tol=1e-12, max_expand=200):
    """Optimal reweighting of a finite-support law under a phi-divergence penalty.

    Solves ``min_r E_p[r L] + gamma * D_phi(r p || p)`` subject to ``E_p[r] = 1``.

    Parameters
    ----------
    loss_values : array-like, shape (n,)
        Loss attached to each atom.
    probabilities : array-like, shape (n,)
        Base law over the atoms.
    gamma : float
        Regularisation strength.
    gen : PhiGenerator
        Generator; only its conjugate's right derivative is used.

    Returns
    -------
    ratios : ndarray, shape (n,)
        Non-negative reweighting with ``sum(p * ratios) == 1``.
    b : float
        The normalising offset.
    """
    _check_gamma(gamma)
    losses = np.asarray(loss_values, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if losses.shape != p.shape or losses.ndim != 1:
        raise ValueError("losses and probabilities must be 1-D arrays of equal length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be a distribution")

    def excess(b):
        with np.errstate(over="ignore"):
            return float(p @ _ratios_at(b, losses, gamma, gen)) - 1.0

    lo = losses.min() - gamma
    k = 1.0
    hi = losses.max() + gamma * k
    for _ in range(max_expand):
        f_lo = excess(lo)
        if np.isfinite(f_lo) and f_lo <= 0:
            break
        lo -= gamma * k
        k *= 2.0
    else:
        raise BracketError(f"{gen.name}: constraint stays above 1 as b decreases")
    k = 1.0
    for _ in range(max_expand):
        f_hi = excess(hi)
        if not np.isfinite(f_hi):
            raise BracketError(f"{gen.name}: conjugate derivative not finite while bracketing")
        if f_hi >= 0:
            break
        k *= 2.0
        hi = losses.max() + gamma * k
    else:
        raise BracketError(f"{gen.name}: constraint never reaches 1; derivative saturates")

    for _ in range(max_iter):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    f_lo, f_hi = excess(lo), excess(hi)
    b = lo if abs(f_lo) <= abs(f_hi) else hi
    return _ratios_at(b, losses, gamma, gen), float(b)
