"""Targets, scores and surrogate losses of the comparison deferral methods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import argmax_predict

BASELINE_TAGS = ("conf", "estimate-diff01", "estimate-maxprob", "twostage-exp")
EXP_CLAMP = 30.0
TWOSTAGE_COSTS = (0.0, 0.02, 0.05, 0.1, 0.2)


@dataclass(frozen=True)
class BaselineKind:
    tag: str
    c: float = 0.0

    def __post_init__(self):
        if self.tag not in BASELINE_TAGS:
            raise ValueError(f"unknown baseline {self.tag!r}")
        if self.c < 0:
            raise ValueError("cost c must be non-negative")


def conf_score(model_probs):
    """Model confidence ``max_y p_y``; low values defer."""
    return np.max(np.asarray(model_probs, dtype=float), axis=-1)


def diff01_target(model_probs, expert_probs, label):
    """``[model correct] - [expert correct]``, in {-1, 0, 1}."""
    hit_m = argmax_predict(model_probs) == np.asarray(label)
    hit_e = argmax_predict(expert_probs) == np.asarray(label)
    out = hit_m.astype(int) - hit_e.astype(int)
    return int(out) if np.ndim(out) == 0 else out


def maxprob_target(expert_probs):
    return np.max(np.asarray(expert_probs, dtype=float), axis=-1)


def maxprob_decision(model_probs, g_value):
    """Model confidence minus the predicted expert confidence."""
    out = conf_score(model_probs) - np.asarray(g_value, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def _twostage_terms(s, conf, model_correct, expert_correct, c):
    a = np.clip(s - conf, -EXP_CLAMP, EXP_CLAMP)
    b = np.clip(conf - s, -EXP_CLAMP, EXP_CLAMP)
    ea, eb = np.exp(a), np.exp(b)
    wm = model_correct.astype(float)
    we = expert_correct.astype(float) - c
    return wm, we, ea, eb, (np.abs(s - conf) < EXP_CLAMP)


def twostage_exp_loss(scores, model_probs, expert_probs, labels, c):
    """Mean two-stage modified exponential surrogate.

    ``[f(x) = y] exp(s - m) + ([f_e(x) = y] - c) exp(m - s)`` with ``m`` the
    model's maximum probability; exponents are clamped to ``[-30, 30]``.
    """
    if c < 0:
        raise ValueError("cost c must be non-negative")
    s = np.asarray(scores, dtype=float)
    pm = np.asarray(model_probs, dtype=float)
    pe = np.asarray(expert_probs, dtype=float)
    y = np.asarray(labels)
    if not (len(s) == len(pm) == len(pe) == len(y)):
        raise ValueError("inputs must have equal lengths")
    conf = conf_score(pm)
    wm, we, ea, eb, _ = _twostage_terms(s, conf, argmax_predict(pm) == y,
                                        argmax_predict(pe) == y, c)
    return float(np.mean(wm * ea + we * eb))


def twostage_objective(u, conf, model_correct, expert_correct, c):
    """Loss and gradient in the raw score; the clamp has zero slope outside."""
    wm, we, ea, eb, inside = _twostage_terms(u, conf, model_correct, expert_correct, c)
    n = u.shape[0]
    loss = float(np.mean(wm * ea + we * eb))
    grad = np.where(inside, wm * ea - we * eb, 0.0) / n
    return loss, grad


def twostage_decision(scores, model_probs):
    """Deferral score ``m - s``: defer when ``s > m + tau`` iff this is ``< -tau``."""
    return conf_score(model_probs) - np.asarray(scores, dtype=float)
