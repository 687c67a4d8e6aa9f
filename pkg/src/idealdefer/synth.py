"""Gaussian-mixture benchmark with an exact Bayes posterior, plus corruptions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import softmax

from .core import Dataset


def simplex_means(num_classes, dim, scale):
    """Class means on a regular simplex, projected to ``dim`` coordinates.

    The simplex vertices ``e_y`` are expressed in the orthonormal Helmert
    basis of the sum-zero subspace; the first ``dim`` coordinates are kept.
    """
    L = num_classes
    basis = np.zeros((L - 1, L))
    for k in range(1, L):
        basis[k - 1, :k] = 1.0
        basis[k - 1, k] = -k
        basis[k - 1] /= np.sqrt(k * (k + 1))
    coords = basis.T  # row y: coordinates of e_y
    if dim >= L - 1:
        means = np.zeros((L, dim))
        means[:, : L - 1] = coords
    else:
        means = coords[:, :dim]
    return scale * means


@dataclass
class MixtureSpec:
    """Isotropic Gaussian class-conditionals with shared scale ``sigma``."""

    num_classes: int = 10
    dim: int = 8
    sigma: float = 1.2
    scale: float = 3.0
    means: Optional[np.ndarray] = None
    priors: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.means is None:
            self.means = simplex_means(self.num_classes, self.dim, self.scale)
        self.means = np.asarray(self.means, dtype=float)
        if self.means.shape != (self.num_classes, self.dim):
            raise ValueError("means must have shape (num_classes, dim)")
        if len({tuple(m) for m in np.round(self.means, 12)}) != self.num_classes:
            raise ValueError("class means must be distinct")
        if self.priors is None:
            self.priors = np.full(self.num_classes, 1.0 / self.num_classes)
        self.priors = np.asarray(self.priors, dtype=float)
        if (self.priors.shape != (self.num_classes,) or np.any(self.priors < 0)
                or abs(self.priors.sum() - 1.0) > 1e-9):
            raise ValueError("priors must be a distribution over the classes")

    def posterior(self, X):
        """Exact ``P(y | x)`` for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sq = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        with np.errstate(divide="ignore"):
            logits = np.log(self.priors)[None, :] - sq / (2.0 * self.sigma ** 2)
        return softmax(logits, axis=1)

    def to_dict(self):
        return {"num_classes": self.num_classes, "dim": self.dim, "sigma": self.sigma,
                "scale": self.scale, "priors": [float(p) for p in self.priors],
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("means") is not None:
            d["means"] = np.asarray(d["means"], dtype=float)
        if d.get("priors") is not None:
            d["priors"] = np.asarray(d["priors"], dtype=float)
        return cls(**d)


def gen_mixture(spec: MixtureSpec, n, rng=None) -> Dataset:
    """Draw ``n`` labelled points; the result carries the exact posterior."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    y = rng.choice(spec.num_classes, size=n, p=spec.priors)
    X = spec.means[y] + spec.sigma * rng.standard_normal((n, spec.dim))
    return Dataset(X, y, spec.num_classes, split="base-train", posterior=spec.posterior)


CORRUPTION_KINDS = ("label-noise", "long-tail", "specialist")


@dataclass(frozen=True)
class CorruptionSpec:
    """One of the three training-set corruptions.

    label-noise: labels of classes ``< k`` are redrawn uniformly over all classes.
    long-tail: the first ``head`` classes keep ``n_head`` examples, others ``n_tail``.
    specialist: all examples of ``classes`` are kept, others with probability ``p``.
    """

    kind: str
    k: int = 0
    head: int = 0
    n_head: int = 0
    n_tail: int = 0
    classes: Sequence[int] = field(default_factory=tuple)
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption {self.kind!r}")
        if self.kind == "specialist" and not 0.0 < self.p <= 1.0:
            raise ValueError("specialist keep-probability p must lie in (0, 1]")
        if min(self.k, self.head, self.n_head, self.n_tail) < 0:
            raise ValueError("corruption counts must be non-negative")
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))

    def validate(self, num_classes):
        if self.kind == "label-noise" and self.k > num_classes:
            raise ValueError("label-noise k exceeds the number of classes")
        if self.kind == "long-tail" and self.head > num_classes:
            raise ValueError("long-tail head count exceeds the number of classes")
        if self.kind == "specialist" and any(not 0 <= c < num_classes for c in self.classes):
            raise ValueError("specialist classes out of range")

    def complement(self, num_classes):
        """Specialist corruption favouring the other classes."""
        if self.kind != "specialist":
            raise ValueError("only specialist corruptions have a complement")
        rest = tuple(c for c in range(num_classes) if c not in self.classes)
        return CorruptionSpec("specialist", classes=rest, p=self.p)

    def to_dict(self):
        if self.kind == "label-noise":
            return {"kind": self.kind, "k": self.k}
        if self.kind == "long-tail":
            return {"kind": self.kind, "head": self.head, "n_head": self.n_head,
                    "n_tail": self.n_tail}
        return {"kind": self.kind, "classes": list(self.classes), "p": self.p}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def apply_corruption(data: Dataset, spec: CorruptionSpec, seed) -> Dataset:
    """Corrupt labels or membership; feature vectors are never modified.

    The analytic posterior is dropped since it no longer describes the
    corrupted law.
    """
    spec.validate(data.num_classes)
    rng = np.random.default_rng(seed)
    L = data.num_classes
    if spec.kind == "label-noise":
        y = data.y.copy()
        hit = y < spec.k
        y[hit] = rng.integers(0, L, size=int(hit.sum()))
        return Dataset(data.X.copy(), y, L, split=data.split)
    if spec.kind == "long-tail":
        keep = []
        for c in range(L):
            idx = np.flatnonzero(data.y == c)
            cap = spec.n_head if c < spec.head else spec.n_tail
            if len(idx) > cap:
                idx = np.sort(rng.choice(idx, size=cap, replace=False))
            keep.append(idx)
        index = np.sort(np.concatenate(keep))
    else:
        special = np.isin(data.y, spec.classes)
        coin = rng.random(len(data.y)) < spec.p
        index = np.flatnonzero(special | coin)
    if index.size == 0:
        raise ValueError("corruption removed every example")
    return Dataset(data.X[index], data.y[index], L, split=data.split)


def three_way_split(data: Dataset, fractions=(0.5, 0.25, 0.25), seed=0):
    """Seeded shuffle, then contiguous base-train / deferral-train / test cuts."""
    f = np.asarray(fractions, dtype=float)
    if f.shape != (3,) or np.any(f <= 0) or abs(f.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    n = len(data)
    n1 = int(round(f[0] * n))
    n2 = int(round(f[1] * n))
    if n1 == 0 or n2 == 0 or n - n1 - n2 <= 0:
        raise ValueError("a split would be empty")
    perm = np.random.default_rng(seed).permutation(n)
    parts = (perm[:n1], perm[n1:n1 + n2], perm[n1 + n2:])
    return tuple(data.subset(idx, split=name)
                 for idx, name in zip(parts, ("base-train", "deferral-train", "test")))
