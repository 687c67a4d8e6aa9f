"""Foundational types, pointwise classification losses and dataset I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

PROB_ATOL = 1e-9
CE_FLOOR = 1e-12
DEFAULT_GCE_Q = 0.7

SPLITS = ("base-train", "deferral-train", "test")
LOSS_TAGS = ("zero-one", "prob01", "gce", "cross-entropy", "topk")


def check_probs(probs, atol=PROB_ATOL):
    """Validate a probability vector (1-D) or a batch of them (2-D).

    Returns the input as a float array. Raises ``ValueError`` on negative
    entries or rows that do not sum to one within ``atol``.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim not in (1, 2) or p.shape[-1] == 0:
        raise ValueError(f"probabilities must be a non-empty 1-D or 2-D array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities contain non-finite entries")
    if np.any(p < 0):
        raise ValueError("probabilities contain negative entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > atol):
        raise ValueError("probabilities do not sum to 1")
    return p


@dataclass(frozen=True)
class ProbVector:
    """A point on the probability simplex over ``L`` classes."""

    entries: np.ndarray

    def __post_init__(self):
        p = check_probs(self.entries)
        if p.ndim != 1:
            raise ValueError("ProbVector must be one-dimensional")
        p.setflags(write=False)
        object.__setattr__(self, "entries", p)

    def __len__(self):
        return len(self.entries)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class PointLossKind:
    """Which pointwise loss ``l(x, y, h(x))`` to evaluate.

    ``q`` is only read for ``gce`` and ``k`` only for ``topk``.
    """

    tag: str = "zero-one"
    q: float = DEFAULT_GCE_Q
    k: int = 1

    def __post_init__(self):
        if self.tag not in LOSS_TAGS:
            raise ValueError(f"unknown loss tag {self.tag!r}; expected one of {LOSS_TAGS}")
        if self.tag == "gce" and not (0.0 < self.q <= 1.0):
            raise ValueError(f"gce requires q in (0, 1], got {self.q}")
        if self.tag == "topk" and int(self.k) < 1:
            raise ValueError(f"topk requires k >= 1, got {self.k}")

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            return cls(tag=d)
        return cls(tag=d.get("kind", d.get("tag", "zero-one")),
                   q=float(d.get("q", DEFAULT_GCE_Q)), k=int(d.get("k", 1)))

    def to_dict(self):
        out = {"kind": self.tag}
        if self.tag == "gce":
            out["q"] = self.q
        if self.tag == "topk":
            out["k"] = self.k
        return out

    @property
    def name(self):
        if self.tag == "gce":
            return "gce" if self.q == DEFAULT_GCE_Q else f"gce{self.q:g}"
        if self.tag == "topk":
            return f"top{self.k}"
        return self.tag

    def upper_bound(self):
        """Finite bound ``B`` with ``0 <= loss <= B``."""
        if self.tag in ("zero-one", "topk"):
            return 1.0
        if self.tag == "prob01":
            return 2.0
        if self.tag == "gce":
            return 1.0 / self.q
        return -np.log(CE_FLOOR)


def argmax_predict(probs):
    """Index of the largest entry; ties go to the lowest index.

    Works row-wise on 2-D input.
    """
    p = np.asarray(probs, dtype=float)
    return np.argmax(p, axis=-1)


def point_losses(kind: PointLossKind, probs, labels):
    """Vectorised pointwise loss for a batch of probability rows."""
    p = check_probs(probs)
    if p.ndim == 1:
        p = p[None, :]
    y = np.atleast_1d(np.asarray(labels))
    if y.shape[0] != p.shape[0]:
        raise ValueError("labels and probabilities have different lengths")
    n_classes = p.shape[1]
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.round(y)):
            raise ValueError("labels must be integers")
        y = y.astype(int)
    if np.any((y < 0) | (y >= n_classes)):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    rows = np.arange(p.shape[0])
    p_true = p[rows, y]
    tag = kind.tag
    if tag == "zero-one":
        return (argmax_predict(p) != y).astype(float)
    if tag == "prob01":
        onehot = np.zeros_like(p)
        onehot[rows, y] = 1.0
        return np.abs(onehot - p).sum(axis=1)
    if tag == "gce":
        return (1.0 - p_true ** kind.q) / kind.q
    if tag == "cross-entropy":
        return -np.log(np.maximum(p_true, CE_FLOOR))
    # topk: the label is outside the k largest entries (stable order, low index first)
    if kind.k > n_classes:
        raise ValueError(f"topk requires k <= L={n_classes}, got {kind.k}")
    order = np.argsort(-p, axis=1, kind="stable")[:, : kind.k]
    return (~np.any(order == y[:, None], axis=1)).astype(float)


def point_loss(kind: PointLossKind, probs, label) -> float:
    """Loss of a single prediction ``probs`` against class ``label``."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1:
        raise ValueError("point_loss expects a single probability vector")
    return float(point_losses(kind, p[None, :], [label])[0])


def loss_table(kind: PointLossKind, probs):
    """Loss against every possible label: array of shape (n, L)."""
    p = check_probs(probs)
    if p.ndim == 1:
        p = p[None, :]
    n, n_classes = p.shape
    out = np.empty((n, n_classes))
    for y in range(n_classes):
        out[:, y] = point_losses(kind, p, np.full(n, y))
    return out


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """Labelled examples with a split tag.

    ``posterior`` maps a feature matrix to the exact Bayes class posterior;
    it is only attached to synthetic data whose generating law is known.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    split: str = "base-train"
    posterior: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.X) == 0:
            raise ValueError("dataset is empty")
        if len(self.X) != len(self.y):
            raise ValueError("features and labels have different lengths")
        if np.any((self.y < 0) | (self.y >= self.num_classes)):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def __len__(self):
        return len(self.y)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def examples(self) -> Iterator[LabeledExample]:
        for x, y in zip(self.X, self.y):
            yield LabeledExample(x, int(y))

    def subset(self, index, split=None, keep_posterior=True):
        return replace(self, X=self.X[index], y=self.y[index],
                       split=split or self.split,
                       posterior=self.posterior if keep_posterior else None)

    def with_split(self, split):
        return replace(self, split=split)

    def bayes_posterior(self):
        if self.posterior is None:
            raise ValueError("no analytic posterior attached to this dataset")
        return self.posterior(self.X)


def save_jsonl(data: Dataset, path):
    """Write one ``{"x": [...], "y": int}`` record per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for x, y in zip(data.X, data.y):
            fh.write(json.dumps({"x": [float(v) for v in x], "y": int(y)}) + "\n")


def load_jsonl(path, num_classes, split="base-train", posterior=None) -> Dataset:
    xs, ys = [], []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "x" not in rec or "y" not in rec:
                raise ValueError(f"{path}:{lineno}: record needs keys 'x' and 'y'")
            if isinstance(rec["y"], bool) or int(rec["y"]) != rec["y"]:
                raise ValueError(f"{path}:{lineno}: label must be an integer")
            xs.append(rec["x"])
            ys.append(int(rec["y"]))
    if not xs:
        raise ValueError(f"{path}: no records")
    dims = {len(x) for x in xs}
    if len(dims) != 1:
        raise ValueError(f"{path}: inconsistent feature dimensions {sorted(dims)}")
    return Dataset(np.array(xs, dtype=float), np.array(ys, dtype=int), num_classes,
                   split=split, posterior=posterior)
