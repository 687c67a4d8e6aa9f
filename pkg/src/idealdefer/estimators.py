"""scikit-learn style estimators: the softmax classifier and the deferral heads.

Every deferral head exposes ``decision_function(model_probs)`` oriented so
that an example is deferred when its score is at most a threshold ``tau``.
Heads only ever see the base model's probability vectors at inference time.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import (
    conf_score,
    diff01_target,
    maxprob_target,
    twostage_decision,
    twostage_objective,
)
from .core import PointLossKind, argmax_predict, check_probs, point_losses
from .drcpe import drcpe_objective, get_spec, score_from_output
from .ideal import kl_joint_weight
from .models import (
    MlpParams,
    OptimizerConfig,
    cross_entropy_objective,
    deferral_features,
    init_mlp,
    mlp_forward,
    squared_objective,
    train_mlp,
)
from .rules import threshold_from_rate


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Softmax MLP trained on mean cross-entropy with AdamW.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(64,)
    n_classes : int, optional
        Number of classes; inferred as ``max(y) + 1`` when omitted. Pass it
        when a corrupted training set may lack some classes.
    learning_rate, weight_decay, epochs, batch_size
        Optimiser settings.
    random_state : int, optional
        Seed for initialisation and mini-batch order.
    """

    def __init__(self, hidden_layer_sizes=(64,), n_classes=None, learning_rate=3e-3,
                 weight_decay=1e-4, epochs=200, batch_size=256, random_state=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _opt(self):
        return OptimizerConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                               epochs=self.epochs, batch_size=self.batch_size)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = y.astype(int)
        n_classes = int(self.n_classes) if self.n_classes is not None else int(y.max()) + 1
        if np.any((y < 0) | (y >= n_classes)):
            raise ValueError(f"labels must lie in [0, {n_classes})")
        rng_init, rng_order = np.random.SeedSequence(self.random_state).spawn(2)
        sizes = [X.shape[1], *self.hidden_layer_sizes, n_classes]
        params = init_mlp(sizes, np.random.default_rng(rng_init))
        params, history = train_mlp(
            params, X, lambda out, idx: cross_entropy_objective(out, y[idx]),
            len(y), self._opt(), np.random.default_rng(rng_order))
        self.params_ = params
        self.loss_curve_ = history
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_params(cls, params: MlpParams, **kwargs):
        est = cls(**kwargs)
        est.params_ = params
        est.loss_curve_ = []
        est.classes_ = np.arange(params.sizes[-1])
        est.n_features_in_ = params.sizes[0]
        return est

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        return mlp_forward(self.params_, X)

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return argmax_predict(self.predict_proba(X))


class DeferralFeatures(TransformerMixin, BaseEstimator):
    """Stateless map from probability vectors to deferral-head inputs."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return deferral_features(X)


class BaseDeferralHead(BaseEstimator):
    """Shared machinery: calibration and thresholded deferral."""

    def fit(self, model_probs, y, expert_probs):
        raise NotImplementedError

    def decision_function(self, model_probs):
        raise NotImplementedError

    def calibrate(self, model_probs, target_rate):
        """Threshold hitting ``target_rate`` on a calibration set; also stored as ``tau_``."""
        tau, realized = threshold_from_rate(self.decision_function(model_probs), target_rate)
        self.tau_ = tau
        return tau, realized

    def defer(self, model_probs, tau=None):
        if tau is None:
            check_is_fitted(self, "tau_")
            tau = self.tau_
        return self.decision_function(model_probs) <= tau


class ConfDeferral(BaseDeferralHead):
    """Defer when the base model's top probability is low."""

    def fit(self, model_probs=None, y=None, expert_probs=None):
        self.fitted_ = True
        return self

    def decision_function(self, model_probs):
        return conf_score(check_probs(model_probs))


class _MlpHead(BaseDeferralHead):
    """Deferral head ``FC_1 o FC_16,relu o FC_64,relu`` on the probability features."""

    def __init__(self, hidden_layer_sizes=(64, 16), learning_rate=7e-4, weight_decay=1e-3,
                 epochs=300, batch_size=128, random_state=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _opt(self):
        return OptimizerConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                               epochs=self.epochs, batch_size=self.batch_size)

    def _train(self, features, batch_objective):
        rng_init, rng_order = np.random.SeedSequence(self.random_state).spawn(2)
        sizes = [features.shape[1], *self.hidden_layer_sizes, 1]
        params = init_mlp(sizes, np.random.default_rng(rng_init))
        self.init_params_ = params
        self.params_, self.loss_curve_ = train_mlp(
            params, features, batch_objective, len(features), self._opt(),
            np.random.default_rng(rng_order))
        return self

    def raw_output(self, model_probs):
        check_is_fitted(self, "params_")
        return mlp_forward(self.params_, deferral_features(model_probs))[:, 0]


class DRCPEDeferral(_MlpHead):
    """Density-ratio scorer trained on the joint ideal DR-CPE loss.

    The base model and the expert are frozen; their per-example KL weights
    ``exp(-loss / gamma)`` are computed once and are the only way the expert
    enters training.

    Parameters
    ----------
    loss : {"squared", "logistic", "lsif", "kliep"}, default="squared"
        Partial-loss family of the scorer.
    point_loss : str or dict, default="gce"
        Pointwise classification loss defining the ideal weights.
    gamma, gamma_expert : float, default=0.5
        Temperatures of the model and expert weights.
    """

    def __init__(self, loss="squared", point_loss="gce", gamma=0.5, gamma_expert=0.5,
                 hidden_layer_sizes=(64, 16), learning_rate=7e-4, weight_decay=1e-3,
                 epochs=300, batch_size=128, random_state=None):
        super().__init__(hidden_layer_sizes, learning_rate, weight_decay, epochs, batch_size,
                         random_state)
        self.loss = loss
        self.point_loss = point_loss
        self.gamma = gamma
        self.gamma_expert = gamma_expert

    def ideal_weights(self, model_probs, y, expert_probs):
        kind = PointLossKind.from_dict(self.point_loss)
        wm = kl_joint_weight(point_losses(kind, model_probs, y), self.gamma)
        we = kl_joint_weight(point_losses(kind, expert_probs, y), self.gamma_expert)
        return np.atleast_1d(wm), np.atleast_1d(we)

    def fit(self, model_probs, y, expert_probs):
        wm, we = self.ideal_weights(model_probs, y, expert_probs)
        return self.fit_weights(model_probs, wm, we)

    def fit_weights(self, model_probs, model_w, expert_w):
        """Train directly on precomputed per-example weights."""
        spec = get_spec(self.loss)
        feats = deferral_features(model_probs)
        wm = np.asarray(model_w, dtype=float)
        we = np.asarray(expert_w, dtype=float)
        if not (len(wm) == len(we) == len(feats)):
            raise ValueError("weights and probabilities have different lengths")
        self.spec_ = spec
        return self._train(feats, lambda u, idx: drcpe_objective(spec, u, wm[idx], we[idx]))

    def decision_function(self, model_probs):
        return score_from_output(get_spec(self.loss), self.raw_output(model_probs))


class EstimateDiff01Deferral(_MlpHead):
    """Least-squares regression on ``[model correct] - [expert correct]``."""

    def fit(self, model_probs, y, expert_probs):
        target = diff01_target(model_probs, expert_probs, np.asarray(y)).astype(float)
        return self._train(deferral_features(model_probs),
                           lambda u, idx: squared_objective(u, target[idx]))

    def decision_function(self, model_probs):
        return self.raw_output(model_probs)


class EstimateMaxProbDeferral(_MlpHead):
    """Regress the expert's top probability; defer when it beats the model's."""

    def fit(self, model_probs, y, expert_probs):
        target = maxprob_target(expert_probs)
        return self._train(deferral_features(model_probs),
                           lambda u, idx: squared_objective(u, target[idx]))

    def decision_function(self, model_probs):
        return conf_score(model_probs) - self.raw_output(model_probs)


class TwoStageExpDeferral(_MlpHead):
    """Two-stage modified exponential surrogate with expert cost ``c``."""

    def __init__(self, c=0.0, hidden_layer_sizes=(64, 16), learning_rate=7e-4,
                 weight_decay=1e-3, epochs=300, batch_size=128, random_state=None):
        super().__init__(hidden_layer_sizes, learning_rate, weight_decay, epochs, batch_size,
                         random_state)
        self.c = c

    def fit(self, model_probs, y, expert_probs):
        y = np.asarray(y)
        conf = conf_score(model_probs)
        hit_m = argmax_predict(model_probs) == y
        hit_e = argmax_predict(expert_probs) == y
        return self._train(
            deferral_features(model_probs),
            lambda u, idx: twostage_objective(u, conf[idx], hit_m[idx], hit_e[idx], self.c))

    def decision_function(self, model_probs):
        return twostage_decision(self.raw_output(model_probs), model_probs)


HEADS = {
    "conf": ConfDeferral,
    "drcpe": DRCPEDeferral,
    "estimate-diff01": EstimateDiff01Deferral,
    "estimate-maxprob": EstimateMaxProbDeferral,
    "twostage-exp": TwoStageExpDeferral,
}


def train_classifier(data, hidden_layer_sizes=(64,), opt: OptimizerConfig = None, seed=0):
    """Fit an :class:`MLPClassifier` on a :class:`~idealdefer.core.Dataset`."""
    opt = opt or OptimizerConfig(learning_rate=3e-3, weight_decay=1e-4, epochs=200,
                                 batch_size=256)
    clf = MLPClassifier(hidden_layer_sizes=tuple(hidden_layer_sizes),
                        n_classes=data.num_classes, learning_rate=opt.learning_rate,
                        weight_decay=opt.weight_decay, epochs=opt.epochs,
                        batch_size=opt.batch_size, random_state=seed)
    return clf.fit(data.X, data.y)


def train_deferral_scorer(deferral_data, model, expert, spec="squared", gammas=(0.5, 0.5),
                          opt: OptimizerConfig = None, point_loss="gce", seed=0):
    """Fit a :class:`DRCPEDeferral` on the clean deferral split.

    ``model`` and ``expert`` are fitted classifiers; only their probability
    outputs on ``deferral_data`` are used.
    """
    opt = opt or OptimizerConfig()
    head = DRCPEDeferral(loss=get_spec(spec).kind, point_loss=point_loss, gamma=gammas[0],
                         gamma_expert=gammas[1], learning_rate=opt.learning_rate,
                         weight_decay=opt.weight_decay, epochs=opt.epochs,
                         batch_size=opt.batch_size, random_state=seed)
    pm = model.predict_proba(deferral_data.X)
    pe = expert.predict_proba(deferral_data.X)
    return head.fit(pm, deferral_data.y, pe)
