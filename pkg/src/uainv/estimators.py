"""scikit-learn style wrappers around the functional core.

Forward estimators take raw designs ``X`` and raw performances ``y``; the
z-score normalizer is fitted inside :meth:`fit` and applied transparently.
Inverters are fitted on the same ``(X, y)`` pairs and their ``predict``
maps target performances to raw designs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ensemble import EnsembleTrainConfig, UncertaintyWeights, predict, train_ensemble
from .inversion import (
    BoundaryReg,
    FixedInit,
    GaussianInit,
    InversionConfig,
    UniformInDataBox,
    best_designs,
    na_ensemble_invert,
    na_invert,
    uana_invert,
)
from .nn import Dataset, TrainConfig, forward, init_mlp, train_mse
from .tandem import TandemTrainConfig, query, train_tandem, train_ua_tandem


def _xy(X, y):
    X = check_array(X, dtype=np.float64)
    y = check_array(y, dtype=np.float64, ensure_2d=False)
    y2 = y.reshape(-1, 1) if y.ndim == 1 else y
    if y2.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y2.shape[0]}")
    return X, y2, y.ndim == 1


def _check_features(est, X, attr="n_features_in_"):
    X = check_array(X, dtype=np.float64)
    n = getattr(est, attr)
    if X.shape[1] != n:
        raise ValueError(f"X has {X.shape[1]} features, but {type(est).__name__} is expecting {n}")
    return X


def _shape_out(Y, flat):
    return Y[:, 0] if flat else Y


class MLPSurrogate(RegressorMixin, BaseEstimator):
    """Single forward network trained with MSE on z-scored data."""

    def __init__(self, hidden=(64, 64), activation="relu", learning_rate=1e-3, epochs=200,
                 batch_size=128, random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        X, Y, flat = _xy(X, y)
        data = Dataset(X, Y)
        init_seed, shuffle_seed = np.random.SeedSequence(self.random_state).generate_state(2)
        net = init_mlp([X.shape[1], *self.hidden, Y.shape[1]], self.activation, seed=int(init_seed))
        cfg = TrainConfig(self.learning_rate, self.epochs, self.batch_size, int(shuffle_seed))
        self.net_, self.loss_curve_ = train_mse(net, data, cfg)
        self.normalizer_ = data.normalizer
        self.data_box_ = data.design_box()
        self.n_features_in_ = X.shape[1]
        self._flat_y = flat
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = _check_features(self, X)
        Yn = forward(self.net_, self.normalizer_.normalize_x(X))
        return _shape_out(self.normalizer_.denormalize_y(Yn), self._flat_y)


class DeepEnsembleRegressor(RegressorMixin, BaseEstimator):
    """Deep ensemble of (mean, variance) networks.

    ``predict(X, return_std=True)`` also returns the total predictive standard
    deviation in raw units; :meth:`predict_uncertainty` splits it into the
    aleatoric and epistemic variances.
    """

    def __init__(self, n_members=10, mean_hidden=(64, 64), var_hidden=(32, 32), roster=None,
                 learning_rate=3e-3, stage1_epochs=150, stage2_epochs=100, batch_size=128, random_state=0):
        self.n_members = n_members
        self.mean_hidden = mean_hidden
        self.var_hidden = var_hidden
        self.roster = roster
        self.learning_rate = learning_rate
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        X, Y, flat = _xy(X, y)
        data = Dataset(X, Y)
        cfg = EnsembleTrainConfig(
            n_members=self.n_members,
            mean_hidden=self.mean_hidden,
            var_hidden=self.var_hidden,
            stage1=TrainConfig(self.learning_rate, self.stage1_epochs, self.batch_size),
            stage2=TrainConfig(self.learning_rate, self.stage2_epochs, self.batch_size),
            seed=self.random_state,
        )
        self.ensemble_ = train_ensemble(data, cfg, roster=self.roster)
        self.normalizer_ = data.normalizer
        self.data_box_ = data.design_box()
        self.n_features_in_ = X.shape[1]
        self._flat_y = flat
        return self

    def _predict_normalized(self, X):
        check_is_fitted(self, "ensemble_")
        X = _check_features(self, X)
        return predict(self.ensemble_, self.normalizer_.normalize_x(X))

    def predict(self, X, return_std=False):
        p = self._predict_normalized(X)
        mu = _shape_out(self.normalizer_.denormalize_y(p.mu), self._flat_y)
        if not return_std:
            return mu
        std = np.sqrt(p.total_variance) * self.normalizer_.y_std
        return mu, _shape_out(std, self._flat_y)

    def predict_uncertainty(self, X):
        """``(aleatoric, epistemic)`` variances per output dim, in raw units squared."""
        p = self._predict_normalized(X)
        scale = self.normalizer_.y_std**2
        return p.sigma_aleatoric * scale, p.sigma_epistemic * scale


_INITS = ("uniform", "gaussian", "fixed")


class GradientInverter(BaseEstimator):
    """Gradient-based design search through a learned forward model.

    ``method`` is ``"na"`` (single network), ``"na-ensemble"`` (ensemble mean)
    or ``"uana"`` (ensemble mean plus ``alpha``/``beta`` weighted aleatoric and
    epistemic variances). ``forward_model`` may be an unfitted or fitted
    :class:`MLPSurrogate` / :class:`DeepEnsembleRegressor`; it is cloned and
    fitted on ``(X, y)`` unless ``refit_forward=False`` and it is already
    fitted. ``init`` is ``"uniform"`` (data box), ``"gaussian"`` (data mean
    and spread) or ``"fixed"`` (``init_design``, raw units). ``select`` picks
    the reported restart by ``"surrogate_error"`` or by ``"total_loss"``.
    """

    def __init__(self, method="uana", alpha=1.0, beta=10.0, forward_model=None, step_size=0.01,
                 max_iters=500, restarts=10, init="uniform", init_design=None, boundary_weight=0.0,
                 select="surrogate_error", refit_forward=True, random_state=0):
        self.method = method
        self.alpha = alpha
        self.beta = beta
        self.forward_model = forward_model
        self.step_size = step_size
        self.max_iters = max_iters
        self.restarts = restarts
        self.init = init
        self.init_design = init_design
        self.boundary_weight = boundary_weight
        self.select = select
        self.refit_forward = refit_forward
        self.random_state = random_state

    def _default_forward(self):
        if self.method == "na":
            return MLPSurrogate(random_state=self.random_state)
        return DeepEnsembleRegressor(random_state=self.random_state)

    def fit(self, X, y):
        from sklearn.base import clone

        if self.method not in ("na", "na-ensemble", "uana"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.init not in _INITS:
            raise ValueError(f"init must be one of {_INITS}")
        model = self.forward_model if self.forward_model is not None else self._default_forward()
        want = MLPSurrogate if self.method == "na" else DeepEnsembleRegressor
        if not isinstance(model, want):
            raise TypeError(f"method {self.method!r} needs a {want.__name__} forward model")
        fitted = hasattr(model, "normalizer_")
        if self.refit_forward or not fitted:
            model = clone(model).fit(X, y)
        self.forward_model_ = model
        self.normalizer_ = model.normalizer_
        self.n_targets_in_ = self.normalizer_.y_mean.shape[0]
        self.n_features_out_ = self.normalizer_.x_mean.shape[0]
        return self

    def _config(self):
        low, high = self.forward_model_.data_box_
        nz = self.normalizer_
        if self.init == "uniform":
            init = UniformInDataBox(low, high)
        elif self.init == "gaussian":
            init = GaussianInit(np.zeros_like(low), np.ones_like(low))
        else:
            if self.init_design is None:
                raise ValueError("init='fixed' needs init_design")
            init = FixedInit(nz.normalize_x(np.asarray(self.init_design, dtype=np.float64)))
        regs = (BoundaryReg.from_box(low, high, self.boundary_weight),) if self.boundary_weight > 0 else ()
        return InversionConfig(
            init=init,
            step_size=self.step_size,
            max_iters=self.max_iters,
            restarts=self.restarts,
            uncertainty_weights=UncertaintyWeights(self.alpha, self.beta),
            regularizers=regs,
            seed=self.random_state,
            select=self.select,
        )

    def invert(self, Y):
        """Full outcomes (all restarts) for the normalized targets; see :func:`uana_invert`."""
        check_is_fitted(self, "forward_model_")
        Y = _check_features(self, np.atleast_2d(Y), "n_targets_in_")
        Yn = self.normalizer_.normalize_y(Y)
        cfg = self._config()
        if self.method == "na":
            return na_invert(self.forward_model_.net_, Yn, cfg)
        ens = self.forward_model_.ensemble_
        return (uana_invert if self.method == "uana" else na_ensemble_invert)(ens, Yn, cfg)

    def predict(self, Y):
        """Best design (raw units) for each row of target performances."""
        return self.normalizer_.denormalize_x(best_designs(self.invert(Y)))


class TandemInverter(BaseEstimator):
    """Inverse network trained through a frozen forward model.

    With ``uncertainty_aware=True`` the forward model is a deep ensemble and the
    ``alpha``/``beta`` weighted variances are added to the training loss.
    """

    def __init__(self, uncertainty_aware=False, alpha=1.0, beta=10.0, forward_model=None,
                 hidden=(64, 64), activation="relu", learning_rate=1e-3, epochs=100,
                 batch_size=128, refit_forward=True, random_state=0):
        self.uncertainty_aware = uncertainty_aware
        self.alpha = alpha
        self.beta = beta
        self.forward_model = forward_model
        self.hidden = hidden
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.refit_forward = refit_forward
        self.random_state = random_state

    def fit(self, X, y):
        from sklearn.base import clone

        want = DeepEnsembleRegressor if self.uncertainty_aware else MLPSurrogate
        model = self.forward_model if self.forward_model is not None else want(random_state=self.random_state)
        if not isinstance(model, want):
            raise TypeError(f"needs a {want.__name__} forward model")
        if self.refit_forward or not hasattr(model, "normalizer_"):
            model = clone(model).fit(X, y)
        X, Y, _ = _xy(X, y)
        nz = model.normalizer_
        Yn = nz.normalize_y(Y)
        cfg = TandemTrainConfig(
            train=TrainConfig(self.learning_rate, self.epochs, self.batch_size),
            hidden=self.hidden,
            activation=self.activation,
            uncertainty_weights=UncertaintyWeights(self.alpha, self.beta),
        )
        if self.uncertainty_aware:
            self.inverse_, self.loss_curve_ = train_ua_tandem(model.ensemble_, Yn, cfg, seed=self.random_state)
        else:
            self.inverse_, self.loss_curve_ = train_tandem(model.net_, Yn, cfg, seed=self.random_state)
        self.forward_model_ = model
        self.normalizer_ = nz
        self.n_targets_in_ = Y.shape[1]
        return self

    def predict(self, Y):
        check_is_fitted(self, "inverse_")
        Y = _check_features(self, np.atleast_2d(Y), "n_targets_in_")
        return self.normalizer_.denormalize_x(query(self.inverse_, self.normalizer_.normalize_y(Y)))
