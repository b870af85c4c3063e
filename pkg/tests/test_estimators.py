import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from uainv.estimators import DeepEnsembleRegressor, GradientInverter, MLPSurrogate, TandemInverter
from uainv.nfp import Sine1D, Toy2D, sample_dataset


@pytest.fixture(scope="module")
def toy():
    sd = sample_dataset(Toy2D(), 600, seed=0)
    return sd.data.designs, sd.data.performances


@pytest.fixture(scope="module")
def small_ensemble(toy):
    X, Y = toy
    return DeepEnsembleRegressor(n_members=2, mean_hidden=(32,), var_hidden=(8,), stage1_epochs=40,
                                 stage2_epochs=10, random_state=0).fit(X, Y)


def test_params_and_clone():
    est = MLPSurrogate(hidden=(8,), epochs=3)
    assert est.get_params()["hidden"] == (8,)
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    est.set_params(epochs=5)
    assert est.epochs == 5
    inv = GradientInverter(forward_model=DeepEnsembleRegressor(n_members=3))
    assert inv.get_params()["forward_model__n_members"] == 3


def test_surrogate_fit_predict(toy):
    X, Y = toy
    est = MLPSurrogate(hidden=(32, 32), learning_rate=3e-3, epochs=60, random_state=1).fit(X, Y)
    assert est.predict(X).shape == Y.shape
    assert est.score(X, Y) > 0.95
    again = MLPSurrogate(hidden=(32, 32), learning_rate=3e-3, epochs=60, random_state=1).fit(X, Y)
    assert np.array_equal(again.predict(X), est.predict(X))
    with pytest.raises(ValueError):
        est.predict(X[:, :1])


def test_flat_targets_keep_shape():
    sd = sample_dataset(Sine1D(), 200, seed=0)
    X, y = sd.data.designs, sd.data.performances[:, 0]
    assert MLPSurrogate(hidden=(8,), epochs=2).fit(X, y).predict(X).shape == (200,)


def test_unfitted_raises(toy):
    with pytest.raises(NotFittedError):
        MLPSurrogate().predict(toy[0])
    with pytest.raises(NotFittedError):
        DeepEnsembleRegressor().predict(toy[0])


def test_ensemble_uncertainty_outputs(toy, small_ensemble):
    X, Y = toy
    mu, std = small_ensemble.predict(X[:5], return_std=True)
    sa, se = small_ensemble.predict_uncertainty(X[:5])
    assert mu.shape == std.shape == sa.shape == (5, 2)
    np.testing.assert_allclose(std**2, sa + se, rtol=1e-12)
    far = small_ensemble.predict_uncertainty(X[:5] * 4)[1]
    assert np.median(far) > np.median(se)


def test_gradient_inverter_uses_fitted_model(toy, small_ensemble):
    X, Y = toy
    inv = GradientInverter(method="uana", alpha=0.1, beta=1.0, forward_model=small_ensemble,
                           refit_forward=False, max_iters=200, restarts=3).fit(X, Y)
    assert inv.forward_model_ is small_ensemble
    designs = inv.predict(Y[:4])
    assert designs.shape == (4, 2)
    assert np.mean((Toy2D().forward(designs) - Y[:4]) ** 2) < 0.05
    outs = inv.invert(Y[:2])
    assert len(outs) == 2 and len(outs[0].all_candidates) == 3


def test_gradient_inverter_validation(toy, small_ensemble):
    X, Y = toy
    with pytest.raises(ValueError):
        GradientInverter(method="bogus").fit(X, Y)
    with pytest.raises(TypeError):
        GradientInverter(method="na", forward_model=small_ensemble).fit(X, Y)
    fixed = GradientInverter(method="na-ensemble", forward_model=small_ensemble, refit_forward=False,
                             init="fixed", max_iters=5, restarts=1)
    with pytest.raises(ValueError):
        fixed.fit(X, Y).predict(Y[:1])


def test_tandem_inverter(toy):
    X, Y = toy
    fwd = MLPSurrogate(hidden=(32, 32), learning_rate=3e-3, epochs=40)
    tan = TandemInverter(forward_model=fwd, hidden=(32,), epochs=30, learning_rate=3e-3).fit(X, Y)
    D = tan.predict(Y[:10])
    assert D.shape == (10, 2) and len(tan.loss_curve_) == 30
    assert tan.loss_curve_[-1] < tan.loss_curve_[0]
    with pytest.raises(TypeError):
        TandemInverter(uncertainty_aware=True, forward_model=fwd).fit(X, Y)
