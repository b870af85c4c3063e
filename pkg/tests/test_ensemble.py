import numpy as np
import pytest

from conftest import central_fd, random_ensemble, rel_err
from uainv.ensemble import (
    DEFAULT_ROSTER,
    DeepEnsemble,
    EnsembleMember,
    EnsembleTrainConfig,
    UncertaintyWeights,
    combined_uncertainty,
    default_roster,
    grad_uana_objective,
    member_nll,
    mixture_variance,
    nll_loss,
    predict,
    train_ensemble,
)
from uainv.nfp import Region, CorruptionSpec, Sine1D, sample_dataset
from uainv.nn import Layer, Mlp, TrainConfig, forward, init_mlp, inverse_softplus


def _constant_member(mu, var):
    mean = Mlp((Layer(np.zeros((1, 1)), np.array([mu])),))
    vnet = Mlp((Layer(np.zeros((1, 1)), inverse_softplus(np.array([var - 1e-6]))),))
    return EnsembleMember(mean, vnet)


def test_hand_moments_two_members():
    ens = DeepEnsemble((_constant_member(1.0, 0.5), _constant_member(3.0, 1.5)))
    p = predict(ens, [0.0])
    assert p.mu[0] == pytest.approx(2.0)
    assert p.sigma_aleatoric[0] == pytest.approx(1.0, rel=1e-9)
    assert p.sigma_epistemic[0] == pytest.approx(1.0)
    assert mixture_variance(ens, [0.0])[0] == pytest.approx(2.0, rel=1e-9)


def test_clone_has_zero_epistemic_and_exact_mean():
    net = init_mlp([3, 9, 2], "relu", seed=4)
    ens = DeepEnsemble.clone(net, n_members=5)
    X = np.random.default_rng(0).normal(size=(50, 3))
    p = predict(ens, X)
    assert np.array_equal(p.mu, forward(net, X))
    assert np.all(p.sigma_epistemic == 0.0)


def test_decomposition_identity():
    ens = random_ensemble(3, M=4)
    X = np.random.default_rng(1).normal(size=(1000, 2)) * 2
    p = predict(ens, X)
    np.testing.assert_allclose(p.total_variance, mixture_variance(ens, X), rtol=0, atol=1e-10)


def test_mixture_moments_against_sampling():
    ens = random_ensemble(11, d_out=1, M=4)
    x = np.array([0.3, -0.8])
    p = predict(ens, x)
    rng = np.random.default_rng(5)
    n = 400_000
    pick = rng.integers(ens.M, size=n)
    mus = np.array([forward(m.mean_net, x)[0] for m in ens.members])
    vs = np.array([p_.sigma_aleatoric[0] for p_ in (predict(DeepEnsemble((m, m)), x) for m in ens.members)])
    draws = rng.normal(mus[pick], np.sqrt(vs[pick]))
    assert draws.mean() == pytest.approx(p.mu[0], abs=5e-3 * np.sqrt(p.total_variance[0]))
    assert draws.var() == pytest.approx(p.total_variance[0], rel=1e-2)


def test_variance_floor_respected():
    ens = DeepEnsemble((_constant_member(0.0, 2e-6), _constant_member(0.0, 2e-6)), variance_floor=1e-3)
    assert predict(ens, [0.0]).sigma_aleatoric[0] >= 1e-3


@pytest.mark.parametrize("w", [(0, 0), (0.7, 0), (0, 3.0), (1.5, 10.0)])
def test_objective_gradient_matches_fd(w):
    ens = random_ensemble(7, M=3, kinds=["tanh", "elu", "softplus", "celu"])
    weights = UncertaintyWeights(*w)
    x = np.array([0.2, -0.4])
    y = np.array([0.5, 0.1])
    loss, g = grad_uana_objective(ens, x, y, weights)
    fd = central_fd(lambda v: grad_uana_objective(ens, v, y, weights)[0], x)
    assert rel_err(g, fd) < 1e-6
    p = predict(ens, x)
    expected = np.sum((p.mu - y) ** 2) + combined_uncertainty(p, weights)
    assert loss == pytest.approx(expected, rel=1e-12)


def test_objective_rows_and_broadcast_target():
    ens = random_ensemble(2, M=2)
    X = np.random.default_rng(3).normal(size=(4, 2))
    w = UncertaintyWeights(1.0, 1.0)
    loss, g = grad_uana_objective(ens, X, np.zeros(2), w)
    assert loss.shape == (4,) and g.shape == (4, 2)
    for i in range(4):
        li, gi = grad_uana_objective(ens, X[i], np.zeros(2), w)
        assert li == pytest.approx(loss[i]) and np.allclose(gi, g[i])


def test_weights_validation():
    with pytest.raises(ValueError):
        UncertaintyWeights(-1.0, 0.0)
    with pytest.raises(ValueError):
        UncertaintyWeights(0.0, float("nan"))
    assert UncertaintyWeights().is_zero


def test_nll_loss_values():
    assert nll_loss([0.0], [1.0], [0.0]) == 0.0
    assert nll_loss([0.0], [1.0], [2.0]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        nll_loss([0.0], [0.0], [0.0])


def test_default_roster_composition():
    names = [a.kind for a in default_roster(10)]
    for kind, count in [("tanh", 2), ("relu", 2), ("celu", 2), ("leaky_relu", 2), ("elu", 1), ("hardswish", 1)]:
        assert names.count(kind) == count
    assert len(set(names[:6])) == 6
    assert default_roster(12)[10] == DEFAULT_ROSTER[0]


def _small_cfg(M, seed=0):
    return EnsembleTrainConfig(
        n_members=M, mean_hidden=(16,), var_hidden=(8,),
        stage1=TrainConfig(1e-2, 20, 64), stage2=TrainConfig(1e-2, 15, 64), seed=seed,
    )


def test_training_prefix_property_and_determinism():
    sd = sample_dataset(Sine1D(), 200, seed=0)
    big = train_ensemble(sd.data, _small_cfg(4))
    small = train_ensemble(sd.data, _small_cfg(2))
    assert big.subset(2) == small
    assert train_ensemble(sd.data, _small_cfg(2)) == small
    assert big.roster == default_roster(4)


def test_training_rejects_bad_roster():
    sd = sample_dataset(Sine1D(), 50, seed=0)
    with pytest.raises(ValueError):
        train_ensemble(sd.data, _small_cfg(3), roster=("relu", "tanh"))
    with pytest.raises(ValueError):
        EnsembleTrainConfig(n_members=1)


def test_noise_region_raises_learned_aleatoric():
    noisy = Region(((0, (0.2, 0.8)),))
    sd = sample_dataset(Sine1D(), 1500, seed=1, corruption=CorruptionSpec(noise_regions=((noisy, 0.1),)))
    cfg = EnsembleTrainConfig(
        n_members=2, mean_hidden=(32, 32), var_hidden=(16, 16),
        stage1=TrainConfig(3e-3, 60, 64), stage2=TrainConfig(3e-3, 60, 64),
    )
    ens = train_ensemble(sd.data, cfg)
    nz = sd.data.normalizer
    inside = predict(ens, nz.normalize_x(np.linspace(0.3, 0.7, 20)[:, None])).sigma_aleatoric
    outside = predict(ens, nz.normalize_x(np.linspace(-0.9, -0.3, 20)[:, None])).sigma_aleatoric
    assert np.median(inside) > 5 * np.median(outside)
    assert member_nll(ens.members[0], sd.data.Xn, sd.data.Yn) < 0


def test_nll_hand_cases():
    assert nll_loss([1.0], [np.e], [1.0]) == pytest.approx(0.5)
    assert nll_loss([0.0], [1.0], [1.0]) == pytest.approx(0.5)


def test_combined_uncertainty_hand_cases():
    from uainv.ensemble import Prediction

    p = Prediction(np.zeros(1), np.array([1.0]), np.array([2.0]))
    assert combined_uncertainty(p, UncertaintyWeights(1, 10)) == 21.0
    assert combined_uncertainty(p, UncertaintyWeights()) == 0.0
    ens = random_ensemble(9, M=3)
    x = np.array([0.1, 0.2])
    assert combined_uncertainty(predict(ens, x), UncertaintyWeights(1, 1)) == pytest.approx(mixture_variance(ens, x).sum())


def test_symmetric_pair_moments():
    ens = DeepEnsemble((_constant_member(0.0, 1.0), _constant_member(2.0, 1.0)))
    p = predict(ens, [5.0])
    assert (p.mu[0], p.sigma_epistemic[0]) == (1.0, 1.0)
    assert p.sigma_aleatoric[0] == pytest.approx(1.0, rel=1e-12)


def test_clone_objective_gradient_is_na_gradient():
    from uainv.nn import grad_wrt_input

    net = init_mlp([2, 6, 2], "tanh", seed=1)
    ens = DeepEnsemble.clone(net, 3)
    x, y = np.array([0.3, -0.2]), np.array([1.0, 0.0])
    loss, g = grad_uana_objective(ens, x, y, UncertaintyWeights())
    r = forward(net, x) - y
    assert loss == float(r @ r)
    assert np.array_equal(g, grad_wrt_input(net, x, 2 * r))


@pytest.mark.parametrize("noise", [0.0, 0.1])
def test_homoscedastic_calibration(noise):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(1000, 1))
    y = x + noise * rng.normal(size=x.shape)
    from uainv.nn import Dataset

    data = Dataset(x, y)
    cfg = EnsembleTrainConfig(
        n_members=2, mean_hidden=(16,), var_hidden=(8,),
        stage1=TrainConfig(1e-2, 40, 64), stage2=TrainConfig(1e-2, 60, 64),
    )
    ens = train_ensemble(data, cfg)
    sd_raw = np.sqrt(predict(ens, data.Xn).sigma_aleatoric[:, 0]) * data.normalizer.y_std[0]
    if noise:
        assert 0.05 <= sd_raw.mean() <= 0.2
    else:
        assert sd_raw.mean() < 0.02
