import math

import numpy as np
import pytest

from uainv.exceptions import DimensionError, SamplingError
from uainv.nfp import (
    CorruptionSpec,
    Region,
    RobotArm,
    Sine1D,
    Toy2D,
    nfp_error,
    nfp_forward,
    nfp_from_dict,
    nfp_to_dict,
    sample_dataset,
    sample_targets,
    surrogate_error,
)
from uainv.nn import Layer, Mlp


def test_robot_straight_arm():
    assert np.allclose(nfp_forward(RobotArm(), [0.2, 0, 0, 0]), [2.0, 0.2])


def test_robot_folded_arm():
    # second joint at +pi/2 and third at -pi/2: tip = (0.5 + 1.0, 0.5)
    y = nfp_forward(RobotArm(), [0.0, 0.0, math.pi / 2, -math.pi / 2])
    assert np.allclose(y, [1.5, 0.5])


def test_toy_and_sine():
    assert np.array_equal(nfp_forward(Toy2D(), [1.0, 2.0]), [2.0, 5.0])
    assert nfp_forward(Sine1D(1.0, 1.0), [0.0])[0] == 0.0
    assert nfp_forward(Sine1D(2.0, 0.25), [1.0])[0] == pytest.approx(2.0)


def test_forward_rejects_bad_width():
    with pytest.raises(DimensionError):
        nfp_forward(RobotArm(), [0.0, 0.0])


@pytest.mark.parametrize("spec", [RobotArm(angle_std=0.5), Sine1D(), Toy2D(low=-2)])
def test_spec_dict_roundtrip(spec):
    assert nfp_from_dict(nfp_to_dict(spec)) == spec


def test_clean_sampling_count_and_determinism():
    a = sample_dataset(RobotArm(), 10_000, seed=3)
    assert len(a.data) == 10_000
    b = sample_dataset(RobotArm(), 10_000, seed=3)
    assert np.array_equal(a.data.designs, b.data.designs)
    np.testing.assert_allclose(a.data.performances, RobotArm().forward(a.data.designs), atol=0)


def test_robot_prior_clipped_to_box():
    X = sample_dataset(RobotArm(), 5000, seed=0).data.designs
    lo, hi = map(np.asarray, RobotArm().box)
    assert np.all(X >= lo) and np.all(X <= hi)


def test_sparse_region_is_empty():
    sparse = Region(((0, (0.0, None)),))
    sd = sample_dataset(Sine1D(), 2000, seed=1, corruption=CorruptionSpec(sparse_regions=(sparse,)))
    assert len(sd.data) == 2000
    assert not np.any(sd.data.designs[:, 0] > 0)


def test_impossible_sparse_region_raises():
    everything = Region(((0, (-2.0, 2.0)),))
    with pytest.raises(SamplingError):
        sample_dataset(Sine1D(), 10, corruption=CorruptionSpec(sparse_regions=(everything,)))


def test_region_noise_statistics():
    region = Region(((0, (0.0, None)),))
    sd = sample_dataset(Sine1D(), 30_000, seed=2, corruption=CorruptionSpec(noise_regions=((region, 0.1),)))
    X, Y = sd.data.designs, sd.data.performances
    resid = Y - Sine1D().forward(X)
    inside = X[:, 0] > 0
    assert inside.sum() >= 10_000
    assert 0.09 <= resid[inside].std() <= 0.11
    assert np.all(resid[~inside] == 0)


def test_region_validation_and_open_ends():
    r = Region({1: (None, 0.5)})
    assert list(r.contains(np.array([[0, 0.4], [0, 0.5], [0, -1e9]]))) == [True, False, True]
    with pytest.raises(ValueError):
        Region(((0, (1.0, 1.0)),))
    spec = CorruptionSpec(((r, 0.2),), (Region(((0, (0, 1)),)),))
    assert CorruptionSpec.from_dict(spec.to_dict()) == spec


def test_targets_are_clean_prior_images():
    Y, X = sample_targets(RobotArm(), 50, seed=4)
    np.testing.assert_array_equal(Y, RobotArm().forward(X))
    Y2, _ = sample_targets(RobotArm(), 50, seed=4)
    assert np.array_equal(Y, Y2)


def test_error_metrics():
    assert nfp_error(Toy2D(), [1.0, 2.0], [2.0, 5.0]) == 0.0
    assert nfp_error(Toy2D(), [1.0, 2.0], [2.0, 4.0]) == 0.5
    eye = Mlp((Layer(np.eye(2), np.zeros(2)),))
    assert surrogate_error(eye, [1.0, 2.0], [1.0, 4.0]) == 2.0
    errs = nfp_error(Toy2D(), np.zeros((3, 2)), np.ones((3, 2)))
    assert errs.shape == (3,)
