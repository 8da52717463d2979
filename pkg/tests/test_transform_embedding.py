import math

import numpy as np
import pytest

from uiforecast.embedding import EmbeddingSpec, SiteSeries, build_forecast_row, \
    build_training_matrix
from uiforecast.transform import TransformSpec, glogit_forward, glogit_inverse


SPEC = TransformSpec(nu=1.0, eps=1e-3)


@pytest.mark.parametrize("y, expected", [
    (0.5, 0.0),
    (0.0, math.log(0.001 / 0.999)),
    (0.8, math.log(4.0)),
])
def test_glogit_forward_values(y, expected):
    assert glogit_forward(y, SPEC) == pytest.approx(expected, abs=1e-12)


def test_glogit_forward_clamps_upper_bound():
    assert glogit_forward(1.0, SPEC) == pytest.approx(math.log(0.999 / 0.001))


@pytest.mark.parametrize("x, expected, tol", [
    (0.0, 0.5, 1e-15),
    (1.38629, 0.8, 1e-5),
    (-6.9068, 0.001, 1e-6),
])
def test_glogit_inverse_values(x, expected, tol):
    assert abs(glogit_inverse(x, SPEC) - expected) < tol


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.0])
def test_glogit_roundtrip_inside_clamp(nu):
    spec = TransformSpec(nu=nu)
    y = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(glogit_inverse(glogit_forward(y, spec), spec), y, rtol=1e-12)


def test_glogit_rejects_nonfinite():
    with pytest.raises(ValueError):
        glogit_forward(np.array([0.2, np.nan]), SPEC)
    with pytest.raises(ValueError):
        glogit_inverse(np.inf, SPEC)


def test_transform_spec_validation():
    with pytest.raises(ValueError):
        TransformSpec(nu=0)
    with pytest.raises(ValueError):
        TransformSpec(eps=0.5)


def _series(values, name="a"):
    return SiteSeries(name, np.asarray(values, dtype=float))


def test_embedding_counts():
    om = build_training_matrix([_series([1, 2, 3, 4, 5])], EmbeddingSpec(1, 3, 1))
    assert om.z.shape == (2, 4)
    assert not om.m.any()
    np.testing.assert_array_equal(om.z, [[1, 2, 3, 4], [2, 3, 4, 5]])


def test_embedding_mask_follows_missing_value():
    # y_2 (0-based index 2) missing: rows t=2 (lags 0..2) and t=3 (lags 1..3)
    om = build_training_matrix([_series([1, 2, np.nan, 4, 5, 6])], EmbeddingSpec(1, 3, 1))
    expected = np.array([
        [0, 0, 1, 0],   # window 0..2, target 3
        [0, 1, 0, 0],   # window 1..3, target 4
        [1, 0, 0, 0],   # window 2..4, target 5
    ], dtype=bool)
    np.testing.assert_array_equal(om.m, expected)
    assert np.all(om.z[om.m] == 0.0)


def test_embedding_target_index_missing():
    # h=1, k=3: y_3 is the target of the first row
    om = build_training_matrix([_series([1, 2, 3, np.nan, 5])], EmbeddingSpec(1, 3, 1))
    np.testing.assert_array_equal(om.m[:, -1], [True, False])


def test_embedding_two_sites_and_lead():
    a = np.arange(10.0)
    b = 100 + np.arange(10.0)
    spec = EmbeddingSpec(2, 6, 1)
    om = build_training_matrix([_series(a), _series(b, "b")], spec)
    assert om.z.shape[1] == 13
    spec3 = EmbeddingSpec(2, 2, 3, target_site=1)
    om3 = build_training_matrix([_series(a), _series(b, "b")], spec3)
    assert om3.n_rows == 10 - 2 - 3 + 1
    np.testing.assert_array_equal(om3.z[0], [0, 1, 100, 101, 104])
    np.testing.assert_array_equal(om3.times, np.arange(1, 7))


def test_embedding_errors():
    with pytest.raises(ValueError):
        build_training_matrix([_series([1, 2, 3]), _series([1, 2], "b")], EmbeddingSpec(2, 1, 1))
    with pytest.raises(ValueError):
        build_training_matrix([_series([1, 2, 3])], EmbeddingSpec(1, 3, 1))


def test_observation_matrix_is_read_only():
    om = build_training_matrix([_series([1, 2, 3, 4, 5])], EmbeddingSpec(1, 3, 1))
    with pytest.raises(ValueError):
        om.z[0, 0] = 9.0


def test_drop_empty_rows():
    om = build_training_matrix([_series([np.nan, np.nan, np.nan, 1.0, 2.0])],
                               EmbeddingSpec(1, 2, 1))
    assert om.n_rows == 3
    kept = om.drop_empty_rows()
    assert kept.n_rows == 2
    np.testing.assert_array_equal(kept.times, [2, 3])


def test_forecast_row_masks():
    spec = EmbeddingSpec(1, 3, 1)
    row, mask = build_forecast_row([[0.1, 0.2, 0.3]], spec)
    np.testing.assert_array_equal(mask, [0, 0, 0, 1])
    np.testing.assert_array_equal(row, [0.1, 0.2, 0.3, 0.0])
    _, mask = build_forecast_row([[0.1, 0.2, np.nan]], spec)
    np.testing.assert_array_equal(mask, [0, 0, 1, 1])
    spec2 = EmbeddingSpec(2, 3, 1)
    _, mask = build_forecast_row([[0.1, 0.2, 0.3], [np.nan] * 3], spec2)
    assert mask.sum() == spec2.k + 1


def test_forecast_row_window_length_checked():
    with pytest.raises(ValueError):
        build_forecast_row([[0.1, 0.2]], EmbeddingSpec(1, 3, 1))


def test_column_roles():
    roles = EmbeddingSpec(2, 2, 1).column_roles()
    assert roles == [(0, 1), (0, 0), (1, 1), (1, 0), None]
