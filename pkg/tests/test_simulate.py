import numpy as np
import pytest

from uiforecast.simulate import ArSpec, MissingnessSpec, VarSpec, block_intervals, \
    chronological_split, gen_ar, gen_bounded_sites, gen_var, inject_blocks, inject_sporadic, \
    make_mask


def test_ar_fixed_point_without_noise():
    spec = ArSpec(noise_var=0.0, length=50)
    y = gen_ar(spec, 0)
    np.testing.assert_allclose(y, 1 / 0.17, rtol=1e-12)


def test_ar_sample_mean():
    spec = ArSpec()
    y = gen_ar(spec, 1)
    assert len(y) == 8760
    # long-run variance of the mean for an AR(2): sigma^2 / (1 - a1 - a2)^2 / T
    se = np.sqrt(spec.noise_var) / 0.17 / np.sqrt(len(y))
    assert abs(y.mean() - spec.mean) < 3 * se


def test_ar_nonstationary_rejected():
    with pytest.raises(ValueError):
        gen_ar(ArSpec(alpha=(1.0, 0.6, 0.5)), 0)


def test_var_fixed_point_without_noise():
    spec = VarSpec(noise_var=0.0, length=20)
    y = gen_var(spec, 0)
    const, l1, l2 = spec.matrices()
    fixed = np.linalg.solve(np.eye(2) - l1 - l2, const)
    np.testing.assert_allclose(y, np.broadcast_to(fixed[:, None], y.shape), rtol=1e-12)


def test_var_decouples_to_ar():
    spec = VarSpec(alpha1=(1.0, 0.33, 0.5, 0.0, 0.0), alpha2=(1.0, 0.5, 0.0, 0.0, 0.0),
                   noise_var=0.0, length=30)
    y = gen_var(spec, 0, start=[3.0, 1.0])
    ar = gen_ar(ArSpec(noise_var=0.0, length=30), 0, start=3.0)
    np.testing.assert_allclose(y[0], ar, rtol=1e-12)


def test_var_nonstationary_rejected():
    with pytest.raises(ValueError):
        gen_var(VarSpec(alpha1=(1, 1.2, 0, 0, 0)), 0)


def test_bounded_sites_range_and_lead_lag():
    y = gen_bounded_sites(3, 5000, 0)
    assert y.shape == (3, 5000)
    assert np.all((y > 0) & (y < 1))
    # auxiliary sites lead the target
    lagged = np.corrcoef(y[0, 2:], y[1, :-2])[0, 1]
    same = np.corrcoef(y[0], y[1])[0, 1]
    assert lagged > same


def test_sporadic_rate_zero_and_binomial_bounds():
    assert not inject_sporadic(100, 0.0, 0).any()
    count = inject_sporadic(8760, 0.2, 3).sum()
    assert abs(count - 1752) <= 3 * np.sqrt(8760 * 0.2 * 0.8)
    with pytest.raises(ValueError):
        inject_sporadic(10, 0.6, 0)


def test_single_block():
    m = inject_blocks(100, 1, 5, 5, 2)
    assert m.sum() == 5
    (start, stop), = block_intervals(m)
    assert stop - start == 5


def test_block_fraction():
    T = 61320
    fracs = [inject_blocks(T, 600, 5, 30, s).mean() for s in range(10)]
    # overlap makes the realized fraction a bit smaller than 17.1%
    expected = 1 - np.exp(-600 * 17.5 / T)
    assert abs(np.mean(fracs) - expected) < 0.01
    assert max(fracs) < 600 * 17.5 / T + 0.01


def test_block_parameters_checked():
    with pytest.raises(ValueError):
        inject_blocks(100, 3, 10, 5, 0)
    with pytest.raises(ValueError):
        inject_blocks(100, -1, 1, 5, 0)


def test_make_mask_sites_and_reproducibility():
    spec = MissingnessSpec("sporadic", rate=0.3, sites=(1,), seed=9)
    a = make_mask(spec, (2, 500), replicate=4)
    b = make_mask(spec, (2, 500), replicate=4)
    np.testing.assert_array_equal(a, b)
    assert not a[0].any() and a[1].any()
    assert not np.array_equal(a, make_mask(spec, (2, 500), replicate=5))


def test_chronological_split():
    tr, te = chronological_split(10, 0.8)
    assert tr.tolist() == list(range(8)) and te.tolist() == [8, 9]
