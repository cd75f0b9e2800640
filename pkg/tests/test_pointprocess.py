import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from udnlab.pointprocess import PointSet, Region, sample_hppp, uniform_in_disk, with_typical_ue
from udnlab.rng import trial_generator


def test_region_validation():
    with pytest.raises(ValueError):
        Region(0.0)
    with pytest.raises(ValueError):
        Region(float("inf"))
    assert Region(2.0).area_km2 == pytest.approx(4 * math.pi)


def test_zero_density_is_empty():
    ps = sample_hppp(0.0, Region(5.0), np.random.default_rng(1))
    assert len(ps) == 0 and ps.points.shape == (0, 2)


@pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
def test_rejects_bad_density(bad):
    with pytest.raises(ValueError):
        sample_hppp(bad, Region(1.0), np.random.default_rng(0))


def test_count_mean_and_dispersion():
    rng = np.random.default_rng(7)
    region = Region(3.0)
    counts = np.array([len(sample_hppp(100.0, region, rng)) for _ in range(10_000)])
    mean = 100 * math.pi * 9
    assert abs(counts.mean() / mean - 1) < 0.01
    assert 0.95 <= counts.var(ddof=1) / counts.mean() <= 1.05


@pytest.mark.parametrize("mu", [10, 100, 1000])
def test_count_chi_square(mu):
    rng = np.random.default_rng(mu)
    radius = 1.0
    lam = mu / (math.pi * radius**2)
    counts = np.array([len(sample_hppp(lam, Region(radius), rng)) for _ in range(4000)])
    # bins with expected frequency >= 5
    lo, hi = stats.poisson.ppf(0.001, mu), stats.poisson.ppf(0.999, mu)
    edges = np.arange(lo, hi + 2)
    obs, _ = np.histogram(counts, bins=np.concatenate([[-np.inf], edges[1:-1] - 0.5, [np.inf]]))
    cdf = stats.poisson.cdf(edges[1:-1] - 1, mu)
    exp = np.diff(np.concatenate([[0.0], cdf, [1.0]])) * counts.size
    keep = exp >= 5
    obs_k = np.append(obs[keep], obs[~keep].sum())
    exp_k = np.append(exp[keep], exp[~keep].sum())
    if exp_k[-1] < 5:
        obs_k[-2] += obs_k[-1]
        exp_k[-2] += exp_k[-1]
        obs_k, exp_k = obs_k[:-1], exp_k[:-1]
    p = stats.chisquare(obs_k, exp_k).pvalue
    assert p > 0.01


def test_radial_uniformity():
    rng = np.random.default_rng(3)
    pts = uniform_in_disk(rng, 200_000, 2.0)
    frac = np.mean(np.hypot(pts[:, 0], pts[:, 1]) <= 1.0)
    se = math.sqrt(0.25 * 0.75 / pts.shape[0])
    assert abs(frac - 0.25) < 3 * se


@given(st.floats(0.0, 500.0), st.floats(0.05, 3.0), st.integers(0, 2**32))
def test_points_inside_region(lam, radius, seed):
    ps = sample_hppp(lam, Region(radius), np.random.default_rng(seed))
    assert np.all(ps.radii() <= radius * (1 + 1e-12))
    assert ps.density_per_km2 == lam


def test_reproducible_with_seeded_stream():
    a = sample_hppp(300.0, Region(1.0), trial_generator(5, 3))
    b = sample_hppp(300.0, Region(1.0), trial_generator(5, 3))
    np.testing.assert_array_equal(a.points, b.points)


def test_with_typical_ue():
    assert with_typical_ue(PointSet()).points.tolist() == [[0.0, 0.0]]
    assert with_typical_ue(PointSet([[1.0, 1.0]])).points.tolist() == [[1.0, 1.0], [0.0, 0.0]]
    ps = sample_hppp(50.0, Region(1.0), np.random.default_rng(0))
    out = with_typical_ue(ps)
    assert len(out) == len(ps) + 1
    assert np.any(np.all(out.points == 0.0, axis=1))


def test_pointset_shape_check():
    with pytest.raises(ValueError):
        PointSet(np.zeros((3, 3)))
