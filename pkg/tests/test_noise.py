"""Driving noise: exactness of increments, jump resolution, thinning weights."""

import numpy as np
import pytest
from scipy import integrate, stats

from chaosbench.constants import levy_constant
from chaosbench.noise import (StableSpec, brownian_increment, density_ratio,
                              jump_rate, sample_jumps, small_jump_std,
                              small_jump_compensation, stable_increment,
                              subordinator_increment)
from chaosbench.seeding import stream

RHO_THIRD = 0.06415002990995841  # (1/3)^2.5


def test_brownian_increment_basics():
    rng = stream(1, 0)
    assert np.array_equal(brownian_increment(0.0, 3, rng), np.zeros(3))
    assert brownian_increment(0.0, 2, rng, n=5).shape == (5, 2)
    assert brownian_increment(0.25, 4, rng).shape == (4,)
    with pytest.raises(ValueError):
        brownian_increment(-0.1, 1, rng)


def test_brownian_increment_covariance():
    dt, n = 0.01, 1_000_000
    draws = brownian_increment(dt, 2, stream(2, 0), n=n)
    cov = np.cov(draws.T)
    var_se = dt * np.sqrt(2.0 / n)
    off_se = dt / np.sqrt(n)
    assert abs(cov[0, 0] - dt) <= 3 * var_se
    assert abs(cov[1, 1] - dt) <= 3 * var_se
    assert abs(cov[0, 1]) <= 3 * off_se


def test_equal_seeds_reproduce():
    a = brownian_increment(0.5, 3, stream(9, 4, 2), n=10)
    b = brownian_increment(0.5, 3, stream(9, 4, 2), n=10)
    assert np.array_equal(a, b)
    c = stable_increment(1.5, 2, 1.0, stream(9, 4, 3), n=10)
    d = stable_increment(1.5, 2, 1.0, stream(9, 4, 3), n=10)
    assert np.array_equal(c, d)


def test_subordinator_laplace_transform():
    index, n = 0.75, 200_000
    s = subordinator_increment(index, 1.0, stream(3, 0), n=n)
    assert np.all(s > 0)
    for u in (0.5, 1.0, 2.0):
        vals = np.exp(-u * s)
        est, se = vals.mean(), vals.std(ddof=1) / np.sqrt(n)
        assert abs(est - np.exp(-u ** index)) <= 3 * se
    assert subordinator_increment(index, 0.0, stream(3, 0)) == 0.0
    with pytest.raises(ValueError):
        subordinator_increment(1.0, 1.0, stream(3, 0))
    with pytest.raises(ValueError):
        subordinator_increment(0.5, -1.0, stream(3, 0))


def test_stable_characteristic_function():
    alpha, n = 1.5, 1_000_000
    z = stable_increment(alpha, 1, 1.0, stream(4, 0), n=n)[:, 0]
    for xi in (0.5, 1.0, 2.0):
        vals = np.cos(xi * z)
        est, se = vals.mean(), vals.std(ddof=1) / np.sqrt(n)
        assert abs(est - np.exp(-abs(xi) ** alpha)) <= 3 * se
    assert np.cos(0.0 * z).mean() == 1.0
    with pytest.raises(ValueError):
        stable_increment(2.0, 1, 1.0, stream(4, 0))


def test_stable_increment_time_scaling():
    alpha, dt, n = 1.3, 0.37, 100_000
    a = stable_increment(alpha, 1, dt, stream(5, 0), n=n)[:, 0]
    b = dt ** (1.0 / alpha) * stable_increment(
        alpha, 1, 1.0, stream(5, 1), n=n)[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_stable_near_two_close_to_gaussian():
    n = 100_000
    z = stable_increment(1.99, 1, 1.0, stream(6, 0), n=n)[:, 0]
    g = np.sqrt(2.0) * stream(6, 1).normal(size=n)  # char fn exp(-|xi|^2)
    assert stats.ks_2samp(z, g).statistic < 0.02


def test_density_ratio_spot_values():
    assert density_ratio(np.zeros(1), np.array([0.7]), 1.5) == 1.0
    assert density_ratio(np.array([2.0]), np.array([1.0]), 1.5) == 1.0
    assert density_ratio(np.array([2.0]), np.array([-1.0]), 1.5) == \
        pytest.approx(RHO_THIRD, rel=1e-12)
    with pytest.raises(ValueError):
        density_ratio(np.array([1.0]), np.array([0.0]), 1.5)


def test_density_ratio_vector_and_feasibility():
    rng = stream(7, 0)
    x = rng.normal(size=3)
    z = rng.normal(size=(200, 3))
    vals = density_ratio(x, z, 1.7)
    assert vals.shape == (200,)
    assert np.all((0.0 <= vals) & (vals <= 1.0))
    scalars = np.array([density_ratio(x, z[i], 1.7) for i in range(200)])
    assert np.array_equal(vals, scalars)
    # thinning feasibility: the two shifted weights sum below 2
    assert np.all(vals + density_ratio(-x, z, 1.7) <= 2.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        StableSpec(2.0, 1, 0.1)
    with pytest.raises(ValueError):
        StableSpec(1.5, 0, 0.1)
    with pytest.raises(ValueError):
        StableSpec(1.5, 1, 0.0)
    with pytest.raises(ValueError):
        StableSpec(1.5, 1, 0.1, small_jump_mode="bogus")
    with pytest.raises(ValueError):
        StableSpec(1.5, 1, 0.1, constant=-1.0)
    spec = StableSpec(1.5, 2, 0.1)
    assert spec.constant == pytest.approx(levy_constant(2, 1.5), rel=1e-12)


def test_jump_rate_and_counts():
    spec = StableSpec(1.5, 1, 0.1)
    expected = spec.constant * 2.0 * 0.1 ** (-1.5) / 1.5
    assert jump_rate(spec) == pytest.approx(expected, rel=1e-12)
    rng = stream(8, 0)
    windows, dt = 3000, 0.2
    counts = np.array([sample_jumps(spec, dt, rng).shape[0]
                       for _ in range(windows)])
    lam = expected * dt
    assert abs(counts.mean() - lam) <= 3 * np.sqrt(lam / windows)
    assert sample_jumps(spec, 0.0, rng).shape == (0, 1)


def test_jump_radii_and_symmetry():
    spec = StableSpec(1.5, 1, 0.25)
    rng = stream(9, 0)
    jumps = np.concatenate([sample_jumps(spec, 5.0, rng)
                            for _ in range(60)])[:, 0]
    radii = np.abs(jumps)
    assert np.all(radii > spec.trunc)
    # radial law: (trunc / r)^alpha is uniform on (0, 1)
    u = (spec.trunc / radii) ** spec.alpha
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    # no drift compensation is owed: the stream is sign-symmetric
    pos = int((jumps > 0).sum())
    n = jumps.size
    assert abs(pos - 0.5 * n) <= 3 * 0.5 * np.sqrt(n)


def test_jump_directions_balanced_in_2d():
    spec = StableSpec(1.3, 2, 0.5)
    rng = stream(10, 0)
    jumps = np.concatenate([sample_jumps(spec, 4.0, rng)
                            for _ in range(80)])
    unit = jumps / np.linalg.norm(jumps, axis=1, keepdims=True)
    n = unit.shape[0]
    # each coordinate of a uniform direction has variance 1/2 in d=2
    assert np.all(np.abs(unit.mean(axis=0)) <= 3 * np.sqrt(0.5 / n))


def test_small_jump_compensation_variance():
    spec = StableSpec(1.5, 1, 0.3)
    dt, n = 0.7, 300_000
    expected = dt * spec.constant * 2.0 * 0.3 ** 0.5 / 0.5
    assert small_jump_std(spec, dt) ** 2 == pytest.approx(expected,
                                                          rel=1e-12)
    draws = small_jump_compensation(spec, dt, stream(11, 0), n=n)[:, 0]
    var = draws.var(ddof=1)
    se = expected * np.sqrt(2.0 / n)
    assert abs(var - expected) <= 3 * se
    assert abs(draws.mean()) <= 3 * np.sqrt(expected / n)


def test_small_jump_modes_and_limits():
    drop = StableSpec(1.5, 1, 0.3, small_jump_mode="drop")
    assert np.array_equal(small_jump_compensation(drop, 1.0, stream(12, 0),
                                                  n=4), np.zeros((4, 1)))
    gauss = StableSpec(1.5, 1, 0.3)
    assert np.array_equal(small_jump_compensation(gauss, 0.0, stream(12, 0)),
                          np.zeros(1))
    assert small_jump_std(StableSpec(1.5, 1, 1e-4), 1.0) < \
        small_jump_std(StableSpec(1.5, 1, 1e-2), 1.0)


def _compound_sample(spec, t, n, rng):
    counts = rng.poisson(jump_rate(spec) * t, size=n)
    total = int(counts.sum())
    radii = spec.trunc * rng.uniform(size=total) ** (-1.0 / spec.alpha)
    signs = rng.integers(0, 2, size=total) * 2 - 1
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(np.concatenate((radii * signs, [0.0])), offsets)
    sums[counts == 0] = 0.0
    return sums + small_jump_std(spec, t) * rng.normal(size=n)


def test_composed_jump_law_bias_shrinks_with_trunc():
    """Jumps + Gaussian compensation approach the exact stable law.

    The composed characteristic function is known in closed form, so the
    bias is predicted exactly (and is provably monotone in trunc); the
    sampled values must match the prediction within Monte Carlo error.
    """
    alpha, xi, t, n = 1.5, 1.5, 1.0, 400_000
    c = levy_constant(1, alpha)
    exact = np.exp(-t * xi ** alpha)
    predictions, estimates, stderrs = [], [], []
    for i, trunc in enumerate((2.0, 0.8, 0.3)):
        spec = StableSpec(alpha, 1, trunc)
        small, _ = integrate.quad(
            lambda z: (np.cos(xi * z) - 1.0) * z ** (-1.0 - alpha),
            0.0, trunc, limit=200)
        var = 2.0 * c * trunc ** (2.0 - alpha) / (2.0 - alpha)
        log_char = t * (-xi ** alpha - 2.0 * c * small - 0.5 * xi * xi * var)
        predictions.append(abs(np.exp(log_char) - exact))
        draws = _compound_sample(spec, t, n, stream(13, i))
        vals = np.cos(xi * draws)
        estimates.append(abs(vals.mean() - exact))
        stderrs.append(vals.std(ddof=1) / np.sqrt(n))
    assert all(a > b for a, b in zip(predictions, predictions[1:]))
    for pred, est, se in zip(predictions, estimates, stderrs):
        assert abs(est - pred) <= 3 * se + 1e-12
