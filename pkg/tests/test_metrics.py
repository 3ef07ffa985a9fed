"""Distance estimators: exact transport values, TV histograms, rate fits."""

import itertools

import numpy as np
import pytest
from scipy import integrate

from chaosbench.metrics import (RateFit, SampleSet, fit_rate, mean_abs_error,
                                product_distance, tv_from_merge, tv_histogram,
                                w1_assignment, w1_blocks, w1_sorted)
from chaosbench.model import make_model
from chaosbench.seeding import stream

GAUSS_SHIFT_TV = 0.7658498450960525  # diameter-2 TV of unit Gaussians 1 apart


def test_sample_set_validation():
    s = SampleSet(np.arange(5.0))
    assert s.n == 5 and s.dim == 1
    assert SampleSet(np.zeros((3, 2))).dim == 2
    with pytest.raises(ValueError):
        SampleSet(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        SampleSet(np.empty((0, 2)))


def test_w1_sorted_spot_values():
    assert w1_sorted([0.0, 1.0], [0.0, 3.0]) == pytest.approx(1.0)
    assert w1_sorted([0.0, 1.0], [0.0, 1.0, 2.0]) == pytest.approx(0.5)
    x = stream(20, 0).normal(size=100)
    assert w1_sorted(x, np.random.default_rng(1).permutation(x)) == 0.0
    assert w1_sorted(SampleSet(x), x) == 0.0


def test_w1_assignment_matches_brute_force():
    rng = stream(21, 0)
    x = rng.normal(size=(6, 2))
    y = rng.normal(size=(6, 2))
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    best = min(cost[range(6), perm].mean()
               for perm in itertools.permutations(range(6)))
    assert w1_assignment(x, y) == pytest.approx(best, rel=1e-12)


def test_w1_assignment_reduces_to_sorted_in_1d():
    rng = stream(21, 1)
    x, y = rng.normal(size=(50, 1)), rng.normal(size=(50, 1))
    assert w1_assignment(x, y) == pytest.approx(w1_sorted(x, y), rel=1e-12)


def test_w1_metric_axioms_and_contracts():
    rng = stream(21, 2)
    a, b, c = (rng.normal(size=(30, 3)) for _ in range(3))
    dab, dbc, dac = (w1_assignment(u, v)
                     for u, v in ((a, b), (b, c), (a, c)))
    assert dab == pytest.approx(w1_assignment(b, a), rel=1e-12)
    assert dac <= dab + dbc + 1e-12
    assert w1_assignment(a, a) == 0.0
    with pytest.raises(ValueError):
        w1_assignment(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        w1_assignment(np.zeros((5000, 1)), np.zeros((5000, 1)))


def test_product_distance_spot_value():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    y = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert product_distance(x, y) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        product_distance(np.zeros((2, 2)), np.zeros((3, 2)))


def test_w1_blocks_sandwich():
    rng = stream(22, 0)
    x = rng.normal(size=(40, 3, 2))
    y = rng.normal(size=(40, 3, 2)) + 0.5
    joint = w1_blocks(x, y)
    per_block = sum(w1_assignment(x[:, b, :], y[:, b, :]) for b in range(3))
    identity = np.mean([product_distance(x[i], y[i]) for i in range(40)])
    assert per_block - 1e-9 <= joint <= identity + 1e-9
    single = w1_blocks(x[:, :1, :], y[:, :1, :])
    assert single == pytest.approx(w1_assignment(x[:, 0, :], y[:, 0, :]),
                                   rel=1e-12)
    with pytest.raises(ValueError):
        w1_blocks(x, y[:, :2, :])
    with pytest.raises(ValueError):
        w1_blocks(x[:, 0, :], y[:, 0, :])


def test_tv_histogram_extremes():
    same = stream(23, 0).normal(size=200)
    assert tv_histogram(same, same.copy()) == 0.0
    assert tv_histogram(np.zeros(50), np.zeros(50)) == 0.0  # degenerate bins
    far = tv_histogram(np.full(40, -10.0), np.full(40, 10.0),
                       bins=np.array([0.0, 1.0]))
    assert far == pytest.approx(2.0)  # opposite overflow cells
    near = tv_histogram(np.full(40, -10.0), np.full(40, -10.0),
                        bins=np.array([0.0, 1.0]))
    assert near == 0.0  # same overflow cell


def test_tv_histogram_gaussian_oracle():
    n = 1_000_000
    a = stream(23, 1).normal(size=n)
    b = stream(23, 2).normal(size=n) + 1.0
    est = tv_histogram(a, b, bins=64, data_range=(-8.0, 9.0))
    assert abs(est - GAUSS_SHIFT_TV) <= 0.02


def test_tv_histogram_mixture_monotone():
    n = 200_000
    base = stream(23, 3).normal(size=n)
    ref = stream(23, 4).normal(size=n)
    shifted = stream(23, 5).normal(size=n) + 4.0
    values = []
    for w in (0.25, 0.5, 1.0):
        k = int(w * n)
        mix = np.concatenate([shifted[:k], base[k:]])
        values.append(tv_histogram(mix, ref, bins=80,
                                   data_range=(-5.0, 9.0)))
    assert values[0] + 0.3 < values[1] < values[2] - 0.3


def test_tv_histogram_two_dimensional():
    rng = stream(23, 6)
    a = rng.normal(size=(20_000, 2))
    assert tv_histogram(a, a.copy(), bins=16, data_range=(-6.0, 6.0)) == 0.0
    b = a + np.array([20.0, 0.0])
    assert tv_histogram(a, b, bins=16, data_range=(-6.0, 6.0)) >= 1.999
    with pytest.raises(ValueError):
        tv_histogram(np.zeros((5, 3)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        tv_histogram(np.zeros((5, 1)), np.zeros((5, 2)))


def test_tv_from_merge():
    assert tv_from_merge(0.0) == 2.0
    assert tv_from_merge(1.0) == 0.0
    np.testing.assert_allclose(tv_from_merge(np.array([0.0, 0.25, 1.0])),
                               [2.0, 1.5, 0.0])
    with pytest.raises(ValueError):
        tv_from_merge(-0.1)
    with pytest.raises(ValueError):
        tv_from_merge(1.1)


def test_mean_abs_error_constant_and_gaussian():
    rng = stream(24, 0)
    flat = mean_abs_error(lambda n, r: np.full(n, 3.0), 3.0, 16, 10, rng)
    assert flat == 0.0
    size, reps = 64, 4000
    est = mean_abs_error(lambda n, r: r.normal(size=n), 0.0, size, reps, rng)
    expected = np.sqrt(2.0 / (np.pi * size))
    se = np.sqrt((1.0 - 2.0 / np.pi) / size) / np.sqrt(reps)
    assert abs(est - expected) <= 3 * se
    with pytest.raises(ValueError):
        mean_abs_error(lambda n, r: np.zeros(n), 0.0, 0, 5, rng)
    with pytest.raises(ValueError):
        mean_abs_error(lambda n, r: np.zeros(n), 0.0, 5, 0, rng)


def test_fit_rate_exact_and_noisy():
    sizes = np.array([10.0, 100.0, 1000.0, 10000.0])
    fit = fit_rate(sizes, 3.0 * sizes ** -0.5)
    assert isinstance(fit, RateFit)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)
    assert fit.stderr <= 1e-10
    rng = stream(25, 0)
    big = 2.0 ** np.arange(6, 15)
    noisy = big ** (-1.0 / 3.0) * np.exp(rng.normal(scale=0.05, size=9))
    fit = fit_rate(big, noisy)
    assert abs(fit.slope + 1.0 / 3.0) <= 0.05
    assert 0.0 < fit.stderr < 0.05


def test_fit_rate_contract_errors():
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0, 4.0], [1.0, 0.5, 0.25])
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0, 4.0, 8.0], [1.0, -0.5, 0.25, 0.1])
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0, 4.0, 8.0], [1.0, 0.5, 0.25])


def _pareto_tanh_mean(index, scale, v):
    # substitute u = (scale / y) ** index so Y = scale * u ** (-1 / index)
    val, _ = integrate.quad(
        lambda u: np.tanh(scale * u ** (-1.0 / index) - v), 0.0, 1.0,
        limit=200)
    return val


@pytest.mark.parametrize("case", ["light-linear", "heavy-bounded"])
def test_mean_field_fluctuation_decay(case):
    """Empirical interaction fields approach the limit field at a CLT-like
    rate even when the particle law itself is heavy-tailed (the kernel is
    what must be integrable, not the law)."""
    v = 0.7
    if case == "light-linear":
        model = make_model(1, ("linear", {"slope": 1.0}),
                           interaction=("curie-weiss", {"strength": 1.0}))
        draw = lambda n, rng: rng.normal(size=n)
        true = -v  # E[Y - v] with standard normal Y
        gate = -0.25
    else:
        index, scale = 1.5, 1.0
        model = make_model(1, ("linear", {"slope": 1.0}),
                           interaction=("bounded-tanh", {"strength": 1.0}))
        draw = lambda n, rng: scale * rng.uniform(size=n) ** (-1.0 / index)
        true = _pareto_tanh_mean(index, scale, v)
        gate = -1.0 / 3.0
    point = np.array([v])

    def field_sample(n, rng):
        ys = draw(n, rng)[:, None]
        return model.kernel(point[None, :], ys)[:, 0]

    sizes = [64, 256, 1024, 4096]
    rng = stream(26, 0 if case == "light-linear" else 1)
    errs = [mean_abs_error(field_sample, true, n, 150, rng) for n in sizes]
    fit = fit_rate(sizes, errs)
    assert fit.slope <= gate
    assert fit.slope >= -0.75  # CLT rate, not faster
