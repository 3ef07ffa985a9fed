"""Empirical distances and rate diagnostics.

Total variation is reported in the diameter-2 convention throughout: for
laws p, q the distance is sup over |test| <= 1 of |p(test) - q(test)|,
which equals twice the usual probability distance and twice the minimal
mismatch probability over couplings.  Callers wanting the halved convention
divide by two (the CLI exposes --half-tv for this).

Transport distances between equal-size samples are exact: sorted pairing in
one dimension, an exact assignment solve otherwise.  On product states the
ground metric is the block sum of Euclidean norms, so a coupled N-pair
system is scored by the mean per-pair gap.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

__all__ = [
    "SampleSet", "w1_sorted", "w1_assignment", "product_distance",
    "w1_blocks", "tv_histogram", "tv_from_merge", "mean_abs_error",
    "fit_rate", "RateFit",
]

_ASSIGN_CAP = 4096


@dataclass(frozen=True)
class SampleSet:
    """Validated bundle of n points in R^d."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("expected a non-empty (n, d) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]


def _flat(a):
    a = a.data if isinstance(a, SampleSet) else np.asarray(a, dtype=float)
    return a.reshape(-1)


def _points(a):
    # a flat vector is n scalar samples, not one n-dimensional point
    a = a.data if isinstance(a, SampleSet) else np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def w1_sorted(a, b):
    """Exact 1-d empirical Wasserstein-1 distance.

    Equal sizes reduce to the mean absolute difference of sorted samples;
    unequal sizes integrate the CDF gap over the merged grid.
    """
    x = np.sort(_flat(a))
    y = np.sort(_flat(b))
    if x.size == y.size:
        return float(np.mean(np.abs(x - y)))
    merged = np.sort(np.concatenate([x, y]))
    fa = np.searchsorted(x, merged[:-1], side="right") / x.size
    fb = np.searchsorted(y, merged[:-1], side="right") / y.size
    return float(np.sum(np.abs(fa - fb) * np.diff(merged)))


def w1_assignment(a, b):
    """Exact empirical Wasserstein-1 distance via optimal assignment.

    Both samples must have the same size n <= 4096; cost is the Euclidean
    distance.  In one dimension this agrees with w1_sorted.
    """
    x, y = _points(a), _points(b)
    if x.shape != y.shape:
        raise ValueError("samples must share shape (n, d)")
    if x.shape[0] > _ASSIGN_CAP:
        raise ValueError(f"assignment solver capped at n = {_ASSIGN_CAP}")
    cost = cdist(x, y)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def product_distance(x, y):
    """Block-sum ground metric on (R^d)^k: sum of per-block norms."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("points must share shape (k, d)")
    return float(np.linalg.norm(np.atleast_2d(x - y), axis=-1).sum())


def w1_blocks(a, b):
    """Exact transport distance between samples of product states.

    Inputs are (n, k, d) arrays; the cost of matching two k-tuples is the
    block-sum metric.  Same size cap as w1_assignment.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 3:
        raise ValueError("expected matching (n, k, d) arrays")
    n, k, _ = x.shape
    if n > _ASSIGN_CAP:
        raise ValueError(f"assignment solver capped at n = {_ASSIGN_CAP}")
    cost = np.zeros((n, n))
    for block in range(k):
        cost += cdist(x[:, block, :], y[:, block, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _edges_1d(pooled, bins, data_range, max_bins=4096):
    if isinstance(bins, (list, tuple, np.ndarray)):
        return np.asarray(bins, dtype=float)
    lo, hi = (data_range if data_range is not None
              else (pooled.min(), pooled.max()))
    if isinstance(bins, int):
        return np.linspace(lo, hi, bins + 1)
    # Freedman-Diaconis on the pooled sample; heavy tails are clipped to
    # inner quantiles if the raw rule explodes the bin count
    width = 2.0 * (np.quantile(pooled, 0.75) - np.quantile(pooled, 0.25)) \
        / pooled.size ** (1.0 / 3.0)
    if width <= 0:
        return np.linspace(lo, hi if hi > lo else lo + 1.0, 2)
    count = int(np.ceil((hi - lo) / width))
    if count > max_bins:
        lo, hi = np.quantile(pooled, [0.001, 0.999])
        count = min(max_bins, max(2, int(np.ceil((hi - lo) / width))))
    return np.linspace(lo, hi, count + 1)


def tv_histogram(a, b, bins="fd", data_range=None):
    """Histogram estimate of the diameter-2 total variation distance.

    Supports one- and two-dimensional samples.  Default binning is
    Freedman-Diaconis on the pooled sample; pass an int (with optional
    ``data_range``) or explicit edges for fixed bins.  Samples outside the
    edges are collected in overflow cells so both histograms keep total
    mass one and the estimate stays within [0, 2].
    """
    x, y = _points(a), _points(b)
    if x.shape[1] != y.shape[1]:
        raise ValueError("samples must share the ambient dimension")
    d = x.shape[1]
    if d > 2:
        raise ValueError("histogram TV supports d <= 2")
    pooled = np.concatenate([x, y], axis=0)
    if d == 1:
        edges = [_edges_1d(pooled[:, 0], bins, data_range)]
    else:
        if data_range is not None and np.ndim(data_range) == 1:
            data_range = (data_range, data_range)
        edges = [_edges_1d(pooled[:, axis], bins,
                           None if data_range is None else data_range[axis])
                 for axis in range(2)]
    padded = [np.concatenate([[-np.inf], e, [np.inf]]) for e in edges]
    pa, _ = np.histogramdd(x, bins=padded)
    pb, _ = np.histogramdd(y, bins=padded)
    return float(np.abs(pa / x.shape[0] - pb / y.shape[0]).sum())


def tv_from_merge(merge_fraction):
    """Coupling upper bound on the diameter-2 TV: 2 (1 - merged fraction)."""
    mf = np.asarray(merge_fraction, dtype=float)
    if np.any((mf < 0) | (mf > 1)):
        raise ValueError("merge fraction must lie in [0, 1]")
    out = 2.0 * (1.0 - mf)
    return out if out.ndim else float(out)


def mean_abs_error(sample, true_mean, size, reps, rng):
    """Mean absolute deviation of block means from the true mean.

    Args:
        sample: callable (n, rng) -> 1-d array of n iid draws.
        true_mean: exact mean of the law.
        size: block size N.
        reps: number of independent blocks averaged.
    """
    if reps < 1 or size < 1:
        raise ValueError("size and reps must be positive")
    errs = np.empty(reps)
    for i in range(reps):
        errs[i] = abs(np.mean(sample(size, rng)) - true_mean)
    return float(errs.mean())


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float


def fit_rate(sizes, values):
    """Least-squares slope of log(values) against log(sizes)."""
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.size != values.size or sizes.size < 4:
        raise ValueError("need at least four matching points")
    if np.any(sizes <= 0) or np.any(values <= 0):
        raise ValueError("log-log fit needs positive data")
    x = np.log(sizes)
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(x.size - 2, 1)
    denom = np.sum((x - x.mean()) ** 2)
    stderr = float(np.sqrt(resid @ resid / dof / denom))
    return RateFit(float(slope), float(intercept), stderr)
