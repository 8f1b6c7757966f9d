"""Evaluation metrics: exact empirical W1, relative L2 error, slice stats.

The Wasserstein-1 distance between equal-size empirical measures is a
minimum-cost perfect matching; it is solved exactly with the assignment
solver (O(N^3) worst case) up to a configurable size cap.  Above the cap an
entropically regularized estimate is available and is always labelled
approximate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

EXACT_W1_CAP = 4096


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted samples, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            raise ValueError("empirical measure needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("empirical measure has non-finite entries")
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]


@dataclass
class SliceStats:
    location: np.ndarray
    mean: float
    std: float
    bin_edges: np.ndarray
    counts: np.ndarray


@dataclass
class SlopeFit:
    predictor: str
    slope: float
    intercept: float
    r_squared: float


def _as_measure(p):
    return p if isinstance(p, EmpiricalMeasure) else EmpiricalMeasure(p)


def _pair_counts(p, q, rng):
    """Equalize sample counts by subsampling the larger set."""
    if p.n == q.n:
        return p.points, q.points
    rng = rng or np.random.default_rng(0)
    a, b = p.points, q.points
    if p.n > q.n:
        a = a[rng.choice(p.n, size=q.n, replace=False)]
    else:
        b = b[rng.choice(q.n, size=p.n, replace=False)]
    return a, b


def wasserstein1_exact(p, q, cap=EXACT_W1_CAP, rng=None):
    """Exact empirical W1: min over perfect matchings of mean pair distance.

    The operand order is canonicalized before solving so the result is
    exactly symmetric.  Unequal sample counts are resolved by subsampling
    the larger set.  Raises for sizes above ``cap`` (use the approximate
    path there).
    """
    a, b = _pair_counts(_as_measure(p), _as_measure(q), rng)
    n = a.shape[0]
    if n > cap:
        raise ValueError(f"N={n} exceeds exact-solver cap {cap}; use wasserstein1_entropic")
    if a.tobytes() > b.tobytes():
        a, b = b, a
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def wasserstein1_1d(p, q):
    """Scalar fast path: mean absolute difference of sorted samples."""
    a = np.sort(np.asarray(p, dtype=np.float64).ravel())
    b = np.sort(np.asarray(q, dtype=np.float64).ravel())
    if a.shape != b.shape:
        raise ValueError("wasserstein1_1d needs equal sample counts")
    return float(np.abs(a - b).mean())


def wasserstein1_entropic(p, q, epsilon=None, iterations=500, rng=None):
    """Sinkhorn estimate of W1; labelled approximate, never used in gates."""
    a, b = _pair_counts(_as_measure(p), _as_measure(q), rng)
    n = a.shape[0]
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    if epsilon is None:
        epsilon = 0.01 * np.median(cost)
    epsilon = max(epsilon, 1e-12)
    log_kernel = -cost / epsilon
    log_u = np.zeros(n)
    log_v = np.zeros(n)
    log_w = -np.log(n)
    for _ in range(iterations):
        log_u = log_w - _logsumexp_rows(log_kernel + log_v[None, :])
        log_v = log_w - _logsumexp_rows((log_kernel + log_u[:, None]).T)
    plan = np.exp(log_kernel + log_u[:, None] + log_v[None, :])
    return float((plan * cost).sum())


def _logsumexp_rows(m):
    mx = m.max(axis=1, keepdims=True)
    return (mx + np.log(np.exp(m - mx).sum(axis=1, keepdims=True))).ravel()


def relative_l2_error(mean_values, reference_values):
    """Eq.-style relative L2 error between mean prediction and reference."""
    mu = np.asarray(mean_values, dtype=np.float64).ravel()
    ref = np.asarray(reference_values, dtype=np.float64).ravel()
    if mu.shape != ref.shape:
        raise ValueError("mean and reference grids differ in size")
    denom = np.sqrt((ref * ref).sum())
    if denom == 0.0:
        raise ValueError("reference norm is zero; relative error undefined")
    return float(np.sqrt(((mu - ref) ** 2).sum()) / denom)


def generator_mean_on_grid(g, grid_x, z_count, rng, chunk=200_000):
    """mu(x_i) = average of g(x_i, z_j) over shared latent draws."""
    grid_x = np.atleast_2d(grid_x)
    latent = g.input_dim - grid_x.shape[1]
    zs = rng.standard_normal((z_count, latent))
    total = np.zeros((grid_x.shape[0], 1))
    rows_per_chunk = max(1, chunk // max(1, z_count))
    for start in range(0, grid_x.shape[0], rows_per_chunk):
        xs = grid_x[start : start + rows_per_chunk]
        rep_x = np.repeat(xs, z_count, axis=0)
        rep_z = np.tile(zs, (xs.shape[0], 1))
        out = g.forward_np(np.concatenate((rep_x, rep_z), axis=1))
        total[start : start + rows_per_chunk] = out.reshape(xs.shape[0], z_count).mean(axis=1, keepdims=True)
    return total


def relative_l2_error_on_grid(g, reference, grid_x, z_count, rng):
    mu = generator_mean_on_grid(g, grid_x, z_count, rng)
    return relative_l2_error(mu, reference(grid_x))


def slice_statistics(g, x_loc, z_count, rng, bins=40):
    """Mean/std/histogram of g(x_loc, z) over z draws at one location."""
    if z_count < 1:
        raise ValueError("z_count must be >= 1")
    x_loc = np.atleast_1d(np.asarray(x_loc, dtype=np.float64))
    latent = g.input_dim - x_loc.size
    zs = rng.standard_normal((z_count, latent))
    xs = np.broadcast_to(x_loc, (z_count, x_loc.size))
    vals = g.forward_np(np.concatenate((xs, zs), axis=1)).ravel()
    mean = float(vals.mean())
    std = float(vals.std())
    half = max(4.0 * std, 1e-12)
    edges = np.linspace(mean - half, mean + half, bins + 1)
    counts, _ = np.histogram(np.clip(vals, edges[0], edges[-1]), bins=edges)
    return SliceStats(x_loc, mean, std, edges, counts)


def fit_loglog_slope(pairs, predictor="m"):
    """Least-squares line for the decay-rate checks.

    Predictor values are log-transformed except for the depth predictor
    "D_f"; losses are always log-transformed.  Non-positive losses are
    dropped with a warning; at least 4 surviving points are required.
    """
    xs, ys = [], []
    for value, loss in pairs:
        if loss <= 0.0:
            warnings.warn(f"dropping non-positive loss {loss} at {predictor}={value}")
            continue
        xs.append(float(value) if predictor == "D_f" else np.log(float(value)))
        ys.append(np.log(float(loss)))
    if len(xs) < 4:
        raise ValueError(f"need >= 4 usable sweep points, got {len(xs)}")
    xs = np.array(xs)
    ys = np.array(ys)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = ((ys - pred) ** 2).sum()
    ss_tot = ((ys - ys.mean()) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(predictor, float(slope), float(intercept), float(r2))


def histogram_to_csv(stats, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in zip(stats.bin_edges[:-1], stats.bin_edges[1:], stats.counts):
            w.writerow([repr(float(left)), repr(float(right)), int(count)])
