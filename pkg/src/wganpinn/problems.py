"""Benchmark problem definitions: residuals, domains, samplers, noise.

Each problem bundles a box domain, weighted boundary segments with their
noise models, the differential operator assembled from directional jets,
the interior right-hand side b(x), and a deterministic reference solution.
Residual = (operator applied to the candidate) - b; for the deterministic
reference this vanishes identically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffcore as dc
from . import oracles

PI = np.pi


@dataclass(frozen=True)
class NoiseModel:
    """Law of the boundary observation u at a sampled boundary point.

    kinds:
      gaussian-boundary         u = base(x) + sigma * eps
      spatially-scaled-gaussian u = base(x) + sigma * eps * scale(x)
      shifted-sine              d = sigma * eps * scale(x);
                                u = -sin(pi (x0 + d)) + d
    with eps ~ N(0,1) drawn independently per row; sigma = 0 reproduces the
    deterministic condition exactly.
    """

    kind: str
    sigma: float
    base: Callable
    scale: Optional[Callable] = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind not in ("gaussian-boundary", "spatially-scaled-gaussian", "shifted-sine"):
            raise ValueError(f"unknown noise kind {self.kind!r}")

    def deterministic(self, xs):
        xs = np.atleast_2d(xs)
        if self.kind == "shifted-sine":
            return -np.sin(PI * xs[:, 0])
        return self.base(xs)

    def sample(self, xs, rng):
        xs = np.atleast_2d(xs)
        eps = rng.standard_normal(xs.shape[0])
        if self.kind == "gaussian-boundary":
            return self.base(xs) + self.sigma * eps
        if self.kind == "spatially-scaled-gaussian":
            return self.base(xs) + self.sigma * eps * self.scale(xs)
        delta = self.sigma * eps * self.scale(xs)
        return -np.sin(PI * (xs[:, 0] + delta)) + delta


@dataclass(frozen=True)
class Segment:
    """One piece of the boundary; ``fixed`` pins coordinates by index."""

    name: str
    weight: float
    fixed: tuple
    noise: NoiseModel


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    spatial_dim: int
    output_dim: int
    coord_names: tuple
    bounds: tuple  # ((lo, hi), ...) per coordinate
    segments: tuple
    jet_dirs: tuple  # ((axis, order), ...), order-2 axes first
    assemble: Callable  # (value, {axis: (d1, d2)}) -> operator value
    rhs: Callable  # X (k,d) -> (k,1)
    reference: Callable  # X (N,d) -> (N,1)

    def direction(self, axis):
        v = np.zeros(self.spatial_dim)
        v[axis] = 1.0
        return v


@dataclass
class SampleBatch:
    """Empirical data for one training set.

    boundary inputs (m rows), boundary targets (n rows), interior (k rows).
    """

    bx_in: np.ndarray
    z_in: np.ndarray
    bx_t: np.ndarray
    u_t: np.ndarray
    x_i: np.ndarray
    z_i: np.ndarray
    b_i: np.ndarray


@dataclass(frozen=True)
class AnalyticProbe:
    """Closed-form candidate solution supplying its own jets.

    ``spatial_dim`` lets the probe stand in for a generator on concatenated
    (x, z) rows: the latent columns are ignored.
    """

    fn: Callable  # X -> (N,)
    d1: Callable  # (X, axis) -> (N,)
    d2: Optional[Callable] = None  # (X, axis) -> (N,)
    spatial_dim: Optional[int] = None

    def forward_np(self, xz):
        if self.spatial_dim is None:
            raise ValueError("probe needs spatial_dim to act as a generator")
        xz = np.atleast_2d(xz)
        return np.asarray(self.fn(xz[:, : self.spatial_dim]), dtype=np.float64).reshape(-1, 1)

    def jets(self, X, jet_dirs):
        X = np.atleast_2d(X)
        value = np.asarray(self.fn(X), dtype=np.float64).reshape(-1, 1)
        jets = {}
        for axis, order in jet_dirs:
            d1 = np.asarray(self.d1(X, axis), dtype=np.float64).reshape(-1, 1)
            d2 = None
            if order >= 2:
                if self.d2 is None:
                    raise ValueError("probe has no second derivatives")
                d2 = np.asarray(self.d2(X, axis), dtype=np.float64).reshape(-1, 1)
            jets[axis] = (d1, d2)
        return value, jets


# ---------------------------------------------------------------------------
# Residual evaluation.


def _split_bundle_tape(bundle, B, jet_dirs):
    value = dc.jet_channel(bundle, B, 0)
    jets, idx = {}, 1
    for axis, order in jet_dirs:
        d1 = dc.jet_channel(bundle, B, idx)
        idx += 1
        d2 = None
        if order >= 2:
            d2 = dc.jet_channel(bundle, B, idx)
            idx += 1
        jets[axis] = (d1, d2)
    return value, jets


def residual_with_binding(problem, binding, X, Z, b_const):
    """Tape residual using an existing generator binding (shared leaves)."""
    dirs = [problem.direction(axis) for axis, _ in problem.jet_dirs]
    orders = [order for _, order in problem.jet_dirs]
    bundle, B = binding.jets(X, Z, dirs, orders)
    value, jets = _split_bundle_tape(bundle, B, problem.jet_dirs)
    return dc.sub(problem.assemble(value, jets), b_const)


def residual(problem, source, X, Z=None, tape=None):
    """operator(source) - b at interior points X; Var on a tape, else array.

    ``source`` is a GeneratorNet (jets by propagation) or an AnalyticProbe
    (jets in closed form; Z ignored).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if isinstance(source, AnalyticProbe):
        value, jets = source.jets(X, problem.jet_dirs)
        return problem.assemble(value, jets) - problem.rhs(X)
    if tape is not None:
        return residual_with_binding(
            problem, source.bind(tape), X, Z, tape.constant(problem.rhs(X))
        )
    dirs = [problem.direction(axis) for axis, _ in problem.jet_dirs]
    orders = [order for _, order in problem.jet_dirs]
    bundle, B = dc.jet_forward_np(source.weights, source.biases, X, Z, dirs, orders)
    value = bundle[:B]
    jets, idx = {}, 1
    for axis, order in problem.jet_dirs:
        jets[axis] = (
            bundle[idx * B : (idx + 1) * B],
            bundle[(idx + 1) * B : (idx + 2) * B] if order >= 2 else None,
        )
        idx += 2 if order >= 2 else 1
    return problem.assemble(value, jets) - problem.rhs(X)


def residual_ode(g, x, z=None, tape=None):
    """u_xx - u^2 u_x - f(x) for the nonlinear two-point problem."""
    X = np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(-1, 1)
    return residual(make_problem("ode"), g, X, z, tape)


def residual_heat(g, x, t, z=None, tape=None):
    X = np.column_stack([np.atleast_1d(x), np.atleast_1d(t)])
    return residual(make_problem("heat"), g, X, z, tape)


def residual_burgers(g, x, t, z=None, tape=None):
    X = np.column_stack([np.atleast_1d(x), np.atleast_1d(t)])
    return residual(make_problem("burgers"), g, X, z, tape)


def residual_allen_cahn(g, x, y, z=None, tape=None):
    X = np.column_stack([np.atleast_1d(x), np.atleast_1d(y)])
    return residual(make_problem("allen-cahn"), g, X, z, tape)


# ---------------------------------------------------------------------------
# Problem factories.


def _ode_rhs(X):
    x = X[:, 0]
    f = -PI**2 * np.sin(PI * x) - PI * np.cos(PI * x) * np.sin(PI * x) ** 2
    return f.reshape(-1, 1)


def manufactured_ac_rhs(x, y):
    """Forcing that makes sin(pi x) sin(pi y) solve the Allen-Cahn form."""
    u = np.sin(PI * x) * np.sin(PI * y)
    grad_sq = (PI * np.cos(PI * x) * np.sin(PI * y)) ** 2 + (PI * np.sin(PI * x) * np.cos(PI * y)) ** 2
    return 0.01 * grad_sq + u * (u**2 - 1.0)


HEAT_NU = 1.0 / PI**2
BURGERS_NU = 0.01 / PI
AC_MOBILITY = 0.01


def _zero_base(xs):
    return np.zeros(xs.shape[0])


def make_problem(name, sigma=0.0):
    """Benchmark registry; sigma is a scalar or per-segment sequence."""
    if name in ("ode", "exp1"):
        s = _expand_sigma(sigma, 2)
        segments = (
            Segment("left", 0.5, ((0, -1.0),), NoiseModel("gaussian-boundary", s[0], _zero_base)),
            Segment("right", 0.5, ((0, 1.0),), NoiseModel("gaussian-boundary", s[1], _zero_base)),
        )

        def assemble(value, jets):
            d1, d2 = jets[0]
            return d2 - (value * value) * d1

        return ProblemSpec(
            name="ode",
            spatial_dim=1,
            output_dim=1,
            coord_names=("x",),
            bounds=((-1.0, 1.0),),
            segments=segments,
            jet_dirs=((0, 2),),
            assemble=assemble,
            rhs=_ode_rhs,
            reference=lambda X: np.sin(PI * np.atleast_2d(X)[:, 0]).reshape(-1, 1),
        )

    if name == "heat":
        s = _expand_sigma(sigma, 1)
        ic = NoiseModel(
            "spatially-scaled-gaussian",
            s[0],
            base=lambda xs: np.sin(PI * xs[:, 0]),
            scale=lambda xs: np.exp(1.0 - 3.0 * np.abs(xs[:, 0])),
        )
        segments = (
            Segment("initial", 0.5, ((1, 0.0),), ic),
            Segment("left", 0.25, ((0, -1.0),), NoiseModel("gaussian-boundary", 0.0, _zero_base)),
            Segment("right", 0.25, ((0, 1.0),), NoiseModel("gaussian-boundary", 0.0, _zero_base)),
        )

        def assemble(value, jets):
            d1x, d2x = jets[0]
            d1t, _ = jets[1]
            return d2x * HEAT_NU - d1t

        return ProblemSpec(
            name="heat",
            spatial_dim=2,
            output_dim=1,
            coord_names=("x", "t"),
            bounds=((-1.0, 1.0), (0.0, 1.0)),
            segments=segments,
            jet_dirs=((0, 2), (1, 1)),
            assemble=assemble,
            rhs=lambda X: np.zeros((X.shape[0], 1)),
            reference=lambda X: (
                np.sin(PI * np.atleast_2d(X)[:, 0]) * np.exp(-np.atleast_2d(X)[:, 1])
            ).reshape(-1, 1),
        )

    if name == "burgers":
        s = _expand_sigma(sigma, 1)
        ic = NoiseModel(
            "shifted-sine",
            s[0],
            base=lambda xs: -np.sin(PI * xs[:, 0]),
            scale=lambda xs: np.exp(-3.0 * np.abs(xs[:, 0])),
        )
        segments = (
            Segment("initial", 0.5, ((1, 0.0),), ic),
            Segment("left", 0.25, ((0, -1.0),), NoiseModel("gaussian-boundary", 0.0, _zero_base)),
            Segment("right", 0.25, ((0, 1.0),), NoiseModel("gaussian-boundary", 0.0, _zero_base)),
        )

        def assemble(value, jets):
            d1x, d2x = jets[0]
            d1t, _ = jets[1]
            return d1t + value * d1x - d2x * BURGERS_NU

        def reference(X):
            X = np.atleast_2d(X)
            return oracles.burgers_reference(X[:, 0], X[:, 1]).reshape(-1, 1)

        return ProblemSpec(
            name="burgers",
            spatial_dim=2,
            output_dim=1,
            coord_names=("x", "t"),
            bounds=((-1.0, 1.0), (0.0, 1.0)),
            segments=segments,
            jet_dirs=((0, 2), (1, 1)),
            assemble=assemble,
            rhs=lambda X: np.zeros((X.shape[0], 1)),
            reference=reference,
        )

    if name in ("allen-cahn", "allen_cahn", "ac"):
        s = _expand_sigma(sigma, 4)
        segments = tuple(
            Segment(nm, 0.25, fx, NoiseModel("gaussian-boundary", sv, _zero_base))
            for nm, fx, sv in (
                ("bottom", ((1, -1.0),), s[0]),
                ("top", ((1, 1.0),), s[1]),
                ("left", ((0, -1.0),), s[2]),
                ("right", ((0, 1.0),), s[3]),
            )
        )

        def assemble(value, jets):
            d1x, _ = jets[0]
            d1y, _ = jets[1]
            vsq = value * value
            return (d1x * d1x + d1y * d1y) * AC_MOBILITY + value * (vsq - 1.0)

        def rhs(X):
            X = np.atleast_2d(X)
            return manufactured_ac_rhs(X[:, 0], X[:, 1]).reshape(-1, 1)

        return ProblemSpec(
            name="allen-cahn",
            spatial_dim=2,
            output_dim=1,
            coord_names=("x", "y"),
            bounds=((-1.0, 1.0), (-1.0, 1.0)),
            segments=segments,
            jet_dirs=((0, 1), (1, 1)),
            assemble=assemble,
            rhs=rhs,
            reference=lambda X: (
                np.sin(PI * np.atleast_2d(X)[:, 0]) * np.sin(PI * np.atleast_2d(X)[:, 1])
            ).reshape(-1, 1),
        )

    raise ValueError(f"unknown problem {name!r}")


PROBLEM_NAMES = ("ode", "heat", "burgers", "allen-cahn")


def _expand_sigma(sigma, count):
    if np.isscalar(sigma):
        return [float(sigma)] * count
    sigma = list(sigma)
    if len(sigma) != count:
        raise ValueError(f"expected {count} sigma values, got {len(sigma)}")
    return [float(s) for s in sigma]


def reference_probe(name):
    """AnalyticProbe of the deterministic exact solution (ode/heat/allen-cahn)."""
    if name == "ode":
        return AnalyticProbe(
            fn=lambda X: np.sin(PI * X[:, 0]),
            d1=lambda X, ax: PI * np.cos(PI * X[:, 0]),
            d2=lambda X, ax: -PI**2 * np.sin(PI * X[:, 0]),
            spatial_dim=1,
        )
    if name == "heat":
        return AnalyticProbe(
            fn=lambda X: np.sin(PI * X[:, 0]) * np.exp(-X[:, 1]),
            d1=lambda X, ax: (
                PI * np.cos(PI * X[:, 0]) * np.exp(-X[:, 1])
                if ax == 0
                else -np.sin(PI * X[:, 0]) * np.exp(-X[:, 1])
            ),
            d2=lambda X, ax: (
                -PI**2 * np.sin(PI * X[:, 0]) * np.exp(-X[:, 1])
                if ax == 0
                else np.sin(PI * X[:, 0]) * np.exp(-X[:, 1])
            ),
            spatial_dim=2,
        )
    if name in ("allen-cahn", "allen_cahn", "ac"):
        return AnalyticProbe(
            fn=lambda X: np.sin(PI * X[:, 0]) * np.sin(PI * X[:, 1]),
            d1=lambda X, ax: (
                PI * np.cos(PI * X[:, 0]) * np.sin(PI * X[:, 1])
                if ax == 0
                else PI * np.sin(PI * X[:, 0]) * np.cos(PI * X[:, 1])
            ),
            spatial_dim=2,
        )
    raise ValueError(f"no closed-form probe for {name!r}")


# ---------------------------------------------------------------------------
# Sampling.


def segment_counts(problem, total):
    """Split ``total`` across segments by weight; deterministic remainders."""
    weights = np.array([s.weight for s in problem.segments])
    weights = weights / weights.sum()
    raw = weights * total
    counts = np.floor(raw).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    for i in range(remainder):
        counts[order[i]] += 1
    return counts


def _sample_segment_x(problem, segment, count, rng):
    X = np.empty((count, problem.spatial_dim))
    fixed = dict(segment.fixed)
    for axis in range(problem.spatial_dim):
        if axis in fixed:
            X[:, axis] = fixed[axis]
        else:
            lo, hi = problem.bounds[axis]
            X[:, axis] = rng.uniform(lo, hi, size=count)
    return X


def sample_boundary(problem, count, rng, latent_dim=None):
    """Boundary rows, equal-weighted across segments per the problem split.

    With latent_dim set, returns generator inputs (x, z) with z ~ N(0, I);
    otherwise returns observed targets (x, u) with u drawn per segment noise.
    """
    counts = segment_counts(problem, count)
    xs, seconds = [], []
    for segment, c in zip(problem.segments, counts):
        if c == 0:
            continue
        X = _sample_segment_x(problem, segment, c, rng)
        xs.append(X)
        if latent_dim is None:
            seconds.append(segment.noise.sample(X, rng).reshape(-1, 1))
        else:
            seconds.append(rng.standard_normal((c, latent_dim)))
    return np.concatenate(xs, axis=0), np.concatenate(seconds, axis=0)


def sample_interior(problem, k, rng, latent_dim=2):
    """Interior rows (x, z, b(x)); x uniform on the domain box."""
    lo = np.array([b[0] for b in problem.bounds])
    hi = np.array([b[1] for b in problem.bounds])
    X = rng.uniform(lo, hi, size=(k, problem.spatial_dim))
    Z = rng.standard_normal((k, latent_dim))
    return X, Z, problem.rhs(X)


def sample_batch(problem, m, n, k, latent_dim, rng):
    bx_in, z_in = sample_boundary(problem, m, rng, latent_dim=latent_dim)
    bx_t, u_t = sample_boundary(problem, n, rng)
    x_i, z_i, b_i = sample_interior(problem, k, rng, latent_dim)
    return SampleBatch(bx_in, z_in, bx_t, u_t, x_i, z_i, b_i)


def export_batch_csv(batch, problem, directory):
    """Write the batch as three CSVs with coordinate headers."""
    import os

    names = list(problem.coord_names)
    zcols = [f"z{i}" for i in range(batch.z_in.shape[1])]
    os.makedirs(directory, exist_ok=True)

    def _write(path, header, rows):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    _write(
        os.path.join(directory, "boundary_inputs.csv"),
        names + zcols,
        np.column_stack([batch.bx_in, batch.z_in]).tolist(),
    )
    _write(
        os.path.join(directory, "boundary_targets.csv"),
        names + ["u"],
        np.column_stack([batch.bx_t, batch.u_t]).tolist(),
    )
    _write(
        os.path.join(directory, "interior.csv"),
        names + zcols + ["b"],
        np.column_stack([batch.x_i, batch.z_i, batch.b_i]).tolist(),
    )
