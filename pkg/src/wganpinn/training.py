"""Adversarial physics-informed training loop.

The empirical objective couples a critic term (mean witness score of
generated boundary points minus observed boundary points) with a weighted
mean squared PDE residual.  The critic ascends its term under norm
constraints; the generator descends critic-plus-residual.  Both use
bias-corrected Adam and alternate n_critic:1 per round.  A full run is a
pure function of (config, seed).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from . import diffcore as dc
from . import networks as nets
from . import problems as probs


@dataclass
class TrainConfig:
    lam: float = 100.0
    m: int = 40
    n: int = 40
    k: int = 100
    latent_dim: int = 2
    gen_depth: int = 3
    gen_width: int = 50
    disc_depth: int = 3
    disc_width: int = 50
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    n_critic: int = 5
    iterations: int = 20_000
    seed: int = 0
    clip_bound: Optional[float] = None
    constraint_mode: str = "bjorck-then-projection"
    bjorck_steps: int = 5
    bjorck_order: int = 2
    batch_boundary: int = 200
    batch_interior: int = 500
    trace_every: int = 100

    def __post_init__(self):
        for name in ("m", "n", "k", "latent_dim", "n_critic", "iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def policy(self):
        return nets.ConstraintPolicy(self.constraint_mode, self.bjorck_steps, self.bjorck_order)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class LossBreakdown:
    critic_term: float
    pinn_term: float
    total: float

    @classmethod
    def compute(cls, critic_term, pinn_term, lam):
        return cls(critic_term, pinn_term, critic_term + lam * pinn_term)


@dataclass
class TrainResult:
    generator: nets.GeneratorNet
    discriminator: nets.DiscriminatorNet
    trace: list
    problem_name: str
    config: TrainConfig


class TrainingAbort(RuntimeError):
    """Raised when a non-finite gradient or loss appears."""

    def __init__(self, message, round_index=None):
        if round_index is not None:
            message = f"round {round_index}: {message}"
        super().__init__(message)
        self.round_index = round_index


def adam_update(params, grads, state, lr, beta1=0.9, beta2=0.99, eps=1e-8, maximize=False):
    """Standard bias-corrected Adam step, in place on ``params``."""
    state.t += 1
    sign = -1.0 if maximize else 1.0
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        K.adam_step(p, np.ascontiguousarray(g), m, v, state.t, lr, beta1, beta2, eps, sign)
    return params


def _check_finite_grads(grads, what):
    for g in grads:
        if not math.isfinite(K.sum_all(g)):
            raise TrainingAbort(f"non-finite gradient in {what}")


def _gen_points(g, batch):
    xz = np.concatenate((batch.bx_in, batch.z_in), axis=1)
    return g.forward_np(xz)


def empirical_loss(g, f, batch, lam, problem):
    """Critic term, residual term and their lam-weighted total (no tape)."""
    gen_u = _gen_points(g, batch)
    gen_scores = f.forward_np(np.concatenate((batch.bx_in, gen_u), axis=1))
    data_scores = f.forward_np(np.concatenate((batch.bx_t, batch.u_t), axis=1))
    critic = float(gen_scores.mean() - data_scores.mean())
    res = probs.residual(problem, g, batch.x_i, batch.z_i)
    pinn = float((res * res).mean())
    return LossBreakdown.compute(critic, pinn, lam)


def critic_step(f, g, batch, state, config, gen_u=None):
    """One Adam ascent step on the critic term, then constraint enforcement.

    Generator parameters are untouched; returns the critic term value seen
    by this step.  Mutates ``f`` and ``state``.
    """
    if gen_u is None:
        gen_u = _gen_points(g, batch)
    tape = dc.Tape()
    fb = f.bind(tape)
    gen_pts = tape.constant(np.concatenate((batch.bx_in, gen_u), axis=1))
    data_pts = tape.constant(np.concatenate((batch.bx_t, batch.u_t), axis=1))
    critic = dc.sub(dc.mean(fb.forward(gen_pts)), dc.mean(fb.forward(data_pts)))
    grads = dc.backward(tape, critic)
    glist = [grads.wrt(v) for v in fb.leaves()]
    _check_finite_grads(glist, "critic step")
    adam_update(f.params(), glist, state, config.lr, config.beta1, config.beta2, config.eps, maximize=True)
    nets.enforce_constraints(f, config.policy())
    return float(critic.value)


def generator_step(g, f, batch, state, config, problem):
    """One Adam descent step on mean critic score plus lam * residual term.

    Mutates ``g`` and ``state``; applies weight clipping when enabled.
    Returns (objective, pinn_term) for this step's batch.
    """
    tape = dc.Tape()
    gb = g.bind(tape)
    fb = f.bind(tape, trainable=False)
    gen_out = gb.forward(np.concatenate((batch.bx_in, batch.z_in), axis=1))
    pts = dc.concat_cols(tape.constant(batch.bx_in), gen_out)
    critic_part = dc.mean(fb.forward(pts))
    res = probs.residual_with_binding(problem, gb, batch.x_i, batch.z_i, tape.constant(batch.b_i))
    pinn = dc.mean(dc.square(res))
    objective = dc.add(critic_part, dc.scale(pinn, config.lam))
    grads = dc.backward(tape, objective)
    glist = [grads.wrt(v) for v in gb.leaves()]
    _check_finite_grads(glist, "generator step")
    adam_update(g.params(), glist, state, config.lr, config.beta1, config.beta2, config.eps)
    if g.clip_bound is not None:
        nets.clip_generator(g)
    return float(objective.value), float(pinn.value)


class _Minibatcher:
    """Without-replacement epoch walker over row indices."""

    def __init__(self, total, batch, rng):
        self.total = total
        self.batch = min(batch, total) if batch > 0 else total
        self.rng = rng
        self._order = np.arange(total)
        self._pos = total  # force initial shuffle

    def next_indices(self):
        if self.batch >= self.total:
            return None  # full batch, no slicing
        if self._pos + self.batch > self.total:
            self.rng.shuffle(self._order)
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch]
        self._pos += self.batch
        return idx


def _build_nets(problem, config, g_rng, f_rng):
    d = problem.spatial_dim
    r = problem.output_dim
    g = nets.GeneratorNet.build(d + config.latent_dim, r, config.gen_depth, config.gen_width, config.clip_bound)
    f = nets.DiscriminatorNet.build(d + r, config.disc_depth, config.disc_width)
    nets.init_parameters(g, g_rng)
    nets.init_parameters(f, f_rng)
    nets.enforce_constraints(f, config.policy())
    return g, f


def train(problem, config):
    """Run the alternating optimization; deterministic given config.seed.

    Per round: refresh latent draws, take n_critic critic steps on the
    round's batch, then one generator step.  A LossBreakdown over the full
    training set is recorded every trace_every rounds.
    """
    if isinstance(problem, str):
        problem = probs.make_problem(problem)
    data_rng, g_rng, f_rng, z_rng, mb_rng = dc.rng_streams(config.seed, 5)
    full = probs.sample_batch(problem, config.m, config.n, config.k, config.latent_dim, data_rng)
    g, f = _build_nets(problem, config, g_rng, f_rng)
    g_state = AdamState.for_params(g.params())
    f_state = AdamState.for_params(f.params())

    mb_in = _Minibatcher(config.m, config.batch_boundary, mb_rng)
    mb_t = _Minibatcher(config.n, config.batch_boundary, mb_rng)
    mb_i = _Minibatcher(config.k, config.batch_interior, mb_rng)

    trace = []
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext as threadpool_limits  # type: ignore

    with threadpool_limits(limits=1):
        for rnd in range(1, config.iterations + 1):
            try:
                idx_in = mb_in.next_indices()
                idx_t = mb_t.next_indices()
                idx_i = mb_i.next_indices()
                bx_in = full.bx_in if idx_in is None else full.bx_in[idx_in]
                x_i = full.x_i if idx_i is None else full.x_i[idx_i]
                step = probs.SampleBatch(
                    bx_in,
                    z_rng.standard_normal((bx_in.shape[0], config.latent_dim)),
                    full.bx_t if idx_t is None else full.bx_t[idx_t],
                    full.u_t if idx_t is None else full.u_t[idx_t],
                    x_i,
                    z_rng.standard_normal((x_i.shape[0], config.latent_dim)),
                    full.b_i if idx_i is None else full.b_i[idx_i],
                )

                gen_u = _gen_points(g, step)
                for _ in range(config.n_critic):
                    critic_step(f, g, step, f_state, config, gen_u=gen_u)
                generator_step(g, f, step, g_state, config, problem)
            except TrainingAbort as exc:
                raise TrainingAbort(str(exc), round_index=rnd) from None

            if rnd % config.trace_every == 0 or rnd == config.iterations:
                full.z_in = z_rng.standard_normal((config.m, config.latent_dim))
                full.z_i = z_rng.standard_normal((config.k, config.latent_dim))
                breakdown = empirical_loss(g, f, full, config.lam, problem)
                if not (math.isfinite(breakdown.critic_term) and math.isfinite(breakdown.pinn_term)):
                    raise TrainingAbort("non-finite loss", round_index=rnd)
                trace.append((rnd, breakdown))

    return TrainResult(g, f, trace, problem.name, config)


def write_trace_csv(trace, path, header_lines=()):
    """round, critic_term, pinn_term, total; full round-trip float format."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["round", "critic_term", "pinn_term", "total"])
        for rnd, b in trace:
            w.writerow([rnd, repr(b.critic_term), repr(b.pinn_term), repr(b.total)])
