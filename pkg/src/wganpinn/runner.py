"""Experiment engine behind the CLI: run, evaluate, sweep, oracle tasks.

Every output file records the config hash and the seed that produced it.
Sweeps fan out over a process pool; each run owns its RNG substreams and
writes into its own directory, so there is no shared mutable state.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from . import metrics as mx
from . import networks as nets
from . import oracles
from . import problems as probs
from . import training as tr
from .diffcore import rng_streams

WORKERS_ENV = "WGANPINN_WORKERS"


def resolve_workers(requested):
    """CLI --workers, overridden by the WGANPINN_WORKERS environment var."""
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        return max(1, int(env))
    return max(1, int(requested))


def derived_seed(base, *path):
    """Deterministic child seed for (repeat index, sweep index, ...)."""
    return int(np.random.SeedSequence(entropy=int(base), spawn_key=tuple(int(p) for p in path)).generate_state(1)[0])


def eval_grid(problem, nodes):
    axes = [np.linspace(lo, hi, int(n)) for (lo, hi), n in zip(problem.bounds, nodes)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def evaluate_model(g, cfg, eval_seed):
    """W1 on fresh boundary joints, residual term, relative error, slices."""
    problem = probs.make_problem(cfg.problem, cfg.sigma)
    s_data, s_gen, s_int, s_grid, s_slice, s_sub = rng_streams(eval_seed, 6)

    n = cfg.eval.w1_samples
    bx_t, u_t = probs.sample_boundary(problem, n, s_data)
    bx_g, z_g = probs.sample_boundary(problem, n, s_gen, latent_dim=cfg.train.latent_dim)
    gen_u = g.forward_np(np.concatenate((bx_g, z_g), axis=1))
    data_pts = np.concatenate((bx_t, u_t), axis=1)
    gen_pts = np.concatenate((bx_g, gen_u), axis=1)
    w1 = mx.wasserstein1_exact(gen_pts, data_pts, rng=s_sub)

    x_i, z_i, b_i = probs.sample_interior(problem, cfg.eval.residual_samples, s_int, cfg.train.latent_dim)
    res = probs.residual(problem, g, x_i, z_i)
    residual_mse = float((res * res).mean())

    grid = eval_grid(problem, cfg.grid())
    rel = mx.relative_l2_error_on_grid(
        g, probs.make_problem(cfg.problem).reference, grid, cfg.eval.z_count, s_grid
    )

    slices = []
    for loc in cfg.slice_locations():
        st = mx.slice_statistics(g, loc, cfg.eval.slice_z_count, s_slice)
        slices.append({"location": list(loc), "mean": st.mean, "std": st.std})

    lam = cfg.train.lam
    return {
        "w1_boundary": w1,
        "residual_mse": residual_mse,
        "loss": w1 + lam * residual_mse,
        "relative_error": rel,
        "slices": slices,
    }


def run_training(cfg, out_dir=None, seed=None, eval_seed=None):
    """Train once and (optionally) write the artifact set into out_dir."""
    train_cfg = cfg.train if seed is None else replace(cfg.train, seed=seed)
    problem = probs.make_problem(cfg.problem, cfg.sigma)
    result = tr.train(problem, train_cfg)
    chash = cfgmod.config_hash(cfg)
    if eval_seed is None:
        eval_seed = derived_seed(train_cfg.seed, 0xEA)
    metrics = evaluate_model(result.generator, cfg, eval_seed)
    metrics.update({"config_hash": chash, "seed": train_cfg.seed, "eval_seed": eval_seed})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        snapshot = cfgmod.dumps(replace(cfg, train=train_cfg))
        with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
            fh.write(f"# config_hash: {chash}\n# seed: {train_cfg.seed}\n" + snapshot)
        nets.save_checkpoint(
            os.path.join(out_dir, "checkpoint.json"),
            {"generator": result.generator, "discriminator": result.discriminator},
            meta={"config_hash": chash, "seed": train_cfg.seed, "problem": problem.name},
        )
        tr.write_trace_csv(
            result.trace,
            os.path.join(out_dir, "loss_trace.csv"),
            header_lines=[f"config_hash: {chash}", f"seed: {train_cfg.seed}"],
        )
        cfgmod.dump_json_17g(metrics, os.path.join(out_dir, "metrics.json"))
    return result, metrics


def evaluate_checkpoint(checkpoint_path, cfg, eval_seed, out_path=None):
    loaded, meta = nets.load_checkpoint(checkpoint_path)
    g = loaded.get("generator")
    if g is None:
        raise ValueError("checkpoint has no generator")
    problem = probs.make_problem(cfg.problem, cfg.sigma)
    expect_in = problem.spatial_dim + cfg.train.latent_dim
    expect_shapes = (cfg.train.gen_depth, cfg.train.gen_width, expect_in, problem.output_dim)
    found = (g.depth, g.width, g.input_dim, g.output_dim)
    if found != expect_shapes:
        raise ValueError(
            f"architecture mismatch: config expects (depth,width,in,out)={expect_shapes}, "
            f"checkpoint has {found}"
        )
    metrics = evaluate_model(g, cfg, eval_seed)
    metrics.update(
        {"config_hash": cfgmod.config_hash(cfg), "seed": meta.get("seed"), "eval_seed": eval_seed}
    )
    if out_path is not None:
        cfgmod.dump_json_17g(metrics, out_path)
    return metrics


# -- sweep ------------------------------------------------------------------

_SWEEP_SETTERS = {
    "m": lambda t, v: replace(t, m=int(v), n=int(v)),  # paper pairs m with n
    "n": lambda t, v: replace(t, n=int(v)),
    "k": lambda t, v: replace(t, k=int(v)),
    "W_f": lambda t, v: replace(t, disc_width=int(v)),
    "D_f": lambda t, v: replace(t, disc_depth=int(v)),
    "W_g": lambda t, v: replace(t, gen_width=int(v)),
    "D_g": lambda t, v: replace(t, gen_depth=int(v)),
    "lambda": lambda t, v: replace(t, lam=float(v)),
}


def apply_sweep_value(cfg, key, value):
    if key == "sigma":
        return replace(cfg, sigma=float(value))
    return replace(cfg, train=_SWEEP_SETTERS[key](cfg.train, value))


def _sweep_task(args):
    cfg_dict, key, value, vi, rep = args
    cfg = cfgmod.from_dict(cfg_dict)
    cfg = replace(cfg, sweep=None)
    cfg = apply_sweep_value(cfg, key, value)
    seed = derived_seed(cfg.train.seed, vi, rep)
    try:
        _, metrics = run_training(cfg, out_dir=None, seed=seed)
        return (vi, rep, metrics, None)
    except Exception as exc:  # recorded per value; the sweep continues
        return (vi, rep, None, f"{type(exc).__name__}: {exc}")


def run_sweep(cfg, workers=1, out_dir=None, progress=None):
    """repeat x len(values) trainings; per-value averages plus a slope fit."""
    if cfg.sweep is None:
        raise cfgmod.ConfigError("config has no sweep section")
    key, values = cfg.sweep.key, list(cfg.sweep.values)
    base_dict = cfgmod.to_dict(cfg)
    tasks = [(base_dict, key, v, vi, rep) for vi, v in enumerate(values) for rep in range(cfg.repeat)]
    results = {}
    if workers > 1:
        import multiprocessing as mp

        with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("spawn")) as pool:
            for out in pool.map(_sweep_task, tasks):
                results.setdefault(out[0], []).append(out)
                if progress:
                    progress(out)
    else:
        for task in tasks:
            out = _sweep_task(task)
            results.setdefault(out[0], []).append(out)
            if progress:
                progress(out)

    per_value = {}
    pairs = []
    for vi, v in enumerate(values):
        runs = [m for _, _, m, err in sorted(results.get(vi, []), key=lambda o: o[1]) if m is not None]
        failures = [err for _, _, m, err in results.get(vi, []) if err is not None]
        complete = len(runs) == cfg.repeat
        entry = {
            "value": v,
            "complete": complete,
            "n_completed": len(runs),
            "failures": failures,
            "runs": runs,
        }
        if runs:
            for field in ("loss", "relative_error", "w1_boundary", "residual_mse"):
                entry[f"mean_{field}"] = float(np.mean([r[field] for r in runs]))
            if complete:
                pairs.append((v, entry["mean_loss"]))
        per_value[str(v)] = entry

    summary = {
        "config_hash": cfgmod.config_hash(cfg),
        "seed": cfg.train.seed,
        "key": key,
        "values": values,
        "repeat": cfg.repeat,
        "per_value": per_value,
    }
    if len(pairs) >= 4:
        fit = mx.fit_loglog_slope(pairs, key)
        summary["slope"] = {
            "predictor": fit.predictor,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
        }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cfgmod.dump_json_17g(summary, os.path.join(out_dir, "sweep.json"))
    return summary


# -- oracle tasks -------------------------------------------------------------

ORACLE_TASKS = ("bvp-distribution", "burgers-curve", "heat-curve")


def run_oracle(task, out_dir, sigma=0.05, samples=10_000, seed=0, grid_n=256):
    """Reference data files for figure-style checks."""
    import csv

    os.makedirs(out_dir, exist_ok=True)
    if task == "bvp-distribution":
        rng = rng_streams(seed, 1)[0]
        locations = (-1.0, -0.5, 0.0, 0.5, 1.0)
        rows, failed = oracles.bvp_distribution(sigma, samples, rng, grid_n=grid_n, locations=locations)
        if failed > 0.01 * samples:
            raise oracles.OracleError(f"{failed}/{samples} BVP solves failed (>1%)")
        path = os.path.join(out_dir, "bvp_distribution.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"# sigma={sigma} samples={samples} seed={seed} failed={failed}"])
            w.writerow([f"u_at_{loc}" for loc in locations])
            for row in rows:
                w.writerow([cfgmod.format_float(v) for v in row])
        stats = {
            "sigma": sigma,
            "samples": int(rows.shape[0]),
            "failed": failed,
            "locations": list(locations),
            "mean": [float(v) for v in rows.mean(axis=0)],
            "std": [float(v) for v in rows.std(axis=0)],
        }
        cfgmod.dump_json_17g(stats, os.path.join(out_dir, "bvp_distribution_stats.json"))
        return stats
    if task == "burgers-curve":
        xs = np.linspace(-1, 1, 201)
        path = os.path.join(out_dir, "burgers_curves.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"] + [f"u_t{t}" for t in (0.0, 0.25, 0.5, 0.75)])
            cols = [oracles.burgers_reference_safe(xs, np.full_like(xs, t)) for t in (0.0, 0.25, 0.5, 0.75)]
            for i, x in enumerate(xs):
                w.writerow([cfgmod.format_float(x)] + [cfgmod.format_float(c[i]) for c in cols])
        return {"path": path}
    if task == "heat-curve":
        xs = np.linspace(-1, 1, 201)
        path = os.path.join(out_dir, "heat_curves.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            times = (0.0, 0.5, 1.0)
            w.writerow(["x"] + [f"u_t{t}" for t in times])
            for x in xs:
                w.writerow(
                    [cfgmod.format_float(x)]
                    + [cfgmod.format_float(oracles.heat_reference(x, t)) for t in times]
                )
        return {"path": path}
    raise ValueError(f"unknown oracle task {task!r}; expected one of {ORACLE_TASKS}")
