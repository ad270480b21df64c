"""Experiment orchestration: build, train, evaluate, write artifacts.

Every artifact carries the fully resolved configuration (and seed) in a
header or metadata block.  Artifact files contain no timestamps, so two
identical invocations produce byte-identical output.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .benchmarks import get_benchmark
from .config import METHODS, RunConfig
from .evaluation import (DEFAULT_N_TEST, compute_metrics, effective_rank,
                         ntk_matrix, ntk_points, rel_l2_field, test_points)
from .mappings import make_mapping
from .model import Model
from .network import (FOURIER_FREQUENCIES, CircleFrontend, FourierFrontend,
                      load_checkpoint, save_checkpoint, standard_network)
from .training import (StrategyState, TrainingSchedule, run_adam_stage,
                       run_lbfgs_stage)

# Parameter totals the runs are expected to hit on the 1-d scalar backbone
# (four hidden layers of width 80).  The torus row is reported with a
# documented mismatch: the circle embedding adds one extra input per
# spatial axis (+80 here), while the reference total of 19,841 assumes a
# sine/cosine lift over a two-input backbone (+160).
REFERENCE_PARAM_COUNTS = {
    "pinn": 19681,
    "rar": 19681,
    "gpinn": 19681,
    "ff": 20641,
    "sa": 19683,
    "gc-radial": 19682,
    "gc-local": 19684,
    "gc-torus": 19841,
}

TORUS_COUNT_NOTE = (
    "the torus map itself declares no parameters; its sine/cosine circle "
    "embedding adds one extra network input per spatial axis, while the "
    "reference total 19,841 assumes the same lift over a two-input backbone"
)


def build_model(benchmark, method, alpha=20.0, beta=10.0, train_mapping=False,
                seed=3407) -> Model:
    """Assemble mapping + backbone + strategy parameters for one method.

    The torus method pairs the wrapped coordinate with a per-axis
    sine/cosine embedding: the angle itself has a seam, its circle
    embedding does not.
    """
    variant, strategy, fourier = METHODS[method]
    trainable = bool(train_mapping)
    if variant == "pwl":
        trainable = True        # learnable increments are the whole point
    mapping = make_mapping(variant, benchmark.lo, benchmark.hi,
                           alpha=alpha, beta=beta, trainable=trainable)
    frontend = None
    if fourier:
        frontend = FourierFrontend(FOURIER_FREQUENCIES)
    elif variant == "torus":
        frontend = CircleFrontend()
    network = standard_network(benchmark.dim, benchmark.n_outputs, frontend)
    extras = []
    if strategy == "sa":
        extras.append(("sa_log_weights", np.zeros(2), True))
    return Model(network, mapping, network.init_params(seed), extras)


def parameter_count_report(method, benchmark_name="helmholtz1d"):
    """Constructed parameter totals versus the reference table."""
    bench = get_benchmark(benchmark_name)
    model = build_model(bench, method)
    count = model.n_params
    ref = REFERENCE_PARAM_COUNTS.get(method)
    report = {"method": method, "count": int(count), "reference": ref,
              "matches": ref is None or count == ref}
    if method == "gc-torus":
        report["note"] = TORUS_COUNT_NOTE
    return report


def _schedule_for(cfg: RunConfig, seed) -> TrainingSchedule:
    budget = cfg.resolved_budget()
    _, strategy, _ = METHODS[cfg.method]
    return TrainingSchedule(seed=seed, strategy=strategy,
                            adam_epochs=budget["adam_epochs"],
                            adam_points=budget["adam_points"],
                            lbfgs_steps=budget["lbfgs_steps"],
                            lbfgs_points=budget["lbfgs_points"],
                            workers=cfg.workers)


def train_once(cfg: RunConfig, seed, log=None, hook=None):
    """One full two-stage training run; returns (model, benchmark, log)."""
    bench = get_benchmark(cfg.benchmark)
    schedule = _schedule_for(cfg, seed)
    model = build_model(bench, cfg.method, alpha=cfg.resolved_alpha(),
                        beta=cfg.resolved_beta(),
                        train_mapping=cfg.train_mapping, seed=seed)
    state = StrategyState(name=schedule.strategy)
    ss = np.random.SeedSequence(seed)
    s_adam, s_lbfgs = ss.spawn(2)
    if log is None:
        log = []
    grid = test_points(bench)
    exact_vals = bench.exact.value(grid)

    def rel_fn(m):
        return rel_l2_field(m, bench, grid, exact_vals)

    if hook is not None:
        hook("init", 0, model)
    run_adam_stage(model, bench, schedule, state, np.random.default_rng(s_adam),
                   log, rel_l2_fn=rel_fn, hook=hook)
    run_lbfgs_stage(model, bench, schedule, state, np.random.default_rng(s_lbfgs),
                    log, rel_l2_fn=rel_fn, hook=hook)
    return model, bench, log


CSV_COLUMNS = ("iteration,stage,total_loss,residual_loss,bc_loss,reg_loss,"
               "strategy_a,strategy_b,test_rel_l2")


def _provenance_lines(cfg: RunConfig, seed):
    resolved = cfg.resolved()
    resolved["seed"] = seed
    resolved.pop("out", None)   # not part of the experiment's identity
    return [f"# config: {json.dumps(resolved, sort_keys=True)}"]


def write_convergence_csv(path, cfg, seed, log):
    lines = _provenance_lines(cfg, seed)
    lines.append(CSV_COLUMNS)
    for row in log:
        r = row.record
        rel = "" if row.test_rel_l2 is None else repr(float(row.test_rel_l2))
        cells = [repr(float(v)) for v in (r.total, r.residual, r.bc, r.reg,
                                          r.strategy_a, r.strategy_b)]
        lines.append(f"{row.iteration},{row.stage}," + ",".join(cells) + f",{rel}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(cfg: RunConfig, out_dir=None):
    """Train per config (possibly several trials), evaluate, write artifacts.

    Returns the metrics dictionary that also lands in metrics.json.
    """
    out_dir = out_dir or cfg.out
    seeds = [cfg.seed + k for k in range(cfg.trials)]
    reports = []
    first_model = None
    first_log = None
    bench = get_benchmark(cfg.benchmark)
    grid = test_points(bench)
    for seed in seeds:
        model, bench, log = train_once(cfg, seed)
        reports.append(compute_metrics(model, bench, points=grid))
        if first_model is None:
            first_model = model
            first_log = log
    head = reports[0]
    result = {
        "benchmark": cfg.benchmark,
        "method": cfg.method,
        "mse": head.mse,
        "rel_l2": head.rel_l2,
        "rel_h1": head.rel_h1,
        "n_test": head.n_test,
        "parameter_count": int(first_model.n_params),
        "config": {**cfg.resolved(), "seed": cfg.seed},
        "report": head.as_dict(),
    }
    if cfg.trials > 1:
        result["trials"] = [dict(seed=s, **r.as_dict()) for s, r in zip(seeds, reports)]
        result["mean"] = {k: float(np.mean([r.as_dict()[k] for r in reports]))
                          for k in ("mse", "rel_l2", "rel_h1")}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_convergence_csv(os.path.join(out_dir, "convergence.csv"),
                              cfg, cfg.seed, first_log)
        with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
        save_checkpoint(os.path.join(out_dir, "checkpoint.npz"),
                        first_model.params,
                        {"config": {**cfg.resolved(), "seed": cfg.seed},
                         "parameter_count": int(first_model.n_params)})
    return result


def load_model_from_checkpoint(path):
    params, meta = load_checkpoint(path)
    cfg = RunConfig.from_dict({k: v for k, v in meta["config"].items()
                               if k in RunConfig.__dataclass_fields__})
    bench = get_benchmark(cfg.benchmark)
    model = build_model(bench, cfg.method, alpha=cfg.resolved_alpha(),
                        beta=cfg.resolved_beta(), train_mapping=cfg.train_mapping,
                        seed=meta["config"]["seed"])
    model.params = params
    return model, bench, cfg


def run_sweep(cfg: RunConfig, parameter, values, out_dir=None):
    """One full run per parameter value; returns the rows of sweep.csv."""
    if parameter not in ("alpha", "beta"):
        raise ValueError("sweep parameter must be 'alpha' or 'beta'")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    method = "gc-radial" if parameter == "alpha" else "gc-local"
    rows = []
    for v in values:
        sub = RunConfig.from_dict({**cfg.to_dict(), "method": method,
                                   parameter: float(v), "out": None})
        res = run_experiment(sub, out_dir=None)
        rows.append((float(v), res["mse"], res["rel_l2"], res["rel_h1"]))
    out_dir = out_dir or cfg.out
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        lines = _provenance_lines(cfg, cfg.seed)
        lines.append(f"{parameter},mse,rel_l2,rel_h1")
        for v, mse, rl2, rh1 in rows:
            lines.append(",".join(repr(float(c)) for c in (v, mse, rl2, rh1)))
        with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return rows


def run_with_ntk(cfg: RunConfig, out_dir=None, n_kernel_points=128):
    """Training run with kernel snapshots every RAR_PERIOD Adam steps.

    Emits ntk_spectrum_<step>.csv per snapshot plus the effective-rank
    trajectory, alongside the usual run artifacts.
    """
    out_dir = out_dir or cfg.out
    bench = get_benchmark(cfg.benchmark)
    kpts = ntk_points(bench, n=n_kernel_points)
    snapshots = []

    def hook(stage, iteration, model):
        report = ntk_matrix(model, bench, kpts)
        snapshots.append((stage, iteration, report))

    model, bench, log = train_once(cfg, cfg.seed, hook=hook)
    grid = test_points(bench)
    metrics = compute_metrics(model, bench, points=grid)
    result = {
        "benchmark": cfg.benchmark,
        "method": cfg.method,
        "mse": metrics.mse,
        "rel_l2": metrics.rel_l2,
        "rel_h1": metrics.rel_h1,
        "config": {**cfg.resolved(), "seed": cfg.seed},
        "effective_rank_trajectory": [
            {"stage": st, "iteration": it, "effective_rank": rep.effective_rank}
            for st, it, rep in snapshots
        ],
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_convergence_csv(os.path.join(out_dir, "convergence.csv"),
                              cfg, cfg.seed, log)
        prov = _provenance_lines(cfg, cfg.seed)
        traj = prov + ["stage,iteration,effective_rank"]
        for st, it, rep in snapshots:
            traj.append(f"{st},{it},{rep.effective_rank!r}")
            spath = os.path.join(out_dir, f"ntk_spectrum_{it:06d}.csv")
            with open(spath, "w", encoding="utf-8") as fh:
                fh.write("\n".join(prov + ["index,eigenvalue"] +
                                   [f"{i},{float(lam)!r}" for i, lam in
                                    enumerate(rep.eigenvalues)]) + "\n")
        with open(os.path.join(out_dir, "ntk_effective_rank.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("\n".join(traj) + "\n")
        with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result
