"""Command-line entry point.

    gcpinn run    --benchmark helmholtz1d --method gc-torus --out runs/torus
    gcpinn sweep  --parameter beta --values 5,10,15,20,25,30,35 ...
    gcpinn check  [--suite derivative,mapping,mms,probe,params] [--json]
    gcpinn ntk    --benchmark convdiff1d --method gc-local ...
    gcpinn params [--method gc-torus]

A JSON config file (--config) supplies defaults; explicit flags win.
Exit codes: 0 success, 1 failed check, 2 invalid configuration,
3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import METHODS, PRESETS, RunConfig
from .errors import ConfigError, DivergenceError


def _add_run_flags(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--benchmark", help="burgers1d | convdiff1d | helmholtz1d | "
                                       "convdiff2d | ns2d")
    p.add_argument("--method", help=" | ".join(sorted(METHODS)))
    p.add_argument("--alpha", type=float, help="radial compression strength")
    p.add_argument("--beta", type=float, help="local stretch strength")
    p.add_argument("--train-mapping", action="store_true", default=None,
                   help="optimize mapping parameters jointly with the network")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="budget preset (default: full)")
    p.add_argument("--mapping-preset", choices=("default", "tuned"))
    p.add_argument("--adam-epochs", type=int)
    p.add_argument("--adam-points", type=int)
    p.add_argument("--lbfgs-steps", type=int)
    p.add_argument("--lbfgs-points", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory for artifacts")


_FLAG_KEYS = ("benchmark", "method", "alpha", "beta", "train_mapping", "seed",
              "preset", "mapping_preset", "adam_epochs", "adam_points",
              "lbfgs_steps", "lbfgs_points", "trials", "workers", "out")


def _config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        data = RunConfig.from_file(args.config).to_dict()
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    return RunConfig.from_dict(data)


def _cmd_run(args):
    from .runner import run_experiment
    cfg = _config_from_args(args)
    result = run_experiment(cfg, out_dir=cfg.out)
    print(json.dumps({k: result[k] for k in
                      ("benchmark", "method", "mse", "rel_l2", "rel_h1")},
                     indent=2, sort_keys=True))
    if cfg.out:
        print(f"artifacts written to {cfg.out}", file=sys.stderr)
    return 0


def _cmd_sweep(args):
    from .runner import run_sweep
    cfg = _config_from_args(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one number")
    rows = run_sweep(cfg, args.parameter, values, out_dir=cfg.out)
    print(f"{args.parameter},mse,rel_l2,rel_h1")
    for v, mse, rl2, rh1 in rows:
        print(f"{v!r},{mse!r},{rl2!r},{rh1!r}")
    return 0


def _cmd_check(args):
    from .checks import run_checks
    suites = args.suite.split(",") if args.suite else None
    results = run_checks(suites)
    if args.json:
        print(json.dumps([r.as_dict() for r in results], indent=2))
    else:
        for r in results:
            print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed",
          file=sys.stderr)
    return 1 if failed else 0


def _cmd_ntk(args):
    from .runner import run_with_ntk
    cfg = _config_from_args(args)
    result = run_with_ntk(cfg, out_dir=cfg.out)
    print(json.dumps({"rel_l2": result["rel_l2"],
                      "effective_rank_trajectory":
                          result["effective_rank_trajectory"]},
                     indent=2, sort_keys=True))
    return 0


def _cmd_params(args):
    from .runner import parameter_count_report, REFERENCE_PARAM_COUNTS
    methods = [args.method] if args.method else sorted(REFERENCE_PARAM_COUNTS)
    reports = [parameter_count_report(m) for m in methods]
    print(json.dumps(reports, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gcpinn",
        description="PDE solver benchmarks for geometric input-domain "
                    "compactification mappings")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one configuration and report metrics")
    _add_run_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="repeat a run over mapping parameter values")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--parameter", required=True, choices=("alpha", "beta"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated list, e.g. 5,10,15,20,25,30,35")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_check = sub.add_parser("check", help="run the property-check suites")
    p_check.add_argument("--suite", help="comma-separated subset: "
                                         "derivative,params,mapping,mms,probe")
    p_check.add_argument("--json", action="store_true",
                         help="machine-readable output")
    p_check.set_defaults(fn=_cmd_check)

    p_ntk = sub.add_parser("ntk", help="train with residual-kernel snapshots")
    _add_run_flags(p_ntk)
    p_ntk.set_defaults(fn=_cmd_ntk)

    p_par = sub.add_parser("params", help="parameter-count report per method")
    p_par.add_argument("--method", choices=sorted(METHODS))
    p_par.set_defaults(fn=_cmd_params)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
