"""Command-line front end.

    apdsim run --config exp.toml --out results/
    apdsim scenario fig2 --out results/
    apdsim oracle --config exp.toml
    apdsim validate --config exp.toml
    apdsim bound --config exp.toml --out results/

Exit codes: 0 on success, 2 for config problems (every violated field is
listed), 1 when a requested artifact cannot be produced (for example the
bound curve for a config whose step sizes violate the theory).
"""

import argparse
import os
import sys

import numpy as np

from . import bench
from .analysis import compute_bound_constants, saddle_oracle
from .bench import ConfigError
from .engine import build_schedule, validate_assumptions
from .model import compute_constants
from .solvers import check_stepsize_conditions


def _out_dir(args):
    if args.out is not None:
        return args.out
    return os.environ.get(bench.OUT_DIR_ENV, "apdsim-out")


def _add_run_flags(p):
    p.add_argument("--seeds", type=int, metavar="N",
                   help="respawn N run seeds from the master seed")
    p.add_argument("--master-seed", type=int, metavar="SEED",
                   help="override the master seed (reseeds the runs)")
    p.add_argument("--out", metavar="DIR",
                   help=f"output directory (default: ${bench.OUT_DIR_ENV} or apdsim-out)")
    p.add_argument("--checkpoint-stride", type=int, metavar="K",
                   help="record every K-th iterate")
    p.add_argument("--backend", choices=("jit", "py"),
                   help="force the update-loop backend")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="apdsim",
        description="Simulate asynchronous primal-dual resource allocation "
                    "and check it against its convergence theory.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a TOML config")
    p_run.add_argument("--config", required=True, metavar="PATH")
    _add_run_flags(p_run)

    p_scen = sub.add_parser("scenario", help="run a canned scenario")
    p_scen.add_argument("name", choices=("fig2", "fig3"))
    _add_run_flags(p_scen)

    p_oracle = sub.add_parser("oracle",
                              help="print the saddle point of a config's problem")
    p_oracle.add_argument("--config", required=True, metavar="PATH")

    p_val = sub.add_parser("validate",
                           help="check the schedule's window structure and "
                                "step-size conditions")
    p_val.add_argument("--config", required=True, metavar="PATH")

    p_bound = sub.add_parser("bound",
                             help="emit the theoretical error-bound curve")
    p_bound.add_argument("--config", required=True, metavar="PATH")
    p_bound.add_argument("--out", metavar="DIR")
    return parser


def _load_config(path):
    if not os.path.exists(path):
        raise ConfigError([f"config file not found: {path}"])
    return bench.config_from_toml(path)


def _cmd_run(config, args):
    config = bench.apply_overrides(config, seeds=args.seeds,
                                   master_seed=args.master_seed,
                                   checkpoint_stride=args.checkpoint_stride)
    bench.run_experiment(config, _out_dir(args), backend=args.backend)
    return 0


def _cmd_oracle(config):
    spec = config.problem_spec()
    saddle = saddle_oracle(spec)
    theta_bar = float(saddle.theta.mean())
    g_val = float(spec.constraint.value(np.array([theta_bar]))[0])
    print(f"lambda*   {saddle.lam[0]:.17g}")
    for i, th in enumerate(saddle.theta):
        print(f"theta*_{i + 1}  {th:.17g}")
    print(f"g(mean)   {g_val:.17g}")
    print(f"residual  {saddle.residual:.3g}")
    return 0


def _report_lines(config, report, stepsize_report):
    yield f"window length        {report.window_length}"
    yield f"uniform activations  {report.uniform_p}"
    yield f"min activations      {report.p_min}"
    yield f"max staleness        {report.tau_bar}"
    yield f"models per window    {report.models_per_window}"
    yield f"steady from window   {report.steady_from}"
    if report.activations_per_window:
        for name, count in report.activations_per_window.items():
            yield f"  {name:10s} {count} activations per window"
    for note in report.notes:
        yield f"note: {note}"
    for v in report.violations:
        yield f"VIOLATION: {v}"
    if stepsize_report is None:
        yield "step-size conditions: not checkable without window structure"
    else:
        yield ("step-size sup condition:   "
               + ("ok" if stepsize_report.sup_ok else
                  f"FAIL ({stepsize_report.sup_value:g} > {stepsize_report.sup_limit:g})"))
        if stepsize_report.ratio_ok:
            yield "step-size ratio condition: ok"
        else:
            k_bad, ell = stepsize_report.first_violation
            yield f"step-size ratio condition: FAIL first at k = {k_bad} (window {ell})"


def _window_reports(config):
    schedule = build_schedule(config.delay_model(), config.horizon)
    report = validate_assumptions(schedule)
    p_eff = report.uniform_p if report.uniform_p is not None else report.p_min
    if p_eff is not None and report.window_length is not None:
        stepsize_report = check_stepsize_conditions(
            config.stepsize_rule(), p_eff, report.window_length,
            compute_constants(config.problem_spec()).mu, config.horizon)
    else:
        stepsize_report = None
    return report, stepsize_report, p_eff


def _cmd_validate(config):
    report, stepsize_report, _ = _window_reports(config)
    for line in _report_lines(config, report, stepsize_report):
        print(line)
    return 0 if report.ok else 1


def _cmd_bound(config, args):
    report, stepsize_report, p_eff = _window_reports(config)
    if stepsize_report is None:
        reasons = ["no activation-window structure detected in the schedule"]
    else:
        reasons = bench.bound_applicability(config, report, stepsize_report)
    if reasons:
        print("bound curve not applicable to this config:", file=sys.stderr)
        for r in reasons:
            print(f"  - {r}", file=sys.stderr)
        return 1
    spec = config.problem_spec()
    rule = config.stepsize_rule()
    saddle = saddle_oracle(spec)
    constants = compute_constants(spec)
    bc = compute_bound_constants(constants, p_eff, report.window_length,
                                 report.tau_bar, rule)
    delta0 = float(np.sum(saddle.theta ** 2) + np.sum(saddle.lam ** 2))
    from .analysis import bound_at_iterate
    from .solvers import checkpoint_grid
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    ks = checkpoint_grid(config.horizon, config.checkpoint_stride)
    bounds = [delta0 if k == 0 else bound_at_iterate(k, delta0, bc, rule)
              for k in ks]
    path = os.path.join(out, "bound.csv")
    bench.write_bound_csv(path, ks, bounds)
    print(f"C1 {bc.c1:.17g}")
    print(f"C2 {bc.c2:.17g}")
    print(f"C3 {bc.c3:.17g}")
    print(f"C4 {bc.c4:.17g}")
    print(f"C_total {bc.c_total:.17g}")
    print(f"wrote {path} ({len(ks)} rows)")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "scenario":
            config = bench.scenario_config(args.name)
            return _cmd_run(config, args)
        config = _load_config(args.config)
        if args.command == "run":
            return _cmd_run(config, args)
        if args.command == "oracle":
            return _cmd_oracle(config)
        if args.command == "validate":
            return _cmd_validate(config)
        return _cmd_bound(config, args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
