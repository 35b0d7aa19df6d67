"""Experiment harness: configs, seeded repetitions, CSV artifacts.

A config is one TOML document with four tables:

    [problem]   n, z_mean, noise_sd, capacity, box_lo, box_hi,
                lambda_max, upsilon, dual_scaling
    [schedule]  compute_ticks, upload_delay, broadcast_delay,
                halt_after (optional, -1 for never)
    [stepsize]  kind = "constant" (gamma) | "inverse" (a0, a1)
    [run]       horizon, seeds or seed_count, master_seed,
                checkpoint_stride, algorithms

`run_experiment` emits, into one output directory:

    traces.csv   one row per checkpoint per seed per algorithm
    summary.csv  per (algorithm, k): mean and 5th/95th percentile of delta
    bound.csv    the theoretical error bound curve, only when the
                 step-size conditions actually hold for the config
    manifest.json  config echo, hash, seeds, reports, time-to-threshold

Every artifact embeds the config hash so artifacts from different
configs cannot be silently mixed.  All floating point output uses 17
significant digits, and row order is fixed, so a rerun with the same
config is byte-identical.
"""

import csv
import hashlib
import json
import os
from dataclasses import dataclass, replace, fields
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .analysis import bound_at_iterate, compute_bound_constants, saddle_oracle
from .engine import DelayModel, build_schedule, validate_assumptions
from .model import AffineMeanConstraint, ProblemSpec, compute_constants
from .rng import spawn_run_seeds
from .solvers import (StepSizeRule, check_stepsize_conditions, checkpoint_grid,
                      run_apd, run_sync_pd)

DEFAULT_MASTER_SEED = 1234
OUT_DIR_ENV = "APDSIM_OUT"
THRESHOLDS = (1.0, 0.1, 0.01)


class ConfigError(ValueError):
    """Invalid experiment config; `problems` lists every violated field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    z_mean: tuple
    noise_sd: float
    capacity: float
    box_lo: tuple
    box_hi: tuple
    lambda_max: float
    upsilon: float
    dual_scaling: bool
    compute_ticks: tuple
    upload_delay: int
    broadcast_delay: int
    halt_after: Optional[tuple]
    stepsize_kind: str
    gamma: Optional[float]
    a0: Optional[float]
    a1: Optional[float]
    horizon: int
    seeds: tuple
    master_seed: int
    checkpoint_stride: int
    algorithms: tuple

    def problem_spec(self):
        return ProblemSpec(n=self.n, z_mean=np.array(self.z_mean),
                           noise_sd=self.noise_sd,
                           constraint=AffineMeanConstraint(self.capacity),
                           box_lo=np.array(self.box_lo), box_hi=np.array(self.box_hi),
                           lambda_max=self.lambda_max, upsilon=self.upsilon,
                           dual_scaling=self.dual_scaling)

    def delay_model(self):
        return DelayModel(compute_ticks=self.compute_ticks,
                          upload_delay=self.upload_delay,
                          broadcast_delay=self.broadcast_delay,
                          halt_after=self.halt_after)

    def stepsize_rule(self):
        if self.stepsize_kind == "constant":
            return StepSizeRule.constant(self.gamma)
        return StepSizeRule.inverse(self.a0, self.a1)

    def canonical(self):
        """Stable dict representation; the basis of the config hash."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @property
    def config_hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_BLOCK_KEYS = {
    "problem": {"n", "z_mean", "noise_sd", "capacity", "box_lo", "box_hi",
                "lambda_max", "upsilon", "dual_scaling"},
    "schedule": {"compute_ticks", "upload_delay", "broadcast_delay", "halt_after"},
    "stepsize": {"kind", "gamma", "a0", "a1"},
    "run": {"horizon", "seeds", "seed_count", "master_seed",
            "checkpoint_stride", "algorithms"},
}


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _num_list(x, n):
    return isinstance(x, list) and len(x) == n and all(_is_num(v) for v in x)


def config_from_dict(data):
    """Build and validate an ExperimentConfig from nested block dicts.

    Collects every violation before failing so one round trip reports all
    problems at once.
    """
    errs = []
    for block in ("problem", "schedule", "stepsize", "run"):
        if block not in data:
            errs.append(f"missing [{block}] table")
        elif not isinstance(data[block], dict):
            errs.append(f"[{block}] must be a table")
    for block, tbl in data.items():
        if block not in _BLOCK_KEYS:
            errs.append(f"unknown table [{block}]")
        elif isinstance(tbl, dict):
            for key in tbl:
                if key not in _BLOCK_KEYS[block]:
                    errs.append(f"unknown key {block}.{key}")
    if errs:
        raise ConfigError(errs)

    prob, sched, step, run = (data["problem"], data["schedule"],
                              data["stepsize"], data["run"])

    def need(tbl, name, key):
        if key not in tbl:
            errs.append(f"{name}.{key} is required")
            return None
        return tbl[key]

    n = need(prob, "problem", "n")
    if n is not None and not (_is_int(n) and n >= 1):
        errs.append("problem.n must be a positive integer")
        n = None
    for key in ("z_mean", "box_lo", "box_hi"):
        v = need(prob, "problem", key)
        if v is not None and n is not None and not _num_list(v, n):
            errs.append(f"problem.{key} must be a list of {n} numbers")
    for key, cond, desc in (("noise_sd", lambda v: _is_num(v) and v >= 0, "a number >= 0"),
                            ("capacity", _is_num, "a number"),
                            ("lambda_max", lambda v: _is_num(v) and v > 0, "a number > 0"),
                            ("upsilon", lambda v: _is_num(v) and v > 0, "a number > 0")):
        v = need(prob, "problem", key)
        if v is not None and not cond(v):
            errs.append(f"problem.{key} must be {desc}")
    ds = prob.get("dual_scaling", True)
    if not isinstance(ds, bool):
        errs.append("problem.dual_scaling must be a boolean")
    if (_num_list(prob.get("box_lo"), n or 0) and _num_list(prob.get("box_hi"), n or 0)
            and any(lo > hi for lo, hi in zip(prob["box_lo"], prob["box_hi"]))):
        errs.append("problem.box_lo must be <= problem.box_hi entrywise")

    v = need(sched, "schedule", "compute_ticks")
    if v is not None:
        if not (isinstance(v, list) and all(_is_int(t) and t >= 1 for t in v)):
            errs.append("schedule.compute_ticks must be a list of positive integers")
        elif n is not None and len(v) != n:
            errs.append(f"schedule.compute_ticks must have {n} entries")
    for key in ("upload_delay", "broadcast_delay"):
        d = sched.get(key, 0)
        if not (_is_int(d) and d >= 0):
            errs.append(f"schedule.{key} must be a nonnegative integer")
    halt = sched.get("halt_after")
    if halt is not None:
        if not (isinstance(halt, list) and all(_is_int(h) and h >= -1 for h in halt)
                and (n is None or len(halt) == n)):
            errs.append(f"schedule.halt_after must be a list of {n} integers (-1: never)")

    kind = need(step, "stepsize", "kind")
    if kind == "constant":
        if not (_is_num(step.get("gamma")) and step["gamma"] > 0):
            errs.append("stepsize.gamma must be a number > 0 for kind = constant")
        if "a0" in step or "a1" in step:
            errs.append("stepsize.a0/a1 do not apply to kind = constant")
    elif kind == "inverse":
        if not (_is_num(step.get("a0")) and step["a0"] > 0):
            errs.append("stepsize.a0 must be a number > 0 for kind = inverse")
        if not (_is_num(step.get("a1")) and step["a1"] >= 0):
            errs.append("stepsize.a1 must be a number >= 0 for kind = inverse")
        if "gamma" in step:
            errs.append("stepsize.gamma does not apply to kind = inverse")
    elif kind is not None:
        errs.append("stepsize.kind must be 'constant' or 'inverse'")

    horizon = need(run, "run", "horizon")
    if horizon is not None and not (_is_int(horizon) and horizon >= 1):
        errs.append("run.horizon must be a positive integer")
    master = run.get("master_seed", DEFAULT_MASTER_SEED)
    if not (_is_int(master) and master >= 0):
        errs.append("run.master_seed must be a nonnegative integer")
    stride = run.get("checkpoint_stride", 1)
    if not (_is_int(stride) and stride >= 1):
        errs.append("run.checkpoint_stride must be a positive integer")
    algos = run.get("algorithms", ["apd", "sync"])
    if not (isinstance(algos, list) and algos
            and all(a in ("apd", "sync") for a in algos)
            and len(set(algos)) == len(algos)):
        errs.append("run.algorithms must be a nonempty list drawn from ['apd', 'sync']")
    seeds = run.get("seeds")
    count = run.get("seed_count")
    if seeds is not None and count is not None:
        errs.append("run.seeds and run.seed_count are mutually exclusive")
    elif seeds is not None:
        if not (isinstance(seeds, list) and seeds and all(_is_int(s) and s >= 0 for s in seeds)):
            errs.append("run.seeds must be a nonempty list of nonnegative integers")
    elif count is not None:
        if not (_is_int(count) and count >= 1):
            errs.append("run.seed_count must be a positive integer")
    else:
        errs.append("run needs either seeds or seed_count")

    if errs:
        raise ConfigError(errs)

    if seeds is None:
        seeds = spawn_run_seeds(master, count)
    return ExperimentConfig(
        n=n, z_mean=tuple(float(z) for z in prob["z_mean"]),
        noise_sd=float(prob["noise_sd"]), capacity=float(prob["capacity"]),
        box_lo=tuple(float(b) for b in prob["box_lo"]),
        box_hi=tuple(float(b) for b in prob["box_hi"]),
        lambda_max=float(prob["lambda_max"]), upsilon=float(prob["upsilon"]),
        dual_scaling=ds,
        compute_ticks=tuple(sched["compute_ticks"]),
        upload_delay=int(sched.get("upload_delay", 0)),
        broadcast_delay=int(sched.get("broadcast_delay", 0)),
        halt_after=(tuple(None if h == -1 else h for h in halt) if halt else None),
        stepsize_kind=kind,
        gamma=float(step["gamma"]) if kind == "constant" else None,
        a0=float(step["a0"]) if kind == "inverse" else None,
        a1=float(step["a1"]) if kind == "inverse" else None,
        horizon=horizon, seeds=tuple(int(s) for s in seeds),
        master_seed=master, checkpoint_stride=stride,
        algorithms=tuple(algos))


def config_from_toml(path):
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"TOML parse error: {exc}"]) from exc
    return config_from_dict(data)


def apply_overrides(config, seeds=None, master_seed=None, checkpoint_stride=None):
    """Command-line overrides; a new seed count respawns from the master seed."""
    master = config.master_seed if master_seed is None else master_seed
    changes = {"master_seed": master}
    if seeds is not None:
        if seeds < 1:
            raise ConfigError(["--seeds must be a positive integer"])
        changes["seeds"] = tuple(spawn_run_seeds(master, seeds))
    elif master_seed is not None:
        changes["seeds"] = tuple(spawn_run_seeds(master, len(config.seeds)))
    if checkpoint_stride is not None:
        if checkpoint_stride < 1:
            raise ConfigError(["--checkpoint-stride must be a positive integer"])
        changes["checkpoint_stride"] = checkpoint_stride
    return replace(config, **changes)


# ---------------------------------------------------------------------------
# canned scenarios
# ---------------------------------------------------------------------------

_BASE_SCENARIO = {
    "problem": {
        "n": 5,
        "z_mean": [10.0, 10.0, 10.0, 12.0, 12.0],
        "noise_sd": 2.0,
        "capacity": 5.0,
        "box_lo": [0.0, 0.0, 0.0, 0.0, 0.0],
        "box_hi": [7.0, 7.0, 7.0, 10.0, 10.0],
        "lambda_max": 10.0,
        "upsilon": 1e-5,
        # reference operating point: the worker coupling term carries no
        # 1/n factor, so the dual price acts at full strength
        "dual_scaling": False,
    },
    "schedule": {"upload_delay": 2, "broadcast_delay": 1},
    "stepsize": {"kind": "inverse", "a0": 10.0, "a1": 100.0},
    "run": {"seed_count": 10, "checkpoint_stride": 100,
            "algorithms": ["apd", "sync"], "master_seed": DEFAULT_MASTER_SEED},
}


def scenario_config(name):
    """Canned experiment setups: heterogeneous-speed baseline ("fig2") and
    the extreme-straggler variant ("fig3")."""
    import copy
    data = copy.deepcopy(_BASE_SCENARIO)
    if name == "fig2":
        data["schedule"]["compute_ticks"] = [4, 4, 3, 2, 1]
        data["run"]["horizon"] = 20000
    elif name == "fig3":
        data["schedule"]["compute_ticks"] = [10, 4, 3, 2, 1]
        data["run"]["horizon"] = 10000
    else:
        raise ConfigError([f"unknown scenario {name!r}; choose fig2 or fig3"])
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def trace_header(n):
    return (["run_id", "seed", "algo", "k", "tick", "delta", "lambda", "g_mean"]
            + [f"theta_{i + 1}" for i in range(n)])


def write_traces_csv(path, traces, n):
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(n))
        for tr in traces:
            run_id = f"{tr.config_hash}-{tr.algorithm}-s{tr.seed}"
            for i in range(tr.n_records):
                w.writerow([run_id, tr.seed, tr.algorithm,
                            int(tr.k[i]), int(tr.tick[i]),
                            _fmt(tr.delta[i]), _fmt(tr.lam[i]), _fmt(tr.g_mean[i])]
                           + [_fmt(x) for x in tr.theta[i]])


def read_traces_csv(path):
    """Round-trip reader; returns the header and rows with numeric fields
    restored (exact, thanks to the 17-digit output)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = []
        for raw in rd:
            rows.append(raw[:3] + [int(raw[3]), int(raw[4])]
                        + [float(x) for x in raw[5:]])
    return header, rows


def summarize(traces):
    """Per (algorithm, checkpoint) statistics plus time-to-threshold.

    Returns (summary_rows, thresholds) where summary_rows are
    (algo, k, tick, mean, p5, p95) and thresholds maps
    algo -> threshold -> {"per_seed": [...], "median": tick or None}.
    Traces from different configs (mismatched hashes) are rejected.
    """
    if not traces:
        raise ValueError("summarize needs at least one trace")
    hashes = {tr.config_hash for tr in traces}
    if len(hashes) > 1:
        raise ValueError(f"traces carry mismatched config hashes: {sorted(hashes)}")
    rows = []
    thresholds = {}
    algos = sorted({tr.algorithm for tr in traces})
    for algo in algos:
        group = [tr for tr in traces if tr.algorithm == algo]
        ks = group[0].k
        for tr in group[1:]:
            if not np.array_equal(tr.k, ks):
                raise ValueError(f"traces for {algo} disagree on checkpoint grids")
        deltas = np.stack([tr.delta for tr in group])   # (seeds, checkpoints)
        ticks = group[0].tick
        for j, kv in enumerate(ks):
            col = deltas[:, j]
            rows.append((algo, int(kv), int(ticks[j]), float(col.mean()),
                         float(np.percentile(col, 5)), float(np.percentile(col, 95))))
        thresholds[algo] = {}
        for thr in THRESHOLDS:
            per_seed = []
            for tr in group:
                hit = np.nonzero(tr.delta <= thr)[0]
                per_seed.append(int(tr.tick[hit[0]]) if hit.size else None)
            reached = [t for t in per_seed if t is not None]
            med = float(np.median(reached)) if len(reached) == len(per_seed) else None
            thresholds[algo][thr] = {"per_seed": per_seed, "median": med}
    return rows, thresholds


def write_summary_csv(path, rows):
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algo", "k", "tick", "delta_mean", "delta_p5", "delta_p95"])
        for algo, k, tick, mean, p5, p95 in rows:
            w.writerow([algo, k, tick, _fmt(mean), _fmt(p5), _fmt(p95)])


def write_bound_csv(path, ks, bounds):
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "bound"])
        for k, b in zip(ks, bounds):
            w.writerow([int(k), _fmt(b)])


def bound_applicability(config, report, stepsize_report):
    """Why the theoretical bound curve does or does not apply."""
    reasons = []
    if report.p_min is None or report.window_length is None:
        reasons.append("no activation-window structure detected in the schedule")
    if not stepsize_report.sup_ok:
        reasons.append(f"sup gamma_k = {stepsize_report.sup_value:g} exceeds "
                       f"2/(p*mu) = {stepsize_report.sup_limit:g}")
    if not stepsize_report.ratio_ok:
        k_bad, ell = stepsize_report.first_violation
        reasons.append("window ratio condition fails first at "
                       f"k = {k_bad} (window index {ell})")
    return reasons


def run_experiment(config, out_dir, backend=None, quiet=False):
    """Run every (algorithm, seed) pair of the config and write artifacts.

    Returns a dict of artifact paths.  bound.csv is written only when the
    step-size conditions hold; the manifest records the reasons either way.
    """
    os.makedirs(out_dir, exist_ok=True)
    spec = config.problem_spec()
    delay = config.delay_model()
    rule = config.stepsize_rule()
    saddle = saddle_oracle(spec)
    schedule = build_schedule(delay, config.horizon)
    report = validate_assumptions(schedule)
    p_eff = report.uniform_p if report.uniform_p is not None else report.p_min
    if p_eff is not None:
        stepsize_report = check_stepsize_conditions(
            rule, p_eff, report.window_length, compute_constants(spec).mu,
            config.horizon)
    else:
        stepsize_report = None

    traces = []
    for algo in config.algorithms:
        for seed in config.seeds:
            if algo == "apd":
                tr = run_apd(spec, delay, rule, seed, config.horizon,
                             checkpoint_stride=config.checkpoint_stride,
                             schedule=schedule, saddle=saddle, backend=backend)
            else:
                tr = run_sync_pd(spec, delay, rule, seed, config.horizon,
                                 checkpoint_stride=config.checkpoint_stride,
                                 saddle=saddle)
            tr.config_hash = config.config_hash
            traces.append(tr)

    paths = {"traces": os.path.join(out_dir, "traces.csv"),
             "summary": os.path.join(out_dir, "summary.csv"),
             "manifest": os.path.join(out_dir, "manifest.json")}
    write_traces_csv(paths["traces"], traces, config.n)
    rows, thresholds = summarize(traces)
    write_summary_csv(paths["summary"], rows)

    reasons = (bound_applicability(config, report, stepsize_report)
               if stepsize_report is not None
               else ["no activation-window structure detected in the schedule"])
    bound_rows = None
    if not reasons:
        constants = compute_constants(spec)
        bc = compute_bound_constants(constants, p_eff, report.window_length,
                                     report.tau_bar, rule)
        delta0 = float(np.sum(saddle.theta ** 2) + np.sum(saddle.lam ** 2))
        ks = [k for k in checkpoint_grid(config.horizon, config.checkpoint_stride)]
        bounds = [delta0 if k == 0 else bound_at_iterate(k, delta0, bc, rule)
                  for k in ks]
        paths["bound"] = os.path.join(out_dir, "bound.csv")
        write_bound_csv(paths["bound"], ks, bounds)
        bound_rows = len(ks)

    manifest = {
        "config": config.canonical(),
        "config_hash": config.config_hash,
        "seeds": list(config.seeds),
        "saddle": {"theta": [float(x) for x in saddle.theta],
                   "lambda": float(saddle.lam[0]),
                   "residual": saddle.residual},
        "assumptions": {
            "tau_bar": report.tau_bar,
            "window_length": report.window_length,
            "uniform_p": report.uniform_p,
            "p_min": report.p_min,
            "activations_per_window": report.activations_per_window,
            "models_per_window": report.models_per_window,
            "steady_from": report.steady_from,
            "violations": report.violations,
            "notes": report.notes,
        },
        "stepsize_conditions": None if stepsize_report is None else {
            "sup_ok": stepsize_report.sup_ok,
            "sup_value": stepsize_report.sup_value,
            "sup_limit": stepsize_report.sup_limit,
            "ratio_ok": stepsize_report.ratio_ok,
            "first_violation": stepsize_report.first_violation,
        },
        "bound": {"applicable": not reasons, "reasons": reasons,
                  "rows": bound_rows},
        "time_to_threshold": {
            algo: {str(thr): info for thr, info in table.items()}
            for algo, table in thresholds.items()},
        "artifacts": sorted(os.path.basename(p) for p in paths.values()),
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if not quiet:
        print(f"config {config.config_hash}: {len(traces)} runs "
              f"({', '.join(config.algorithms)} x {len(config.seeds)} seeds), "
              f"horizon {config.horizon}")
        for algo, table in thresholds.items():
            cells = []
            for thr in THRESHOLDS:
                med = table[thr]["median"]
                cells.append(f"delta<={thr:g}: " + (f"tick {med:g}" if med is not None
                                                    else "not reached"))
            print(f"  {algo:4s} time-to-threshold  " + "  ".join(cells))
        if reasons:
            print("  bound curve not emitted: " + "; ".join(reasons))
        else:
            print(f"  bound curve: {paths['bound']}")
        print(f"  artifacts in {out_dir}")
    return paths
