"""Backend benchmark: compiled kernel vs pure-numpy replay.

Run with `python -m apdsim.timing`.  Replays one long schedule through
every available backend, reports the best wall time of a few repeats,
and confirms the final states agree bit for bit.
"""

import argparse
import time

import numpy as np

from .backends import available
from .bench import scenario_config
from .engine import Engine, build_schedule


def time_backend(name, spec, schedule, rule, seed, repeats):
    # first replay compiles the kernel (jit) and warms caches (py)
    Engine(spec, schedule, rule, seed, backend=name).run_to_iteration(schedule.horizon)
    best = float("inf")
    for _ in range(repeats):
        eng = Engine(spec, schedule, rule, seed, backend=name)
        t0 = time.perf_counter()
        eng.run_to_iteration(schedule.horizon)
        best = min(best, time.perf_counter() - t0)
    return best


def final_state(name, spec, schedule, rule, seed):
    eng = Engine(spec, schedule, rule, seed, backend=name)
    eng.run_to_iteration(schedule.horizon)
    return eng.theta.copy(), eng.lam.copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=200000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    config = scenario_config("fig2")
    spec = config.problem_spec()
    rule = config.stepsize_rule()
    schedule = build_schedule(config.delay_model(), args.horizon)
    seed = config.seeds[0]
    names = available()

    print(f"replaying {schedule.n_events} events ({args.horizon} iterations), "
          f"best of {args.repeats}")
    results = {}
    for name in names:
        dt = time_backend(name, spec, schedule, rule, seed, args.repeats)
        results[name] = dt
        rate = args.horizon / dt / 1e6
        print(f"  {name:3s}  {dt * 1e3:10.2f} ms   {rate:7.2f} M iterations/s")
    if "jit" in results and "py" in results:
        print(f"  jit speedup over py: {results['py'] / results['jit']:.1f}x")
        th_j, lam_j = final_state("jit", spec, schedule, rule, seed)
        th_p, lam_p = final_state("py", spec, schedule, rule, seed)
        same = np.array_equal(th_j, th_p) and np.array_equal(lam_j, lam_p)
        print(f"  bit-identical final state: {same}")
    elif "jit" not in results:
        print("  jit backend unavailable (numba not importable)")


if __name__ == "__main__":
    main()
