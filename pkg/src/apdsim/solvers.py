"""End-to-end solver drivers and step-size machinery.

`run_apd` replays the asynchronous event schedule through the kernel
backend, pausing at checkpoints to record the trace.  `run_sync_pd` is
the barrier-synchronized baseline: every round, all workers update from
the round-start state, then the server takes one dual step on the fresh
average; a round costs max_i(v_i) + upload + broadcast ticks of simulated
time, which is exactly the straggler penalty the asynchronous algorithm
avoids.  Both record the same checkpoint grid of the shared global
counter k (one unit per worker or server update), so traces line up row
for row.

Sample streams are owned per worker and indexed by the worker's own
update count in both algorithms.  With unit compute times and zero
transport delays the two algorithms then consume identical draws with
identical step-size indices, and their trajectories coincide exactly;
tests pin that equivalence in exact arithmetic.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import error_metric, saddle_oracle
from .engine import Engine, build_schedule
from .model import project_box, project_dual
from .oracle import SampleStream


@dataclass(frozen=True)
class StepSizeRule:
    """gamma_k for k >= 1: a fixed constant, or a0/(a1 + k)."""

    kind: str
    gamma: float = 0.0
    a0: float = 0.0
    a1: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if not self.gamma > 0:
                raise ValueError("constant rule needs gamma > 0")
        elif self.kind == "inverse":
            if not self.a0 > 0 or self.a1 < 0:
                raise ValueError("inverse rule needs a0 > 0 and a1 >= 0")
        else:
            raise ValueError(f"unknown step size kind {self.kind!r}")

    @classmethod
    def constant(cls, gamma):
        return cls(kind="constant", gamma=float(gamma))

    @classmethod
    def inverse(cls, a0, a1):
        return cls(kind="inverse", a0=float(a0), a1=float(a1))

    def gamma_at(self, k):
        """Step size at counter value k (scalar or array, k >= 1)."""
        if self.kind == "constant":
            return self.gamma * np.ones_like(np.asarray(k, dtype=float)) \
                if np.ndim(k) else self.gamma
        if np.ndim(k):
            return self.a0 / (self.a1 + np.asarray(k, dtype=float))
        return self.a0 / (self.a1 + k)

    def kernel_params(self):
        """(kind code, a0, a1) triple consumed by the event kernel."""
        if self.kind == "constant":
            return 0, self.gamma, 0.0
        return 1, self.a0, self.a1

    def b_squared(self, window):
        """Smallest b^2 with gamma_t - gamma_B <= b^2 * gamma_B^2 for t <= B.

        Zero for a constant rule; for the non-increasing rules shipped the
        maximizing t is 1, so the numeric minimum has a closed form.
        """
        if self.kind == "constant" or window <= 1:
            return 0.0
        g1 = self.gamma_at(1)
        gb = self.gamma_at(window)
        return max(0.0, (g1 - gb)) / gb ** 2


@dataclass
class RunTrace:
    """Checkpointed trajectory of one run.

    Arrays share the checkpoint axis; theta has shape (checkpoints, n).
    delta is the squared distance to the saddle oracle's point, g_mean
    the constraint value at the current true average decision.
    """

    algorithm: str
    seed: int
    k: np.ndarray
    tick: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    g_mean: np.ndarray
    theta: np.ndarray
    config_hash: str = ""

    def __post_init__(self):
        if not np.all(np.diff(self.k) > 0):
            raise ValueError("checkpoint counters must be strictly increasing")

    @property
    def n_records(self):
        return self.k.shape[0]


def checkpoint_grid(horizon, stride):
    """Counter values recorded: 0, stride, 2*stride, ..., horizon."""
    if stride < 1:
        raise ValueError("checkpoint stride must be >= 1")
    ks = list(range(0, horizon + 1, stride))
    if ks[-1] != horizon:
        ks.append(horizon)
    return ks


class _Recorder:
    def __init__(self, spec, saddle, algorithm, seed, n_slots):
        self.spec = spec
        self.saddle = saddle
        self.algorithm = algorithm
        self.seed = seed
        self.k = np.zeros(n_slots, dtype=np.int64)
        self.tick = np.zeros(n_slots, dtype=np.int64)
        self.delta = np.zeros(n_slots)
        self.lam = np.zeros(n_slots)
        self.g_mean = np.zeros(n_slots)
        self.theta = np.zeros((n_slots, spec.n))
        self._at = 0

    def record(self, k, tick, theta, lam):
        i = self._at
        self.k[i] = k
        self.tick[i] = tick
        self.delta[i] = error_metric(theta, lam, self.saddle)
        self.lam[i] = lam[0]
        self.g_mean[i] = float(self.spec.constraint.value(float(np.mean(theta)))[0])
        self.theta[i] = theta
        self._at += 1

    def trace(self):
        assert self._at == self.k.shape[0]
        return RunTrace(algorithm=self.algorithm, seed=self.seed,
                        k=self.k, tick=self.tick, delta=self.delta,
                        lam=self.lam, g_mean=self.g_mean, theta=self.theta)


def run_apd(spec, delay, rule, seed, horizon, checkpoint_stride=1,
            schedule=None, saddle=None, backend=None):
    """Run the asynchronous algorithm for exactly `horizon` counter steps.

    A prebuilt schedule may be passed in so seed sweeps share the
    (seed-independent) event timeline.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if saddle is None:
        saddle = saddle_oracle(spec)
    grid = checkpoint_grid(horizon, checkpoint_stride) if horizon else [0]
    rec = _Recorder(spec, saddle, "apd", seed, len(grid))
    if horizon == 0:
        rec.record(0, 0, np.zeros(spec.n), np.zeros(1))
        return rec.trace()
    if schedule is None:
        schedule = build_schedule(delay, horizon)
    elif schedule.horizon < horizon:
        raise ValueError("prebuilt schedule is shorter than the horizon")
    eng = Engine(spec, schedule, rule, seed, backend=backend)
    rec.record(0, 0, eng.theta, eng.lam)
    for kc in grid[1:]:
        eng.run_to_iteration(kc)
        ev = int(schedule.event_of_iteration[kc])
        rec.record(kc, int(schedule.tick[ev]), eng.theta, eng.lam)
    return rec.trace()


def run_sync_pd(spec, delay, rule, seed, horizon, checkpoint_stride=1,
                saddle=None):
    """Barrier-synchronized baseline on the same tick clock and counter.

    Per round: workers update in finish order (duration, then index) from
    the round-start multiplier; the server then updates from the fresh
    average of all n new models.  Every update advances the shared
    counter and uses that counter's step size.  The round completes, and
    the next one starts, max(v) + upload + broadcast ticks later.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if spec.m != 1:
        raise ValueError("run_sync_pd handles exactly one coupling row")
    if saddle is None:
        saddle = saddle_oracle(spec)
    grid = checkpoint_grid(horizon, checkpoint_stride) if horizon else [0]
    rec = _Recorder(spec, saddle, "sync", seed, len(grid))
    rec.record(0, 0, np.zeros(spec.n), np.zeros(1))
    if horizon == 0:
        return rec.trace()

    n = spec.n
    v = delay.compute_ticks
    order = sorted(range(n), key=lambda i: (v[i], i))
    round_ticks = int(max(v)) + delay.upload_delay + delay.broadcast_delay
    streams = [SampleStream.for_run(seed, i, spec.z_mean[i], spec.noise_sd)
               for i in range(n)]
    s = spec.coupling_scale
    cap = float(spec.constraint.capacity[0])
    theta = np.zeros(n)
    lam = np.zeros(1)
    grid_iter = iter(grid[1:])
    next_ck = next(grid_iter)
    k = 0
    round_start = 0
    while k < horizon:
        lam0 = lam[0]
        correction = s * lam0
        for i in order:
            k += 1
            gamma = rule.gamma_at(k)
            z = streams[i].draw()
            step = theta[i] - gamma * (2.0 * (theta[i] - z) + correction)
            theta[i] = min(max(step, spec.box_lo[i]), spec.box_hi[i])
            if k == next_ck:
                rec.record(k, round_start + int(v[i]), theta, lam)
                next_ck = next(grid_iter, None)
            if k == horizon:
                break
        if k < horizon:
            k += 1
            gamma = rule.gamma_at(k)
            lam_new = lam0 + gamma * ((float(theta.mean()) - cap) - spec.upsilon * lam0)
            lam[0] = min(max(lam_new, 0.0), float(spec.lambda_max))
            if k == next_ck:
                rec.record(k, round_start + int(max(v)) + delay.upload_delay,
                           theta, lam)
                next_ck = next(grid_iter, None)
        round_start += round_ticks
    return rec.trace()


# ---------------------------------------------------------------------------
# step-size conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSizeReport:
    """Outcome of checking the two convergence-theorem step conditions."""

    sup_ok: bool
    sup_value: float
    sup_limit: float
    ratio_ok: bool
    first_violation: Optional[tuple]   # (k, window index) or None
    horizon: int

    @property
    def ok(self):
        return self.sup_ok and self.ratio_ok


def check_stepsize_conditions(rule, p, window, mu, horizon):
    """Verify sup_k gamma_k <= 2/(p*mu) and the windowed ratio condition
    gamma_{k-(l+1)B+2} / gamma_{k-lB+2} <= 1 + (p*mu/2) * gamma_{k-lB+2}
    for every k <= horizon and window index l up to floor((k+1)/B),
    with indices at or below zero reading as the first step size."""
    if mu <= 0:
        raise ValueError("mu must be > 0")
    gamma1 = float(rule.gamma_at(1))
    sup_limit = 2.0 / (p * mu)
    sup_ok = gamma1 <= sup_limit

    gamma_of = rule.gamma_at
    first = None
    ks = np.arange(1, horizon + 1)
    q_of_k = (ks + 1) // window
    max_l = int(q_of_k.max()) if horizon >= 1 else 0
    for ell in range(1, max_l + 1):
        mask = q_of_k >= ell
        kk = ks[mask]
        hi_idx = kk - ell * window + 2
        lo_idx = kk - (ell + 1) * window + 2
        g_hi = np.where(hi_idx >= 1, gamma_of(np.maximum(hi_idx, 1)), gamma1)
        g_lo = np.where(lo_idx >= 1, gamma_of(np.maximum(lo_idx, 1)), gamma1)
        bad = g_lo / g_hi > 1.0 + 0.5 * p * mu * g_hi
        if bad.any():
            k_bad = int(kk[bad][0])
            if first is None or k_bad < first[0]:
                first = (k_bad, ell)
    return StepSizeReport(sup_ok=sup_ok, sup_value=gamma1, sup_limit=sup_limit,
                          ratio_ok=first is None, first_violation=first,
                          horizon=horizon)
