"""Deterministic discrete-event model of workers and a coordinating server.

Three event kinds drive the system, processed in a fixed total order
(tick, kind priority, worker index):

  server-receive (0)    the server wakes, ingests every model that has
                        arrived by this tick, takes one projected dual
                        ascent step on the buffered average, and enqueues
                        a broadcast of the fresh dual correction term
  broadcast-deliver (1) one worker's inbox payload is replaced
  worker-finish (2)     worker i completes an update: it draws a sample,
                        takes one projected stochastic primal step using
                        the dual term currently in its inbox, and ships
                        the new model to the server

The global iteration counter k advances on worker-finish and
server-receive events only; deliveries are pure plumbing.  Worker i
finishes at ticks v_i, 2*v_i, ...; a finished model reaches the server
buffer upload_delay ticks later (at least one tick, so the write can
never precede its producing finish within the same tick); the broadcast
lands broadcast_delay ticks after the server wake.  Simultaneous
arrivals are ingested by a single wake with a single dual update, which
is what makes the zero-delay configuration collapse to one server step
per round of worker updates.

The schedule - event order, model slots, ingest lists, staleness - is
entirely structural: it depends on the delay model alone, never on
sampled values.  `build_schedule` therefore precomputes it once and
`Engine` replays segments of it through a numeric kernel backend.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import backends
from .rng import worker_seed

EV_SERVER = 0
EV_BROADCAST = 1
EV_FINISH = 2

KIND_NAMES = {EV_SERVER: "server-receive",
              EV_BROADCAST: "broadcast-deliver",
              EV_FINISH: "worker-finish"}


@dataclass(frozen=True)
class DelayModel:
    """Per-worker compute durations and the two transport delays, in ticks.

    compute_ticks entries are positive integers (math.inf marks a worker
    that never finishes); halt_after optionally gives the last tick at
    which each worker may still finish, for modeling workers that stop.
    """

    compute_ticks: tuple
    upload_delay: int = 0
    broadcast_delay: int = 0
    halt_after: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "compute_ticks", tuple(self.compute_ticks))
        if self.halt_after is not None:
            object.__setattr__(self, "halt_after", tuple(self.halt_after))
        problems = self.violations()
        if problems:
            raise ValueError("invalid delay model: " + "; ".join(problems))

    def violations(self):
        out = []
        if len(self.compute_ticks) < 1:
            out.append("compute_ticks must name at least one worker")
        for i, v in enumerate(self.compute_ticks):
            if v is math.inf or v == math.inf:
                continue
            if not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())) or v < 1:
                out.append(f"compute_ticks[{i}] must be a positive integer or inf")
        if not any(v != math.inf for v in self.compute_ticks):
            out.append("at least one worker needs a finite compute duration")
        if not (isinstance(self.upload_delay, int) and self.upload_delay >= 0):
            out.append("upload_delay must be a nonnegative integer")
        if not (isinstance(self.broadcast_delay, int) and self.broadcast_delay >= 0):
            out.append("broadcast_delay must be a nonnegative integer")
        if self.halt_after is not None:
            if len(self.halt_after) != len(self.compute_ticks):
                out.append("halt_after must have one entry per worker")
            else:
                for i, h in enumerate(self.halt_after):
                    if h is not None and not (isinstance(h, int) and h >= 0):
                        out.append(f"halt_after[{i}] must be None or a nonnegative integer")
        return out

    @property
    def n_workers(self):
        return len(self.compute_ticks)


@dataclass
class Schedule:
    """Precomputed event timeline for one delay model and horizon.

    Parallel arrays, one entry per event in processing order:
      tick, kind, worker (-1 on server rows), aux, k_after, staleness.
    aux is the wake ordinal for server rows, the payload slot for
    deliveries and the sent-model slot for finishes.  staleness is the
    iteration age of what the event consumed: the inbox payload for a
    finish, the oldest buffer entry for a wake (initial zero entries
    count from iteration 0), and the delivered payload for a delivery.

    sr_ptr/sr_worker/sr_slot list, per wake, which sent models land in
    which buffer slots.  event_of_iteration[j] is the index of the event
    that produced iterate j.
    """

    delay: DelayModel
    horizon: int
    tick: np.ndarray
    kind: np.ndarray
    worker: np.ndarray
    aux: np.ndarray
    k_after: np.ndarray
    staleness: np.ndarray
    sr_ptr: np.ndarray
    sr_worker: np.ndarray
    sr_slot: np.ndarray
    event_of_iteration: np.ndarray
    wf_count: int
    sr_count: int

    @property
    def n_events(self):
        return self.tick.shape[0]

    @property
    def tau_bar(self):
        """Largest staleness consumed by any update along the timeline."""
        upd = self.kind != EV_BROADCAST
        return int(self.staleness[upd].max()) if upd.any() else 0

    def segment_bounds(self, k_lo, k_hi):
        """Event half-open range [e0, e1) advancing the counter k_lo -> k_hi."""
        e0 = 0 if k_lo == 0 else int(self.event_of_iteration[k_lo]) + 1
        e1 = int(self.event_of_iteration[k_hi]) + 1
        return e0, e1


def build_schedule(delay: DelayModel, horizon: int) -> Schedule:
    """Enumerate events in total order until the counter reaches `horizon`.

    The timeline ends at the event that produces iterate `horizon`;
    deliveries queued beyond it are dropped since they cannot influence
    any recorded iterate.
    """
    if not (isinstance(horizon, int) and horizon >= 1):
        raise ValueError("horizon must be a positive integer")
    n = delay.n_workers
    v = delay.compute_ticks
    halt = delay.halt_after or (None,) * n

    # heap entries: (tick, priority, worker, ...extras); the triple alone
    # is unique, so extras never take part in comparisons
    heap = []
    for i in range(n):
        if v[i] != math.inf and (halt[i] is None or v[i] <= halt[i]):
            heapq.heappush(heap, (int(v[i]), EV_FINISH, i))
    pending = {}            # arrival tick -> [(worker, sent slot, producer k)]
    inbox_version = [0] * n
    buffer_version = [0] * n

    tick_l, kind_l, worker_l, aux_l, k_l, stale_l = [], [], [], [], [], []
    sr_ptr = [0]
    sr_worker_l, sr_slot_l = [], []
    event_of_iter = np.full(horizon + 1, -1, dtype=np.int64)

    k = 0
    wf = 0
    sr = 0
    while heap and k < horizon:
        entry = heapq.heappop(heap)
        t, prio, w = entry[0], entry[1], entry[2]
        if prio == EV_FINISH:
            k += 1
            tick_l.append(t)
            kind_l.append(EV_FINISH)
            worker_l.append(w)
            aux_l.append(wf)
            k_l.append(k)
            stale_l.append(k - inbox_version[w])
            event_of_iter[k] = len(tick_l) - 1
            arrival = t + max(delay.upload_delay, 1)
            if arrival not in pending:
                pending[arrival] = []
                heapq.heappush(heap, (arrival, EV_SERVER, -1))
            pending[arrival].append((w, wf, k))
            wf += 1
            nxt = t + int(v[w])
            if halt[w] is None or nxt <= halt[w]:
                heapq.heappush(heap, (nxt, EV_FINISH, w))
        elif prio == EV_SERVER:
            arrivals = pending.pop(t)
            k += 1
            for wi, slot, prod_k in arrivals:
                buffer_version[wi] = prod_k
                sr_worker_l.append(wi)
                sr_slot_l.append(slot)
            sr_ptr.append(len(sr_worker_l))
            tick_l.append(t)
            kind_l.append(EV_SERVER)
            worker_l.append(-1)
            aux_l.append(sr)
            k_l.append(k)
            stale_l.append(k - min(buffer_version))
            event_of_iter[k] = len(tick_l) - 1
            bd_tick = t + delay.broadcast_delay
            for i in range(n):
                heapq.heappush(heap, (bd_tick, EV_BROADCAST, i, sr + 1, k))
            sr += 1
        else:
            payload_idx, issue_k = entry[3], entry[4]
            inbox_version[w] = issue_k
            tick_l.append(t)
            kind_l.append(EV_BROADCAST)
            worker_l.append(w)
            aux_l.append(payload_idx)
            k_l.append(k)
            stale_l.append(k - issue_k)

    if k < horizon:
        raise RuntimeError(f"schedule exhausted at iteration {k} before horizon {horizon}; "
                           "all workers halted")

    return Schedule(
        delay=delay,
        horizon=horizon,
        tick=np.asarray(tick_l, dtype=np.int64),
        kind=np.asarray(kind_l, dtype=np.int8),
        worker=np.asarray(worker_l, dtype=np.int64),
        aux=np.asarray(aux_l, dtype=np.int64),
        k_after=np.asarray(k_l, dtype=np.int64),
        staleness=np.asarray(stale_l, dtype=np.int64),
        sr_ptr=np.asarray(sr_ptr, dtype=np.int64),
        sr_worker=np.asarray(sr_worker_l, dtype=np.int64),
        sr_slot=np.asarray(sr_slot_l, dtype=np.int64),
        event_of_iteration=event_of_iter,
        wf_count=wf,
        sr_count=sr,
    )


@dataclass
class SystemState:
    """Snapshot of one run: iterates, buffers, counter, clock."""

    theta: np.ndarray
    lam: np.ndarray
    buffer: np.ndarray
    inbox: np.ndarray
    k: int
    clock: int


@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    worker: int
    k: int
    staleness: int


class Engine:
    """Replays a schedule's events over one problem instance.

    The numeric state lives in flat arrays mutated in place by the kernel
    backend; `step` advances one event, `run_to_iteration` jumps whole
    segments between checkpoints with a single kernel call.
    """

    def __init__(self, spec, schedule, rule, seed, backend=None):
        if spec.m != 1:
            raise ValueError("the event kernel handles exactly one coupling row")
        if schedule.delay.n_workers != spec.n:
            raise ValueError(f"schedule was built for {schedule.delay.n_workers} workers, "
                             f"problem has {spec.n}")
        self.spec = spec
        self.schedule = schedule
        self.rule = rule
        self.seed = seed
        self._segment = backends.select(backend)
        gk, ga0, ga1 = rule.kernel_params()
        self._gamma_args = (int(gk), float(ga0), float(ga1))
        n = spec.n
        self.theta = np.zeros(n)
        self.lam = np.zeros(1)
        self.buffer = np.zeros(n)
        self.inbox = np.zeros(n)
        self._sent = np.zeros(schedule.wf_count)
        self._payload = np.zeros(schedule.sr_count + 1)
        self.rng_state = np.array([worker_seed(seed, i) for i in range(n)],
                                  dtype=np.uint64)
        self.k = 0
        self._cursor = 0

    def _run(self, e0, e1):
        s = self.spec
        sch = self.schedule
        self.k = int(self._segment(
            sch.kind, sch.worker, sch.aux, e0, e1, self.k,
            sch.sr_ptr, sch.sr_worker, sch.sr_slot,
            s.z_mean, float(s.noise_sd), s.box_lo, s.box_hi,
            float(s.constraint.capacity[0]), float(s.lambda_max),
            float(s.upsilon), float(s.coupling_scale),
            *self._gamma_args,
            self.theta, self.lam, self.buffer, self.inbox,
            self._sent, self._payload, self.rng_state))
        self._cursor = e1

    def step(self):
        """Process the next event; returns its record, or None at the end."""
        if self._cursor >= self.schedule.n_events:
            return None
        e = self._cursor
        self._run(e, e + 1)
        sch = self.schedule
        return Event(tick=int(sch.tick[e]), kind=KIND_NAMES[int(sch.kind[e])],
                     worker=int(sch.worker[e]), k=int(sch.k_after[e]),
                     staleness=int(sch.staleness[e]))

    def run_to_iteration(self, k_target):
        """Advance until the counter equals k_target (no-op if already past)."""
        if k_target > self.schedule.horizon:
            raise ValueError(f"k_target {k_target} beyond horizon {self.schedule.horizon}")
        if k_target <= self.k:
            return
        e1 = int(self.schedule.event_of_iteration[k_target]) + 1
        self._run(self._cursor, e1)

    @property
    def clock(self):
        return int(self.schedule.tick[self._cursor - 1]) if self._cursor else 0

    @property
    def state(self):
        return SystemState(theta=self.theta.copy(), lam=self.lam.copy(),
                           buffer=self.buffer.copy(), inbox=self.inbox.copy(),
                           k=self.k, clock=self.clock)


def dump_event_log(schedule, path):
    """Write the event timeline, one line per event, tab-separated:
    tick, k, kind, worker, staleness (worker is -1 on server rows)."""
    with open(path, "w") as fh:
        for e in range(schedule.n_events):
            fh.write(f"{schedule.tick[e]}\t{schedule.k_after[e]}\t"
                     f"{KIND_NAMES[int(schedule.kind[e])]}\t"
                     f"{schedule.worker[e]}\t{schedule.staleness[e]}\n")


# ---------------------------------------------------------------------------
# assumption validation
# ---------------------------------------------------------------------------

@dataclass
class AssumptionReport:
    """Empirical delay and activation-window structure of one schedule.

    uniform_p is set when one p makes every window of length
    window_length contain exactly p activations per worker and p server
    wakes, over the whole horizon.  Otherwise window_length falls back to
    the detected steady period and activations_per_window records the
    exact per-entity counts inside steady windows (entities keyed
    "worker i" / "server"), which is as close to the uniform-window
    condition as an uneven-speed schedule can come.  p_min is the
    smallest steady count, the conservative choice when a single p is
    needed downstream.
    """

    tau_bar: int
    window_length: Optional[int]
    uniform_p: Optional[int]
    activations_per_window: Optional[dict]
    models_per_window: Optional[int]
    p_min: Optional[int]
    steady_from: Optional[int]
    violations: list
    notes: list

    @property
    def ok(self):
        return not self.violations


def _entity_sequence(schedule):
    """Per-iteration entity ids: worker index for finishes, n for wakes."""
    upd = schedule.kind != EV_BROADCAST
    ids = schedule.worker[upd].copy()
    ids[ids < 0] = schedule.delay.n_workers
    return ids


def validate_assumptions(schedule, max_window=256):
    """Report empirical delay/activation structure against the bounded-delay
    and uniform-window conditions; see AssumptionReport."""
    n = schedule.delay.n_workers
    ids = _entity_sequence(schedule)
    horizon = ids.shape[0]
    n_ent = n + 1
    violations, notes = [], []

    # models ingested at each iteration (nonzero only on server iterations)
    models = np.zeros(horizon, dtype=np.int64)
    upd_kind = schedule.kind[schedule.kind != EV_BROADCAST]
    ingest = np.diff(schedule.sr_ptr)
    models[upd_kind == EV_SERVER] = ingest

    totals = np.bincount(ids, minlength=n_ent)
    for i in range(n):
        if totals[i] == 0:
            violations.append(f"worker {i} is never activated within the horizon")
    if totals[n] == 0:
        violations.append("the server never receives a model within the horizon")

    # prefix activation counts, one row per entity
    onehot = np.zeros((n_ent, horizon + 1), dtype=np.int64)
    onehot[ids, np.arange(1, horizon + 1)] = 1
    prefix = np.cumsum(onehot, axis=1)
    models_prefix = np.concatenate([[0], np.cumsum(models)])

    def window_counts(length):
        return prefix[:, length:] - prefix[:, :-length]

    # exact uniform windows over the whole horizon
    for b in range(1, min(horizon, max_window) + 1):
        wc = window_counts(b)
        lo, hi = wc.min(axis=1), wc.max(axis=1)
        if np.array_equal(lo, hi) and lo.min() == lo.max() and lo[0] > 0:
            mpw = models_prefix[b:] - models_prefix[:-b]
            return AssumptionReport(
                tau_bar=schedule.tau_bar, window_length=b,
                uniform_p=int(lo[0]),
                activations_per_window=_count_dict(lo, n),
                models_per_window=int(mpw[0]) if mpw.min() == mpw.max() else None,
                p_min=int(lo[0]), steady_from=0,
                violations=violations, notes=notes)

    # no single (p, B): fall back to the steady period of the tail
    tail = ids[horizon // 2:]
    period = None
    for cand in range(1, tail.shape[0] // 2 + 1):
        if np.array_equal(tail[cand:], tail[:-cand]):
            period = cand
            break
    if period is None:
        violations.append("no uniform activation window and no periodic steady "
                          f"state detected (searched windows up to {max_window})")
        return AssumptionReport(tau_bar=schedule.tau_bar, window_length=None,
                                uniform_p=None, activations_per_window=None,
                                models_per_window=None, p_min=None,
                                steady_from=None, violations=violations, notes=notes)

    wc = window_counts(period)
    steady = wc[:, -1]
    mismatch = (wc != steady[:, None]).any(axis=0)
    steady_from = int(mismatch.nonzero()[0].max()) + 1 if mismatch.any() else 0
    for i in range(n):
        if steady[i] == 0:
            violations.append(f"worker {i} is inactive in the steady state "
                              f"(stops contributing after iteration {int(prefix[i].argmax())})")
    if steady.min() != steady.max():
        notes.append("per-entity window counts are unequal; no single p satisfies "
                     "the uniform-window condition")
    mpw = models_prefix[period:] - models_prefix[:-period]
    steady_mpw = int(mpw[-1]) if mpw.shape[0] else None
    return AssumptionReport(
        tau_bar=schedule.tau_bar, window_length=period,
        uniform_p=None,
        activations_per_window=_count_dict(steady, n),
        models_per_window=steady_mpw,
        p_min=int(steady.min()) if steady.min() > 0 else None,
        steady_from=steady_from,
        violations=violations, notes=notes)


def _count_dict(counts, n):
    out = {f"worker {i}": int(counts[i]) for i in range(n)}
    out["server"] = int(counts[n])
    return out
