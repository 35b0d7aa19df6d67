"""Stochastic sampling and the delayed gradient oracles.

Each worker owns one seeded Gaussian stream, split off a run seed by a
64-bit mix so the draw sequence depends only on (run seed, worker index),
never on event interleaving.  Box-Muller is the fixed generation method;
see `rng` for the exact recipe and why it is hand-rolled.

These functions are the plain reference forms.  The batched simulator
kernel inlines the same arithmetic; tests hold the two routes together.
"""

from dataclasses import dataclass

import numpy as np

from . import rng


class SampleStream:
    """Deterministic per-worker sample source Z ~ N(mean, sd^2)."""

    def __init__(self, seed, worker, mean, sd):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.worker = worker
        self.mean = float(mean)
        self.sd = float(sd)
        self._state = np.uint64(self.seed)

    @classmethod
    def for_run(cls, run_seed, worker, mean, sd):
        """Split a run-level seed into this worker's stream seed."""
        return cls(rng.worker_seed(run_seed, worker), worker, mean, sd)

    def draw(self):
        z, self._state = rng.next_normal(self._state)
        return self.mean + self.sd * z


def sample(stream):
    """Next draw from the stream (advances its state)."""
    return stream.draw()


@dataclass(frozen=True)
class DelayedDualTerm:
    """One broadcast dual correction as seen by a worker's inbox.

    payload    s * Jg(b)^T lambda at the dual iterate it was issued from
    issued_at  index of that dual iterate (0 for the initial zero term)
    deliver_at tick at which the worker may first consume it
    """

    payload: float
    issued_at: int
    deliver_at: int


ZERO_TERM = DelayedDualTerm(payload=0.0, issued_at=0, deliver_at=0)


def stoch_grad_loss(spec, worker, theta_i, z):
    """Sampled loss gradient 2(theta_i - z); unbiased for grad f_i."""
    return 2.0 * (float(theta_i) - float(z))


def delayed_primal_gradient(spec, worker, theta_i, z, term=None):
    """Worker-side stochastic gradient: sampled loss slope plus the stale
    dual correction currently in the inbox.

    Before the first broadcast arrives the inbox holds the zero term,
    consistent with the zero initial multiplier.
    """
    if term is None:
        term = ZERO_TERM
    return stoch_grad_loss(spec, worker, theta_i, z) + term.payload


def dual_gradient(spec, buffer_models, lam):
    """Server-side dual gradient g(mean of buffered models) - upsilon*lambda.

    The buffer holds the latest model received from each worker (zeros at
    start), so its mean is generally stale relative to the true iterates.
    """
    lam = np.asarray(lam, dtype=float)
    buffer_models = np.asarray(buffer_models, dtype=float)
    if buffer_models.shape != (spec.n,):
        raise ValueError(f"buffer must have shape ({spec.n},), got {buffer_models.shape}")
    bbar = float(buffer_models.mean())
    return spec.constraint.value(bbar) - spec.upsilon * lam
