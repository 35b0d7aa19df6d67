"""Deterministic random number generation shared by all components.

The generator is splitmix64: a 64-bit counter-free PRNG with a single
uint64 state word.  It is trivially portable, has no vector state to
serialize, and the exact same arithmetic can be inlined inside a
compiled kernel, which is why it is used here instead of numpy's
Generator machinery: simulator traces must be bit-identical across the
compiled and interpreted backends and across platforms.

Gaussian variates use the Box-Muller transform, cosine branch only.
Each normal consumes exactly two splitmix64 outputs; the sine companion
is discarded on purpose (a cached second variate would make stream
position depend on call history, complicating replay).

All functions here run under ``np.errstate(over='ignore')`` because
splitmix64 relies on uint64 wraparound, which numpy 2.x reports as a
scalar overflow warning.
"""

import math

import numpy as np

U64 = np.uint64

GOLDEN = U64(0x9E3779B97F4A7C15)
MIX1 = U64(0xBF58476D1CE4E5B9)
MIX2 = U64(0x94D049BB133111EB)

# (2**-53); converts the top 53 bits of a uint64 into a double in (0, 1)
_INV53 = 1.0 / 9007199254740992.0

_TWO_PI = 2.0 * math.pi


def next_u64(state):
    """Advance the splitmix64 state once.

    Returns (output, new_state); both numpy uint64.
    """
    with np.errstate(over="ignore"):
        state = U64(state) + GOLDEN
        z = state
        z = (z ^ (z >> U64(30))) * MIX1
        z = (z ^ (z >> U64(27))) * MIX2
        z = z ^ (z >> U64(31))
    return z, state


def next_unit(state):
    """Next double in the open interval (0, 1)."""
    z, state = next_u64(state)
    return (float(z >> U64(11)) + 0.5) * _INV53, state


def next_normal(state):
    """Next standard normal draw (Box-Muller, cosine branch)."""
    u1, state = next_unit(state)
    u2, state = next_unit(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2), state


def mix64(x):
    """One-shot 64-bit finalizer: the first splitmix64 output from state x."""
    out, _ = next_u64(x)
    return out


def worker_seed(run_seed, worker):
    """Derive worker ``worker``'s private stream state for one run.

    The rule is fixed: run seed XOR worker index, passed through the
    64-bit mix.  Streams for distinct workers are therefore decorrelated
    and independent of event interleaving.
    """
    with np.errstate(over="ignore"):
        return mix64(U64(run_seed) ^ U64(worker))


def spawn_run_seeds(master_seed, count):
    """Successive splitmix64 outputs of the master seed, one per run."""
    seeds = []
    state = U64(master_seed)
    for _ in range(count):
        out, state = next_u64(state)
        seeds.append(int(out))
    return seeds
