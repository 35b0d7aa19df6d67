"""Event-replay kernel shared by the jit and plain backends.

The schedule builder has already fixed the total event order, the slot
each produced model lands in, and which models every server wake ingests
(CSR triplet sr_ptr/sr_worker/sr_slot).  What is left here is pure
numerics: replay events [e0, e1) and mutate the state arrays in place.

The function body stays inside the numba-compatible subset (scalars,
1-d arrays, math.*) so `backends` can compile the very same code object
with @njit or run it as plain Python under an errstate guard.  Keep it
free of closures, dicts and numpy ufunc calls.

splitmix64 + Box-Muller are inlined rather than called from `rng` so the
kernel has no Python-level calls; `tests/test_rng.py` pins the two copies
to each other draw by draw.
"""

import math

import numpy as np

U64_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
U64_MIX2 = np.uint64(0x94D049BB133111EB)
INV53 = 1.0 / 9007199254740992.0
TWO_PI = 6.283185307179586


def run_segment(ev_kind, ev_worker, ev_aux, e0, e1, k0,
                sr_ptr, sr_worker, sr_slot,
                z_mean, noise_sd, box_lo, box_hi,
                capacity, lambda_max, upsilon, coupling_scale,
                gamma_kind, gamma_a0, gamma_a1,
                theta, lam, buf, inbox, sent, payload, rng_state):
    # ev_kind: 0 = server wake, 1 = broadcast delivery, 2 = worker finish.
    # ev_aux:  wake ordinal / payload slot / sent slot respectively.
    n = theta.shape[0]
    k = k0
    for e in range(e0, e1):
        kind = ev_kind[e]
        w = ev_worker[e]
        aux = ev_aux[e]
        if kind == 2:
            # worker finish: draw, stochastic primal step, ship the model
            k += 1
            if gamma_kind == 0:
                gamma = gamma_a0
            else:
                gamma = gamma_a0 / (gamma_a1 + k)
            s = rng_state[w] + U64_GOLDEN
            z1 = s
            z1 = (z1 ^ (z1 >> 30)) * U64_MIX1
            z1 = (z1 ^ (z1 >> 27)) * U64_MIX2
            z1 = z1 ^ (z1 >> 31)
            s = s + U64_GOLDEN
            z2 = s
            z2 = (z2 ^ (z2 >> 30)) * U64_MIX1
            z2 = (z2 ^ (z2 >> 27)) * U64_MIX2
            z2 = z2 ^ (z2 >> 31)
            rng_state[w] = s
            u1 = (float(z1 >> 11) + 0.5) * INV53
            u2 = (float(z2 >> 11) + 0.5) * INV53
            zs = z_mean[w] + noise_sd * (math.sqrt(-2.0 * math.log(u1))
                                         * math.cos(TWO_PI * u2))
            grad = 2.0 * (theta[w] - zs) + inbox[w]
            th = theta[w] - gamma * grad
            if th < box_lo[w]:
                th = box_lo[w]
            elif th > box_hi[w]:
                th = box_hi[w]
            theta[w] = th
            sent[aux] = th
        elif kind == 0:
            # server wake: ingest every model visible at this tick, then
            # one projected dual ascent step on the buffered average
            k += 1
            if gamma_kind == 0:
                gamma = gamma_a0
            else:
                gamma = gamma_a0 / (gamma_a1 + k)
            for idx in range(sr_ptr[aux], sr_ptr[aux + 1]):
                buf[sr_worker[idx]] = sent[sr_slot[idx]]
            bbar = 0.0
            for i in range(n):
                bbar += buf[i]
            bbar /= n
            lm = lam[0] + gamma * ((bbar - capacity) - upsilon * lam[0])
            if lm < 0.0:
                lm = 0.0
            elif lm > lambda_max:
                lm = lambda_max
            lam[0] = lm
            payload[aux + 1] = coupling_scale * lm
        else:
            # broadcast delivery: swap the worker's dual correction term
            inbox[w] = payload[aux]
    return k
