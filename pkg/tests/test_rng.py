"""The generator must match an independent big-int reimplementation bit
for bit: every simulator trace hangs off these streams."""

import math

import numpy as np

from apdsim import rng

MASK = (1 << 64) - 1


def splitmix64_py(state):
    """Reference splitmix64 in plain python ints."""
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    z = z ^ (z >> 31)
    return z, state


def test_next_u64_matches_reference():
    for seed in (0, 1, 42, 0xDEADBEEF, MASK, MASK - 12345):
        state_np = np.uint64(seed)
        state_py = seed
        for _ in range(100):
            out_np, state_np = rng.next_u64(state_np)
            out_py, state_py = splitmix64_py(state_py)
            assert int(out_np) == out_py
            assert int(state_np) == state_py


def test_next_unit_open_interval():
    state = np.uint64(7)
    for _ in range(1000):
        u, state = rng.next_unit(state)
        assert 0.0 < u < 1.0


def test_next_unit_matches_reference():
    # (top 53 bits + 0.5) / 2^53, recomputed from the reference output
    state_py = 981234
    state_np = np.uint64(state_py)
    for _ in range(50):
        out_py, state_py = splitmix64_py(state_py)
        expected = ((out_py >> 11) + 0.5) / 2.0 ** 53
        u, state_np = rng.next_unit(state_np)
        assert u == expected


def test_next_normal_matches_reference():
    # cosine-branch Box-Muller from two reference uniforms
    state_py = 55
    state_np = np.uint64(state_py)
    for _ in range(50):
        o1, state_py = splitmix64_py(state_py)
        o2, state_py = splitmix64_py(state_py)
        u1 = ((o1 >> 11) + 0.5) / 2.0 ** 53
        u2 = ((o2 >> 11) + 0.5) / 2.0 ** 53
        expected = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        z, state_np = rng.next_normal(state_np)
        assert z == expected


def test_normal_consumes_exactly_two_outputs():
    state0 = np.uint64(1234)
    _, state1 = rng.next_u64(state0)
    _, state2 = rng.next_u64(state1)
    _, state_after = rng.next_normal(state0)
    assert int(state_after) == int(state2)


def test_worker_seed_is_mix_of_xor():
    for run_seed in (0, 3, 2 ** 63):
        for worker in (0, 1, 17):
            expected, _ = splitmix64_py(run_seed ^ worker)
            assert int(rng.worker_seed(run_seed, worker)) == expected


def test_worker_seeds_distinct():
    seeds = [int(rng.worker_seed(99, w)) for w in range(64)]
    assert len(set(seeds)) == len(seeds)


def test_spawn_run_seeds_reference():
    state = 777
    expected = []
    for _ in range(10):
        out, state = splitmix64_py(state)
        expected.append(out)
    assert rng.spawn_run_seeds(777, 10) == expected


def test_spawn_run_seeds_distinct_and_deterministic():
    a = rng.spawn_run_seeds(31337, 100)
    b = rng.spawn_run_seeds(31337, 100)
    assert a == b
    assert len(set(a)) == 100


def test_normal_moments():
    # 1e5 draws: mean sd is 1/sqrt(1e5) ~ 0.0032, so 0.02 is a 6-sigma gate
    state = np.uint64(2)
    zs = np.empty(100_000)
    for i in range(zs.shape[0]):
        zs[i], state = rng.next_normal(state)
    assert abs(zs.mean()) < 0.02
    assert abs(zs.var() - 1.0) < 0.03
