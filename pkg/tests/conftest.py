import numpy as np
import pytest

import apdsim as A


def make_alloc5(dual_scaling, lambda_max):
    """The 5-worker benchmark allocation instance."""
    return A.ProblemSpec(
        n=5,
        z_mean=np.array([10.0, 10.0, 10.0, 12.0, 12.0]),
        noise_sd=2.0,
        constraint=A.AffineMeanConstraint(5.0),
        box_lo=np.zeros(5),
        box_hi=np.array([7.0, 7.0, 7.0, 10.0, 10.0]),
        lambda_max=lambda_max,
        upsilon=1e-5,
        dual_scaling=dual_scaling,
    )


@pytest.fixture(scope="session")
def alloc5():
    """Benchmark instance with the scaled dual correction, wide dual box."""
    return make_alloc5(dual_scaling=True, lambda_max=100.0)


@pytest.fixture(scope="session")
def alloc5_unscaled():
    """Benchmark instance at the reference operating point (no 1/n, dual box [0,10])."""
    return make_alloc5(dual_scaling=False, lambda_max=10.0)


@pytest.fixture(scope="session")
def alloc5_100():
    """Unscaled coupling but a dual box wide enough for the interior saddle."""
    return make_alloc5(dual_scaling=False, lambda_max=100.0)


@pytest.fixture(scope="session")
def hetero_delay():
    """The heterogeneous-speed delay model of the fig2 scenario."""
    return A.DelayModel(compute_ticks=(4, 4, 3, 2, 1), upload_delay=2,
                        broadcast_delay=1)


@pytest.fixture(scope="session")
def inverse_rule():
    return A.StepSizeRule.inverse(10.0, 100.0)


@pytest.fixture(scope="session")
def toy2():
    """Tiny 2-worker instance whose numbers fit hand arithmetic."""
    return A.ProblemSpec(
        n=2,
        z_mean=np.array([1.0, 3.0]),
        noise_sd=0.5,
        constraint=A.AffineMeanConstraint(1.0),
        box_lo=np.array([0.0, 0.0]),
        box_hi=np.array([2.0, 4.0]),
        lambda_max=2.0,
        upsilon=0.5,
        dual_scaling=True,
    )
