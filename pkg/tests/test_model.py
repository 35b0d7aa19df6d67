import numpy as np
import pytest

import apdsim as A
from apdsim import model


# --- hand-checked values on the toy instance -------------------------------
# toy2: n=2, z_mean=(1,3), sd=0.5, c=1, boxes [0,2]x[0,4], lambda_max=2,
# upsilon=0.5, scaled coupling s=1/2.

def test_expected_loss_hand(toy2):
    # (0-1)^2 = 1, (5-3)^2 = 4
    assert model.eval_expected_loss(toy2, 0, 0.0) == 1.0
    assert model.eval_expected_loss(toy2, 1, 5.0) == 4.0


def test_lagrangian_hand(toy2):
    # theta=(2,0): loss = (2-1)^2+(0-3)^2 = 10; mean = 1, g = 0;
    # lambda=1: + 1*0 - 0.25*1^2... upsilon/2 * 1 = 0.25 -> 9.75
    val = model.eval_lagrangian(toy2, np.array([2.0, 0.0]), np.array([1.0]))
    assert val == pytest.approx(10.0 + 0.0 - 0.25, abs=1e-15)


def test_grad_primal_hand(toy2):
    # worker 0 at theta=(2,0), lambda=1: 2*(2-1) + (1/2)*1*1 = 2.5
    # worker 1: 2*(0-3) + 0.5 = -5.5
    th, lam = np.array([2.0, 0.0]), np.array([1.0])
    assert model.grad_primal(toy2, th, lam, 0) == 2.5
    assert model.grad_primal(toy2, th, lam, 1) == -5.5
    assert np.array_equal(model.grad_primal_all(toy2, th, lam),
                          np.array([2.5, -5.5]))


def test_grad_dual_hand(toy2):
    # theta=(2,0): mean 1, g = 1-1 = 0; minus upsilon*lambda = -0.5
    g = model.grad_dual(toy2, np.array([2.0, 0.0]), np.array([1.0]))
    assert np.array_equal(g, np.array([-0.5]))


def test_gradient_map_stacks_negated_dual(toy2):
    th, lam = np.array([2.0, 0.0]), np.array([1.0])
    phi = model.gradient_map(toy2, th, lam)
    assert np.array_equal(phi, np.array([2.5, -5.5, 0.5]))


def test_coupling_scale(toy2, alloc5_unscaled):
    assert toy2.coupling_scale == 0.5
    assert alloc5_unscaled.coupling_scale == 1.0


# --- finite differences ------------------------------------------------------

def test_gradients_match_finite_differences(alloc5):
    rs = np.random.RandomState(0)
    h = 1e-6
    for _ in range(20):
        th = rs.uniform(0.0, 10.0, size=5)
        lam = rs.uniform(0.0, 100.0, size=1)
        for i in range(5):
            e = np.zeros(5); e[i] = h
            fd = (model.eval_lagrangian(alloc5, th + e, lam)
                  - model.eval_lagrangian(alloc5, th - e, lam)) / (2 * h)
            an = model.grad_primal(alloc5, th, lam, i)
            assert fd == pytest.approx(an, rel=1e-6, abs=1e-6)
        fd_l = (model.eval_lagrangian(alloc5, th, lam + h)
                - model.eval_lagrangian(alloc5, th, lam - h)) / (2 * h)
        assert fd_l == pytest.approx(model.grad_dual(alloc5, th, lam)[0],
                                     rel=1e-6, abs=1e-6)


# --- monotonicity and Lipschitz continuity of the stacked map ---------------

def _random_pairs(spec, count, seed):
    rs = np.random.RandomState(seed)
    for _ in range(count):
        th1 = rs.uniform(spec.box_lo, spec.box_hi)
        th2 = rs.uniform(spec.box_lo, spec.box_hi)
        l1 = rs.uniform(0.0, spec.lambda_max, size=1)
        l2 = rs.uniform(0.0, spec.lambda_max, size=1)
        yield th1, l1, th2, l2


def test_map_strongly_monotone_when_scaled(alloc5):
    """With the 1/n coupling the cross terms cancel exactly:
    <Phi(w)-Phi(w'), w-w'> = 2|dtheta|^2 + upsilon*dlambda^2."""
    mu = A.compute_constants(alloc5).mu
    for th1, l1, th2, l2 in _random_pairs(alloc5, 1000, seed=1):
        dphi = model.gradient_map(alloc5, th1, l1) - model.gradient_map(alloc5, th2, l2)
        dw = np.concatenate([th1 - th2, l1 - l2])
        inner = float(dphi @ dw)
        exact = 2.0 * float(np.sum((th1 - th2) ** 2)) \
            + alloc5.upsilon * float((l1[0] - l2[0]) ** 2)
        assert inner == pytest.approx(exact, rel=1e-9, abs=1e-12)
        assert inner >= mu * float(dw @ dw) - 1e-9


def test_map_lipschitz(alloc5):
    lip = A.compute_constants(alloc5).lipschitz
    for th1, l1, th2, l2 in _random_pairs(alloc5, 1000, seed=2):
        dphi = model.gradient_map(alloc5, th1, l1) - model.gradient_map(alloc5, th2, l2)
        dw = np.concatenate([th1 - th2, l1 - l2])
        assert np.linalg.norm(dphi) <= lip * np.linalg.norm(dw) + 1e-12


# --- projections -------------------------------------------------------------

def test_project_box_values():
    lo, hi = np.array([0.0, -1.0]), np.array([1.0, 1.0])
    x = np.array([2.0, -3.0])
    assert np.array_equal(model.project_box(x, lo, hi), np.array([1.0, -1.0]))
    inside = np.array([0.5, 0.0])
    assert np.array_equal(model.project_box(inside, lo, hi), inside)


def test_project_dual_values():
    assert np.array_equal(model.project_dual(np.array([-0.5]), 2.0), np.array([0.0]))
    assert np.array_equal(model.project_dual(np.array([3.5]), 2.0), np.array([2.0]))


# --- constants ----------------------------------------------------------------

def test_compute_constants_hand():
    # n=1, z=0, sd=1 (support [-6,6] at the default truncation), box [-1,1],
    # c=0, lambda_max=2, upsilon=0.1, coupling unscaled:
    #   loss slope family: positive side 2*(1-(-6)) + 1*2*1 = 16,
    #                      negative side 2*(6-(-1)) = 14 -> 16
    #   dual family: g over [-1,1] is [-1,1];
    #                max(g_hi, ups*lmax - g_lo) = max(1, 0.2+1) = 1.2
    #   row gradient: 1 -> M = 16
    #   D = max(box diameter 2, lambda_max*sqrt(1) = 2) = 2
    #   mu = min(2, 0.1) = 0.1; sigma_i^2 = 4*1 = 4
    spec = A.ProblemSpec(n=1, z_mean=np.array([0.0]), noise_sd=1.0,
                         constraint=A.AffineMeanConstraint(0.0),
                         box_lo=np.array([-1.0]), box_hi=np.array([1.0]),
                         lambda_max=2.0, upsilon=0.1, dual_scaling=False)
    c = A.compute_constants(spec)
    assert c.grad_bound == 16.0
    assert c.diameter == 2.0
    assert c.mu == 0.1
    assert c.noise_var_max == 4.0
    assert np.array_equal(c.mu_workers, np.array([2.0]))
    assert np.array_equal(c.smooth_workers, np.array([2.0]))
    # L = sqrt((2 + 16 + 0)^2 + (16 + 0.1)^2) = sqrt(324 + 259.21)
    assert c.lipschitz == pytest.approx(np.sqrt(583.21), rel=1e-15)


def test_composite_lipschitz_hand():
    # sqrt((1 + 1 + 0)^2 + (1 + 0)^2) = sqrt(5)
    assert model.composite_lipschitz(1.0, 1.0, 0.0, 0.0, 0.0) \
        == pytest.approx(np.sqrt(5.0), rel=1e-15)


def test_constants_tighten_with_narrower_truncation(alloc5):
    wide = A.compute_constants(alloc5, truncation=6.0)
    narrow = A.compute_constants(alloc5, truncation=2.0)
    assert narrow.grad_bound < wide.grad_bound
    with pytest.raises(ValueError):
        A.compute_constants(alloc5, truncation=0.0)


def test_gradient_bound_covers_samples(alloc5):
    """M really does dominate sampled gradient norms inside the truncated
    support (checked empirically over the boxes)."""
    c = A.compute_constants(alloc5)
    rs = np.random.RandomState(3)
    s = alloc5.coupling_scale
    for _ in range(2000):
        th = rs.uniform(alloc5.box_lo, alloc5.box_hi)
        lam = rs.uniform(0.0, alloc5.lambda_max)
        i = rs.randint(5)
        z = alloc5.z_mean[i] + rs.uniform(-6, 6) * alloc5.noise_sd
        g = 2.0 * (th[i] - z) + s * lam
        assert abs(g) <= c.grad_bound + 1e-12
        gd = (th.mean() - 5.0) - alloc5.upsilon * lam
        assert abs(gd) <= c.grad_bound + 1e-12


# --- validation ---------------------------------------------------------------

def test_problem_violations_listed():
    with pytest.raises(ValueError) as exc:
        A.ProblemSpec(n=2, z_mean=np.array([1.0]), noise_sd=-1.0,
                      constraint=A.AffineMeanConstraint(0.0),
                      box_lo=np.array([0.0, 2.0]), box_hi=np.array([1.0, 1.0]),
                      lambda_max=0.0, upsilon=0.0)
    msg = str(exc.value)
    for part in ("z_mean", "box_lo must be <=", "lambda_max", "upsilon", "noise_sd"):
        assert part in msg


def test_mean_decision_shape_check(toy2):
    with pytest.raises(ValueError):
        toy2.mean_decision(np.zeros(3))
    assert toy2.mean_decision(np.array([1.0, 3.0])) == 2.0
