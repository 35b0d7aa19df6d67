"""Resource allocation problem: losses, coupled constraint, Lagrangian.

The shipped instance is a scalar allocation per worker.  Worker i holds a
decision theta_i constrained to a box [lo_i, hi_i] and pays the expected
quadratic loss

    f_i(theta_i) = E[(theta_i - Z_i)^2] = (theta_i - zbar_i)^2 + const,

with Z_i ~ N(zbar_i, sd^2).  The additive constant (the noise variance) is
dropped: gradients, saddle points and error metrics are unchanged, and it
keeps the expected loss closed-form for any sampling distribution.

The workers are coupled only through constraints on the average decision
thetabar = (1/n) sum_i theta_i.  With a Tikhonov term on the multiplier the
regularized Lagrangian is

    L(theta, lambda) = sum_i f_i(theta_i) + lambda . g(thetabar)
                       - (upsilon/2) |lambda|^2,

maximized over lambda in [0, lambda_max]^m and minimized over the boxes.
Its gradients:

    d/dtheta_i L = grad f_i(theta_i) + s * Jg(thetabar)^T lambda
    d/dlambda L  = g(thetabar) - upsilon * lambda

where s is the coupling scale: 1/n when `dual_scaling` is on (the default),
1 when it is off.  Both scalings are first-class because published numbers
for this problem family are only mutually consistent without the 1/n; the
saddle oracle in `analysis` is the source of truth either way.
"""

from dataclasses import dataclass, field

import numpy as np


class AffineMeanConstraint:
    """g(thetabar) = thetabar - c, one row per capacity entry.

    The Jacobian with respect to the (scalar) average is identically 1 for
    every row, which is what makes this map affine and its smoothness
    moduli zero.
    """

    def __init__(self, capacity):
        self.capacity = np.atleast_1d(np.asarray(capacity, dtype=float))

    @property
    def m(self):
        return self.capacity.shape[0]

    def value(self, mean_decision):
        return mean_decision - self.capacity

    def jacobian(self, mean_decision):
        return np.ones_like(self.capacity)

    def smoothness(self):
        """Per-row Lipschitz modulus of the row gradients (zero: affine)."""
        return np.zeros_like(self.capacity)


@dataclass(frozen=True)
class ProblemSpec:
    """One allocation instance: losses, boxes, coupling constraint, dual box."""

    n: int
    z_mean: np.ndarray          # per-worker loss minimizer, shape (n,)
    noise_sd: float             # sampling noise standard deviation
    constraint: AffineMeanConstraint
    box_lo: np.ndarray          # shape (n,)
    box_hi: np.ndarray          # shape (n,)
    lambda_max: float
    upsilon: float              # dual Tikhonov regularizer, > 0
    dual_scaling: bool = True   # True: coupling carries 1/n
    d: int = 1                  # decision dimension per worker (scalar only)

    def __post_init__(self):
        object.__setattr__(self, "z_mean", np.asarray(self.z_mean, dtype=float))
        object.__setattr__(self, "box_lo", np.asarray(self.box_lo, dtype=float))
        object.__setattr__(self, "box_hi", np.asarray(self.box_hi, dtype=float))
        problems = self.violations()
        if problems:
            raise ValueError("invalid problem: " + "; ".join(problems))

    def violations(self):
        """All structural problems, one message each (empty when valid)."""
        out = []
        if self.n < 1:
            out.append("n must be a positive integer")
        if self.d != 1:
            out.append("d: only scalar per-worker decisions are implemented")
        for name in ("z_mean", "box_lo", "box_hi"):
            arr = getattr(self, name)
            if arr.shape != (self.n,):
                out.append(f"{name} must have shape ({self.n},), got {arr.shape}")
        if self.box_lo.shape == self.box_hi.shape and np.any(self.box_lo > self.box_hi):
            out.append("box_lo must be <= box_hi for every worker")
        if not np.all(np.isfinite(self.box_lo)) or not np.all(np.isfinite(self.box_hi)):
            out.append("boxes must be bounded")
        if not self.lambda_max > 0:
            out.append("lambda_max must be > 0")
        if not self.upsilon > 0:
            out.append("upsilon must be > 0")
        if self.noise_sd < 0:
            out.append("noise_sd must be >= 0")
        return out

    @property
    def m(self):
        return self.constraint.m

    @property
    def coupling_scale(self):
        """The factor s on the dual correction term a worker receives."""
        return 1.0 / self.n if self.dual_scaling else 1.0

    def mean_decision(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n,):
            raise ValueError(f"theta must have shape ({self.n},), got {theta.shape}")
        return float(theta.mean())


def project_box(x, lo, hi):
    """Coordinate-wise clamp onto [lo, hi]; idempotent and non-expansive."""
    return np.minimum(np.maximum(x, lo), hi)


def project_dual(lam, lambda_max):
    """Clamp the multiplier onto [0, lambda_max]^m."""
    return np.minimum(np.maximum(lam, 0.0), lambda_max)


def eval_expected_loss(spec, worker, theta_i):
    """Expected loss of worker `worker` at theta_i, up to an additive constant."""
    return float((theta_i - spec.z_mean[worker]) ** 2)


def eval_lagrangian(spec, theta, lam):
    """Regularized Lagrangian value L(theta, lambda) (deterministic losses)."""
    lam = np.asarray(lam, dtype=float)
    xbar = spec.mean_decision(theta)
    loss = float(np.sum((np.asarray(theta, dtype=float) - spec.z_mean) ** 2))
    return loss + float(lam @ spec.constraint.value(xbar)) \
        - 0.5 * spec.upsilon * float(lam @ lam)


def grad_primal(spec, theta, lam, worker):
    """d/dtheta_i of the Lagrangian at (theta, lambda) for one worker."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (spec.m,):
        raise ValueError(f"lambda must have shape ({spec.m},), got {lam.shape}")
    xbar = spec.mean_decision(theta)
    coupling = spec.coupling_scale * float(spec.constraint.jacobian(xbar) @ lam)
    return 2.0 * (float(theta[worker]) - spec.z_mean[worker]) + coupling


def grad_primal_all(spec, theta, lam):
    """d/dtheta L for every worker at once, shape (n,)."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (spec.m,):
        raise ValueError(f"lambda must have shape ({spec.m},), got {lam.shape}")
    xbar = spec.mean_decision(theta)
    coupling = spec.coupling_scale * float(spec.constraint.jacobian(xbar) @ lam)
    return 2.0 * (np.asarray(theta, dtype=float) - spec.z_mean) + coupling


def grad_dual(spec, theta, lam):
    """d/dlambda of the Lagrangian: g(thetabar) - upsilon * lambda."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (spec.m,):
        raise ValueError(f"lambda must have shape ({spec.m},), got {lam.shape}")
    xbar = spec.mean_decision(theta)
    return spec.constraint.value(xbar) - spec.upsilon * lam


def gradient_map(spec, theta, lam):
    """Stacked monotone map Phi(w) = (d/dtheta L, -d/dlambda L), shape (n+m,)."""
    return np.concatenate([grad_primal_all(spec, theta, lam),
                           -grad_dual(spec, theta, lam)])


# ---------------------------------------------------------------------------
# smoothness / monotonicity constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothnessConstants:
    """Everything the convergence bound needs to know about one instance.

    `grad_bound` is the uniform bound M on the sampled-Lagrangian gradient
    norms and on the constraint row gradients; `diameter` is the larger of
    the joint primal and dual feasible diameters.  Both are computed from
    the boxes plus a truncated sample support, since a Gaussian has
    unbounded support and an exact uniform bound cannot exist.  They feed
    the bound evaluator only, never the algorithm.
    """

    mu_workers: np.ndarray       # per-worker strong convexity moduli
    smooth_workers: np.ndarray   # per-worker loss smoothness moduli
    constraint_smooth: np.ndarray  # per-row constraint smoothness (0: affine)
    grad_bound: float            # M
    diameter: float              # D
    noise_var_workers: np.ndarray  # per-worker stochastic gradient variance
    upsilon: float

    @property
    def constraint_smooth_norm(self):
        """Aggregate constraint smoothness, root-sum-square of the rows."""
        return float(np.sqrt(np.sum(self.constraint_smooth ** 2)))

    @property
    def mu(self):
        """Strong monotonicity modulus: min over upsilon and the mu_i."""
        return float(min(self.upsilon, float(np.min(self.mu_workers))))

    @property
    def smooth_max(self):
        return float(np.max(self.smooth_workers))

    @property
    def noise_var_max(self):
        return float(np.max(self.noise_var_workers))

    @property
    def lipschitz(self):
        return composite_lipschitz(self.smooth_max, self.grad_bound,
                                   self.diameter, self.constraint_smooth_norm,
                                   self.upsilon)


def composite_lipschitz(smooth_max, grad_bound, diameter, constraint_smooth_norm,
                        upsilon):
    """Lipschitz modulus of the stacked gradient map.

    sqrt((L_max + M + D * Lg)^2 + (M + upsilon)^2), with L_max the worst
    loss smoothness, M the gradient bound, D the diameter and Lg the
    aggregate constraint smoothness.
    """
    return float(np.sqrt((smooth_max + grad_bound + diameter * constraint_smooth_norm) ** 2
                         + (grad_bound + upsilon) ** 2))


def compute_constants(spec, truncation=6.0):
    """Derive the smoothness/monotonicity constants for one instance.

    truncation: sample support radius in units of noise_sd.  The gradient
    bound is taken over the boxes, the dual box and samples within
    truncation * noise_sd of each mean.
    """
    if truncation <= 0:
        raise ValueError("truncation must be > 0")
    n = spec.n
    mu_workers = np.full(n, 2.0)       # quadratic loss: f_i'' = 2
    smooth_workers = np.full(n, 2.0)
    constraint_smooth = spec.constraint.smoothness()

    # Worst case of |2(theta_i - z) + s Jg^T lambda| over box x truncated
    # support x dual box.  The coupling term is nonnegative (Jg >= 0 for the
    # shipped map, lambda >= 0), so it stretches only the positive side.
    z_lo = spec.z_mean - truncation * spec.noise_sd
    z_hi = spec.z_mean + truncation * spec.noise_sd
    jac_rows = spec.constraint.jacobian(0.0)
    coupling_hi = spec.coupling_scale * spec.lambda_max * float(np.sum(np.abs(jac_rows)))
    pos_side = 2.0 * (spec.box_hi - z_lo) + coupling_hi
    neg_side = 2.0 * (z_hi - spec.box_lo)
    primal_bound = float(np.max(np.maximum(np.maximum(pos_side, neg_side), 0.0)))

    # Worst case of |g_j(thetabar) - upsilon lambda_j| per row, combined as a
    # root-sum-square (exact for a single row; rows are evaluated at their
    # individually worst mean otherwise).
    mean_lo = float(np.mean(spec.box_lo))
    mean_hi = float(np.mean(spec.box_hi))
    g_lo = spec.constraint.value(mean_lo)
    g_hi = spec.constraint.value(mean_hi)
    row_sup = np.maximum(np.maximum(g_hi, spec.upsilon * spec.lambda_max - g_lo), 0.0)
    dual_bound = float(np.sqrt(np.sum(row_sup ** 2)))

    row_grad_bound = float(np.max(np.abs(jac_rows)))
    grad_bound = max(primal_bound, dual_bound, row_grad_bound)

    primal_diam = float(np.sqrt(np.sum((spec.box_hi - spec.box_lo) ** 2)))
    dual_diam = spec.lambda_max * float(np.sqrt(spec.m))
    diameter = max(primal_diam, dual_diam)

    noise_var = np.full(n, 4.0 * spec.noise_sd ** 2)

    return SmoothnessConstants(
        mu_workers=mu_workers,
        smooth_workers=smooth_workers,
        constraint_smooth=constraint_smooth,
        grad_bound=grad_bound,
        diameter=diameter,
        noise_var_workers=noise_var,
        upsilon=spec.upsilon,
    )
