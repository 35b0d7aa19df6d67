"""Ground truth and theory checks: saddle oracle, error metric, the
convergence-bound constants and curve, and the auxiliary step-size lemma
validator.

The saddle oracle exploits the structure of the shipped instance instead
of running a generic small-step gradient flow: for a fixed multiplier the
primal minimizer is the clamped affine expression

    theta_i(lambda) = clip(zbar_i - s*lambda/2, lo_i, hi_i),

so the saddle multiplier is the root (or boundary point) of the scalar,
strictly decreasing function

    h(lambda) = g(mean_i theta_i(lambda)) - upsilon*lambda,

which bisection solves to machine precision.  A naive descent-ascent
iteration would need a step below 2*mu/L^2, around 1e-9 for the shipped
instances, which is why it is not the primary route.  Two independent
cross-checks guard the oracle: the closed form of the unclipped case and
the fixed-point iteration `fixed_point_saddle`.
"""

from dataclasses import dataclass

import numpy as np

from .model import grad_dual, grad_primal_all, project_box, project_dual


@dataclass(frozen=True)
class SaddlePoint:
    theta: np.ndarray     # (n,)
    lam: np.ndarray       # (m,)
    residual: float       # KKT residual of the reported point


def kkt_residual(spec, theta, lam):
    """Natural-map residual: how far (theta, lambda) is from being a fixed
    point of the projected gradient step with unit step size."""
    theta = np.asarray(theta, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    rp = theta - project_box(theta - grad_primal_all(spec, theta, lam),
                             spec.box_lo, spec.box_hi)
    rd = lam - project_dual(lam + grad_dual(spec, theta, lam), spec.lambda_max)
    return float(np.sqrt(np.sum(rp ** 2)) + np.sqrt(np.sum(rd ** 2)))


def _theta_given_lambda(spec, lam):
    s = spec.coupling_scale
    return project_box(spec.z_mean - 0.5 * s * lam, spec.box_lo, spec.box_hi)


def _h(spec, lam):
    c = float(spec.constraint.capacity[0])
    return float(_theta_given_lambda(spec, lam).mean()) - c - spec.upsilon * lam


def saddle_oracle(spec, tolerance=1e-9):
    """Deterministic saddle point of the regularized Lagrangian.

    Bisection on the monotone dual response h; raises if the reported
    point fails the KKT residual check at `tolerance`, which would signal
    an instance outside this oracle's structure.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    if spec.m != 1:
        raise ValueError("the saddle oracle handles exactly one coupling row")
    lo, hi = 0.0, float(spec.lambda_max)
    if _h(spec, lo) <= 0.0:
        lam = lo
    elif _h(spec, hi) >= 0.0:
        lam = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _h(spec, mid) > 0.0:
                lo = mid
            else:
                hi = mid
        lam = 0.5 * (lo + hi)
    theta = _theta_given_lambda(spec, lam)
    lam_vec = np.array([lam])
    residual = kkt_residual(spec, theta, lam_vec)
    if residual > tolerance:
        raise RuntimeError(f"saddle oracle residual {residual:.3e} exceeds "
                           f"tolerance {tolerance:.3e}")
    return SaddlePoint(theta=theta, lam=lam_vec, residual=residual)


def closed_form_saddle(spec):
    """Unclipped closed form, valid only when nothing projects:
    lambda* = (mean(zbar) - c)/(upsilon + s/2), theta_i* = zbar_i - s*lambda*/2.
    Returns None when that point leaves the boxes or the dual interval."""
    if spec.m != 1:
        return None
    s = spec.coupling_scale
    c = float(spec.constraint.capacity[0])
    lam = (float(spec.z_mean.mean()) - c) / (spec.upsilon + 0.5 * s)
    theta = spec.z_mean - 0.5 * s * lam
    if not (0.0 <= lam <= spec.lambda_max):
        return None
    if np.any(theta < spec.box_lo) or np.any(theta > spec.box_hi):
        return None
    lam_vec = np.array([lam])
    return SaddlePoint(theta=theta, lam=lam_vec,
                       residual=kkt_residual(spec, theta, lam_vec))


def fixed_point_saddle(spec, max_iter=200000, tol=1e-13):
    """Cross-check route: damped projected ascent on the dual response.

    The step 1/(upsilon + s/2) makes lambda -> P[lambda + eta*h(lambda)] a
    contraction wherever h is differentiable, so it converges to the same
    saddle as the bisection without sharing any code with it.
    """
    if spec.m != 1:
        raise ValueError("fixed_point_saddle handles exactly one coupling row")
    s = spec.coupling_scale
    eta = 1.0 / (spec.upsilon + 0.5 * s)
    lam = 0.0
    for _ in range(max_iter):
        nxt = min(max(lam + eta * _h(spec, lam), 0.0), float(spec.lambda_max))
        if abs(nxt - lam) <= tol * max(1.0, abs(lam)):
            lam = nxt
            break
        lam = nxt
    theta = _theta_given_lambda(spec, lam)
    lam_vec = np.array([lam])
    return SaddlePoint(theta=theta, lam=lam_vec,
                       residual=kkt_residual(spec, theta, lam_vec))


def error_metric(theta, lam, saddle):
    """Squared distance to the saddle: sum_i |theta_i - theta_i*|^2 + |lam - lam*|^2."""
    theta = np.asarray(theta, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if theta.shape != saddle.theta.shape or lam.shape != saddle.lam.shape:
        raise ValueError("state and saddle dimensions do not match")
    return float(np.sum((theta - saddle.theta) ** 2)
                 + np.sum((lam - saddle.lam) ** 2))


# ---------------------------------------------------------------------------
# convergence bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundConstants:
    """The four bound constants and their stated combination.

    c_total must equal B*(n*c1 + c2) + c3 + c4 exactly; a property test
    holds the stored value to the recomputed one bit for bit.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c_total: float
    p: int
    window: int        # B
    tau_bar: int
    mu: float
    b_squared: float   # smallest b^2 with gamma_t - gamma_B <= b^2 gamma_B^2, t <= B


def compute_bound_constants(constants, p, window, tau_bar, rule):
    """Evaluate the bound constants for one instance and schedule structure.

    `constants` is a SmoothnessConstants; p/window/tau_bar describe the
    activation windows and worst staleness; `rule` provides the step-size
    gap constant b^2 (zero for a constant step).
    """
    n = constants.mu_workers.shape[0]
    sig2 = constants.noise_var_max
    lmax = constants.smooth_max
    m_bound = constants.grad_bound
    diam = constants.diameter
    lip = constants.lipschitz
    ups = constants.upsilon
    b2 = rule.b_squared(window)
    c1 = 3.0 * (sig2 + (sig2 + lmax ** 2) * diam ** 2
                + 6.0 * m_bound ** 2 * diam ** 2 / n ** 2)
    c2 = 2.0 * diam ** 2 * (m_bound ** 2 + 2.0 * ups ** 2)
    c3 = 2.0 * p * (n + 1) * m_bound * (b2 * diam + window * diam * lip
                                        + window * m_bound)
    c4 = 2.0 * p * tau_bar * diam * m_bound * (m_bound + 1.0)
    c_total = window * (n * c1 + c2) + (c3 + c4)
    return BoundConstants(c1=c1, c2=c2, c3=c3, c4=c4, c_total=c_total,
                          p=p, window=window, tau_bar=tau_bar,
                          mu=constants.mu, b_squared=b2)


def theorem_bound(k, delta0, bound_consts, rule):
    """Right-hand side of the convergence bound at counter value k: a
    windowed contraction of the initial error plus a step-size tail term.

    Indices at or below zero fall back to the first step size, matching
    the stated edge convention; q = floor((k+1)/B) windows contribute.
    Bounds E[Delta^(k+1)], so compare iterate K against k = K - 1.
    """
    p = bound_consts.p
    window = bound_consts.window
    mu = bound_consts.mu
    q = (k + 1) // window
    gamma1 = rule.gamma_at(1)

    def gamma_edge(idx):
        idx = np.asarray(idx)
        safe = np.maximum(idx, 1)
        return np.where(idx >= 1, rule.gamma_at(safe), gamma1)

    if q > 0:
        idx = k - window * np.arange(1, q + 1) + 2
        contraction = float(np.prod(1.0 - p * mu * gamma_edge(idx)))
    else:
        contraction = 1.0
    tail = (2.0 * bound_consts.c_total / (p * mu)) * float(gamma_edge(k - window + 2))
    return contraction * delta0 + tail


def bound_at_iterate(k_iter, delta0, bound_consts, rule):
    """Bound on E[Delta^k] at iterate k_iter (k_iter >= 1)."""
    if k_iter < 1:
        return float(delta0)
    return theorem_bound(k_iter - 1, delta0, bound_consts, rule)


# ---------------------------------------------------------------------------
# auxiliary step-size lemma
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuxLemmaReport:
    """Numeric evaluation of the auxiliary summation lemma.

    The lemma claims sum_{j<=k} gamma_j^(p+1) PROD (1 - a*gamma_l) is at
    most (2/a) gamma_k^p, under gamma_1 < 2/a and the ratio condition
    gamma_{k-1}^p / gamma_k^p <= 1 + (a/2) gamma_k^p.  Its printed product
    runs over l = 1..j-1; the recursion it is invoked on unrolls to the
    product over l = j+1..k.  Both readings are evaluated so the report
    shows exactly which one (if either) holds for a given rule.
    """

    a: float
    p_exp: int
    horizon: int
    sup_ok: bool                 # gamma_1 < 2/a
    ratio_ok: bool               # ratio condition for all 2 <= k <= horizon
    first_ratio_violation: int   # smallest violating k, or 0
    max_ratio_trailing: float    # max over k of LHS/RHS, trailing product
    argmax_trailing: int
    max_ratio_leading: float     # same with the product as printed
    argmax_leading: int

    @property
    def conclusion_ok(self):
        """True when the claimed inequality holds under either product reading."""
        return self.max_ratio_trailing <= 1.0 or self.max_ratio_leading <= 1.0


def aux_lemma_check(a, p_exp, rule, horizon):
    """Evaluate both sides of the auxiliary lemma for k = 2..horizon."""
    if a <= 0:
        raise ValueError("a must be > 0")
    if p_exp < 1 or int(p_exp) != p_exp:
        raise ValueError("p_exp must be a positive integer")
    ks = np.arange(1, horizon + 1)
    gam = rule.gamma_at(ks).astype(float)
    sup_ok = bool(gam[0] < 2.0 / a)

    gp = gam ** p_exp
    ratio_lhs = gp[:-1] / gp[1:]               # gamma_{k-1}^p / gamma_k^p
    ratio_rhs = 1.0 + 0.5 * a * gp[1:]
    bad = ratio_lhs > ratio_rhs                # indexed by k = 2..horizon
    ratio_ok = not bad.any()
    first_bad = int(bad.nonzero()[0][0]) + 2 if bad.any() else 0

    factors = 1.0 - a * gam
    # leading product: prod_{l=1}^{j-1} (1 - a gamma_l), shared by every k
    lead = np.concatenate([[1.0], np.cumprod(factors[:-1])])
    lhs_lead = np.cumsum(gam ** (p_exp + 1) * lead)

    # trailing product: prod_{l=j+1}^{k} (1 - a gamma_l); running recursion
    # S_k = (1 - a gamma_k) S_{k-1} + gamma_k^{p+1}
    lhs_trail = np.empty(horizon)
    acc = gam[0] ** (p_exp + 1)
    lhs_trail[0] = acc
    for j in range(1, horizon):
        acc = factors[j] * acc + gam[j] ** (p_exp + 1)
        lhs_trail[j] = acc

    rhs = (2.0 / a) * gp
    sl = slice(1, None)                        # the claim starts at k = 2
    r_trail = lhs_trail[sl] / rhs[sl]
    r_lead = lhs_lead[sl] / rhs[sl]
    i_t = int(np.argmax(r_trail))
    i_l = int(np.argmax(r_lead))
    return AuxLemmaReport(
        a=float(a), p_exp=int(p_exp), horizon=int(horizon),
        sup_ok=sup_ok, ratio_ok=ratio_ok, first_ratio_violation=first_bad,
        max_ratio_trailing=float(r_trail[i_t]), argmax_trailing=i_t + 2,
        max_ratio_leading=float(r_lead[i_l]), argmax_leading=i_l + 2)
