"""Proximal smoothing of convex weights.

For a convex weight f, a point x and a parameter alpha > 0 this module
minimizes

    g(h) = f(x + h) + |h|^2 / (2 alpha)

over displacements h.  The minimizer h* gives the smoothed value
g(h*) (the envelope), and -h*/alpha is the gradient of the smoothed
function at x.  g is 1/alpha-strongly convex, so an iterate whose
first-order residual is r lies within alpha*r of the true minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weights import ConvexWeight

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000

_BUNDLE = 14         # trailing subgradients kept for the aggregate direction
_LS_HALVINGS = 45    # probe fan depth per descent round
_WARMUP = 400        # plain diminishing-step iterations before bundling


class ProxConvergenceError(RuntimeError):
    """Raised when the inner solve exhausts its budget; carries the last residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"prox solve did not converge: residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class ProxResult:
    minimizer: np.ndarray   # h*
    envelope: float         # f(x + h*) + |h*|^2/(2 alpha)
    gradient: np.ndarray    # -h*/alpha, gradient of the envelope at x
    iterations: int
    residual: float


def _check_inputs(weight: ConvexWeight, x: np.ndarray, alpha: float) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != weight.dim:
        raise ValueError(f"point has dimension {x.size}, weight expects {weight.dim}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return x


def _smooth_solve(weight, x, alpha, tol, max_iter):
    """Gradient descent with step alpha/(1 + alpha*L); linear convergence."""
    step = alpha / (1.0 + alpha * weight.grad_lip)
    h = np.zeros_like(x)
    residual = np.inf
    for it in range(max_iter):
        g = weight.subgrad(x + h) + h / alpha
        residual = float(np.linalg.norm(g))
        if residual <= tol:
            return h, it + 1, residual
        h = h - step * g
    raise ProxConvergenceError(residual, max_iter)


def _simplex_qp(gram, lin):
    """Minimize theta.G.theta + c.theta over the probability simplex.

    Active-set iteration in the style of the minimum-norm-point method:
    solve the equality-constrained KKT system on the current support,
    step toward that solution while feasible, and grow the support by
    the most violating coordinate until the Lagrange test passes.
    Finite for exact arithmetic; capped defensively.
    """
    m = lin.size
    support = [int(np.argmin(np.diag(gram) + lin))]
    theta = np.ones(1)
    full = np.zeros(m)
    for _ in range(8 * m):
        k = len(support)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * gram[np.ix_(support, support)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.append(-lin[support], 1.0)
        cand = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
        if np.any(cand < -1e-12):
            diff = cand - theta
            shrink = diff < 0
            beta = min(1.0, float(np.min(-theta[shrink] / diff[shrink])))
            theta = theta + beta * diff
            keep = theta > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(theta))] = True
            support = [s for s, kp in zip(support, keep) if kp]
            theta = theta[keep]
            theta /= theta.sum()
            continue
        theta = np.clip(cand, 0.0, None)
        theta /= theta.sum()
        full[:] = 0.0
        full[support] = theta
        grad = 2.0 * (gram @ full) + lin
        mu = float(grad[support] @ theta)
        j = int(np.argmin(grad))
        if grad[j] >= mu - 1e-13 * (1.0 + abs(mu)) or j in support:
            return full
        support.append(j)
        theta = np.append(theta, 0.0)
    return full


def _min_norm_aggregate(bundle, h, fxh, alpha):
    """Aggregate subgradient w, slack e and residual r at the point h.

    Each bundle entry (h_i, v_i, f_i) gives an eps_i-subgradient of
    f(x + .) at h with eps_i = f(x+h) - f_i - v_i.(h - h_i) >= 0; convex
    combinations are again eps-subgradients.  The aggregate minimizes
    |sum theta_i (v_i + h/alpha)|^2 + (2/alpha) sum theta_i eps_i over
    the simplex (any feasible theta certifies, so approximate solves stay
    sound); the residual r = 2|w| + sqrt(2 e/alpha) dominates
    |h - h*|/alpha.  Double-precision value differences cannot resolve
    eps below roundoff, so eps from points within `rho` of h is treated
    as exactly zero.
    """
    rho = 1e-11 * (1.0 + float(np.linalg.norm(h)))
    us, eps = [], []
    for (hi, vi, fi) in bundle:
        gap = float(np.linalg.norm(h - hi))
        e = 0.0 if gap <= rho else max(fxh - fi - float(vi @ (h - hi)), 0.0)
        us.append(vi + h / alpha)
        eps.append(e)
    u = np.array(us)
    eps = np.array(eps)

    def certify(uu, ee):
        gram = uu @ uu.T
        theta = _simplex_qp(gram, (2.0 / alpha) * ee)
        wv = theta @ uu
        ev = float(ee @ theta)
        return wv, ev, 2.0 * float(np.linalg.norm(wv)) + np.sqrt(2.0 * ev / alpha)

    w, e, res = certify(u, eps)
    # The QP trades |w|^2 against e; with small alpha a roundoff-level e
    # can still dominate the certificate, so also try the exact-slack
    # entries alone and keep whichever certifies tighter.
    zero = eps == 0.0
    if np.any(zero) and not np.all(zero):
        w0, e0, res0 = certify(u[zero], eps[zero])
        if res0 < res:
            w, e, res = w0, e0, res0
    return w, e, res


def _subgradient_solve(weight, x, alpha, tol, max_iter):
    """Two-phase solver for nonsmooth weights.

    A plain diminishing-step proximal-subgradient warmup (non-monotone,
    tracking the best objective value) lands near the minimizer; bundle
    descent then polishes: the trailing subgradients yield an aggregate
    direction (approximate minimum-norm eps-subgradient of the strongly
    convex objective), and a backtracking search along its negative
    either makes a serious step or, failing that, has enriched the
    bundle at the trial points, sharpening the next aggregate.  The
    aggregate residual certifies optimality at kinks where a raw
    subgradient residual cannot vanish.
    """
    def objective(hh, ff):
        return ff + float(hh @ hh) / (2.0 * alpha)

    h = np.zeros_like(x)
    fx = float(weight.eval(x + h))
    h_best, f_best, g_best = h, fx, objective(h, fx)
    it = 0
    for k in range(_WARMUP):
        v = np.atleast_1d(np.asarray(weight.subgrad(x + h), dtype=float))
        raw = float(np.linalg.norm(v + h / alpha))
        it += 1
        if raw <= 0.5 * tol:
            return h, it, raw
        s = alpha / (1.0 + 0.125 * k)
        h = (h - s * v) / (1.0 + s / alpha)
        fx = float(weight.eval(x + h))
        g = objective(h, fx)
        if g < g_best:
            h_best, f_best, g_best = h, fx, g

    h, fx, g_cur = h_best, f_best, g_best
    v = np.atleast_1d(np.asarray(weight.subgrad(x + h), dtype=float))
    bundle = [(h.copy(), v.copy(), fx)]
    cap = max(_BUNDLE, 2 * x.size + 2 ** min(x.size, 6) + 5)
    last_res = np.inf
    while it < max_iter:
        raw = float(np.linalg.norm(v + h / alpha))
        if raw <= 0.5 * tol:
            return h, it, raw
        w, _, last_res = _min_norm_aggregate(bundle, h, fx, alpha)
        if last_res <= tol:
            return h, it, last_res
        # Probe a geometric fan along the aggregate descent direction.
        # Moving to the best probe keeps the objective monotone without an
        # Armijo margin, which near a kink would reject the tiny true
        # decrease available there; the fan's first, best and last probes
        # enrich the bundle so straddling subgradients survive.
        d = -w
        t = alpha
        probes = []
        for j in range(_LS_HALVINGS):
            it += 1
            h_t = h + t * d
            f_t = float(weight.eval(x + h_t))
            v_t = np.atleast_1d(np.asarray(weight.subgrad(x + h_t), dtype=float))
            probes.append((objective(h_t, f_t), j, h_t, f_t, v_t))
            t *= 0.5
        g_best_probe, _, h_b, f_b, v_b = min(probes, key=lambda p: (p[0], p[1]))
        for pick in {0, len(probes) - 1}:
            _, _, h_t, f_t, v_t = probes[pick]
            bundle.append((h_t.copy(), v_t.copy(), f_t))
        if g_best_probe < g_cur:
            bundle.append((h_b.copy(), v_b.copy(), f_b))
            h, fx, v, g_cur = h_b, f_b, v_b, g_best_probe
        else:
            # Null round: sample subgradients just around h, inside the
            # slack-zeroing radius, so the aggregate sees every piece
            # meeting at the current point.  Axis steps expose pieces
            # split by a single coordinate; corner steps expose pieces
            # that only activate when several coordinates move together,
            # as at a separable kink where whole blocks are pinned at
            # once.
            r_loc = 0.5e-11 * (1.0 + float(np.linalg.norm(h)))
            steps = []
            for i in range(x.size):
                for sgn in (1.0, -1.0):
                    step = np.zeros(x.size)
                    step[i] = sgn
                    steps.append(step)
            if x.size <= 6:
                grids = np.meshgrid(*([(-1.0, 1.0)] * x.size), indexing="ij")
                steps.extend(np.stack([g.ravel() for g in grids], axis=-1))
            else:
                local_rng = np.random.default_rng(0)
                steps.extend(local_rng.choice([-1.0, 1.0],
                                              size=(64, x.size)))
            for step in steps:
                it += 1
                h_t = h + r_loc * step
                f_t = float(weight.eval(x + h_t))
                v_t = np.atleast_1d(np.asarray(weight.subgrad(x + h_t),
                                               dtype=float))
                bundle.append((h_t, v_t, f_t))
        if len(bundle) > cap:
            # Keep the entries closest to the current point: the local
            # ones carry the certificate, far ones are regenerated by the
            # next probe fan anyway.
            gaps = np.array([float(np.linalg.norm(h - hi))
                             for hi, _, _ in bundle])
            keep = np.sort(np.argsort(gaps, kind="stable")[:cap])
            bundle = [bundle[i] for i in keep]
    raise ProxConvergenceError(last_res, it)


def prox_point(weight: ConvexWeight, x: np.ndarray, alpha: float,
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ProxResult:
    """Minimize f(x+h) + |h|^2/(2 alpha); returns the full result record."""
    x = _check_inputs(weight, x, alpha)
    if weight.grad_lip is not None:
        h, its, residual = _smooth_solve(weight, x, alpha, tol, max_iter)
    else:
        h, its, residual = _subgradient_solve(weight, x, alpha, tol, max_iter)
    envelope = float(weight.eval(x + h)) + float(h @ h) / (2.0 * alpha)
    return ProxResult(minimizer=h, envelope=envelope, gradient=-h / alpha,
                      iterations=its, residual=residual)


def moreau_envelope(weight: ConvexWeight, x: np.ndarray, alpha: float,
                    tol: float = DEFAULT_TOL) -> float:
    """Smoothed value of the weight at x; increases to f(x) as alpha -> 0."""
    return prox_point(weight, x, alpha, tol=tol).envelope


def envelope_gradient(weight: ConvexWeight, x: np.ndarray, alpha: float,
                      tol: float = DEFAULT_TOL) -> np.ndarray:
    """Gradient of the smoothed weight at x, equal to -h*/alpha."""
    return prox_point(weight, x, alpha, tol=tol).gradient


def check_optimality(weight: ConvexWeight, x: np.ndarray, alpha: float,
                     candidate: np.ndarray, probes: np.ndarray) -> float:
    """Worst-case margin of the variational inequality characterizing h*.

    For the true minimizer p, f(x+h) + (1/alpha) <p, h-p> - f(x+p) >= 0
    for every h.  Returns the minimum over the probe displacements; a
    clearly negative value certifies that `candidate` is not optimal.
    """
    x = _check_inputs(weight, x, alpha)
    p = np.asarray(candidate, dtype=float).reshape(-1)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    vals = weight.eval(x + probes) + (probes - p) @ p / alpha - float(weight.eval(x + p))
    return float(np.min(vals))


def affine_minorant(weight: ConvexWeight, x0: np.ndarray) -> tuple[np.ndarray, float]:
    """Slope and intercept of the supporting affine function at x0."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    slope = np.atleast_1d(np.asarray(weight.subgrad(x0), dtype=float))
    return slope, float(weight.eval(x0))
