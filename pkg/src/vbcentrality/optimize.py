"""Nonlinear conjugate gradients (Polak-Ribiere+) with a strong-Wolfe line search.

The objective is *maximized*: callers pass ``fun(x) -> (value, gradient)``
of the bound itself.  Internally the negated problem is minimised.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    max_iter: int = 2000
    rel_tol: float = 1e-8
    grad_tol: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.1
    max_line_evals: int = 40
    restart_every: int = None  # defaults to the number of parameters


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def grad_norm(self):
        return float(np.max(np.abs(self.grad))) if len(self.grad) else 0.0


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through two points with derivatives, or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2 * d2)
    return t if np.isfinite(t) else None


def line_search(phi, f0, g0, alpha0, c1, c2, max_evals):
    """Strong-Wolfe line search (bracketing + zoom).

    ``phi(alpha) -> (f, dphi, payload)`` evaluates the negated objective
    along the direction.  Non-finite values count as a failed sufficient
    decrease, so the step shrinks back into the finite region.  Returns
    ``(alpha, f, payload, evals)`` or ``None`` on failure.
    """
    evals = 0
    best = None

    def consider(a, f, d, payload):
        nonlocal best
        if np.isfinite(f) and f <= f0 + c1 * a * g0 and (best is None or f < best[1]):
            best = (a, f, payload)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        nonlocal evals
        while evals < max_evals:
            t = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            width = abs(hi - lo)
            if t is None or not (min(lo, hi) + 0.1 * width <= t <= max(lo, hi) - 0.1 * width):
                t = 0.5 * (lo + hi)
            f, d, payload = phi(t)
            evals += 1
            consider(t, f, d, payload)
            if not np.isfinite(f) or f > f0 + c1 * t * g0 or f >= f_lo:
                hi, f_hi, d_hi = t, f, d
            else:
                if abs(d) <= -c2 * g0:
                    return t, f, payload
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = t, f, d
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None

    prev, f_prev, d_prev = 0.0, f0, g0
    alpha = alpha0
    while evals < max_evals:
        f, d, payload = phi(alpha)
        evals += 1
        consider(alpha, f, d, payload)
        if not np.isfinite(f) or f > f0 + c1 * alpha * g0 or (prev > 0 and f >= f_prev):
            out = zoom(prev, f_prev, d_prev, alpha, f, d)
            break
        if abs(d) <= -c2 * g0:
            out = (alpha, f, payload)
            break
        if d >= 0:
            out = zoom(alpha, f, d, prev, f_prev, d_prev)
            break
        prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
    else:
        out = None
    if out is None and best is not None:
        # sufficient decrease without the curvature condition: still progress
        out = best
    if out is None:
        return None
    return out[0], out[1], out[2], evals


def maximize(fun, x0, config=None):
    """Maximise ``fun`` by Polak-Ribiere+ conjugate gradients.

    Stops when the relative change of the objective drops below
    ``rel_tol``, the gradient sup-norm below ``grad_tol``, or after
    ``max_iter`` iterations.  The direction is reset to steepest ascent
    every ``restart_every`` iterations and whenever it stops being an
    ascent direction.  ``trace`` holds the objective after every accepted
    step and is non-decreasing by construction (Armijo condition).
    """
    cfg = config or OptimizerConfig()
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    restart_every = cfg.restart_every or max(len(x), 1)

    value, grad = fun(x)
    evaluations = 1
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise DivergenceError("objective is not finite at the initial point")
    g = -grad
    f = -value
    d = -g
    trace = [value]
    alpha_prev = gd_prev = None
    since_restart = 0
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if np.max(np.abs(g), initial=0.0) <= cfg.grad_tol:
            converged, message = True, "gradient tolerance reached"
            it -= 1
            break
        gd = g @ d
        if gd >= 0 or since_restart >= restart_every:
            d = -g
            gd = g @ d
            since_restart = 0
        if alpha_prev is None:
            alpha0 = min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        else:
            alpha0 = min(alpha_prev * gd_prev / gd, 1e10)

        def phi(a, x=x, d=d):
            val, gr = fun(x + a * d)
            if not np.isfinite(val) or not np.all(np.isfinite(gr)):
                return np.inf, np.nan, None
            return -val, -(gr @ d), gr

        found = line_search(phi, f, gd, alpha0, cfg.c1, cfg.c2, cfg.max_line_evals)
        if found is None:
            evaluations += cfg.max_line_evals
            if since_restart > 0:
                d = -g
                since_restart = restart_every  # force steepest ascent next
                continue
            converged, message = True, "line search cannot improve (numerical precision)"
            break
        alpha, f_new, grad_new, evals = found
        evaluations += evals
        x = x + alpha * d
        g_new = -grad_new
        change = f - f_new
        beta = max(0.0, g_new @ (g_new - g) / (g @ g))
        d = -g_new + beta * d
        g, f = g_new, f_new
        alpha_prev, gd_prev = alpha, gd
        since_restart += 1
        trace.append(-f)
        if not np.isfinite(f):
            raise DivergenceError(f"objective became non-finite after {it} iterations")
        if change <= cfg.rel_tol * max(1.0, abs(f)):
            converged, message = True, "relative tolerance reached"
            break
    log.debug("CG stopped after %d iterations: %s", it, message)
    return OptimizeResult(x, -f, -g, it, evaluations, converged, message, trace,
                          time.perf_counter() - start)
