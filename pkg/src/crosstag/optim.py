"""Optimizers operating on flat float64 parameter vectors.

``minimize_lbfgs`` is a limited-memory BFGS with the classic two-loop
recursion and a strong-Wolfe line search (sufficient decrease c1=1e-4,
curvature c2=0.9, cubic-interpolation zoom).  ``AdaDelta`` implements the
per-coordinate adaptive rule with decaying accumulators of squared
gradients and squared updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericError(RuntimeError):
    """Objective or gradient became non-finite."""


@dataclass
class LbfgsConfig:
    memory: int = 10
    tol: float = 1e-5  # on the gradient max-norm
    max_iter: int = 500
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 30


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)  # accepted objective values


def _cubic_min(a, fa, dfa, b, fb):
    # Minimizer of the cubic through (a, fa, dfa) and (b, fb) with
    # derivative matching only at a; falls back to bisection on failure.
    d = b - a
    if d == 0:
        return a
    # Quadratic model q(t) = fa + dfa*t + c*t^2 fit through fb.
    c = (fb - fa - dfa * d) / (d * d)
    if c <= 0 or not np.isfinite(c):
        return 0.5 * (a + b)
    t = -dfa / (2.0 * c)
    lo, hi = (a, b) if a < b else (b, a)
    step = a + t
    margin = 0.1 * (hi - lo)
    return min(max(step, lo + margin), hi - margin)


def _zoom(fun, x, d, f0, dphi0, a_lo, f_lo, dphi_lo, a_hi, f_hi, c1, c2, max_iter):
    for _ in range(max_iter):
        alpha = _cubic_min(a_lo, f_lo, dphi_lo, a_hi, f_hi)
        f, g = fun(x + alpha * d)
        dphi = float(g @ d)
        if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
            a_hi, f_hi = alpha, f
        else:
            if abs(dphi) <= -c2 * dphi0:
                return alpha, f, g
            if dphi * (a_hi - a_lo) >= 0:
                a_hi, f_hi = a_lo, f_lo
            a_lo, f_lo, dphi_lo = alpha, f, dphi
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
            break
    f, g = fun(x + a_lo * d)
    return a_lo, f, g


def _strong_wolfe(fun, x, f0, g0, d, c1, c2, max_iter):
    """Return (alpha, f, g) satisfying the strong Wolfe conditions.

    Bracketing phase per Nocedal & Wright alg. 3.5; interpolation in
    :func:`_zoom`.  Falls back to the best sufficient-decrease point seen
    if the curvature condition cannot be met at machine precision.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        raise NumericError("line search direction is not a descent direction")
    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = 1.0
    for it in range(max_iter):
        f, g = fun(x + alpha * d)
        dphi = float(g @ d)
        if f > f0 + c1 * alpha * dphi0 or (it > 0 and f >= f_prev):
            return _zoom(fun, x, d, f0, dphi0, alpha_prev, f_prev, dphi_prev,
                         alpha, f, c1, c2, max_iter)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g
        if dphi >= 0:
            return _zoom(fun, x, d, f0, dphi0, alpha, f, dphi,
                         alpha_prev, f_prev, c1, c2, max_iter)
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha *= 2.0
    return alpha_prev, f_prev, fun(x + alpha_prev * d)[1]


def minimize_lbfgs(fun, x0: np.ndarray, config: LbfgsConfig | None = None,
                   callback=None) -> LbfgsResult:
    """Minimize ``fun(x) -> (f, grad)`` from ``x0``.

    Stops when the gradient max-norm drops to ``config.tol`` or after
    ``config.max_iter`` accepted steps.  Returns the best iterate seen.
    Raises :class:`NumericError` if the objective goes non-finite.
    """
    config = config or LbfgsConfig()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericError("objective is non-finite at the initial point")
    trace = [f]
    best_x, best_f, best_g = x.copy(), f, g.copy()
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    converged = bool(np.max(np.abs(g)) <= config.tol)
    iterations = 0

    while not converged and iterations < config.max_iter:
        # Two-loop recursion for the search direction.
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = float(s_hist[-1] @ y_hist[-1]) / float(y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += s * (a - b)
        d = -q

        alpha, f_new, g_new = _strong_wolfe(fun, x, f, g, d, config.c1, config.c2,
                                            config.max_line_search)
        if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
            raise NumericError("objective became non-finite during line search")
        if alpha == 0.0 or f_new >= f:
            break  # no progress possible at machine precision

        x_new = x + alpha * d
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > config.memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        x, f, g = x_new, f_new, g_new
        trace.append(f)
        iterations += 1
        if f < best_f:
            best_x, best_f, best_g = x.copy(), f, g.copy()
        if callback is not None:
            callback(iterations, x, f, g)
        converged = bool(np.max(np.abs(g)) <= config.tol)

    return LbfgsResult(x=best_x, f=best_f, grad=best_g, iterations=iterations,
                       converged=converged, trace=trace)


@dataclass
class AdaDeltaState:
    """Decaying accumulators; one slot per parameter coordinate."""

    accum_grad: np.ndarray
    accum_update: np.ndarray
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros(cls, size: int, rho: float = 0.95, eps: float = 1e-6) -> "AdaDeltaState":
        return cls(accum_grad=np.zeros(size), accum_update=np.zeros(size),
                   rho=rho, eps=eps)


def adadelta_step(params: np.ndarray, grads: np.ndarray, state: AdaDeltaState,
                  learning_rate: float = 1.0) -> np.ndarray:
    """One AdaDelta update, in place; returns the applied delta.

    accum_grad   <- rho*accum_grad + (1-rho)*g^2
    delta        <- -lr * sqrt(accum_update + eps)/sqrt(accum_grad + eps) * g
    accum_update <- rho*accum_update + (1-rho)*delta^2
    """
    if params.shape != grads.shape or params.shape != state.accum_grad.shape:
        raise ValueError("parameter/gradient/state shapes disagree")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient")
    rho, eps = state.rho, state.eps
    state.accum_grad *= rho
    state.accum_grad += (1.0 - rho) * grads * grads
    delta = -learning_rate * np.sqrt(state.accum_update + eps) / np.sqrt(
        state.accum_grad + eps) * grads
    state.accum_update *= rho
    state.accum_update += (1.0 - rho) * delta * delta
    params += delta
    return delta
