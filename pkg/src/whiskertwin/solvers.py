"""Small damped Gauss-Newton solver for the inverse problems in this package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when the iteration budget runs out; carries the best point found."""

    def __init__(self, message: str, best: "GNResult"):
        super().__init__(message)
        self.best = best


@dataclass
class GNResult:
    x: np.ndarray
    cost: float          # 0.5 * sum(r^2)
    residuals: np.ndarray
    iterations: int
    converged: bool


def numeric_jacobian(fun: Callable, x: np.ndarray, r0: np.ndarray | None = None, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    J = np.empty((len(r0) if r0 is not None else len(fun(x)), x.size))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return J


def gauss_newton(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    jac: Callable[[np.ndarray], np.ndarray] | None = None,
    max_iter: int = 200,
    xtol: float = 1e-12,
    ftol: float = 1e-14,
    raise_on_failure: bool = True,
) -> GNResult:
    """Minimise 0.5 * |fun(x)|^2 by Gauss-Newton with Levenberg damping.

    The damping factor shrinks after every accepted step, so near a
    well-conditioned minimum the iteration is plain Gauss-Newton.
    Non-finite residuals are treated as infinitely costly, which lets
    callers fence off invalid regions by returning NaN.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals are not finite at the starting point")
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jac(x) if jac is not None else numeric_jacobian(fun, x, r)
        g = J.T @ r
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        improved = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            # no descent direction left: at a (local) minimum to machine precision
            return GNResult(x, cost, r, it, True)
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol)
        small_gain = cost - cost_new <= ftol * max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if small_step or small_gain or cost == 0.0:
            return GNResult(x, cost, r, it, True)
    result = GNResult(x, cost, r, max_iter, False)
    if raise_on_failure:
        raise ConvergenceError(f"Gauss-Newton did not converge in {max_iter} iterations (cost {cost:.3g})", result)
    return result
