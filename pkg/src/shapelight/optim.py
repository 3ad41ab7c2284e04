"""Backtracking gradient descent shared by the refinement stages.

The step rule is plain steepest descent x <- x - a*g with an Armijo
acceptance test f(x - a*g) <= f(x) - c*a*||g||^2. The trial step starts
from the previously accepted step grown once by 1/anneal and shrinks by
the anneal factor until accepted. Termination: accepted step length
below ``tol`` (reason "tol") or the iteration budget (reason "max_iters").
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteLoss


@dataclass
class GDResult:
    x: np.ndarray
    fx: float
    iterations: int
    reason: str  # "tol" | "max_iters"
    trace: list = field(default_factory=list)  # accepted loss per iteration

    @property
    def monotone(self) -> bool:
        t = [self.trace[0]] + self.trace if self.trace else []
        return all(b <= a + 1e-15 for a, b in zip(t, t[1:]))


def backtracking_gd(
    loss_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    lr0: float = 0.1,
    c: float = 1e-5,
    anneal: float = 0.9,
    tol: float = 1e-7,
    max_iters: int = 150,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    callback: Callable[[int, np.ndarray, float], bool | None] | None = None,
    max_backtracks: int = 200,
) -> GDResult:
    """Minimize a smooth loss with Armijo backtracking.

    Parameters
    ----------
    loss_and_grad : callable
        x -> (f, g). The gradient may be analytic or finite-difference.
    project : callable, optional
        Applied to the iterate after each accepted step (e.g. renormalize);
        the projected point must not increase the reported loss for the
        monotonicity guarantee to hold (callers ensure this by evaluating
        the loss on projected iterates only).
    callback : callable, optional
        Invoked as callback(iteration, x, f) after each accepted step. A
        truthy return signals that the callback changed state the loss
        depends on; the loss and gradient are then re-evaluated at x
        before the next iteration.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = loss_and_grad(x)
    if not np.isfinite(f):
        raise NonFiniteLoss(f"initial loss is {f}")
    trace: list[float] = []
    alpha = float(lr0)
    reason = "max_iters"
    it = 0
    for it in range(1, max_iters + 1):
        gnorm2 = float(np.dot(g.ravel(), g.ravel()))
        if gnorm2 == 0.0:
            reason = "tol"
            it -= 1
            break
        # grow the trial step once, then backtrack
        alpha = alpha / anneal
        accepted = False
        for _ in range(max_backtracks):
            if alpha * np.sqrt(gnorm2) < tol:
                break
            x_try = x - alpha * g
            if project is not None:
                x_try = project(x_try)
            f_try, g_try = loss_and_grad(x_try)
            if not np.isfinite(f_try):
                raise NonFiniteLoss(f"loss became {f_try} at iteration {it}")
            if f_try <= f - c * alpha * gnorm2:
                accepted = True
                break
            alpha *= anneal
        if not accepted:
            reason = "tol"
            it -= 1
            break
        x, f, g = x_try, f_try, g_try
        trace.append(f)
        if callback is not None and callback(it, x, f):
            f, g = loss_and_grad(x)
            if not np.isfinite(f):
                raise NonFiniteLoss(f"loss became {f} after callback")
            trace[-1] = f
        if alpha * np.sqrt(gnorm2) < tol:
            reason = "tol"
            break
    return GDResult(x=x, fx=f, iterations=it, reason=reason, trace=trace)


def finite_difference_grad(
    fun: Callable[[np.ndarray], float], x: np.ndarray, steps
) -> np.ndarray:
    """Central finite differences with per-coordinate step sizes."""
    x = np.asarray(x, dtype=np.float64)
    steps = np.broadcast_to(np.asarray(steps, dtype=np.float64), x.shape)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = steps.flat[i]
        g.flat[i] = (fun(x + e) - fun(x - e)) / (2.0 * steps.flat[i])
    return g
