"""Backtracking gradient ascent used by the M-steps without a closed form."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GradientAscentConfig:
    initial_step: float = 1.0
    backtrack: float = 0.5
    max_line_search: int = 40
    grad_tol: float = 1e-8
    max_inner_iters: int = 500
    armijo: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.initial_step <= 0 or self.grad_tol <= 0:
            raise ValueError("initial_step and grad_tol must be positive")


@dataclass(frozen=True)
class AscentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    stalled: bool


def maximize(
    value_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    config: GradientAscentConfig = GradientAscentConfig(),
) -> AscentResult:
    """Ascend ``value_fn`` from ``x0`` until the gradient norm drops below tolerance.

    Armijo backtracking guarantees the returned value is never below the
    starting value.  A failed line search (no ascent step found) stalls at the
    current point instead of erroring.
    """
    x = np.asarray(x0, dtype=float).copy()
    value = float(value_fn(x))
    if not np.isfinite(value):
        return AscentResult(x, value, float("nan"), 0, False, True)

    step = config.initial_step
    prev_x = None
    prev_grad = None
    for iteration in range(config.max_inner_iters):
        grad = np.asarray(grad_fn(x), dtype=float)
        grad_norm = float(np.linalg.norm(grad))
        if not np.isfinite(grad_norm):
            return AscentResult(x, value, grad_norm, iteration, False, True)
        if grad_norm <= config.grad_tol:
            return AscentResult(x, value, grad_norm, iteration, True, False)

        # Barzilai-Borwein trial step from the last displacement/gradient
        # change; falls back to growing the last accepted step
        trial = min(step * 2.0, config.initial_step * 2.0**10)
        if prev_x is not None:
            s = x - prev_x
            y = prev_grad - grad
            sy = float(s @ y)
            if sy > 0:
                trial = sy / float(y @ y)
        prev_x, prev_grad = x.copy(), grad

        accepted = False
        step = trial
        for _ in range(config.max_line_search):
            candidate = x + step * grad
            cand_value = float(value_fn(candidate))
            if cand_value >= value + config.armijo * step * grad_norm**2:
                x, value = candidate, cand_value
                accepted = True
                break
            step *= config.backtrack
        if not accepted:
            return AscentResult(x, value, grad_norm, iteration, False, True)

    grad_norm = float(np.linalg.norm(grad_fn(x)))
    return AscentResult(x, value, grad_norm, config.max_inner_iters, grad_norm <= config.grad_tol, False)
