"""Fixed-point state filter: derivative-free EM filtering for linear measurements.

When the measurement map is linear (g(zeta) = H zeta) and both noises are
Gaussian, the EM surrogate is quadratic and its maximizer has a closed form:
the filter becomes the fixed-point iteration

    zeta_{i+1} = m_i + B (y - H m_i),   m_i = sum_j f(particle_j) * rho_j(zeta_i)

with the gain B = S H^T (H S H^T + R)^{-1} fixed per step and rho the
normalized mixture responsibilities.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .densities import GaussianDensity
from .em_filter import EmConfig, EmTrace, _FilterStepProblem, relative_step_converged
from .errors import ModelClassError
from .model import StateSpaceModel
from .particle_filter import ParticleSet


@dataclass(frozen=True)
class FpGain:
    """Per-step gain of the fixed-point iteration, with its ingredients.

    Construction re-derives B from the stored S, R, H and fails if the stored
    gain disagrees beyond 1e-12.
    """

    B: np.ndarray
    S_prev: np.ndarray
    R: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        rebuilt = _solve_gain(self.S_prev, self.R, self.H)
        if not np.allclose(self.B, rebuilt, rtol=0.0, atol=1e-12):
            raise ValueError("stored gain is inconsistent with S, R, H")


def _solve_gain(S: np.ndarray, R: np.ndarray, H: np.ndarray) -> np.ndarray:
    innovation_cov = H @ S @ H.T + R
    factor = cho_factor(innovation_cov)
    return cho_solve(factor, H @ S).T


def fp_gain(model: StateSpaceModel, k: int) -> FpGain:
    """Gain for step k; requires linear measurement and Gaussian noises."""
    if model.linear_measurement is None:
        raise ModelClassError("fixed-point filter needs a linear measurement map")
    W = model.process_noise(k - 1)
    V = model.measurement_noise(k)
    if not isinstance(W, GaussianDensity) or not isinstance(V, GaussianDensity):
        raise ModelClassError("fixed-point filter needs Gaussian process and measurement noise")
    S = W.covariance
    R = V.covariance
    H = model.linear_measurement
    return FpGain(B=_solve_gain(S, R, H), S_prev=S, R=R, H=H)


def fpsf_iterate(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta_i: np.ndarray,
    k: int,
) -> np.ndarray:
    """One fixed-point sweep from zeta_i (identical to the closed-form M-step)."""
    gain = fp_gain(model, k)
    problem = _FilterStepProblem(model, ps_prev, y, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    m = rho @ problem.fj
    return m + gain.B @ (problem.y - gain.H @ m)


def fpsf_step(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta0: np.ndarray,
    k: int,
    config: EmConfig = EmConfig(),
) -> Tuple[np.ndarray, EmTrace]:
    """Iterate the fixed point from zeta0 until the shared convergence criterion.

    Non-convergence within max_iters returns the last iterate with the trace
    flagged unconverged.
    """
    gain = fp_gain(model, k)
    problem = _FilterStepProblem(model, ps_prev, y, k)
    zeta = np.asarray(zeta0, dtype=float).copy()
    iterates = [zeta.copy()]
    q_values: List[float] = []
    ells = [problem.empirical_log_density(zeta)]
    converged = False
    for _ in range(config.max_iters):
        rho = problem.responsibilities(zeta)
        m = rho @ problem.fj
        zeta_next = m + gain.B @ (problem.y - gain.H @ m)
        q_values.append(problem.q(zeta_next, rho))
        iterates.append(zeta_next.copy())
        ells.append(problem.empirical_log_density(zeta_next))
        if relative_step_converged(zeta_next, zeta, config.rel_tol):
            zeta = zeta_next
            converged = True
            break
        zeta = zeta_next
    return zeta, EmTrace(iterates, q_values, ells, converged, restart_index=0)
