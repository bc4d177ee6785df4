"""EM state filter: iterative maximum-likelihood filtering on particle mixtures.

Given the weighted particles of the previous filtered density and the current
measurement, the filtered density is interpolated by the smooth mixture

    p(zeta_k | y_0..y_k)  ~  V_k(y_k - g(zeta)) * sum_j w_j W_{k-1}(zeta - f(particle_j))

up to a positive constant.  Each EM sweep freezes the mixture responsibilities
at the current iterate (E-step) and maximizes the resulting surrogate
(M-step); the surrogate is an exact minorization of the mixture, so the
empirical filtered log-density never decreases along the iterates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .ascent import GradientAscentConfig, maximize
from .densities import GaussianDensity, NoiseDensity, logsumexp
from .errors import DegenerateResponsibilitiesError
from .model import StateSpaceModel, apply_f, apply_g
from .particle_filter import ParticleSet

M_STEP_MODES = ("closed_form_auto", "gradient_ascent")

# components this small fall back to an absolute convergence test, since the
# relative criterion is undefined at zero
REL_GUARD = 1e-12


@dataclass(frozen=True)
class EmConfig:
    """Shared EM iteration settings.

    ``restarts`` counts the total number of EM runs per step: run 0 starts
    from the one-step prediction, additional runs draw their start from
    ``restart_density`` (or, by default, a Gaussian centered on the
    prediction with four times the process covariance).
    """

    rel_tol: float = 0.005
    max_iters: int = 50
    restarts: int = 1
    restart_density: Optional[NoiseDensity] = None
    m_step: str = "closed_form_auto"
    ascent: GradientAscentConfig = field(default_factory=GradientAscentConfig)

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.m_step not in M_STEP_MODES:
            raise ValueError(f"m_step must be one of {M_STEP_MODES}")


@dataclass(frozen=True)
class EmTrace:
    """Iterate history of one EM run.

    ``q_values[i]`` is the surrogate value Q(iterates[i+1], iterates[i]);
    ``empirical_log_likelihoods[i]`` is the empirical log-density at
    iterates[i], comparable across runs only up to a shared constant.
    """

    iterates: List[np.ndarray]
    q_values: List[float]
    empirical_log_likelihoods: List[float]
    converged: bool
    restart_index: int
    stalled: bool = False

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    def monotonicity_violation(self, slack: float = 1e-9) -> float:
        """Largest drop of the empirical log-density along the run (0 if none)."""
        worst = 0.0
        values = self.empirical_log_likelihoods
        for prev, curr in zip(values, values[1:]):
            if prev == -np.inf:
                continue
            worst = max(worst, prev - curr)
        return worst if worst > slack else 0.0

    def is_monotone(self, slack: float = 1e-9) -> bool:
        return self.monotonicity_violation(slack) == 0.0


def relative_step_converged(new: np.ndarray, old: np.ndarray, rel_tol: float) -> bool:
    """Componentwise relative-change test with an absolute fallback near zero."""
    new = np.asarray(new, dtype=float)
    old = np.asarray(old, dtype=float)
    err = 0.0
    for q in range(new.shape[0]):
        if abs(new[q]) < REL_GUARD:
            err = max(err, abs(new[q] - old[q]))
        else:
            err = max(err, abs((new[q] - old[q]) / new[q]))
    return err <= rel_tol


class _FilterStepProblem:
    """Precomputed quantities for one (particle set, measurement, step) triple."""

    def __init__(self, model: StateSpaceModel, ps_prev: ParticleSet, y: np.ndarray, k: int):
        if ps_prev.step != k - 1 or ps_prev.kind != "filtered":
            raise ValueError(
                f"EM filtering at step {k} needs the filtered set at step {k - 1}; got {ps_prev.describe()}"
            )
        self.model = model
        self.k = k
        self.y = np.asarray(y, dtype=float).reshape(model.obs_dim)
        self.W = model.process_noise(k - 1)
        self.V = model.measurement_noise(k)
        self.fj = apply_f(model, ps_prev.particles, k - 1)
        with np.errstate(divide="ignore"):
            self.log_w = np.log(ps_prev.weights)

    def responsibilities(self, zeta_i: np.ndarray) -> np.ndarray:
        log_r = self.W.log_pdf_many(zeta_i - self.fj) + self.log_w
        top = np.max(log_r)
        if np.isnan(top) or top == -np.inf:
            raise DegenerateResponsibilitiesError(
                f"iterate at step {self.k} is off the support of every mixture component"
            )
        r = np.exp(log_r - top)
        return r / r.sum()

    def log_v(self, zeta: np.ndarray) -> float:
        return float(self.V.log_pdf(self.y - apply_g(self.model, zeta, self.k)))

    def q(self, zeta: np.ndarray, rho: np.ndarray) -> float:
        log_w_terms = self.W.log_pdf_many(zeta - self.fj)
        mask = rho > 0
        return self.log_v(zeta) + float(rho[mask] @ log_w_terms[mask])

    def q_grad(self, zeta: np.ndarray, rho: np.ndarray) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        residual = self.y - apply_g(self.model, zeta, self.k)
        g_jac = np.atleast_2d(self.model.g_jacobian(zeta, self.k))
        grad = -g_jac.T @ self.V.grad_log_pdf(residual)
        grad = grad + rho @ self.W.grad_log_pdf_many(zeta - self.fj)
        return grad

    def empirical_log_density(self, zeta: np.ndarray) -> float:
        log_mix = float(logsumexp(self.log_w + self.W.log_pdf_many(zeta - self.fj)))
        return self.log_v(zeta) + log_mix

    # -- M-step ------------------------------------------------------------

    def closed_form_available(self) -> bool:
        return (
            self.model.linear_measurement is not None
            and isinstance(self.W, GaussianDensity)
            and isinstance(self.V, GaussianDensity)
        )

    def closed_form_update(self, rho: np.ndarray) -> np.ndarray:
        H = self.model.linear_measurement
        S = self.W.covariance
        R = self.V.covariance
        gain = S @ H.T @ np.linalg.inv(H @ S @ H.T + R)
        m = rho @ self.fj
        return m + gain @ (self.y - H @ m)

    def maximize_surrogate(self, zeta_i: np.ndarray, rho: np.ndarray, config: EmConfig) -> Tuple[np.ndarray, bool]:
        if config.m_step == "closed_form_auto" and self.closed_form_available():
            return self.closed_form_update(rho), False
        result = maximize(
            lambda z: self.q(z, rho),
            lambda z: self.q_grad(z, rho),
            zeta_i,
            config.ascent,
        )
        return result.x, result.stalled


# --------------------------------------------------------------------------
# Public operations
# --------------------------------------------------------------------------


def lambda_weights(
    model: StateSpaceModel, ps_prev: ParticleSet, zeta_i: np.ndarray, k: int
) -> np.ndarray:
    """Normalized mixture responsibilities of the previous particles for zeta_i."""
    problem = _FilterStepProblem(model, ps_prev, np.zeros(model.obs_dim), k)
    return problem.responsibilities(np.asarray(zeta_i, dtype=float))


def q_hat(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta: np.ndarray,
    zeta_i: np.ndarray,
    k: int,
) -> float:
    """Particle surrogate Q(zeta, zeta_i) with responsibilities normalized to one."""
    problem = _FilterStepProblem(model, ps_prev, y, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.q(np.asarray(zeta, dtype=float), rho)


def q_hat_grad(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta: np.ndarray,
    zeta_i: np.ndarray,
    k: int,
) -> np.ndarray:
    """Gradient of the surrogate in zeta, with zeta_i (hence responsibilities) frozen."""
    problem = _FilterStepProblem(model, ps_prev, y, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.q_grad(np.asarray(zeta, dtype=float), rho)


def empirical_filtered_log_density(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta: np.ndarray,
    k: int,
) -> float:
    """Log of the smooth mixture interpolating the filtered density, up to a constant."""
    problem = _FilterStepProblem(model, ps_prev, y, k)
    return problem.empirical_log_density(np.asarray(zeta, dtype=float))


def m_step(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta_i: np.ndarray,
    k: int,
    config: EmConfig = EmConfig(),
) -> Tuple[np.ndarray, bool]:
    """One maximization step from zeta_i; returns (next iterate, stalled flag).

    Linear measurement with Gaussian noises takes the closed form; otherwise
    backtracking gradient ascent from zeta_i, which never decreases the
    surrogate.  A stalled line search returns zeta_i unchanged with the flag
    set.
    """
    problem = _FilterStepProblem(model, ps_prev, y, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.maximize_surrogate(np.asarray(zeta_i, dtype=float), rho, config)


def _run_em(
    problem: _FilterStepProblem, start: np.ndarray, config: EmConfig, restart_index: int
) -> EmTrace:
    zeta = np.asarray(start, dtype=float).copy()
    iterates = [zeta.copy()]
    q_values: List[float] = []
    ells = [problem.empirical_log_density(zeta)]
    converged = False
    stalled = False
    for _ in range(config.max_iters):
        rho = problem.responsibilities(zeta)
        zeta_next, step_stalled = problem.maximize_surrogate(zeta, rho, config)
        q_values.append(problem.q(zeta_next, rho))
        iterates.append(zeta_next.copy())
        ells.append(problem.empirical_log_density(zeta_next))
        if step_stalled:
            stalled = True
        if relative_step_converged(zeta_next, zeta, config.rel_tol):
            zeta = zeta_next
            converged = True
            break
        zeta = zeta_next
    return EmTrace(iterates, q_values, ells, converged, restart_index, stalled)


def _default_restart_density(problem: _FilterStepProblem, prediction: np.ndarray) -> NoiseDensity:
    if not isinstance(problem.W, GaussianDensity):
        raise ValueError(
            "restarts > 1 need an explicit restart_density for non-Gaussian process noise"
        )
    return GaussianDensity(prediction, 4.0 * problem.W.covariance)


def emsf_step(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    zeta_star_prev: np.ndarray,
    k: int,
    config: EmConfig = EmConfig(),
    rng: Optional[np.random.Generator] = None,
    zeta0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[EmTrace]]:
    """One filtering step of the EM state filter, with optional restarts.

    Run 0 starts from the one-step prediction f(zeta_star_prev) + E[w] unless
    ``zeta0`` overrides it; further runs draw their start from the restart
    density.  The winner is the run whose final iterate has the highest
    empirical filtered log-density (ties to the lower restart index).

    Returns the winning estimate and one trace per run; runs whose
    responsibilities degenerate are skipped, and only if all runs degenerate
    does the error propagate.
    """
    problem = _FilterStepProblem(model, ps_prev, y, k)
    prediction = apply_f(model, np.asarray(zeta_star_prev, dtype=float), k - 1) + problem.W.mean()

    starts = [np.asarray(zeta0, dtype=float) if zeta0 is not None else prediction]
    if config.restarts > 1:
        if rng is None:
            raise ValueError("restarts > 1 require a random generator")
        density = config.restart_density or _default_restart_density(problem, prediction)
        starts.extend(density.sample(rng) for _ in range(config.restarts - 1))

    traces: List[EmTrace] = []
    failure: Optional[DegenerateResponsibilitiesError] = None
    for index, start in enumerate(starts):
        try:
            traces.append(_run_em(problem, start, config, index))
        except DegenerateResponsibilitiesError as exc:
            failure = exc
    if not traces:
        raise failure if failure is not None else DegenerateResponsibilitiesError("no restart succeeded")

    finals = [trace.empirical_log_likelihoods[-1] for trace in traces]
    winner = traces[int(np.argmax(finals))]
    return winner.iterates[-1].copy(), traces
