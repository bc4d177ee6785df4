"""EM state predictor: mode of p(zeta_k | y_0..y_m) for m < k.

Particles filtered at time m are pushed through the dynamics without
measurement updates (weights unchanged), and the same EM machinery as the
filter runs on the prediction surrogate, which simply lacks the measurement
term.  With Gaussian process noise the M-step is the responsibility-weighted
mean of the propagated particle images.
"""
from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from .ascent import maximize
from .densities import GaussianDensity, NoiseDensity, logsumexp
from .em_filter import EmConfig, EmTrace, relative_step_converged
from .errors import DegenerateResponsibilitiesError
from .model import StateSpaceModel, apply_f
from .particle_filter import ParticleSet, time_update


def propagate_to(
    model: StateSpaceModel,
    ps_m: ParticleSet,
    k_minus_1: int,
    rng: np.random.Generator,
) -> ParticleSet:
    """Repeated time updates from the filtered set at m up to step k-1.

    Weights never change: no measurement arrives after time m.  When
    k-1 == m the input set is returned as-is.
    """
    sets = propagate_with_intermediates(model, ps_m, k_minus_1, rng)
    return sets[-1]


def propagate_with_intermediates(
    model: StateSpaceModel,
    ps_m: ParticleSet,
    k_minus_1: int,
    rng: np.random.Generator,
) -> List[ParticleSet]:
    """Like :func:`propagate_to` but keeps every intermediate set (steps m..k-1)."""
    if ps_m.kind != "filtered":
        raise ValueError(f"propagation starts from a filtered set; got {ps_m.describe()}")
    if k_minus_1 < ps_m.step:
        raise ValueError("cannot propagate backwards in time")
    sets = [ps_m]
    for target in range(ps_m.step + 1, k_minus_1 + 1):
        sets.append(time_update(model, sets[-1], target, rng))
    return sets


class _PredictionProblem:
    """Precomputed pieces of the prediction surrogate at one target step."""

    def __init__(self, model: StateSpaceModel, ps_prop: ParticleSet, k: int):
        if ps_prop.step != k - 1:
            raise ValueError(
                f"prediction at step {k} needs particles propagated to step {k - 1}; got {ps_prop.describe()}"
            )
        self.model = model
        self.k = k
        self.W = model.process_noise(k - 1)
        self.fj = apply_f(model, ps_prop.particles, k - 1)
        with np.errstate(divide="ignore"):
            self.log_w = np.log(ps_prop.weights)

    def responsibilities(self, zeta_i: np.ndarray) -> np.ndarray:
        log_r = self.W.log_pdf_many(zeta_i - self.fj) + self.log_w
        top = np.max(log_r)
        if np.isnan(top) or top == -np.inf:
            raise DegenerateResponsibilitiesError(
                f"prediction iterate at step {self.k} is off every component's support"
            )
        r = np.exp(log_r - top)
        return r / r.sum()

    def q(self, zeta: np.ndarray, rho: np.ndarray) -> float:
        log_terms = self.W.log_pdf_many(zeta - self.fj)
        mask = rho > 0
        return float(rho[mask] @ log_terms[mask])

    def q_grad(self, zeta: np.ndarray, rho: np.ndarray) -> np.ndarray:
        return rho @ self.W.grad_log_pdf_many(zeta - self.fj)

    def empirical_log_density(self, zeta: np.ndarray) -> float:
        return float(logsumexp(self.log_w + self.W.log_pdf_many(zeta - self.fj)))

    def maximize_surrogate(self, zeta_i, rho, config: EmConfig) -> Tuple[np.ndarray, bool]:
        if config.m_step == "closed_form_auto" and isinstance(self.W, GaussianDensity):
            return rho @ self.fj, False
        result = maximize(
            lambda z: self.q(z, rho),
            lambda z: self.q_grad(z, rho),
            zeta_i,
            config.ascent,
        )
        return result.x, result.stalled


def q_hat_pred(
    model: StateSpaceModel,
    ps_prop: ParticleSet,
    zeta: np.ndarray,
    zeta_i: np.ndarray,
    k: int,
) -> float:
    """Prediction surrogate: the filter surrogate without its measurement term."""
    problem = _PredictionProblem(model, ps_prop, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.q(np.asarray(zeta, dtype=float), rho)


def q_hat_pred_grad(
    model: StateSpaceModel,
    ps_prop: ParticleSet,
    zeta: np.ndarray,
    zeta_i: np.ndarray,
    k: int,
) -> np.ndarray:
    problem = _PredictionProblem(model, ps_prop, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.q_grad(np.asarray(zeta, dtype=float), rho)


def empirical_predicted_log_density(
    model: StateSpaceModel, ps_prop: ParticleSet, zeta: np.ndarray, k: int
) -> float:
    """Log of the predicted mixture sum_j w_j W(zeta - f(particle_j)), up to a constant."""
    problem = _PredictionProblem(model, ps_prop, k)
    return problem.empirical_log_density(np.asarray(zeta, dtype=float))


def emsp_on_propagated(
    model: StateSpaceModel,
    ps_prop: ParticleSet,
    k: int,
    zeta_star_prev: np.ndarray,
    config: EmConfig = EmConfig(),
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, List[EmTrace]]:
    """EM prediction given an already-propagated set at step k-1."""
    problem = _PredictionProblem(model, ps_prop, k)
    prediction = apply_f(model, np.asarray(zeta_star_prev, dtype=float), k - 1) + problem.W.mean()

    starts = [prediction]
    if config.restarts > 1:
        if rng is None:
            raise ValueError("restarts > 1 require a random generator")
        if config.restart_density is not None:
            density: NoiseDensity = config.restart_density
        elif isinstance(problem.W, GaussianDensity):
            density = GaussianDensity(prediction, 4.0 * problem.W.covariance)
        else:
            raise ValueError("restarts > 1 need an explicit restart_density for non-Gaussian noise")
        starts.extend(density.sample(rng) for _ in range(config.restarts - 1))

    traces: List[EmTrace] = []
    failure: Optional[DegenerateResponsibilitiesError] = None
    for index, start in enumerate(starts):
        try:
            traces.append(_run_em_pred(problem, start, config, index))
        except DegenerateResponsibilitiesError as exc:
            failure = exc
    if not traces:
        raise failure if failure is not None else DegenerateResponsibilitiesError("no restart succeeded")

    finals = [trace.empirical_log_likelihoods[-1] for trace in traces]
    winner = traces[int(np.argmax(finals))]
    return winner.iterates[-1].copy(), traces


def _run_em_pred(problem: _PredictionProblem, start, config: EmConfig, restart_index: int) -> EmTrace:
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


def emsp_step(
    model: StateSpaceModel,
    ps_m: ParticleSet,
    m: int,
    k: int,
    zeta_star_prev: np.ndarray,
    config: EmConfig = EmConfig(),
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, List[EmTrace]]:
    """EM state prediction of the mode of p(zeta_k | y_0..y_m), m < k.

    Propagates the filtered set at m to step k-1 (consuming ``rng`` for the
    process-noise draws), then runs the EM iteration initialized at
    f(zeta_star_prev) + E[w].
    """
    if m >= k:
        raise ValueError("prediction needs m < k")
    if ps_m.step != m or ps_m.kind != "filtered":
        raise ValueError(f"expected the filtered set at step {m}; got {ps_m.describe()}")
    if rng is None and k - 1 > m:
        raise ValueError("propagation over a positive horizon requires a random generator")
    ps_prop = propagate_to(model, ps_m, k - 1, rng) if k - 1 > m else ps_m
    return emsp_on_propagated(model, ps_prop, k, zeta_star_prev, config, rng)
