"""EM state smoother: mode of p(zeta_k | y_0..y_n) for n > k+1.

The smoothing surrogate combines three particle approximations: the filtered
sets at k-1 and k, and the smoothed set at k+1 (filtered particles at k+1
reweighted to condition on all n+1 measurements).  The smoothed weights come
from a backward reweighting pass over the stored filtered sets; the E-step
denominators make each smoothing step O(N^2).

There is no closed-form M-step here even in the Gaussian linear case: the
surrogate contains the log of a mixture, so maximization is always gradient
ascent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ascent import maximize
from .densities import GaussianDensity, NoiseDensity, logsumexp
from .em_filter import EmConfig, EmTrace, relative_step_converged
from .errors import DegenerateResponsibilitiesError, SupportMismatchError
from .model import StateSpaceModel, apply_f, apply_g
from .particle_filter import ParticleSet


@dataclass(frozen=True)
class SmootherInputs:
    """The three particle sets and the measurement one smoothing step needs.

    Roles are checked strictly: filtered at k-1, filtered at k, smoothed at
    k+1 conditioned through n, all sharing the particle count, with n > k+1.
    """

    ps_km1_filtered: ParticleSet
    ps_k_filtered: ParticleSet
    ps_kp1_smoothed: ParticleSet
    y_k: np.ndarray
    n: int

    def __post_init__(self):
        k = self.ps_k_filtered.step
        if self.ps_km1_filtered.step != k - 1 or self.ps_km1_filtered.kind != "filtered":
            raise ValueError(f"need the filtered set at step {k - 1}; got {self.ps_km1_filtered.describe()}")
        if self.ps_k_filtered.kind != "filtered":
            raise ValueError(f"need the filtered set at step {k}; got {self.ps_k_filtered.describe()}")
        if self.ps_kp1_smoothed.step != k + 1 or self.ps_kp1_smoothed.measured_through != self.n:
            raise ValueError(
                f"need the smoothed set at step {k + 1} conditioned through {self.n}; "
                f"got {self.ps_kp1_smoothed.describe()}"
            )
        if self.ps_kp1_smoothed.kind != "smoothed":
            raise ValueError("the step k+1 set must be smoothed (measured_through > step)")
        if self.n <= k + 1:
            raise ValueError("smoothing requires n > k+1; boundary cases degenerate to filtering")
        counts = {
            self.ps_km1_filtered.n_particles,
            self.ps_k_filtered.n_particles,
            self.ps_kp1_smoothed.n_particles,
        }
        if len(counts) != 1:
            raise ValueError("all three particle sets must share the particle count")
        object.__setattr__(self, "y_k", np.asarray(self.y_k, dtype=float).reshape(-1))

    @property
    def k(self) -> int:
        return self.ps_k_filtered.step


_KERNEL_BLOCK_ROWS = 128


def _transition_log_kernel(model: StateSpaceModel, source: ParticleSet, targets: np.ndarray, k: int) -> np.ndarray:
    """log W_k(target_t - f(source_d)) as an (n_targets, n_sources) matrix.

    Evaluated in row blocks so peak temporary memory stays flat in N and the
    O(N^2) cost is compute-bound.
    """
    W = model.process_noise(k)
    moved = apply_f(model, source.particles, k)
    n_targets = targets.shape[0]
    n_sources = moved.shape[0]
    out = np.empty((n_targets, n_sources))
    for start in range(0, n_targets, _KERNEL_BLOCK_ROWS):
        block = targets[start : start + _KERNEL_BLOCK_ROWS]
        diffs = block[:, None, :] - moved[None, :, :]
        flat = diffs.reshape(-1, diffs.shape[-1])
        out[start : start + block.shape[0]] = W.log_pdf_many(flat).reshape(block.shape[0], n_sources)
    return out


def ffbs_smoothed_weights(
    model: StateSpaceModel, filtered_sets: Sequence[ParticleSet], n: int
) -> List[np.ndarray]:
    """Backward reweighting pass producing smoothed weights on the filtered particles.

    ``filtered_sets`` must be the weighted filtered sets of one bootstrap run
    at contiguous steps ending at n (stored before any resampling).  Particles
    are left untouched; only the weights change, with the filtered weights at
    n as the base case.

    Raises
    ------
    SupportMismatchError
        if some smoothed particle at step k+1 is unreachable from every
        filtered particle at step k (a zero denominator), naming the particle.
    """
    if len(filtered_sets) == 0:
        raise ValueError("need at least one filtered set")
    if filtered_sets[-1].step != n:
        raise ValueError(f"last filtered set must sit at step n={n}; got {filtered_sets[-1].step}")
    for offset, ps in enumerate(filtered_sets):
        expected = filtered_sets[0].step + offset
        if ps.step != expected or ps.kind != "filtered":
            raise ValueError(f"filtered sets must be contiguous; slot {offset}: {ps.describe()}")

    weights: List[np.ndarray] = [None] * len(filtered_sets)  # type: ignore[list-item]
    weights[-1] = filtered_sets[-1].weights.copy()
    for idx in range(len(filtered_sets) - 2, -1, -1):
        k = filtered_sets[idx].step
        log_kernel = _transition_log_kernel(
            model, filtered_sets[idx], filtered_sets[idx + 1].particles, k
        )
        with np.errstate(divide="ignore"):
            log_w_filtered = np.log(filtered_sets[idx].weights)
            log_w_next = np.log(weights[idx + 1])
        log_denominators = logsumexp(log_kernel + log_w_filtered[None, :], axis=1)
        bad = np.where(np.isneginf(log_denominators) & np.isfinite(log_w_next))[0]
        if bad.size:
            raise SupportMismatchError(
                f"smoothed particle {int(bad[0])} at step {k + 1} is unreachable from step {k}"
            )
        with np.errstate(invalid="ignore"):
            log_ratios = log_w_next[:, None] + log_kernel - log_denominators[:, None]
        log_ratios[np.isneginf(log_w_next)] = -np.inf  # zero-weight rows contribute nothing
        ratios = np.exp(log_ratios)
        w = filtered_sets[idx].weights * ratios.sum(axis=0)
        weights[idx] = w / w.sum()
    return weights


def smoothing_denominators(model: StateSpaceModel, inputs: SmootherInputs, k: int) -> np.ndarray:
    """The N mixture denominators d_t = sum_d w_d W_k(smoothed_t - f(filtered_d))."""
    log_d = _log_denominators(model, inputs, k)
    if np.any(np.isneginf(log_d)):
        t = int(np.where(np.isneginf(log_d))[0][0])
        raise SupportMismatchError(f"denominator for smoothed particle {t} at step {k + 1} is zero")
    return np.exp(log_d)


def _log_denominators(model: StateSpaceModel, inputs: SmootherInputs, k: int) -> np.ndarray:
    if k != inputs.k:
        raise ValueError(f"inputs describe step {inputs.k}, not {k}")
    W = model.process_noise(k)
    moved = apply_f(model, inputs.ps_k_filtered.particles, k)
    targets = inputs.ps_kp1_smoothed.particles
    with np.errstate(divide="ignore"):
        log_w = np.log(inputs.ps_k_filtered.weights)
    # fused block evaluation + row reduction: never holds the full N x N matrix
    out = np.empty(targets.shape[0])
    for start in range(0, targets.shape[0], _KERNEL_BLOCK_ROWS):
        block = targets[start : start + _KERNEL_BLOCK_ROWS]
        diffs = block[:, None, :] - moved[None, :, :]
        flat = diffs.reshape(-1, diffs.shape[-1])
        rows = W.log_pdf_many(flat).reshape(block.shape[0], moved.shape[0])
        out[start : start + block.shape[0]] = logsumexp(rows + log_w[None, :], axis=1)
    return out


class _SmootherProblem:
    """Precomputed pieces of the smoothing surrogate at step k."""

    def __init__(self, model: StateSpaceModel, inputs: SmootherInputs, k: int):
        if k != inputs.k:
            raise ValueError(f"inputs describe step {inputs.k}, not {k}")
        if model.f_jacobian is None:
            raise ValueError("the smoother gradient requires f_jacobian on the model")
        self.model = model
        self.k = k
        self.y = inputs.y_k
        self.W_prev = model.process_noise(k - 1)
        self.W_next = model.process_noise(k)
        self.V = model.measurement_noise(k)
        self.fj_km1 = apply_f(model, inputs.ps_km1_filtered.particles, k - 1)
        self.smoothed_particles = inputs.ps_kp1_smoothed.particles
        with np.errstate(divide="ignore"):
            self.log_w_km1 = np.log(inputs.ps_km1_filtered.weights)
            log_w_kp1 = np.log(inputs.ps_kp1_smoothed.weights)
        log_d = _log_denominators(model, inputs, k)
        finite_next = np.isfinite(log_w_kp1)
        if np.any(np.isneginf(log_d[finite_next])):
            t = int(np.where(np.isneginf(log_d) & finite_next)[0][0])
            raise SupportMismatchError(f"denominator for smoothed particle {t} at step {k + 1} is zero")
        # per-particle log(a_t) = log w_{k+1|n}^t - log d_t, the fixed part of
        # the backward-mixture weights; zero-weight particles drop out
        with np.errstate(invalid="ignore"):
            log_a = log_w_kp1 - log_d
        log_a[np.isneginf(log_w_kp1)] = -np.inf
        self.log_a = log_a

    # responsibilities of the t-sum, frozen at zeta_i
    def responsibilities(self, zeta_i: np.ndarray) -> np.ndarray:
        moved = apply_f(self.model, zeta_i, self.k)
        log_r = self.W_next.log_pdf_many(self.smoothed_particles - moved) + self.log_a
        top = np.max(log_r)
        if np.isnan(top) or top == -np.inf:
            raise DegenerateResponsibilitiesError(
                f"smoothing iterate at step {self.k} is off every backward component's support"
            )
        r = np.exp(log_r - top)
        return r / r.sum()

    def _log_v(self, zeta: np.ndarray) -> float:
        return float(self.V.log_pdf(self.y - apply_g(self.model, zeta, self.k)))

    def _log_prior_mixture(self, zeta: np.ndarray) -> float:
        return float(logsumexp(self.log_w_km1 + self.W_prev.log_pdf_many(zeta - self.fj_km1)))

    def q(self, zeta: np.ndarray, rho: np.ndarray) -> float:
        moved = apply_f(self.model, zeta, self.k)
        log_terms = self.W_next.log_pdf_many(self.smoothed_particles - moved)
        mask = rho > 0
        return self._log_v(zeta) + self._log_prior_mixture(zeta) + float(rho[mask] @ log_terms[mask])

    def q_grad(self, zeta: np.ndarray, rho: np.ndarray) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        residual = self.y - apply_g(self.model, zeta, self.k)
        g_jac = np.atleast_2d(self.model.g_jacobian(zeta, self.k))
        grad = -g_jac.T @ self.V.grad_log_pdf(residual)

        # gradient of the log prior mixture: responsibility-weighted kernel gradients
        log_members = self.log_w_km1 + self.W_prev.log_pdf_many(zeta - self.fj_km1)
        top = np.max(log_members)
        if np.isfinite(top):
            eta = np.exp(log_members - top)
            eta /= eta.sum()
            grad = grad + eta @ self.W_prev.grad_log_pdf_many(zeta - self.fj_km1)

        moved = apply_f(self.model, zeta, self.k)
        f_jac = np.atleast_2d(self.model.f_jacobian(zeta, self.k))
        inner = rho @ self.W_next.grad_log_pdf_many(self.smoothed_particles - moved)
        grad = grad - f_jac.T @ inner
        return grad

    def empirical_log_density(self, zeta: np.ndarray) -> float:
        moved = apply_f(self.model, zeta, self.k)
        backward = float(logsumexp(self.log_a + self.W_next.log_pdf_many(self.smoothed_particles - moved)))
        return self._log_v(zeta) + self._log_prior_mixture(zeta) + backward


def q_hat_smooth(
    model: StateSpaceModel, inputs: SmootherInputs, zeta: np.ndarray, zeta_i: np.ndarray, k: int
) -> float:
    """Smoothing surrogate at zeta with the backward responsibilities frozen at zeta_i."""
    problem = _SmootherProblem(model, inputs, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.q(np.asarray(zeta, dtype=float), rho)


def q_hat_smooth_grad(
    model: StateSpaceModel, inputs: SmootherInputs, zeta: np.ndarray, zeta_i: np.ndarray, k: int
) -> np.ndarray:
    problem = _SmootherProblem(model, inputs, k)
    rho = problem.responsibilities(np.asarray(zeta_i, dtype=float))
    return problem.q_grad(np.asarray(zeta, dtype=float), rho)


def empirical_smoothed_log_density(
    model: StateSpaceModel, inputs: SmootherInputs, zeta: np.ndarray, k: int
) -> float:
    """Log of the smooth interpolation of the smoothed density, up to a constant."""
    problem = _SmootherProblem(model, inputs, k)
    return problem.empirical_log_density(np.asarray(zeta, dtype=float))


def emss_step(
    model: StateSpaceModel,
    inputs: SmootherInputs,
    k: int,
    zeta0: np.ndarray,
    config: EmConfig = EmConfig(),
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, List[EmTrace]]:
    """One smoothing step of the EM state smoother via gradient-ascent M-steps.

    ``zeta0`` is the caller's initial guess (typically the filtered mode at
    k).  Additional restarts draw from the restart density, defaulting to a
    Gaussian around zeta0 with four times the process covariance.
    """
    problem = _SmootherProblem(model, inputs, k)
    zeta0 = np.asarray(zeta0, dtype=float)

    starts = [zeta0]
    if config.restarts > 1:
        if rng is None:
            raise ValueError("restarts > 1 require a random generator")
        if config.restart_density is not None:
            density: NoiseDensity = config.restart_density
        elif isinstance(problem.W_next, GaussianDensity):
            density = GaussianDensity(zeta0, 4.0 * problem.W_next.covariance)
        else:
            raise ValueError("restarts > 1 need an explicit restart_density for non-Gaussian noise")
        starts.extend(density.sample(rng) for _ in range(config.restarts - 1))

    traces: List[EmTrace] = []
    failure: Optional[DegenerateResponsibilitiesError] = None
    for index, start in enumerate(starts):
        try:
            traces.append(_run_em_smooth(problem, start, config, index))
        except DegenerateResponsibilitiesError as exc:
            failure = exc
    if not traces:
        raise failure if failure is not None else DegenerateResponsibilitiesError("no restart succeeded")

    finals = [trace.empirical_log_likelihoods[-1] for trace in traces]
    winner = traces[int(np.argmax(finals))]
    return winner.iterates[-1].copy(), traces


def _run_em_smooth(problem: _SmootherProblem, start, config: EmConfig, restart_index: int) -> EmTrace:
    zeta = np.asarray(start, dtype=float).copy()
    iterates = [zeta.copy()]
    q_values: List[float] = []
    ells = [problem.empirical_log_density(zeta)]
    converged = False
    stalled = False
    for _ in range(config.max_iters):
        rho = problem.responsibilities(zeta)
        result = maximize(
            lambda z: problem.q(z, rho),
            lambda z: problem.q_grad(z, rho),
            zeta,
            config.ascent,
        )
        zeta_next = result.x
        q_values.append(problem.q(zeta_next, rho))
        iterates.append(zeta_next.copy())
        ells.append(problem.empirical_log_density(zeta_next))
        if result.stalled:
            stalled = True
        if relative_step_converged(zeta_next, zeta, config.rel_tol):
            zeta = zeta_next
            converged = True
            break
        zeta = zeta_next
    return EmTrace(iterates, q_values, ells, converged, restart_index, stalled)
