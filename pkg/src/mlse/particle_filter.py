"""Bootstrap particle filter and the weighted-particle container.

A :class:`ParticleSet` carries, besides particles and weights, the time index
of the particles and the index of the last measurement the weights condition
on.  The derived kind (filtered / predicted / smoothed) lets downstream
consumers reject a set playing the wrong role, which matters once the
smoother juggles three differently conditioned sets at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateWeightsError
from .model import StateSpaceModel, apply_f, apply_g

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ParticleSet:
    """Weighted particle approximation of one conditional state density.

    Parameters
    ----------
    particles : (N, state_dim) array
    weights : (N,) array, nonnegative, summing to one within 1e-12
    step : time index of the particles
    measured_through : index m of the last measurement in the conditioning
        (-1 when no measurement has been incorporated)
    """

    particles: np.ndarray
    weights: np.ndarray
    step: int
    measured_through: int

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)
        if particles.shape[0] < 1:
            raise ValueError("a particle set needs at least one particle")
        if weights.shape[0] != particles.shape[0]:
            raise ValueError("weights length does not match particle count")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must sum to one within 1e-12")

    @classmethod
    def from_unnormalized(cls, particles, weights, step, measured_through) -> "ParticleSet":
        w = np.asarray(weights, dtype=float).reshape(-1)
        total = float(w.sum())
        if not np.isfinite(total) or total <= 0:
            raise ValueError("weights must have a positive finite sum")
        return cls(particles, w / total, step, measured_through)

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    @property
    def kind(self) -> str:
        if self.measured_through == self.step:
            return "filtered"
        if self.measured_through < self.step:
            return "predicted"
        return "smoothed"

    def describe(self) -> str:
        return f"{self.kind}(step={self.step}, measured_through={self.measured_through})"


def weighted_mean(ps: ParticleSet) -> np.ndarray:
    return ps.weights @ ps.particles


def init_particles(model: StateSpaceModel, n: int, rng: np.random.Generator) -> ParticleSet:
    """Draw N particles from the initial density with uniform weights."""
    if n < 1:
        raise ValueError("need at least one particle")
    particles = model.initial_density.sample(rng, size=n)
    return ParticleSet(particles, np.full(n, 1.0 / n), step=0, measured_through=-1)


def time_update(model: StateSpaceModel, ps: ParticleSet, k: int, rng: np.random.Generator) -> ParticleSet:
    """Propagate particles one step through the dynamics plus fresh noise.

    Importance weights are copied unchanged: no new measurement enters.
    """
    if ps.step != k - 1:
        raise ValueError(f"time_update to step {k} needs particles at step {k - 1}, got {ps.step}")
    noise = model.process_noise(k - 1).sample(rng, size=ps.n_particles)
    moved = apply_f(model, ps.particles, k - 1) + noise
    return ParticleSet(moved, ps.weights.copy(), step=k, measured_through=ps.measured_through)


def measurement_update(model: StateSpaceModel, ps: ParticleSet, y: np.ndarray, k: int) -> ParticleSet:
    """Reweight the one-step-predicted set by the measurement likelihood.

    Particles stay where they are; weight j is multiplied by the measurement
    noise density at the innovation y - g(particle j) and renormalized in the
    log domain.

    Raises
    ------
    DegenerateWeightsError
        if every unnormalized weight is zero or non-finite.
    """
    if ps.step != k or ps.measured_through != k - 1:
        raise ValueError(
            f"measurement_update at step {k} needs the one-step-predicted set "
            f"(step={k}, measured_through={k - 1}); got {ps.describe()}"
        )
    y = np.asarray(y, dtype=float).reshape(model.obs_dim)
    innovations = y - apply_g(model, ps.particles, k)
    log_lik = model.measurement_noise(k).log_pdf_many(innovations)
    with np.errstate(divide="ignore"):
        log_w = np.log(ps.weights) + log_lik
    top = np.max(log_w)
    if np.isnan(top) or top == -np.inf:
        raise DegenerateWeightsError(
            f"all weights vanished at step {k}; measurement is incompatible with every particle"
        )
    w = np.exp(log_w - top)
    return ParticleSet(ps.particles, w / w.sum(), step=k, measured_through=k)


def systematic_resample(
    ps: ParticleSet, rng: np.random.Generator, n: Optional[int] = None
) -> ParticleSet:
    """Low-variance systematic resampling to uniform weights.

    A single uniform draw u places the comb (u + i)/n over the cumulative
    weights, so the copy count of particle j is either floor or ceil of
    n * weight_j.  ``n`` defaults to the input particle count.
    """
    n = ps.n_particles if n is None else int(n)
    if n < 1:
        raise ValueError("need at least one output particle")
    positions = (rng.uniform() + np.arange(n)) / n
    cumulative = np.cumsum(ps.weights)
    cumulative[-1] = 1.0
    indices = np.searchsorted(cumulative, positions, side="right")
    indices = np.minimum(indices, ps.n_particles - 1)
    return ParticleSet(
        ps.particles[indices],
        np.full(n, 1.0 / n),
        step=ps.step,
        measured_through=ps.measured_through,
    )


def effective_sample_size(ps: ParticleSet) -> float:
    """Weight-degeneracy diagnostic 1 / sum(w_j^2), between 1 and N."""
    return 1.0 / float(np.sum(ps.weights**2))


@dataclass(frozen=True)
class BootstrapStepResult:
    """Outcome of one bootstrap filter step.

    ``predicted`` is the time-updated set before the measurement enters;
    ``filtered`` is the weighted post-update set (kept for smoothing);
    ``carried`` is what the next step should consume — the resampled set when
    resampling fired, otherwise the same object as ``filtered``.
    """

    predicted: ParticleSet
    filtered: ParticleSet
    carried: ParticleSet
    mean: np.ndarray
    ess: float
    resampled: bool


def bootstrap_filter_step(
    model: StateSpaceModel,
    ps: ParticleSet,
    y: np.ndarray,
    k: int,
    rng: np.random.Generator,
    resample_threshold: float = 0.5,
) -> BootstrapStepResult:
    """Time update, measurement update, and threshold-gated resampling.

    Resampling fires when ESS < resample_threshold * N.  The recorded
    conditional mean is taken from the weighted set before resampling.
    """
    predicted = time_update(model, ps, k, rng)
    filtered = measurement_update(model, predicted, y, k)
    ess = effective_sample_size(filtered)
    fire = ess < resample_threshold * filtered.n_particles
    carried = systematic_resample(filtered, rng) if fire else filtered
    return BootstrapStepResult(
        predicted=predicted,
        filtered=filtered,
        carried=carried,
        mean=weighted_mean(filtered),
        ess=ess,
        resampled=fire,
    )
