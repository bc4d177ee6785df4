"""Kalman filter and Rauch-Tung-Striebel smoother for linear Gaussian models.

Serves as the comparison baseline and acceptance oracle: for linear Gaussian
systems the conditional mean coincides with the conditional mode, so these
means are exactly what the EM estimators should converge to.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .densities import GaussianDensity
from .errors import ModelClassError
from .model import StateSpaceModel


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state belief (mean, covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match state dimension {d}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise ValueError("covariance must be symmetric (tolerance 1e-10)")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def kf_predict(F: np.ndarray, S: np.ndarray, belief: GaussianBelief) -> GaussianBelief:
    """Propagate a belief through linear dynamics with process covariance S."""
    F = np.asarray(F, dtype=float)
    if F.shape[1] != belief.mean.shape[0]:
        raise ValueError("dynamics matrix does not match state dimension")
    mean = F @ belief.mean
    cov = _symmetrize(F @ belief.covariance @ F.T + S)
    return GaussianBelief(mean, cov)


def kf_update(H: np.ndarray, R: np.ndarray, belief: GaussianBelief, y: np.ndarray) -> GaussianBelief:
    """Measurement update with Joseph-form covariance for numerical symmetry."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if H.shape[1] != belief.mean.shape[0]:
        raise ValueError("measurement matrix does not match state dimension")
    if y.shape[0] != H.shape[0]:
        raise ValueError("measurement does not match measurement matrix")
    P = belief.covariance
    innovation = y - H @ belief.mean
    innovation_cov = H @ P @ H.T + R
    factor = cho_factor(innovation_cov)
    gain = cho_solve(factor, H @ P).T
    mean = belief.mean + gain @ innovation
    imkh = np.eye(P.shape[0]) - gain @ H
    cov = _symmetrize(imkh @ P @ imkh.T + gain @ R @ gain.T)
    return GaussianBelief(mean, cov)


def rts_smooth(
    F: np.ndarray,
    S: np.ndarray,
    filtered: Sequence[GaussianBelief],
    predicted: Sequence[GaussianBelief],
) -> List[GaussianBelief]:
    """Backward Rauch-Tung-Striebel pass.

    ``filtered[k]`` is the posterior at step k and ``predicted[k]`` the prior
    at step k (so ``predicted[k+1]`` is the one-step prediction from
    ``filtered[k]``).  The last smoothed belief equals the last filtered one.
    """
    if len(filtered) != len(predicted):
        raise ValueError("filtered and predicted sequences must have equal length")
    n = len(filtered) - 1
    smoothed: List[GaussianBelief] = [None] * (n + 1)  # type: ignore[list-item]
    smoothed[n] = filtered[n]
    F = np.asarray(F, dtype=float)
    for k in range(n - 1, -1, -1):
        Pf = filtered[k].covariance
        Pp = predicted[k + 1].covariance
        gain = cho_solve(cho_factor(Pp), F @ Pf).T
        mean = filtered[k].mean + gain @ (smoothed[k + 1].mean - predicted[k + 1].mean)
        cov = _symmetrize(Pf + gain @ (smoothed[k + 1].covariance - Pp) @ gain.T)
        smoothed[k] = GaussianBelief(mean, cov)
    return smoothed


def _linear_gaussian_matrices(model: StateSpaceModel):
    if model.linear_dynamics is None or model.linear_measurement is None:
        raise ModelClassError("Kalman reference needs linear dynamics and linear measurement")
    W = model.process_noise(0)
    V = model.measurement_noise(0)
    p0 = model.initial_density
    if not all(isinstance(d, GaussianDensity) for d in (W, V, p0)):
        raise ModelClassError("Kalman reference needs Gaussian noises and initial density")
    return (
        model.linear_dynamics,
        model.linear_measurement,
        W.covariance,
        V.covariance,
        GaussianBelief(p0.mean(), p0.covariance),
    )


def kalman_tracks(
    model: StateSpaceModel, observations: np.ndarray
) -> Tuple[List[GaussianBelief], List[GaussianBelief]]:
    """Run the filter over y_0..y_T; returns (filtered, predicted) beliefs.

    ``predicted[0]`` is the initial belief (the prior acts as the step-0
    prediction), and ``filtered[k]`` incorporates y_k.
    """
    F, H, S, R, prior = _linear_gaussian_matrices(model)
    predicted = [prior]
    filtered = [kf_update(H, R, prior, observations[0])]
    for k in range(1, observations.shape[0]):
        predicted.append(kf_predict(F, S, filtered[k - 1]))
        filtered.append(kf_update(H, R, predicted[k], observations[k]))
    return filtered, predicted


def rts_tracks(model: StateSpaceModel, observations: np.ndarray) -> List[GaussianBelief]:
    """Filtered pass followed by the RTS backward pass."""
    F, _, S, _, _ = _linear_gaussian_matrices(model)
    filtered, predicted = kalman_tracks(model, observations)
    return rts_smooth(F, S, filtered, predicted)
