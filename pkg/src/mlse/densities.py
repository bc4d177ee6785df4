"""Probability density primitives used as process/measurement noise models.

Every density exposes the log-density, its gradient, exact sampling and the
first moment.  Instances are immutable after construction and all evaluations
are pure; sampling always takes an explicitly passed generator, streams are
never shared implicitly.
"""
from __future__ import annotations

from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_solve

ArrayLike = Union[float, np.ndarray, list, tuple]

_LOG_2PI = float(np.log(2.0 * np.pi))


def logsumexp(a: np.ndarray, axis=None) -> Union[float, np.ndarray]:
    """Stable log(sum(exp(a))); rows of all -inf stay -inf."""
    a = np.asarray(a, dtype=float)
    top = np.max(a, axis=axis, keepdims=True)
    safe_top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = safe_top + np.log(np.sum(np.exp(a - safe_top), axis=axis, keepdims=True))
    out = np.where(np.isneginf(top), -np.inf, out)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


class NoiseDensity:
    """Abstract continuously differentiable density on R^d.

    Off-support points evaluate to ``-inf`` rather than raising, so that
    mixture weights built from the density vanish naturally.
    """

    dimension: int

    def log_pdf(self, x: ArrayLike) -> float:
        raise NotImplementedError

    def grad_log_pdf(self, x: ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def log_pdf_many(self, xs: np.ndarray) -> np.ndarray:
        """Row-wise ``log_pdf`` on an (n, d) array; subclasses vectorize."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.array([self.log_pdf(x) for x in xs])

    def grad_log_pdf_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.stack([self.grad_log_pdf(x) for x in xs])

    def _check_vector(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise ValueError(
                f"expected a vector of length {self.dimension}, got {x.shape[0]}"
            )
        return x


class GaussianDensity(NoiseDensity):
    """Multivariate normal N(mu, Sigma) with a cached Cholesky factor.

    Parameters
    ----------
    mean : scalar or (d,) array
    covariance : scalar, (d,) diagonal, or (d, d) symmetric positive-definite
        matrix.  Construction fails if the matrix is asymmetric beyond 1e-12
        or not positive definite.
    """

    def __init__(self, mean: ArrayLike, covariance: ArrayLike):
        mu = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(covariance, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {mu.shape[0]}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric (tolerance 1e-12)")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc

        self._mu = mu
        self._cov = cov
        self._chol = chol
        # precision cached for fast vectorized evaluation; d stays small here
        identity = np.eye(mu.shape[0])
        self._precision = cho_solve((chol, True), identity)
        self.dimension = mu.shape[0]
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        self._log_norm = -0.5 * (self.dimension * _LOG_2PI + log_det)

    @property
    def covariance(self) -> np.ndarray:
        return self._cov.copy()

    def log_pdf(self, x: ArrayLike) -> float:
        x = self._check_vector(x)
        centered = x - self._mu
        return self._log_norm - 0.5 * float(centered @ self._precision @ centered)

    def log_pdf_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        centered = xs - self._mu
        quad = np.einsum("ij,jl,il->i", centered, self._precision, centered)
        return self._log_norm - 0.5 * quad

    def grad_log_pdf(self, x: ArrayLike) -> np.ndarray:
        x = self._check_vector(x)
        return -self._precision @ (x - self._mu)

    def grad_log_pdf_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return -(xs - self._mu) @ self._precision

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        if size is None:
            return self._mu + self._chol @ rng.standard_normal(self.dimension)
        z = rng.standard_normal((size, self.dimension))
        return self._mu + z @ self._chol.T

    def mean(self) -> np.ndarray:
        return self._mu.copy()


class UniformBoxDensity(NoiseDensity):
    """Uniform density on an axis-aligned box, used mainly as a restart initializer."""

    def __init__(self, low: ArrayLike, high: ArrayLike):
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        if low.shape != high.shape:
            raise ValueError("low and high must have the same length")
        if np.any(high <= low):
            raise ValueError("box must have positive width in every coordinate")
        self._low = low
        self._high = high
        self.dimension = low.shape[0]
        self._log_density = -float(np.sum(np.log(high - low)))

    def _inside(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self._low) and np.all(x <= self._high))

    def log_pdf(self, x: ArrayLike) -> float:
        x = self._check_vector(x)
        return self._log_density if self._inside(x) else float("-inf")

    def log_pdf_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        inside = np.all((xs >= self._low) & (xs <= self._high), axis=1)
        return np.where(inside, self._log_density, -np.inf)

    def grad_log_pdf(self, x: ArrayLike) -> np.ndarray:
        x = self._check_vector(x)
        if not self._inside(x):
            raise ValueError("gradient requested outside the box support")
        return np.zeros(self.dimension)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        shape = (self.dimension,) if size is None else (size, self.dimension)
        return self._low + rng.random(shape) * (self._high - self._low)

    def mean(self) -> np.ndarray:
        return 0.5 * (self._low + self._high)
