"""State-space system abstraction and the two built-in benchmark models.

The system class is

    zeta_{k+1} = f(zeta_k, k) + w_k,     w_k ~ process_noise(k)
    y_k        = g(zeta_k, k) + v_k,     v_k ~ measurement_noise(k)
    zeta_0     ~ initial_density

with white, mutually independent noise sequences and continuously
differentiable f, g.  Dynamics and measurement maps receive the step index so
time-varying systems are supported.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .densities import GaussianDensity, NoiseDensity

StateFn = Callable[[np.ndarray, int], np.ndarray]
JacobianFn = Callable[[np.ndarray, int], np.ndarray]
NoiseFn = Callable[[int], NoiseDensity]


@dataclass(frozen=True)
class StateSpaceModel:
    """Immutable description of one state-space system.

    ``f`` and ``g`` map a single state vector (and the step index) to the next
    state / observation; they may also accept an (N, state_dim) batch, which
    the batch helpers exploit when possible.  ``linear_measurement`` holds the
    matrix H when g(zeta) = H zeta exactly; ``linear_dynamics`` holds F when
    f is linear and time-invariant (enables the Kalman/RTS reference).
    """

    state_dim: int
    obs_dim: int
    f: StateFn
    g: StateFn
    process_noise: NoiseFn
    measurement_noise: NoiseFn
    initial_density: NoiseDensity
    g_jacobian: JacobianFn
    f_jacobian: Optional[JacobianFn] = None
    linear_measurement: Optional[np.ndarray] = None
    linear_dynamics: Optional[np.ndarray] = None
    name: str = ""


def apply_f(model: StateSpaceModel, states: np.ndarray, k: int) -> np.ndarray:
    """Apply the dynamics to one state vector or to an (N, state_dim) batch."""
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        return np.asarray(model.f(states, k), dtype=float).reshape(model.state_dim)
    try:
        out = np.asarray(model.f(states, k), dtype=float)
        if out.shape == states.shape:
            return out
    except Exception:
        pass
    return np.stack([np.asarray(model.f(s, k), dtype=float).reshape(-1) for s in states])


def apply_g(model: StateSpaceModel, states: np.ndarray, k: int) -> np.ndarray:
    """Apply the measurement map to one state vector or to a batch."""
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        return np.asarray(model.g(states, k), dtype=float).reshape(model.obs_dim)
    try:
        out = np.asarray(model.g(states, k), dtype=float)
        if out.shape == (states.shape[0], model.obs_dim):
            return out
    except Exception:
        pass
    return np.stack([np.asarray(model.g(s, k), dtype=float).reshape(-1) for s in states])


@dataclass(frozen=True)
class Trajectory:
    """A simulated run: states zeta_0..zeta_T and observations y_0..y_T."""

    states: np.ndarray
    observations: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        if self.states.shape[0] != self.observations.shape[0]:
            raise ValueError("states and observations must have equal length")

    def __len__(self) -> int:
        return self.states.shape[0]


def simulate(
    model: StateSpaceModel,
    steps: int,
    rng: Union[int, np.random.Generator],
) -> Trajectory:
    """Forward-simulate the system for ``steps`` transitions.

    One fresh noise draw per step keeps the whiteness assumption intact; given
    an integer seed (or a generator in a known state) the trajectory is
    reproducible exactly.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    seed = rng if isinstance(rng, int) else None
    gen = np.random.default_rng(rng)

    states = np.empty((steps + 1, model.state_dim))
    observations = np.empty((steps + 1, model.obs_dim))
    states[0] = model.initial_density.sample(gen)
    observations[0] = apply_g(model, states[0], 0) + model.measurement_noise(0).sample(gen)
    for k in range(steps):
        w = model.process_noise(k).sample(gen)
        states[k + 1] = apply_f(model, states[k], k) + w
        v = model.measurement_noise(k + 1).sample(gen)
        observations[k + 1] = apply_g(model, states[k + 1], k + 1) + v
    return Trajectory(states=states, observations=observations, seed=seed)


# --------------------------------------------------------------------------
# Built-in models
# --------------------------------------------------------------------------

EXAMPLE1_F = np.array(
    [
        [0.66, -1.31, -1.11],
        [0.07, 0.73, -0.06],
        [0.00, 0.08, 0.80],
    ]
)
EXAMPLE1_H = np.array([[0.0, 1.0, 1.0]])
EXAMPLE1_S = np.diag([0.2, 0.3, 0.5])
EXAMPLE1_R = np.array([[0.1]])
EXAMPLE1_PRIOR_MEAN = np.zeros(3)
EXAMPLE1_PRIOR_COV = 0.3 * np.eye(3)


def builtin_example1() -> StateSpaceModel:
    """Third-order linear Gaussian benchmark with scalar measurement."""
    process = GaussianDensity(np.zeros(3), EXAMPLE1_S)
    measurement = GaussianDensity(np.zeros(1), EXAMPLE1_R)
    prior = GaussianDensity(EXAMPLE1_PRIOR_MEAN, EXAMPLE1_PRIOR_COV)
    return StateSpaceModel(
        state_dim=3,
        obs_dim=1,
        f=lambda z, k: z @ EXAMPLE1_F.T,
        g=lambda z, k: z @ EXAMPLE1_H.T,
        process_noise=lambda k: process,
        measurement_noise=lambda k: measurement,
        initial_density=prior,
        g_jacobian=lambda z, k: EXAMPLE1_H,
        f_jacobian=lambda z, k: EXAMPLE1_F,
        linear_measurement=EXAMPLE1_H,
        linear_dynamics=EXAMPLE1_F,
        name="example1",
    )


def example2_gain(k: int) -> float:
    """Time-varying dynamics amplitude of the tanh benchmark."""
    return 1.0 + 0.5 * np.sin(2.0 * np.pi * k / 20.0)


def builtin_example2() -> StateSpaceModel:
    """Scalar tanh model whose filtered density turns multimodal and skewed."""
    process = GaussianDensity([0.0], [[0.2]])
    measurement = GaussianDensity([0.0], [[1.0]])
    prior = GaussianDensity([0.0], [[1.0]])
    H = np.array([[0.5]])

    def f(z, k):
        return example2_gain(k) * np.tanh(np.pi * z)

    def f_jac(z, k):
        t = np.tanh(np.pi * np.asarray(z, dtype=float).reshape(-1)[0])
        return np.array([[example2_gain(k) * np.pi * (1.0 - t * t)]])

    return StateSpaceModel(
        state_dim=1,
        obs_dim=1,
        f=f,
        g=lambda z, k: 0.5 * z,
        process_noise=lambda k: process,
        measurement_noise=lambda k: measurement,
        initial_density=prior,
        g_jacobian=lambda z, k: H,
        f_jacobian=f_jac,
        linear_measurement=H,
        name="example2",
    )


MODEL_BUILDERS = {
    "example1": builtin_example1,
    "example2": builtin_example2,
}


def get_model(name: str) -> StateSpaceModel:
    try:
        return MODEL_BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(MODEL_BUILDERS)}") from None
