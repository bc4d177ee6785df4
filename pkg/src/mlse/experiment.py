"""Seeded end-to-end experiment runner with CSV/JSON emission.

One run simulates a single trajectory and applies every requested estimator
to the same measurement sequence.  The master seed derives independent named
child streams (see ``STREAM_IDS``), so changing, say, the number of EM
restarts never perturbs the simulated trajectory or the particle filter.
Identical config and seed reproduce results.csv byte for byte.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .ascent import maximize
from .densities import GaussianDensity, UniformBoxDensity, logsumexp
from .em_filter import EmConfig, EmTrace, emsf_step, empirical_filtered_log_density
from .em_predictor import emsp_on_propagated, propagate_with_intermediates
from .em_smoother import SmootherInputs, emss_step, ffbs_smoothed_weights
from .errors import ConfigurationError, ModelClassError
from .fp_filter import fp_gain, fpsf_step
from .kalman import kalman_tracks, rts_smooth, _linear_gaussian_matrices
from .model import StateSpaceModel, apply_f, apply_g, get_model, simulate
from .particle_filter import (
    ParticleSet,
    bootstrap_filter_step,
    effective_sample_size,
    init_particles,
    measurement_update,
    systematic_resample,
    weighted_mean,
)

KNOWN_ESTIMATORS = ("kalman", "rts", "pf-mean", "emsf", "fpsf", "emsp", "emss")

# labels of the child random streams derived from the master seed:
# generator(label) = default_rng(SeedSequence(entropy=seed, spawn_key=(id,)))
STREAM_IDS = {
    "trajectory": 0,
    "particles": 1,
    "emsf-restarts": 2,
    "emsp": 3,
    "emss-restarts": 4,
}


def derive_stream(seed: int, label: str) -> np.random.Generator:
    """Deterministic named child stream of the master seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_IDS[label],)))


@dataclass(frozen=True)
class DensityGridSpec:
    lo: float
    hi: float
    spacing: float

    def __post_init__(self):
        if self.spacing <= 0:
            raise ConfigurationError("density grid spacing must be positive")
        if self.hi <= self.lo:
            raise ConfigurationError("density grid range must be nonempty")

    def points(self) -> np.ndarray:
        count = int(round((self.hi - self.lo) / self.spacing)) + 1
        return self.lo + self.spacing * np.arange(count)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "example1"
    particles: int = 1000
    steps: int = 50
    seed: int = 0
    estimators: Tuple[str, ...] = ("pf-mean", "emsf")
    out: Optional[str] = None
    rel_tol: float = 0.005
    max_iters: int = 50
    restarts: int = 1
    restart_density: Optional[str] = None  # e.g. "uniform:-2:2"
    m_step: str = "closed_form_auto"
    resample_threshold: float = 0.5
    horizon: int = 1
    lag: int = 0  # 0 means full-interval smoothing
    density_grid: Optional[DensityGridSpec] = None
    iterate_dump: Tuple[int, ...] = ()  # steps whose EM iterate paths are exported

    def em_config(self, state_dim: int) -> EmConfig:
        density = None
        if self.restart_density is not None:
            density = _parse_restart_density(self.restart_density, state_dim)
        return EmConfig(
            rel_tol=self.rel_tol,
            max_iters=self.max_iters,
            restarts=self.restarts,
            restart_density=density,
            m_step=self.m_step,
        )


def _parse_restart_density(spec: str, state_dim: int):
    parts = spec.split(":")
    if parts[0] == "uniform" and len(parts) == 3:
        lo, hi = float(parts[1]), float(parts[2])
        return UniformBoxDensity([lo] * state_dim, [hi] * state_dim)
    raise ConfigurationError(f"unrecognized restart density spec {spec!r} (expected uniform:lo:hi)")


@dataclass(frozen=True)
class Estimate:
    value: np.ndarray
    iters: int
    converged: bool
    log_density: float  # empirical log-density at the estimate; NaN if undefined


@dataclass(frozen=True)
class StepRecord:
    k: int
    truth: np.ndarray
    measurement: np.ndarray
    estimates: Dict[str, Estimate]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[StepRecord]
    timings: Dict[str, float]
    extras: Dict[str, object] = field(default_factory=dict)

    def track(self, estimator: str) -> Tuple[np.ndarray, np.ndarray]:
        """Steps at which ``estimator`` produced a value, and those values."""
        ks = [r.k for r in self.records if estimator in r.estimates]
        values = np.array([r.estimates[estimator].value for r in self.records if estimator in r.estimates])
        return np.array(ks, dtype=int), values


def validate_config(config: ExperimentConfig, model: StateSpaceModel) -> None:
    if config.particles < 1:
        raise ConfigurationError("particles must be >= 1")
    if config.steps < 0:
        raise ConfigurationError("steps must be >= 0")
    if config.horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if config.lag == 1 or config.lag < 0:
        raise ConfigurationError("lag must be 0 (full interval) or >= 2")
    if not (0.0 <= config.resample_threshold <= 1.0):
        raise ConfigurationError("resample_threshold must lie in [0, 1]")
    unknown = [e for e in config.estimators if e not in KNOWN_ESTIMATORS]
    if unknown:
        raise ConfigurationError(f"unknown estimators {unknown}; available: {KNOWN_ESTIMATORS}")
    if not config.estimators:
        raise ConfigurationError("at least one estimator is required")
    if len(set(config.estimators)) != len(config.estimators):
        raise ConfigurationError("estimators must be unique")
    if {"kalman", "rts"} & set(config.estimators):
        try:
            _linear_gaussian_matrices(model)
        except ModelClassError as exc:
            raise ConfigurationError(f"model {config.model!r} does not support kalman/rts: {exc}") from exc
    if "fpsf" in config.estimators:
        try:
            fp_gain(model, 1)
        except ModelClassError as exc:
            raise ConfigurationError(f"model {config.model!r} does not support fpsf: {exc}") from exc
    if "emss" in config.estimators and model.f_jacobian is None:
        raise ConfigurationError("emss requires a model with f_jacobian")
    if config.density_grid is not None and model.state_dim != 1:
        raise ConfigurationError("density grid export is limited to scalar-state models")
    if config.iterate_dump:
        if "emsf" not in config.estimators:
            raise ConfigurationError("iterate_dump exports EMSF iterate paths; add 'emsf' to estimators")
        bad = [k for k in config.iterate_dump if not (1 <= k <= config.steps)]
        if bad:
            raise ConfigurationError(f"iterate_dump steps out of range: {bad}")
    # fail early rather than mid-run when restart parsing is broken
    config.em_config(model.state_dim)


def initial_mode(model: StateSpaceModel, y0: np.ndarray) -> Tuple[np.ndarray, int, bool]:
    """Mode of p(zeta_0 | y_0), the anchor the recursive estimators start from.

    Gaussian prior with linear measurement has the closed form
    mu + B0 (y0 - H mu); otherwise ascend log p0 + log V0 from the prior mean.
    """
    y0 = np.asarray(y0, dtype=float).reshape(model.obs_dim)
    p0 = model.initial_density
    V0 = model.measurement_noise(0)
    if (
        isinstance(p0, GaussianDensity)
        and isinstance(V0, GaussianDensity)
        and model.linear_measurement is not None
    ):
        H = model.linear_measurement
        sigma0 = p0.covariance
        gain = sigma0 @ H.T @ np.linalg.inv(H @ sigma0 @ H.T + V0.covariance)
        return p0.mean() + gain @ (y0 - H @ p0.mean()), 0, True

    def value(z):
        return p0.log_pdf(z) + V0.log_pdf(y0 - apply_g(model, z, 0))

    def grad(z):
        g_jac = np.atleast_2d(model.g_jacobian(z, 0))
        return p0.grad_log_pdf(z) - g_jac.T @ V0.grad_log_pdf(y0 - apply_g(model, z, 0))

    result = maximize(value, grad, p0.mean())
    return result.x, result.iterations, result.converged


def export_density_grid(
    model: StateSpaceModel,
    ps_prev: ParticleSet,
    y: np.ndarray,
    k: int,
    grid: DensityGridSpec,
) -> np.ndarray:
    """Unnormalized empirical filtered density over a scalar grid; (n, 2) table."""
    if model.state_dim != 1:
        raise ConfigurationError("density grid export is limited to scalar-state models")
    zetas = grid.points()
    W = model.process_noise(k - 1)
    V = model.measurement_noise(k)
    fj = apply_f(model, ps_prev.particles, k - 1).reshape(-1)
    with np.errstate(divide="ignore"):
        log_w = np.log(ps_prev.weights)
    log_kernel = W.log_pdf_many((zetas[:, None] - fj[None, :]).reshape(-1, 1)).reshape(
        zetas.shape[0], fj.shape[0]
    )
    log_mix = logsumexp(log_kernel + log_w[None, :], axis=1)
    y = np.asarray(y, dtype=float).reshape(1)
    log_v = V.log_pdf_many((y[0] - apply_g(model, zetas[:, None], k)).reshape(-1, 1))
    return np.column_stack([zetas, np.exp(log_v + log_mix)])


# --------------------------------------------------------------------------
# Estimator passes
# --------------------------------------------------------------------------


class _RunState:
    """Shared intermediate products of one experiment run."""

    def __init__(self, config: ExperimentConfig, model: StateSpaceModel):
        self.config = config
        self.model = model
        self.em = config.em_config(model.state_dim)
        self.trajectory = None
        self.observations = None
        self.stored: List[ParticleSet] = []  # weighted filtered sets, pre-resampling
        self.carried: List[ParticleSet] = []  # what the next step consumed
        self.pf_filtered_means: List[np.ndarray] = []
        self.pf_predicted_means: List[np.ndarray] = []
        self.pf_ess: List[float] = []
        self.pf_resampled: List[bool] = []
        self.kalman_filtered = None
        self.kalman_predicted = None
        self.rts_means = None
        self.emsf_modes: Optional[List[np.ndarray]] = None
        self.emsf_info: List[Tuple[int, bool, float]] = []
        self.emsf_traces: List[List[EmTrace]] = []
        self.fpsf_modes: Optional[List[np.ndarray]] = None
        self.fpsf_info: List[Tuple[int, bool, float]] = []
        self.fpsf_traces: List[EmTrace] = []
        self.emsp: Dict[int, Tuple[np.ndarray, int, bool, float]] = {}
        self.emsp_traces: Dict[int, List[EmTrace]] = {}
        self.emss: Dict[int, Tuple[np.ndarray, int, bool, float]] = {}
        self.emss_traces: Dict[int, List[EmTrace]] = {}
        self.ffbs_weights: Optional[List[np.ndarray]] = None
        self.ffbs_means: Optional[np.ndarray] = None


def _particle_pass(state: _RunState) -> None:
    config, model = state.config, state.model
    rng = derive_stream(config.seed, "particles")
    ys = state.observations
    init = init_particles(model, config.particles, rng)
    state.pf_predicted_means.append(weighted_mean(init))
    filtered = measurement_update(model, init, ys[0], 0)
    ess = effective_sample_size(filtered)
    fire = ess < config.resample_threshold * filtered.n_particles
    carried = systematic_resample(filtered, rng) if fire else filtered
    state.stored.append(filtered)
    state.carried.append(carried)
    state.pf_filtered_means.append(weighted_mean(filtered))
    state.pf_ess.append(ess)
    state.pf_resampled.append(fire)
    for k in range(1, config.steps + 1):
        step = bootstrap_filter_step(
            model, state.carried[k - 1], ys[k], k, rng, config.resample_threshold
        )
        state.stored.append(step.filtered)
        state.carried.append(step.carried)
        state.pf_filtered_means.append(step.mean)
        state.pf_predicted_means.append(weighted_mean(step.predicted))
        state.pf_ess.append(step.ess)
        state.pf_resampled.append(step.resampled)


def _kalman_pass(state: _RunState) -> None:
    filtered, predicted = kalman_tracks(state.model, state.observations)
    state.kalman_filtered = np.array([b.mean for b in filtered])
    state.kalman_predicted = np.array([b.mean for b in predicted])
    state._kalman_beliefs = (filtered, predicted)


def _rts_pass(state: _RunState) -> None:
    F, _, S, _, _ = _linear_gaussian_matrices(state.model)
    filtered, predicted = state._kalman_beliefs
    state.rts_means = np.array([b.mean for b in rts_smooth(F, S, filtered, predicted)])


def _emsf_pass(state: _RunState) -> None:
    config, model = state.config, state.model
    rng = derive_stream(config.seed, "emsf-restarts")
    ys = state.observations
    z0, iters0, conv0 = initial_mode(model, ys[0])
    state.emsf_modes = [z0]
    state.emsf_info = [(iters0, conv0, float("nan"))]
    state.emsf_traces = [[]]
    for k in range(1, config.steps + 1):
        zeta, traces = emsf_step(
            model, state.carried[k - 1], ys[k], state.emsf_modes[-1], k, state.em, rng
        )
        winner = traces[int(np.argmax([t.empirical_log_likelihoods[-1] for t in traces]))]
        state.emsf_modes.append(zeta)
        state.emsf_info.append((winner.iterations, winner.converged, winner.empirical_log_likelihoods[-1]))
        state.emsf_traces.append(traces)


def _fpsf_pass(state: _RunState) -> None:
    config, model = state.config, state.model
    ys = state.observations
    z0, iters0, conv0 = initial_mode(model, ys[0])
    state.fpsf_modes = [z0]
    state.fpsf_info = [(iters0, conv0, float("nan"))]
    state.fpsf_traces = []
    for k in range(1, config.steps + 1):
        W = model.process_noise(k - 1)
        start = apply_f(model, state.fpsf_modes[-1], k - 1) + W.mean()
        zeta, trace = fpsf_step(model, state.carried[k - 1], ys[k], start, k, state.em)
        state.fpsf_modes.append(zeta)
        state.fpsf_info.append((trace.iterations, trace.converged, trace.empirical_log_likelihoods[-1]))
        state.fpsf_traces.append(trace)


def _emsp_pass(state: _RunState) -> None:
    config, model = state.config, state.model
    rng = derive_stream(config.seed, "emsp")
    ys = state.observations
    h = config.horizon
    for k in range(max(1, h), config.steps + 1):
        m = k - h
        sets = propagate_with_intermediates(model, state.carried[m], k - 1, rng)
        anchor = state.emsf_modes[m]
        traces: List[EmTrace] = []
        for target in range(m + 1, k + 1):
            anchor, traces = emsp_on_propagated(
                model, sets[target - 1 - m], target, anchor, state.em, rng
            )
        winner = traces[int(np.argmax([t.empirical_log_likelihoods[-1] for t in traces]))]
        state.emsp[k] = (anchor, winner.iterations, winner.converged, winner.empirical_log_likelihoods[-1])
        state.emsp_traces[k] = traces


def _emss_pass(state: _RunState) -> None:
    config, model = state.config, state.model
    rng = derive_stream(config.seed, "emss-restarts")
    ys = state.observations
    n = config.steps
    if n < 2:
        return
    if config.lag == 0:
        weights = ffbs_smoothed_weights(model, state.stored, n)
        state.ffbs_weights = weights
        state.ffbs_means = np.array([w @ ps.particles for w, ps in zip(weights, state.stored)])
        windows = {k: (weights[k + 1], n) for k in range(1, n - 1)}
    else:
        windows = {}
        for k in range(1, n - 1):
            n_k = min(k + config.lag, n)
            if n_k <= k + 1:
                continue
            local = ffbs_smoothed_weights(model, state.stored[k : n_k + 1], n_k)
            windows[k] = (local[1], n_k)
    for k, (w_kp1, n_k) in windows.items():
        smoothed_kp1 = ParticleSet(
            state.stored[k + 1].particles, w_kp1, step=k + 1, measured_through=n_k
        )
        inputs = SmootherInputs(
            ps_km1_filtered=state.stored[k - 1],
            ps_k_filtered=state.stored[k],
            ps_kp1_smoothed=smoothed_kp1,
            y_k=ys[k],
            n=n_k,
        )
        zeta, traces = emss_step(model, inputs, k, state.emsf_modes[k], state.em, rng)
        winner = traces[int(np.argmax([t.empirical_log_likelihoods[-1] for t in traces]))]
        state.emss[k] = (zeta, winner.iterations, winner.converged, winner.empirical_log_likelihoods[-1])
        state.emss_traces[k] = traces


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Simulate one trajectory and run every requested estimator on it."""
    try:
        model = get_model(config.model)
    except KeyError as exc:
        raise ConfigurationError(str(exc)) from exc
    validate_config(config, model)

    state = _RunState(config, model)
    state.trajectory = simulate(model, config.steps, derive_stream(config.seed, "trajectory"))
    state.observations = state.trajectory.observations

    requested = set(config.estimators)
    needed = set(requested)
    if {"emsp", "emss"} & needed:
        needed.add("emsf")
    if "rts" in needed:
        needed.add("kalman")

    timings: Dict[str, float] = {}

    def timed(name: str, fn) -> None:
        start = time.perf_counter()
        fn(state)
        timings[name] = time.perf_counter() - start

    timed("particle-filter", _particle_pass)

    phase1 = [("kalman", _kalman_pass), ("emsf", _emsf_pass), ("fpsf", _fpsf_pass)]
    phase2 = [("rts", _rts_pass), ("emsp", _emsp_pass), ("emss", _emss_pass)]
    threads = int(os.environ.get("MLSE_THREADS", "1") or "1")
    for phase in (phase1, phase2):
        active = [(name, fn) for name, fn in phase if name in needed]
        if threads > 1 and len(active) > 1:
            with ThreadPoolExecutor(max_workers=min(threads, len(active))) as pool:
                starts = {name: time.perf_counter() for name, _ in active}
                futures = [(name, pool.submit(fn, state)) for name, fn in active]
                for name, future in futures:
                    future.result()
                    timings[name] = time.perf_counter() - starts[name]
        else:
            for name, fn in active:
                timed(name, fn)

    records = _assemble_records(state, requested)
    result = ExperimentResult(config=config, records=records, timings=timings)
    result.extras = {
        "trajectory": state.trajectory,
        "stored_filtered_sets": state.stored,
        "carried_sets": state.carried,
        "pf_filtered_means": np.array(state.pf_filtered_means),
        "pf_predicted_means": np.array(state.pf_predicted_means),
        "pf_ess": np.array(state.pf_ess),
        "pf_resampled": np.array(state.pf_resampled),
        "kalman_filtered": state.kalman_filtered,
        "kalman_predicted": state.kalman_predicted,
        "rts_means": state.rts_means,
        "emsf_modes": None if state.emsf_modes is None else np.array(state.emsf_modes),
        "emsf_traces": state.emsf_traces,
        "fpsf_modes": None if state.fpsf_modes is None else np.array(state.fpsf_modes),
        "fpsf_traces": state.fpsf_traces,
        "emsp_traces": state.emsp_traces,
        "emss_traces": state.emss_traces,
        "ffbs_weights": state.ffbs_weights,
        "ffbs_means": state.ffbs_means,
    }
    return result


def _assemble_records(state: _RunState, requested: set) -> List[StepRecord]:
    config, model = state.config, state.model
    ys = state.observations
    records: List[StepRecord] = []
    for k in range(config.steps + 1):
        estimates: Dict[str, Estimate] = {}

        def filtered_ell(value: np.ndarray) -> float:
            if k == 0:
                return float("nan")
            return empirical_filtered_log_density(model, state.carried[k - 1], ys[k], value, k)

        if "kalman" in requested:
            estimates["kalman"] = Estimate(state.kalman_filtered[k], 0, True, filtered_ell(state.kalman_filtered[k]))
        if "rts" in requested:
            estimates["rts"] = Estimate(state.rts_means[k], 0, True, float("nan"))
        if "pf-mean" in requested:
            value = state.pf_filtered_means[k]
            estimates["pf-mean"] = Estimate(value, 0, True, filtered_ell(value))
        if "emsf" in requested:
            iters, conv, ell = state.emsf_info[k]
            estimates["emsf"] = Estimate(state.emsf_modes[k], iters, conv, ell)
        if "fpsf" in requested:
            iters, conv, ell = state.fpsf_info[k]
            estimates["fpsf"] = Estimate(state.fpsf_modes[k], iters, conv, ell)
        if "emsp" in requested and k in state.emsp:
            value, iters, conv, ell = state.emsp[k]
            estimates["emsp"] = Estimate(value, iters, conv, ell)
        if "emss" in requested and k in state.emss:
            value, iters, conv, ell = state.emss[k]
            estimates["emss"] = Estimate(value, iters, conv, ell)

        records.append(
            StepRecord(k=k, truth=state.trajectory.states[k], measurement=ys[k], estimates=estimates)
        )
    return records


# --------------------------------------------------------------------------
# Output files
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _rmse(a: np.ndarray, b: np.ndarray) -> List[float]:
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return list(np.sqrt(np.mean(diff**2, axis=0)))


def summarize(result: ExperimentResult) -> Dict[str, object]:
    """RMSE tables and run metadata mirrored into summary.json."""
    config = result.config
    truth = np.array([r.truth for r in result.records])
    summary: Dict[str, object] = {
        "config": {**asdict(config), "estimators": list(config.estimators)},
        "stream_ids": STREAM_IDS,
        "timings_sec": result.timings,
        "seed": config.seed,
    }
    rmse_truth: Dict[str, List[float]] = {}
    for name in config.estimators:
        ks, values = result.track(name)
        if len(ks):
            rmse_truth[name] = _rmse(values, truth[ks])
    summary["rmse_vs_truth"] = rmse_truth

    if "kalman" in config.estimators:
        kalman = result.extras["kalman_filtered"]
        rmse_kalman: Dict[str, List[float]] = {}
        for name in set(config.estimators) & {"kalman", "pf-mean", "emsf", "fpsf"}:
            ks, values = result.track(name)
            rmse_kalman[name] = _rmse(values, kalman[ks])
        summary["rmse_vs_kalman"] = rmse_kalman
        if "emsp" in config.estimators:
            predicted = result.extras["kalman_predicted"]
            ks, values = result.track("emsp")
            pf_pred = result.extras["pf_predicted_means"]
            summary["prediction_rmse_vs_kalman_predicted"] = {
                "emsp": _rmse(values, predicted[ks]),
                "pf-predicted-mean": _rmse(pf_pred[ks], predicted[ks]) if config.horizon == 1 else None,
            }
    if "rts" in config.estimators and "emss" in config.estimators:
        rts = result.extras["rts_means"]
        ks, values = result.track("emss")
        block = {"emss": _rmse(values, rts[ks])}
        if result.extras["ffbs_means"] is not None:
            block["ffbs-mean"] = _rmse(result.extras["ffbs_means"][ks], rts[ks])
        summary["smoothing_rmse_vs_rts"] = block

    summary["pf"] = {
        "mean_ess": float(np.mean(result.extras["pf_ess"])),
        "resample_rate": float(np.mean(result.extras["pf_resampled"])),
    }
    return summary


def write_outputs(result: ExperimentResult, directory) -> List[Path]:
    """Write results.csv, summary.json and optional density grids; returns paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model = get_model(result.config.model)
    written: List[Path] = []

    est_cols = [f"est_{i + 1}" for i in range(model.state_dim)]
    true_cols = [f"true_{i + 1}" for i in range(model.state_dim)]
    y_cols = [f"y_{i + 1}" for i in range(model.obs_dim)]
    header = ["k", "estimator", *est_cols, *true_cols, *y_cols, "iters", "converged"]

    csv_path = directory / "results.csv"
    with csv_path.open("w", newline="\n") as handle:
        handle.write(",".join(header) + "\n")
        for record in result.records:
            for name in result.config.estimators:
                if name not in record.estimates:
                    continue
                est = record.estimates[name]
                row = [
                    str(record.k),
                    name,
                    *(_fmt(v) for v in np.asarray(est.value).reshape(-1)),
                    *(_fmt(v) for v in record.truth.reshape(-1)),
                    *(_fmt(v) for v in record.measurement.reshape(-1)),
                    str(est.iters),
                    "true" if est.converged else "false",
                ]
                handle.write(",".join(row) + "\n")
    written.append(csv_path)

    summary_path = directory / "summary.json"
    with summary_path.open("w") as handle:
        json.dump(summarize(result), handle, indent=2, sort_keys=True)
        handle.write("\n")
    written.append(summary_path)

    grid = result.config.density_grid
    if grid is not None:
        carried = result.extras["carried_sets"]
        ys = np.array([r.measurement for r in result.records])
        for k in range(1, result.config.steps + 1):
            table = export_density_grid(model, carried[k - 1], ys[k], k, grid)
            path = directory / f"density_k{k}.csv"
            with path.open("w", newline="\n") as handle:
                handle.write("zeta,density\n")
                for zeta, value in table:
                    handle.write(f"{_fmt(zeta)},{_fmt(value)}\n")
            written.append(path)

    if result.config.iterate_dump:
        traces_per_step = result.extras["emsf_traces"]
        zeta_cols = ",".join(f"zeta_{i + 1}" for i in range(model.state_dim))
        for k in result.config.iterate_dump:
            path = directory / f"iterates_k{k}.csv"
            with path.open("w", newline="\n") as handle:
                handle.write(f"restart,iter,{zeta_cols}\n")
                for trace in traces_per_step[k]:
                    for i, iterate in enumerate(trace.iterates):
                        values = ",".join(_fmt(v) for v in np.asarray(iterate).reshape(-1))
                        handle.write(f"{trace.restart_index},{i},{values}\n")
            written.append(path)
    return written
