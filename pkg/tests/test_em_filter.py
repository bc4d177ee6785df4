import math

import numpy as np
import pytest

from mlse import (
    DegenerateResponsibilitiesError,
    EmConfig,
    GaussianDensity,
    ParticleSet,
    UniformBoxDensity,
    emsf_step,
    empirical_filtered_log_density,
    kalman_tracks,
    lambda_weights,
    m_step,
    q_hat,
    q_hat_grad,
    simulate,
)
from mlse.em_filter import relative_step_converged
from mlse.model import EXAMPLE1_F, EXAMPLE1_H, EXAMPLE1_R, EXAMPLE1_S, example2_gain

from conftest import central_difference_gradient
from test_particle_filter import scalar_model

LOG_2PI = math.log(2.0 * math.pi)


def filtered_set(particles, weights, step):
    return ParticleSet(np.asarray(particles, dtype=float).reshape(len(weights), -1), weights, step, step)


def random_filtered_set(model, n, step, rng, spread=1.0):
    particles = rng.normal(scale=spread, size=(n, model.state_dim))
    weights = rng.random(n) + 0.05
    return ParticleSet.from_unnormalized(particles, weights, step, step)


class TestLambdaWeights:
    def test_single_particle_is_one(self):
        model = scalar_model()
        ps = filtered_set([3.0], [1.0], 0)
        np.testing.assert_array_equal(lambda_weights(model, ps, [99.0], 1), [1.0])

    def test_identical_particles_split_evenly(self):
        model = scalar_model()
        ps = filtered_set([1.2, 1.2], [0.5, 0.5], 0)
        np.testing.assert_allclose(lambda_weights(model, ps, [0.4], 1), [0.5, 0.5])

    def test_gaussian_ratio(self):
        # f identity, W = N(0,1), particles {0, 2}, iterate 0: (1, e^-2) normalized
        model = scalar_model()
        ps = filtered_set([0.0, 2.0], [0.5, 0.5], 0)
        expected = np.array([1.0, np.exp(-2.0)])
        expected /= expected.sum()
        np.testing.assert_allclose(lambda_weights(model, ps, [0.0], 1), expected, rtol=1e-12)

    def test_degenerate_raises(self):
        from dataclasses import replace

        model = replace(scalar_model(), process_noise=lambda k: UniformBoxDensity([-0.5], [0.5]))
        ps = filtered_set([0.0, 0.1], [0.5, 0.5], 0)
        with pytest.raises(DegenerateResponsibilitiesError):
            lambda_weights(model, ps, [10.0], 1)


class TestQHat:
    def test_single_particle_value(self):
        # one-term sum: log V(0) + log W(0) = -log 2pi
        model = scalar_model()
        ps = filtered_set([0.0], [1.0], 0)
        value = q_hat(model, ps, [0.0], [0.0], [0.0], 1)
        assert value == pytest.approx(-LOG_2PI, abs=1e-12)

    def test_differences_invariant_to_weight_scale(self):
        model = scalar_model()
        raw = np.array([0.4, 1.0, 2.2])
        particles = [[-1.0], [0.0], [1.5]]
        a = ParticleSet.from_unnormalized(particles, raw, 0, 0)
        b = ParticleSet.from_unnormalized(particles, 7.3 * raw, 0, 0)
        za, zb, zi, y = np.array([0.3]), np.array([-0.8]), np.array([0.1]), [0.4]
        diff_a = q_hat(model, a, y, za, zi, 1) - q_hat(model, a, y, zb, zi, 1)
        diff_b = q_hat(model, b, y, za, zi, 1) - q_hat(model, b, y, zb, zi, 1)
        assert diff_a == pytest.approx(diff_b, rel=1e-12)

    def test_example2_quadratic_expansion(self, example2):
        # independent symbolic expansion of the quadratic surrogate:
        # Q(z) - Q(0) = -0.5(y - z/2)^2 + 0.5 y^2 - 2.5(z^2 - 2 z <m>)
        rng = np.random.default_rng(10)
        ps = random_filtered_set(example2, 30, 4, rng)
        y = np.array([0.6])
        zi = np.array([0.2])
        k = 5
        rho = lambda_weights(example2, ps, zi, k)
        mj = example2_gain(k - 1) * np.tanh(np.pi * ps.particles[:, 0])
        m_avg = float(rho @ mj)
        for z in (-1.3, -0.2, 0.5, 2.0):
            got = q_hat(example2, ps, y, [z], zi, k) - q_hat(example2, ps, y, [0.0], zi, k)
            expected = -0.5 * (y[0] - z / 2) ** 2 + 0.5 * y[0] ** 2 - 2.5 * (z**2 - 2 * z * m_avg)
            assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_off_support_is_minus_inf(self):
        from dataclasses import replace

        model = replace(scalar_model(), measurement_noise=lambda k: UniformBoxDensity([-0.1], [0.1]))
        ps = filtered_set([0.0], [1.0], 0)
        assert q_hat(model, ps, [5.0], [0.0], [0.0], 1) == -np.inf


class TestQHatGrad:
    def test_zero_at_closed_form_maximizer(self, example1):
        rng = np.random.default_rng(1)
        ps = random_filtered_set(example1, 50, 3, rng)
        y = np.array([0.7])
        zi = rng.normal(size=3)
        best, _ = m_step(example1, ps, y, zi, 4)
        grad = q_hat_grad(example1, ps, y, best, zi, 4)
        assert np.linalg.norm(grad) <= 1e-9

    def test_single_particle_hand_formula(self):
        # d/dz [ -(z-f)^2/2S - (y-Hz)^2/2R ] = -(z-f)/S + H(y-Hz)/R
        model = scalar_model()
        ps = filtered_set([0.0], [1.0], 0)
        y, z = np.array([1.4]), np.array([0.3])
        grad = q_hat_grad(model, ps, y, z, [0.0], 1)
        expected = -(z[0] - 0.0) / 1.0 + 1.0 * (y[0] - z[0]) / 1.0
        assert grad[0] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("name", ["example1", "example2"])
    def test_matches_finite_differences(self, name, example1, example2):
        model = example1 if name == "example1" else example2
        rng = np.random.default_rng(12)
        ps = random_filtered_set(model, 40, 6, rng)
        y = rng.normal(size=model.obs_dim)
        for _ in range(100):
            z = rng.normal(scale=1.5, size=model.state_dim)
            zi = rng.normal(scale=1.5, size=model.state_dim)
            fd = central_difference_gradient(lambda x: q_hat(model, ps, y, x, zi, 7), z, rel_step=1e-5)
            analytic = q_hat_grad(model, ps, y, z, zi, 7)
            err = np.linalg.norm(analytic - fd)
            assert err <= 1e-5 * max(1.0, np.linalg.norm(fd))


class TestMStep:
    def test_single_particle_scalar(self):
        # f = 0, H = S = R = 1, y = 2: maximizer is B y = 1, whatever the anchor
        model = scalar_model()
        ps = filtered_set([0.0], [1.0], 0)
        for anchor in (-3.0, 0.0, 5.0):
            out, stalled = m_step(model, ps, [2.0], [anchor], 1)
            assert not stalled
            assert out[0] == pytest.approx(1.0, rel=1e-12)

    def test_example1_matrix_inversion_lemma_form(self, example1):
        # independent evaluation of the gain form with explicit inverses
        rng = np.random.default_rng(5)
        ps = random_filtered_set(example1, 80, 2, rng)
        y = np.array([0.9])
        zi = rng.normal(size=3)
        out, _ = m_step(example1, ps, y, zi, 3)

        lam = np.exp(GaussianDensity(np.zeros(3), EXAMPLE1_S).log_pdf_many(zi - ps.particles @ EXAMPLE1_F.T))
        unnorm = lam * ps.weights
        rho = unnorm / unnorm.sum()
        m = rho @ (ps.particles @ EXAMPLE1_F.T)
        B = EXAMPLE1_S @ EXAMPLE1_H.T @ np.linalg.inv(EXAMPLE1_H @ EXAMPLE1_S @ EXAMPLE1_H.T + EXAMPLE1_R)
        expected = m + B @ (y - EXAMPLE1_H @ m)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_gradient_ascent_agrees_with_closed_form(self, example1):
        rng = np.random.default_rng(6)
        ps = random_filtered_set(example1, 40, 2, rng)
        y = np.array([-0.4])
        zi = rng.normal(size=3)
        closed, _ = m_step(example1, ps, y, zi, 3, EmConfig())
        ascended, stalled = m_step(example1, ps, y, zi, 3, EmConfig(m_step="gradient_ascent"))
        assert not stalled
        np.testing.assert_allclose(ascended, closed, atol=1e-6)

    def test_never_decreases_surrogate(self, example2):
        rng = np.random.default_rng(7)
        ps = random_filtered_set(example2, 25, 1, rng)
        y = np.array([0.2])
        for anchor in (-2.0, -0.3, 0.8, 2.5):
            out, _ = m_step(example2, ps, y, [anchor], 2)
            before = q_hat(example2, ps, y, [anchor], [anchor], 2)
            after = q_hat(example2, ps, y, out, [anchor], 2)
            assert after >= before - 1e-12


class TestEmpiricalFilteredLogDensity:
    def test_single_particle_argmax_at_zero(self):
        model = scalar_model()
        ps = filtered_set([0.0], [1.0], 0)
        grid = np.linspace(-2, 2, 2001)
        values = [empirical_filtered_log_density(model, ps, [0.0], [z], 1) for z in grid]
        assert grid[int(np.argmax(values))] == pytest.approx(0.0, abs=1e-3)

    def test_argmax_invariant_to_weight_scale(self):
        model = scalar_model()
        raw = np.array([1.0, 2.0, 0.5])
        particles = [[-1.0], [0.2], [1.0]]
        a = ParticleSet.from_unnormalized(particles, raw, 0, 0)
        b = ParticleSet.from_unnormalized(particles, 100.0 * raw, 0, 0)
        grid = np.linspace(-2, 2, 401)
        va = [empirical_filtered_log_density(model, a, [0.3], [z], 1) for z in grid]
        vb = [empirical_filtered_log_density(model, b, [0.3], [z], 1) for z in grid]
        assert np.argmax(va) == np.argmax(vb)
        np.testing.assert_allclose(np.diff(va), np.diff(vb), atol=1e-12)


class TestEmsfStep:
    def test_trace_monotone_and_winner_beats_every_path(self, example2):
        rng = np.random.default_rng(8)
        traj = simulate(example2, 12, 21)
        ps = random_filtered_set(example2, 500, 9, rng, spread=0.8)
        config = EmConfig(max_iters=10, restarts=5, restart_density=UniformBoxDensity([-2.0], [2.0]))
        zeta, traces = emsf_step(example2, ps, traj.observations[10], np.array([0.1]), 10, config, rng)
        assert len(traces) == 5
        final = empirical_filtered_log_density(example2, ps, traj.observations[10], zeta, 10)
        for trace in traces:
            assert trace.is_monotone(1e-9)
            assert final >= max(trace.empirical_log_likelihoods) - 1e-9

    def test_matches_dense_grid_at_bimodal_step(self, example2):
        # cross-check the multi-start mode against a dense grid oracle
        rng = np.random.default_rng(9)
        particles = np.concatenate([rng.normal(0.8, 0.05, 250), rng.normal(-0.8, 0.05, 250)])
        ps = ParticleSet(particles.reshape(-1, 1), np.full(500, 1 / 500), 9, 9)
        y = np.array([0.05])
        config = EmConfig(max_iters=10, restarts=6, restart_density=UniformBoxDensity([-2.0], [2.0]))
        zeta, _ = emsf_step(example2, ps, y, np.array([0.0]), 10, config, rng)
        grid = np.arange(-3.0, 3.0, 0.001)
        values = np.array([empirical_filtered_log_density(example2, ps, y, [z], 10) for z in grid])
        best = grid[int(np.argmax(values))]
        assert abs(zeta[0] - best) <= 0.01

    def test_converges_close_to_kalman_from_random_starts(self, example1):
        steps = 12
        traj = simulate(example1, steps, 31)
        from mlse import bootstrap_filter_step, init_particles, measurement_update

        rng = np.random.default_rng(2)
        start_rng = np.random.default_rng(3)
        ps = init_particles(example1, 2000, rng)
        filtered = measurement_update(example1, ps, traj.observations[0], 0)
        kalman_filtered, _ = kalman_tracks(example1, traj.observations)
        config = EmConfig(max_iters=50)
        zeta = kalman_filtered[0].mean
        errors = []
        for k in range(1, steps + 1):
            zeta, traces = emsf_step(
                example1, filtered, traj.observations[k], zeta, k, config, rng,
                zeta0=start_rng.standard_normal(3),
            )
            assert all(t.is_monotone(1e-9) for t in traces)
            errors.append(np.abs(zeta - kalman_filtered[k].mean))
            filtered = bootstrap_filter_step(example1, filtered, traj.observations[k], k, rng).carried
        assert np.max(errors) < 0.35  # particle-level agreement, N = 2000

    def test_fixed_point_consistency_invariant(self, example1):
        # converged iterates are near-stationary points of the surrogate
        rng = np.random.default_rng(13)
        traj = simulate(example1, 8, 41)
        from mlse import bootstrap_filter_step, init_particles, measurement_update

        ps = init_particles(example1, 800, rng)
        filtered = measurement_update(example1, ps, traj.observations[0], 0)
        config = EmConfig()
        zeta = np.zeros(3)
        for k in range(1, 9):
            zeta, traces = emsf_step(example1, filtered, traj.observations[k], zeta, k, config, rng)
            winner = traces[0]
            if winner.converged:
                grad = q_hat_grad(example1, filtered, traj.observations[k], zeta, zeta, k)
                bound = 10.0 * config.rel_tol * (1.0 + np.linalg.norm(zeta))
                assert np.linalg.norm(grad) <= bound
            filtered = bootstrap_filter_step(example1, filtered, traj.observations[k], k, rng).carried

    def test_restart_sensitivity_pre_vs_post_resampling(self, example1):
        # consuming the pre-resampling weighted set gives comparable accuracy
        steps = 20
        traj = simulate(example1, steps, 77)
        from mlse import bootstrap_filter_step, init_particles, measurement_update

        kalman_filtered, _ = kalman_tracks(example1, traj.observations)
        rng = np.random.default_rng(4)
        ps = init_particles(example1, 1000, rng)
        filtered = measurement_update(example1, ps, traj.observations[0], 0)
        stored, carried = [filtered], [filtered]
        for k in range(1, steps + 1):
            step = bootstrap_filter_step(example1, carried[-1], traj.observations[k], k, rng)
            stored.append(step.filtered)
            carried.append(step.carried)
        results = {}
        for which, chain in (("carried", carried), ("stored", stored)):
            zeta = kalman_filtered[0].mean
            errs = []
            for k in range(1, steps + 1):
                zeta, _ = emsf_step(example1, chain[k - 1], traj.observations[k], zeta, k)
                errs.append(zeta - kalman_filtered[k].mean)
            results[which] = float(np.sqrt(np.mean(np.square(errs))))
        assert results["stored"] <= 2.0 * results["carried"] + 0.05
        assert results["carried"] <= 2.0 * results["stored"] + 0.05


class TestConvergenceCriterion:
    def test_relative_criterion(self):
        assert relative_step_converged(np.array([1.0]), np.array([1.004]), 0.005)
        assert not relative_step_converged(np.array([1.0]), np.array([1.006]), 0.005)

    def test_zero_guard_falls_back_to_absolute(self):
        assert relative_step_converged(np.array([0.0]), np.array([0.004]), 0.005)
        assert not relative_step_converged(np.array([0.0]), np.array([0.006]), 0.005)
