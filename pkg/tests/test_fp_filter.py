from dataclasses import replace

import numpy as np
import pytest

from mlse import (
    EmConfig,
    FpGain,
    GaussianDensity,
    ParticleSet,
    StateSpaceModel,
    emsf_step,
    empirical_filtered_log_density,
    fp_gain,
    fpsf_iterate,
    fpsf_step,
    m_step,
)
from mlse.errors import ModelClassError
from mlse.model import EXAMPLE1_F, EXAMPLE1_H, EXAMPLE1_R, EXAMPLE1_S, apply_f

from test_em_filter import filtered_set, random_filtered_set
from test_particle_filter import scalar_model


class TestFpGain:
    def test_scalar_half(self):
        model = scalar_model()
        gain = fp_gain(model, 1)
        assert gain.B[0, 0] == pytest.approx(0.5)

    def test_example2_gain(self, example2):
        # hand evaluation: (1/5)(1/2) / ((1/2)(1/5)(1/2) + 1) = 2/21
        gain = fp_gain(example2, 3)
        assert gain.B[0, 0] == pytest.approx(2.0 / 21.0, rel=1e-12)

    def test_example1_gain_against_direct_inverse(self, example1):
        gain = fp_gain(example1, 5)
        expected = EXAMPLE1_S @ EXAMPLE1_H.T @ np.linalg.inv(
            EXAMPLE1_H @ EXAMPLE1_S @ EXAMPLE1_H.T + EXAMPLE1_R
        )
        assert gain.B.shape == (3, 1)
        np.testing.assert_allclose(gain.B, expected, atol=1e-14)

    def test_inconsistent_gain_rejected(self):
        with pytest.raises(ValueError):
            FpGain(B=np.array([[0.4]]), S_prev=np.eye(1), R=np.eye(1), H=np.eye(1))

    def test_nonlinear_measurement_rejected(self, example2):
        model = replace(example2, linear_measurement=None)
        with pytest.raises(ModelClassError):
            fp_gain(model, 1)

    def test_non_gaussian_noise_rejected(self):
        from mlse import UniformBoxDensity

        model = replace(scalar_model(), process_noise=lambda k: UniformBoxDensity([-1.0], [1.0]))
        with pytest.raises(ModelClassError):
            fp_gain(model, 1)


class TestFpsfIterate:
    def test_single_particle_ignores_anchor(self):
        model = scalar_model()
        ps = filtered_set([0.6], [1.0], 0)
        y = np.array([2.0])
        expected = 0.6 + 0.5 * (2.0 - 0.6)
        for anchor in (-5.0, 0.0, 7.0):
            out = fpsf_iterate(model, ps, y, [anchor], 1)
            assert out[0] == pytest.approx(expected, rel=1e-12)

    def test_equals_closed_form_m_step(self, example1, example2):
        rng = np.random.default_rng(0)
        for model in (example1, example2):
            for _ in range(25):
                ps = random_filtered_set(model, 40, 1, rng)
                y = rng.normal(size=model.obs_dim)
                zi = rng.normal(size=model.state_dim)
                a = fpsf_iterate(model, ps, y, zi, 2)
                b, _ = m_step(model, ps, y, zi, 2)
                np.testing.assert_allclose(a, b, atol=1e-12)

    def test_information_filter_form(self, example1):
        # [H'R^-1 H + S^-1]^-1 (H'R^-1 y + S^-1 m), with m the responsibility mean
        rng = np.random.default_rng(1)
        ps = random_filtered_set(example1, 60, 1, rng)
        y = rng.normal(size=1)
        zi = rng.normal(size=3)

        from mlse import lambda_weights

        rho = lambda_weights(example1, ps, zi, 2)
        m = rho @ apply_f(example1, ps.particles, 1)
        Rinv = np.linalg.inv(EXAMPLE1_R)
        Sinv = np.linalg.inv(EXAMPLE1_S)
        info = np.linalg.inv(EXAMPLE1_H.T @ Rinv @ EXAMPLE1_H + Sinv)
        expected = info @ (EXAMPLE1_H.T @ Rinv @ y + Sinv @ m)
        got = fpsf_iterate(example1, ps, y, zi, 2)
        np.testing.assert_allclose(got, expected, atol=1e-9)


class TestFpsfStep:
    def test_fixed_point_matches_emsf_limit(self, example1):
        # both iterated to a tight tolerance reach the same stationary point
        rng = np.random.default_rng(2)
        ps = random_filtered_set(example1, 120, 4, rng)
        y = np.array([0.8])
        tight = EmConfig(rel_tol=1e-12, max_iters=500)
        for start in (np.zeros(3), np.array([2.0, -1.0, 0.5])):
            z_fp, trace = fpsf_step(example1, ps, y, start, 5, tight)
            z_em, _ = emsf_step(example1, ps, y, np.zeros(3), 5, tight, zeta0=start)
            assert trace.converged
            np.testing.assert_allclose(z_fp, z_em, atol=1e-9)

    def test_bimodal_starts_reach_distinct_stationary_points(self, example2):
        rng = np.random.default_rng(3)
        particles = np.concatenate([rng.normal(0.85, 0.04, 250), rng.normal(-0.85, 0.04, 250)])
        ps = ParticleSet(particles.reshape(-1, 1), np.full(500, 1 / 500), 9, 9)
        y = np.array([0.0])
        tight = EmConfig(rel_tol=1e-10, max_iters=500)
        hi, trace_hi = fpsf_step(example2, ps, y, np.array([1.0]), 10, tight)
        lo, trace_lo = fpsf_step(example2, ps, y, np.array([-1.0]), 10, tight)
        assert trace_hi.converged and trace_lo.converged
        assert hi[0] > 0.2 and lo[0] < -0.2
        # each limit is stationary under one more sweep
        assert fpsf_iterate(example2, ps, y, hi, 10)[0] == pytest.approx(hi[0], abs=1e-8)
        assert fpsf_iterate(example2, ps, y, lo, 10)[0] == pytest.approx(lo[0], abs=1e-8)

    def test_small_process_noise_contracts_to_prediction_mean(self):
        # with S -> eps the gain vanishes and the update is the weighted mean
        eps = 1e-6
        W = GaussianDensity(0.0, eps)
        model = replace(scalar_model(), process_noise=lambda k: W)
        ps = filtered_set([0.5, 0.50002], [0.5, 0.5], 0)
        y = np.array([3.0])
        z, trace = fpsf_step(model, ps, y, np.array([0.5]), 1, EmConfig(rel_tol=1e-10, max_iters=200))
        from mlse import lambda_weights

        rho = lambda_weights(model, ps, z, 1)
        m = float(rho @ ps.particles[:, 0])
        # |z - m| = |B (y - H m)| <= B * |y - m|
        gain = fp_gain(model, 1).B[0, 0]
        assert abs(z[0] - m) <= gain * abs(y[0] - m) + 1e-12
        assert abs(z[0] - m) <= 1e-4

    def test_iterates_never_decrease_empirical_density(self, example1):
        rng = np.random.default_rng(4)
        ps = random_filtered_set(example1, 80, 0, rng)
        y = np.array([-1.1])
        _, trace = fpsf_step(example1, ps, y, rng.normal(size=3), 1, EmConfig(max_iters=60))
        assert trace.is_monotone(1e-9)

    def test_unconverged_flag_when_capped(self, example1):
        rng = np.random.default_rng(5)
        ps = random_filtered_set(example1, 80, 0, rng)
        y = np.array([4.0])
        _, trace = fpsf_step(example1, ps, y, np.array([40.0, 40.0, 40.0]), 1, EmConfig(rel_tol=1e-14, max_iters=1))
        assert not trace.converged
        assert trace.iterations == 1
