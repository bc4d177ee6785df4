import numpy as np
import pytest

from mlse import (
    GaussianDensity,
    StateSpaceModel,
    apply_f,
    apply_g,
    builtin_example1,
    builtin_example2,
    example2_gain,
    get_model,
    simulate,
)
from mlse.model import EXAMPLE1_F, EXAMPLE1_H, EXAMPLE1_S

from conftest import assert_gradient_matches


def make_identity_model(initial_mean, noise_var=1e-20):
    noise = GaussianDensity(np.zeros(1), [[noise_var]])
    prior = GaussianDensity(np.asarray(initial_mean, dtype=float), [[noise_var]])
    H = np.array([[1.0]])
    return StateSpaceModel(
        state_dim=1,
        obs_dim=1,
        f=lambda z, k: z,
        g=lambda z, k: z,
        process_noise=lambda k: noise,
        measurement_noise=lambda k: noise,
        initial_density=prior,
        g_jacobian=lambda z, k: H,
        f_jacobian=lambda z, k: H,
        linear_measurement=H,
        linear_dynamics=H,
    )


class TestSimulate:
    def test_noise_free_identity_is_constant(self):
        model = make_identity_model([0.7])
        traj = simulate(model, 100, 1)
        np.testing.assert_allclose(traj.states, 0.7, atol=1e-6)
        np.testing.assert_allclose(traj.observations, 0.7, atol=1e-6)

    def test_seeded_determinism(self, example1):
        a = simulate(example1, 100, 123)
        b = simulate(example1, 100, 123)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.observations, b.observations)
        assert a.seed == 123

    def test_example2_stationary_spread(self, example2):
        # |f| <= max alpha = 1.5, so |state| stays below 1.5 + 5*sigma_w
        traj = simulate(example2, 200, 99)
        bound = 1.5 + 5.0 * np.sqrt(0.2)
        assert np.max(np.abs(traj.states)) < bound

    def test_lengths_and_steps_zero(self, example1):
        traj = simulate(example1, 0, 5)
        assert len(traj) == 1
        with pytest.raises(ValueError):
            simulate(example1, -1, 5)


class TestExample1:
    def test_measurement_row_sum(self, example1):
        assert apply_g(example1, np.array([0.0, 1.0, 1.0]), 0)[0] == pytest.approx(2.0)

    def test_dynamics_first_column(self, example1):
        e1 = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(apply_f(example1, e1, 0), EXAMPLE1_F[:, 0])

    def test_noise_means_zero(self, example1):
        np.testing.assert_array_equal(example1.process_noise(3).mean(), np.zeros(3))
        np.testing.assert_array_equal(example1.measurement_noise(3).mean(), np.zeros(1))

    def test_matrices_as_configured(self, example1):
        np.testing.assert_array_equal(example1.linear_measurement, EXAMPLE1_H)
        np.testing.assert_array_equal(example1.process_noise(0).covariance, EXAMPLE1_S)
        np.testing.assert_array_equal(example1.initial_density.covariance, 0.3 * np.eye(3))

    def test_linear_measurement_consistency(self, example1):
        rng = np.random.default_rng(0)
        for _ in range(100):
            z = rng.normal(size=3)
            np.testing.assert_allclose(
                apply_g(example1, z, 0), example1.linear_measurement @ z, atol=1e-12
            )


class TestExample2:
    def test_gain_schedule(self):
        assert example2_gain(0) == pytest.approx(1.0)
        assert example2_gain(5) == pytest.approx(1.5)

    def test_dynamics_fixed_point_at_zero(self, example2):
        for k in (0, 3, 11):
            assert apply_f(example2, np.zeros(1), k)[0] == pytest.approx(0.0)

    def test_measurement_halves(self, example2):
        assert apply_g(example2, np.array([2.0]), 0)[0] == pytest.approx(1.0)

    def test_linear_measurement_consistency(self, example2):
        rng = np.random.default_rng(1)
        for _ in range(100):
            z = rng.normal(size=1)
            np.testing.assert_allclose(
                apply_g(example2, z, 4), example2.linear_measurement @ z, atol=1e-12
            )


class TestJacobians:
    @pytest.mark.parametrize("name", ["example1", "example2"])
    def test_g_jacobian_matches_finite_differences(self, name):
        model = get_model(name)
        rng = np.random.default_rng(2)
        for _ in range(100):
            z = rng.normal(size=model.state_dim)
            k = int(rng.integers(0, 20))
            jac = np.atleast_2d(model.g_jacobian(z, k))
            for row in range(model.obs_dim):
                assert_gradient_matches(
                    lambda x, r=row: float(apply_g(model, x, k)[r]),
                    lambda x, r=row: jac[r],
                    z,
                )

    @pytest.mark.parametrize("name", ["example1", "example2"])
    def test_f_jacobian_matches_finite_differences(self, name):
        model = get_model(name)
        rng = np.random.default_rng(3)
        for _ in range(100):
            z = rng.normal(size=model.state_dim)
            k = int(rng.integers(0, 20))
            jac = np.atleast_2d(model.f_jacobian(z, k))
            for row in range(model.state_dim):
                assert_gradient_matches(
                    lambda x, r=row: float(apply_f(model, x, k)[r]),
                    lambda x, r=row: jac[r],
                    z,
                )


def test_batch_apply_matches_loop(example1, example2):
    rng = np.random.default_rng(4)
    for model in (example1, example2):
        batch = rng.normal(size=(17, model.state_dim))
        looped_f = np.stack([apply_f(model, z, 2) for z in batch])
        looped_g = np.stack([apply_g(model, z, 2) for z in batch])
        np.testing.assert_allclose(apply_f(model, batch, 2), looped_f, rtol=1e-14)
        np.testing.assert_allclose(apply_g(model, batch, 2), looped_g, rtol=1e-14)


def test_get_model_unknown_name():
    with pytest.raises(KeyError):
        get_model("example99")
