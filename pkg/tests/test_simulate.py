import numpy as np
import pytest

from beamobs.beam_model import (
    ModelError,
    TruncatedSystem,
    assemble_truncated_system,
    from_modal_coefficients,
)
from beamobs.simulate import (
    _noise_factor,
    perturbed_output_pair,
    propagate_closed_form,
    propagate_numeric,
    synthesize_measurements,
)


@pytest.fixture(scope="module")
def period1(basis2):
    return 2 * np.pi / basis2.frequencies[0]


class TestClosedForm:
    def test_single_displacement_mode(self, basis2, period1):
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 256)
        w1 = basis2.frequencies[0]
        np.testing.assert_allclose(
            traj.states[:, 0], 0.01 * np.cos(w1 * traj.times), rtol=0, atol=1e-16
        )
        np.testing.assert_allclose(
            traj.states[:, 2], -0.01 * w1 * np.sin(w1 * traj.times), rtol=1e-12, atol=1e-18
        )
        assert not traj.states[:, [1, 3]].any()

    def test_single_velocity_mode(self, basis2, period1):
        ic = from_modal_coefficients(basis2, [0.0, 0.0], [0.0, 0.3])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 256)
        w2 = basis2.frequencies[1]
        np.testing.assert_allclose(
            traj.states[:, 1], 0.3 / w2 * np.sin(w2 * traj.times), rtol=1e-12, atol=1e-20
        )

    def test_zero_ic_is_zero(self, basis2, period1):
        ic = from_modal_coefficients(basis2, [0.0, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 64)
        assert not traj.states.any()

    def test_energy_conserved(self, basis8, timing):
        horizon, dt = timing
        ic = from_modal_coefficients(
            basis8, 0.01 * np.arange(1.0, 9.0), 0.05 * np.arange(8.0, 0.0, -1.0)
        )
        traj = propagate_closed_form(basis8, ic, horizon, dt)
        energy = traj.modal_energy()
        drift = np.abs(energy - energy[0]).max() / energy[0]
        assert drift < 1e-10

    def test_linearity(self, basis4, timing):
        horizon, dt = timing
        ic_a = from_modal_coefficients(basis4, [0.01, 0, 0.002, 0], [0, 0.1, 0, 0])
        ic_b = from_modal_coefficients(basis4, [0, 0.004, 0, 0.001], [0.2, 0, 0, 0.3])
        ic_sum = from_modal_coefficients(
            basis4, ic_a.alpha_disp + ic_b.alpha_disp, ic_a.alpha_vel + ic_b.alpha_vel
        )
        t_a = propagate_closed_form(basis4, ic_a, horizon, dt)
        t_b = propagate_closed_form(basis4, ic_b, horizon, dt)
        t_sum = propagate_closed_form(basis4, ic_sum, horizon, dt)
        scale = np.abs(t_sum.states).max()
        assert np.abs(t_a.states + t_b.states - t_sum.states).max() < 1e-10 * scale

    def test_time_reversal(self, basis4, timing):
        horizon, dt = timing
        ic = from_modal_coefficients(basis4, [0.01, -0.003, 0.002, 0.001], [0.1, 0, -0.2, 0])
        fwd = propagate_closed_form(basis4, ic, horizon, dt)
        turned = from_modal_coefficients(
            basis4, fwd.states[-1, :4], -fwd.states[-1, 4:]
        )
        back = propagate_closed_form(basis4, turned, horizon, dt)
        scale = np.abs(ic.state).max()
        assert np.abs(back.states[-1, :4] - ic.alpha_disp).max() < 1e-10 * scale
        assert np.abs(back.states[-1, 4:] + ic.alpha_vel).max() < 1e-10 * scale * basis4.frequencies[-1]

    def test_outputs_follow_measurement_matrix(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25, 75]])
        ic = from_modal_coefficients(basis2, [0.01, 0.002], [0.0, 0.1])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 128, sys=sys2)
        np.testing.assert_allclose(traj.outputs, traj.states @ sys2.C.T, rtol=1e-13, atol=0)
        bare = propagate_closed_form(basis2, ic, period1, period1 / 128)
        assert bare.outputs is None

    def test_horizon_not_divisible_extends_last_step(self, basis2):
        T = 1.0
        traj = propagate_closed_form(
            basis2, from_modal_coefficients(basis2, [0.01, 0], [0, 0]),
            T, 0.3
        )
        # four steps of 0.3 cover the 1.0 horizon
        np.testing.assert_allclose(traj.times[-1], 1.2, rtol=1e-15)
        np.testing.assert_allclose(np.diff(traj.times), 0.3, rtol=1e-12)

    def test_csv_header(self, basis2, period1, tmp_path):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 16, sys=sys2)
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        header = path.read_text().split("\n", 1)[0]
        assert header == "t,eta_1,eta_2,eta_dot_1,eta_dot_2,y_1"


class TestNumericPropagation:
    def test_matches_closed_form(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25]])
        ic = from_modal_coefficients(basis2, [0.01, 0.002], [0.0, 0.1])
        exact = propagate_closed_form(basis2, ic, period1, period1 / 2000, sys=sys2)
        num = propagate_numeric(sys2, ic.state, period1, period1 / 2000)
        scale = np.abs(exact.states).max()
        assert np.abs(num.states - exact.states).max() < 1e-6 * scale
        np.testing.assert_allclose(num.outputs, num.states @ sys2.C.T, rtol=1e-13, atol=0)

    def test_fourth_order_convergence(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        errs = []
        for steps in (400, 800, 1600):
            exact = propagate_closed_form(basis2, ic, period1, period1 / steps)
            num = propagate_numeric(sys2, ic.state, period1, period1 / steps)
            errs.append(np.abs(num.states - exact.states).max())
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert ((ratios > 12) & (ratios < 20)).all()

    def test_coarse_dt_raises_by_default(self, basis8, timing):
        horizon, _ = timing
        sys8 = assemble_truncated_system(basis8, basis8.grid[[25]])
        coarse = 0.2 / basis8.frequencies[-1]
        with pytest.raises(ModelError, match="phase"):
            propagate_numeric(sys8, np.zeros(16), horizon, coarse)

    def test_coarse_dt_warn_mode(self, basis8, timing):
        horizon, _ = timing
        sys8 = assemble_truncated_system(basis8, basis8.grid[[25]])
        coarse = 0.2 / basis8.frequencies[-1]
        state = np.zeros(16)
        state[0] = 0.01
        with pytest.warns(UserWarning, match="phase"):
            traj = propagate_numeric(sys8, state, horizon, coarse, on_coarse_dt="warn")
        assert np.isfinite(traj.states).all()

    def test_degenerate_static_system(self):
        sys0 = TruncatedSystem(
            frequencies=np.zeros(1),
            A=np.zeros((2, 2)),
            C=np.zeros((1, 2)),
            sensor_locations=np.zeros(1),
        )
        traj = propagate_numeric(sys0, np.array([1.0, 0.0]), 1.0, 0.1)
        np.testing.assert_array_equal(traj.states, np.tile([1.0, 0.0], (11, 1)))


class TestMeasurements:
    def test_deterministic_given_seed(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25, 75]])
        ic = from_modal_coefficients(basis2, [0.01, 0.002], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 200, sys=sys2)
        R = 1e-4 * np.eye(2)
        a = synthesize_measurements(traj, R, seed=11)
        b = synthesize_measurements(traj, R, seed=11)
        np.testing.assert_array_equal(a.outputs_noisy, b.outputs_noisy)
        c = synthesize_measurements(traj, R, seed=12)
        assert (c.outputs_noisy != a.outputs_noisy).any()

    def test_zero_noise_returns_clean(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 100, sys=sys2)
        rec = synthesize_measurements(traj, np.zeros((1, 1)), seed=5)
        np.testing.assert_array_equal(rec.outputs_noisy, rec.outputs_clean)

    def test_sample_covariance_matches_general_r(self, basis2, period1):
        # 10^4 samples pin a 2x2 covariance with off-diagonal coupling to 20%
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25, 75]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, 10000 * period1 / 100, period1 / 100, sys=sys2)
        R = np.array([[2e-4, 5e-5], [5e-5, 1e-4]])
        rec = synthesize_measurements(traj, R, seed=21)
        noise = rec.outputs_noisy - rec.outputs_clean
        sample = noise.T @ noise / len(noise)
        assert np.abs(sample - R).max() < 0.2 * np.abs(R).max()

    def test_variance_five_percent_at_1e5_steps(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, 100000 * period1 / 100, period1 / 100, sys=sys2)
        rec = synthesize_measurements(traj, 1e-4 * np.eye(1), seed=22)
        noise = rec.outputs_noisy - rec.outputs_clean
        assert noise.var() == pytest.approx(1e-4, rel=0.05)

    def test_rejects_bad_covariances(self, basis2, period1):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25, 75]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 50, sys=sys2)
        with pytest.raises(ModelError):
            synthesize_measurements(traj, np.array([[1.0, 0.0], [0.0, -1e-6]]), seed=1)
        with pytest.raises(ModelError):
            synthesize_measurements(traj, np.array([[1.0, 0.5], [0.0, 1.0]]), seed=1)
        with pytest.raises(ModelError):
            synthesize_measurements(traj, np.eye(3), seed=1)

    def test_rejects_trajectory_without_outputs(self, basis2, period1):
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 50)
        with pytest.raises(ModelError):
            synthesize_measurements(traj, np.eye(1), seed=1)

    def test_psd_factor_reproduces_matrix(self):
        R = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.1], [0.0, -0.1, 0.5]])
        F = _noise_factor(R)
        np.testing.assert_allclose(F @ F.T, R, atol=1e-12)

    def test_csv_header(self, basis2, period1, tmp_path):
        sys2 = assemble_truncated_system(basis2, basis2.grid[[25, 75]])
        ic = from_modal_coefficients(basis2, [0.01, 0.0], [0.0, 0.0])
        traj = propagate_closed_form(basis2, ic, period1, period1 / 16, sys=sys2)
        rec = synthesize_measurements(traj, 1e-4 * np.eye(2), seed=3)
        path = tmp_path / "meas.csv"
        rec.to_csv(path)
        header = path.read_text().split("\n", 1)[0]
        assert header == "t,y_1,y_2,y_noisy_1,y_noisy_2"


class TestPerturbedOutputPair:
    def test_displacement_sensitivity_closed_form(self, basis4, timing):
        horizon, dt = timing
        ic = from_modal_coefficients(basis4, np.full(4, 0.01), np.zeros(4))
        sensor = 0.3
        for j in range(4):
            times, y_plus, y_minus = perturbed_output_pair(
                basis4, ic, j, "displacement", 1e-4, sensor, horizon, dt
            )
            central = (y_plus - y_minus) / 2e-4
            g = basis4.beam.half_thickness * basis4.curvature_at(np.array([sensor]))[0, j]
            expected = g * np.cos(basis4.frequencies[j] * times)
            # the difference quotient amplifies output roundoff by 1/epsilon
            np.testing.assert_allclose(central, expected, rtol=1e-8, atol=1e-11 * abs(g))

    def test_velocity_sensitivity_closed_form(self, basis4, timing):
        horizon, dt = timing
        ic = from_modal_coefficients(basis4, np.full(4, 0.01), np.zeros(4))
        sensor = 0.3
        j = 2
        times, y_plus, y_minus = perturbed_output_pair(
            basis4, ic, j, "velocity", 1e-4, sensor, horizon, dt
        )
        central = (y_plus - y_minus) / 2e-4
        w = basis4.frequencies[j]
        g = basis4.beam.half_thickness * basis4.curvature_at(np.array([sensor]))[0, j]
        np.testing.assert_allclose(
            central, g / w * np.sin(w * times), rtol=1e-8, atol=1e-11 * abs(g) / w
        )

    def test_epsilon_independence(self, basis4, timing):
        # the system is linear, so the central difference is exact in epsilon
        horizon, dt = timing
        ic = from_modal_coefficients(basis4, np.full(4, 0.01), np.zeros(4))
        _, p_small, m_small = perturbed_output_pair(
            basis4, ic, 1, "displacement", 1e-6, 0.5, horizon, dt
        )
        _, p_big, m_big = perturbed_output_pair(
            basis4, ic, 1, "displacement", 1e-1, 0.5, horizon, dt
        )
        small = (p_small - m_small) / 2e-6
        big = (p_big - m_big) / 2e-1
        scale = np.abs(small).max()
        assert np.abs(small - big).max() < 1e-10 * scale

    def test_validations(self, basis4, timing):
        horizon, dt = timing
        ic = from_modal_coefficients(basis4, np.full(4, 0.01), np.zeros(4))
        with pytest.raises(ModelError):
            perturbed_output_pair(basis4, ic, 4, "displacement", 1e-4, 0.3, horizon, dt)
        with pytest.raises(ModelError):
            perturbed_output_pair(basis4, ic, 0, "acceleration", 1e-4, 0.3, horizon, dt)
        with pytest.raises(ModelError):
            perturbed_output_pair(basis4, ic, 0, "displacement", 0.0, 0.3, horizon, dt)
        with pytest.raises(ModelError):
            perturbed_output_pair(basis4, ic, 0, "displacement", 1e-4, 2.5, horizon, dt)
