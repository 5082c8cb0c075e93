"""Network dynamics contracts: stability predicate, action decoding,
integration invariants, determinism and the time-rescaling property."""

import numpy as np
import pytest

from snakecpg.cpg import (CpgOutput, IntegrationDivergedError, NetworkState,
                          OscillatorParams, TonicInputs, decode_action, simulate,
                          step_network, validate_params)
from snakecpg.analysis import measure, rescaling_error


class TestValidateParams:
    def test_stock_parameters_oscillate(self, params):
        rep = validate_params(params)
        assert rep.oscillation_possible
        assert rep.lhs == pytest.approx(1.00641024, rel=1e-9)
        assert rep.rhs == pytest.approx(54.76761245696, rel=1e-9)

    def test_boundary_is_strict(self):
        rep = validate_params(OscillatorParams(tau_r=1.0, tau_a=1.0, b=0.0))
        assert rep.lhs == 0.0 and rep.rhs == 0.0
        assert not rep.oscillation_possible

    def test_simple_arithmetic_case(self):
        rep = validate_params(OscillatorParams(tau_r=1.0, tau_a=4.0, b=1.0))
        assert rep.lhs == pytest.approx(9.0) and rep.rhs == pytest.approx(16.0)
        assert rep.oscillation_possible

    @pytest.mark.parametrize("bad", [dict(tau_r=0.0), dict(tau_a=-1.0),
                                     dict(k_f=0.0), dict(c=-0.1)])
    def test_rejects_invalid_fields(self, bad):
        with pytest.raises(ValueError):
            validate_params(OscillatorParams(**bad))


class TestDecodeAction:
    def test_zero_maps_to_half(self):
        u = decode_action(np.zeros(4))
        assert np.all(u.u_e == 0.5) and np.all(u.u_f == 0.5)

    def test_log3_maps_to_three_quarters(self):
        u = decode_action([np.log(3.0), 0.0, 0.0, 0.0])
        assert u.u_e[0] == pytest.approx(0.75, rel=1e-12)

    def test_saturation_monotone_bounded(self):
        a = np.linspace(-40, 40, 201)
        u = decode_action(a)
        assert np.all(np.diff(u.u_e) >= 0)
        assert np.all((u.u_e >= 0) & (u.u_e <= 1))
        assert u.u_e[-1] == pytest.approx(1.0, abs=1e-12)
        assert u.u_f[-1] == pytest.approx(0.0, abs=1e-12)

    def test_exclusiveness_exact(self, rng):
        # sum must be exactly 1 in floating point, not approximately
        a = rng.normal(0.0, 10.0, size=10_000)
        u = decode_action(a)
        assert np.all(u.u_e + u.u_f == 1.0)
        assert u.is_exclusive()

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            decode_action([np.nan, 0, 0, 0])


class TestStepAndSimulate:
    def test_zero_input_fixed_point(self, params):
        p = params.replace(c=0.0)
        state = NetworkState.zeros(4)
        out = step_network(state, TonicInputs.constant(0.0), p)
        assert np.all(out.as_vector() == 0.0)

    def test_simulate_zero_duration_returns_ics(self, params):
        ics = NetworkState.default(4)
        traj = simulate(params, TonicInputs.constant(1.0), 0.0, ics=ics)
        assert traj.t.shape == (1,)
        np.testing.assert_array_equal(traj.states[0], ics.as_vector())

    def test_simulate_equals_repeated_steps(self, params):
        u = TonicInputs.constant(0.7)
        ics = NetworkState.default(4)
        traj = simulate(params, u, 0.2, ics=ics)
        state = ics
        for _ in range(int(round(0.2 / params.dt))):
            state = step_network(state, u, params)
        np.testing.assert_array_equal(traj.states[-1], state.as_vector())

    def test_determinism_bit_identical(self, params):
        u = TonicInputs.constant(1.0)
        a = simulate(params, u, 5.0)
        b = simulate(params, u, 5.0)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.psi, b.psi)

    def test_divergence_raises_with_step(self):
        # grossly unstable configuration: huge step, strong self-excitation
        p = OscillatorParams(tau_r=1e-4, tau_a=1e-4, b=0.0, w_down=0.0, w_up=0.0)
        with pytest.raises(IntegrationDivergedError, match="step"):
            simulate(p, TonicInputs.constant(1.0), 30.0, dt=0.5)

    def test_balanced_drive_limit_cycle_zero_bias(self, params):
        traj = simulate(params.replace(c=0.0), TonicInputs.constant(0.5), 60.0)
        st = measure(traj, "psi1", transient_cut=10.0)
        assert st.is_limit_cycle
        assert abs(st.bias) < 5e-3

    def test_all_ones_drive_oscillates_every_channel(self, params):
        traj = simulate(params, TonicInputs.constant(1.0), 60.0)
        for ch in range(1, 5):
            st = measure(traj, f"psi{ch}", transient_cut=10.0)
            assert st.is_limit_cycle, f"channel {ch} quiescent"
            assert st.amplitude > 0.1

    def test_firing_rates_nonnegative_and_output_identity(self, params):
        traj = simulate(params, TonicInputs.constant(1.0), 20.0)
        n = params.n_oscillators
        z_e = np.maximum(0.0, traj.states[:, 0:n])
        z_f = np.maximum(0.0, traj.states[:, 2 * n:3 * n])
        assert np.all(z_e >= 0.0) and np.all(z_f >= 0.0)
        np.testing.assert_allclose(traj.psi, params.a_z * (z_e - z_f), atol=0)
        out = CpgOutput.from_state(traj.state_at(-1), params)
        np.testing.assert_array_equal(out.psi, traj.psi[-1])

    def test_mirror_swap_negates_output_exactly(self, params):
        u_e = np.array([0.3, 0.55, 0.62, 0.41])
        ics = NetworkState.default(4)
        fwd = simulate(params, TonicInputs.exclusive(u_e), 10.0, ics=ics)
        mir = simulate(params, TonicInputs.exclusive(1.0 - u_e), 10.0,
                       ics=ics.mirrored())
        assert np.abs(fwd.psi + mir.psi).max() < 1e-9

    def test_kf_time_rescaling(self, params):
        assert rescaling_error(params, gamma=2, duration=10.0) < 1e-4

    def test_boundedness_under_unit_box_drive(self, params, rng):
        # |psi| <= 1 over 60 s for tonic inputs anywhere in [0, 1]
        for _ in range(3):
            u_e = rng.uniform(0.0, 1.0, 4)
            u_f = rng.uniform(0.0, 1.0, 4)
            traj = simulate(params, TonicInputs(u_e, u_f), 60.0)
            assert np.abs(traj.psi).max() <= 1.0

    def test_schedule_is_piecewise_constant_on_control_grid(self, params):
        seen = []

        def schedule(t):
            seen.append(t)
            return TonicInputs.constant(0.5)

        simulate(params, schedule, 0.2)
        assert seen == pytest.approx([0.0, 0.05, 0.1, 0.15])


class TestTonicInputs:
    def test_exclusive_constructor_bounds(self):
        with pytest.raises(ValueError):
            TonicInputs.exclusive(np.array([1.2, 0.5, 0.5, 0.5]))

    def test_vector_interleaving(self):
        u = TonicInputs(np.array([0.1, 0.2]), np.array([0.9, 0.8]))
        np.testing.assert_allclose(u.as_vector(), [0.1, 0.9, 0.2, 0.8])

    def test_all_ones_is_not_exclusive(self):
        assert not TonicInputs.constant(1.0).is_exclusive()
