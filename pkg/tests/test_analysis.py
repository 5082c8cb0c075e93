"""Describing-function quantities and their anchors, plus the sweep drivers."""

import numpy as np
import pytest

from snakecpg.analysis import (DutyFit, bias_sweep, default_transient_cut,
                               duty_sweep, entrainment_threshold, free_amplitude,
                               frequency_sweep, gate_gain_inverse, harmonic_gain,
                               linear_fit, natural_frequency,
                               predict_bias_constant, predict_bias_duty)
from snakecpg.cpg import OscillatorParams


class TestHarmonicGain:
    def test_stock_value(self, params):
        assert harmonic_gain(params) == pytest.approx(2.5424 / 3.71137, rel=1e-3)
        assert harmonic_gain(params) == pytest.approx(0.6850324926991659, rel=1e-12)

    def test_equal_time_constants(self):
        p = OscillatorParams(tau_r=1.0, tau_a=1.0, a=4.0)
        assert harmonic_gain(p) == pytest.approx(0.5)

    def test_zero_mutual_inhibition_errors(self):
        with pytest.raises(ValueError):
            harmonic_gain(OscillatorParams(a=0.0))

    @pytest.mark.parametrize("k_n", [0.19, 0.39, 0.53, 0.66, 0.79])
    def test_gain_to_weight_round_trip(self, params, k_n):
        from snakecpg.analysis import mutual_inhibition_for_gain
        a = mutual_inhibition_for_gain(params, k_n)
        assert harmonic_gain(params.replace(a=a)) == pytest.approx(k_n, rel=1e-12)


class TestNaturalFrequency:
    def test_stock_value(self, params):
        assert natural_frequency(params) == pytest.approx(3.149, abs=2e-3)

    def test_doubling_kf_halves(self, params):
        w1 = natural_frequency(params)
        w2 = natural_frequency(params.replace(k_f=2.0))
        assert w2 == pytest.approx(0.5 * w1, rel=1e-12)

    def test_nonpositive_radicand_errors(self):
        with pytest.raises(ValueError):
            natural_frequency(OscillatorParams(b=0.0))

    def test_published_variants_disagree(self, params):
        # two circulating forms; the main one is canonical (see module docs)
        w_main = natural_frequency(params, "main")
        w_app = natural_frequency(params, "appendix")
        assert w_main == pytest.approx(3.1494, abs=1e-3)
        assert w_app == pytest.approx(2.1727, abs=1e-3)
        assert abs(w_main - w_app) > 0.5


class TestFreeAmplitude:
    def test_zero_drive_zero_amplitude(self, params):
        assert free_amplitude(params.replace(c=0.0)) == 0.0

    def test_half_gain_closed_form(self):
        # K_n = 1/2 puts the root at r* = 0 where L = 1/pi
        p = OscillatorParams(tau_r=1.0, tau_a=1.0, a=4.0, b=6.0, c=0.8)
        assert gate_gain_inverse(harmonic_gain(p)) == pytest.approx(0.0, abs=1e-12)
        assert free_amplitude(p) == pytest.approx(0.8 * np.pi / (4.0 + 6.0), rel=1e-12)

    def test_linear_in_c(self, params):
        a1 = free_amplitude(params.replace(c=0.3))
        a2 = free_amplitude(params.replace(c=0.6))
        assert a2 == pytest.approx(2.0 * a1, rel=1e-12)

    def test_gain_out_of_range_errors(self):
        p = OscillatorParams(tau_r=1.0, tau_a=1.0, a=1.0)  # K_n = 2
        with pytest.raises(ValueError):
            free_amplitude(p)


class TestEntrainmentThreshold:
    def test_zero_c_is_identically_zero(self, params):
        p = params.replace(c=0.0)
        ws = np.linspace(0.5, 12.0, 200)
        assert np.all(entrainment_threshold(ws, p) == 0.0)

    def test_anchor_interval(self, params):
        # stock parameters with c = 0.75 over the observed drive band
        p = params.replace(c=0.75)
        ws = np.linspace(3.77, 5.02, 200)
        a0 = entrainment_threshold(ws, p)
        assert a0.min() >= 0.39 - 0.02
        assert a0.max() <= 0.83 + 0.02
        assert entrainment_threshold(3.77, p) == pytest.approx(0.3907, abs=5e-3)
        assert entrainment_threshold(5.02, p) == pytest.approx(0.8302, abs=5e-3)

    def test_vanishes_at_natural_frequency(self, params):
        p = params.replace(c=0.75)
        w_n = natural_frequency(p)
        assert entrainment_threshold(w_n, p) == 0.0
        near = entrainment_threshold(w_n * (1 + 1e-3), p)
        assert 0.0 < near < 0.01

    def test_continuous_away_from_resonance(self, params):
        p = params.replace(c=0.75)
        ws = np.linspace(3.6, 5.2, 400)
        a0 = entrainment_threshold(ws, p)
        assert np.abs(np.diff(a0)).max() < 0.02


class TestBiasPredictions:
    def test_symmetric_drive_zero_bias(self, params):
        assert predict_bias_constant(0.5, params) == 0.0

    def test_odd_about_half(self, params):
        for d in (0.1, 0.25, 0.4):
            lo = predict_bias_constant(0.5 - d, params)
            hi = predict_bias_constant(0.5 + d, params)
            assert lo == pytest.approx(-hi, rel=1e-12)

    def test_rejects_out_of_range(self, params):
        with pytest.raises(ValueError):
            predict_bias_constant(1.2, params)

    def test_singular_denominator(self):
        # (b - a) K_n + 1 = 0 at b = a - 1/K_n
        p = OscillatorParams(tau_r=1.0, tau_a=1.0, a=4.0)  # K_n = 0.5
        with pytest.raises(ValueError):
            predict_bias_constant(0.3, p.replace(b=p.a - 2.0))

    def test_duty_symmetric_zero(self, params):
        assert predict_bias_duty(0.5, DutyFit(k_m=0.5, m=0.0), params) == 0.0

    def test_duty_affine_slope(self, params):
        fit = DutyFit(k_m=0.5, m=0.0)
        d = np.linspace(0.2, 0.8, 7)
        vals = predict_bias_duty(d, fit, params)
        slopes = np.diff(vals) / np.diff(d)
        expected = 2 * fit.k_m / (fit.k_m * (params.b - params.a) + 1.0)
        np.testing.assert_allclose(slopes, expected, rtol=1e-12)

    def test_dutyfit_validates_k_m(self):
        with pytest.raises(ValueError):
            DutyFit(k_m=1.5)


class TestLinearFit:
    def test_exact_line(self):
        x = np.linspace(0, 1, 10)
        slope, intercept, r2 = linear_fit(x, 3.0 * x - 0.5)
        assert slope == pytest.approx(3.0)
        assert intercept == pytest.approx(-0.5)
        assert r2 == pytest.approx(1.0)


@pytest.mark.slow
class TestSweeps:
    def test_bias_sweep_single_panel(self, params):
        panel = bias_sweep(params, k_n_values=(0.66,),
                           u_grid=np.linspace(0.0, 0.5, 11), duration=40.0)[0]
        assert panel.bifurcation_detected
        assert panel.slope == pytest.approx(1.0, abs=0.15)
        assert panel.r2 >= 0.95
        # mirrored drive negates the measured bias (antisymmetry)
        mirrored = bias_sweep(params, k_n_values=(0.66,),
                              u_grid=1.0 - np.linspace(0.0, 0.5, 11),
                              duration=40.0)[0]
        lc = panel.is_limit_cycle & mirrored.is_limit_cycle
        np.testing.assert_allclose(mirrored.measured[lc], -panel.measured[lc],
                                   atol=1e-6)

    def test_duty_sweep_affine(self, params):
        res = duty_sweep(params, duty_grid=np.linspace(0.2, 0.8, 9), duration=50.0)
        assert res.r2 >= 0.9
        assert 0.0 < res.fit.k_m < 1.0

    def test_frequency_sweep_exponent_matches_rescaling(self, params):
        res = frequency_sweep(params, k_f_grid=np.linspace(0.45, 1.05, 7),
                              duration=40.0)
        # K_f rescales time uniformly, so the measured exponent is -1
        assert res.exponent == pytest.approx(-1.0, abs=0.02)
        assert res.exponent_r2 > 0.999

    def test_transient_default(self, params):
        cut = default_transient_cut(params)
        assert cut >= 10.0
