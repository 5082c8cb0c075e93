"""Independent oracles for the closed forms and the signal-measurement code.

The rectifier Fourier coefficients are checked against direct quadrature
(with breakpoints at the rectifier kink so the integrator isn't the limiting
factor), and the measurement routine is checked on synthetic signals whose
statistics are known exactly.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from snakecpg.analysis import gate_fourier_K, gate_fourier_L, measure_signal


def _gate(x):
    return x if x > 0.0 else 0.0


def quad_K(r: float) -> float:
    pts = [-np.arccos(-r), np.arccos(-r)] if -1.0 < r < 1.0 else None
    val, _ = quad(lambda t: _gate(np.cos(t) + r) * np.cos(t), -np.pi, np.pi,
                  points=pts, limit=400)
    return val / np.pi


def quad_L(r: float) -> float:
    pts = [-np.arccos(-r), np.arccos(-r)] if -1.0 < r < 1.0 else None
    val, _ = quad(lambda t: _gate(np.cos(t) + r), -np.pi, np.pi,
                  points=pts, limit=400)
    return val / (2.0 * np.pi)


class TestGateCoefficients:
    def test_match_quadrature_on_grid(self):
        rs = np.linspace(-1.0, 1.0, 101)
        err_k = max(abs(gate_fourier_K(r) - quad_K(r)) for r in rs)
        err_l = max(abs(gate_fourier_L(r) - quad_L(r)) for r in rs)
        assert err_k <= 1e-9
        assert err_l <= 1e-9

    def test_piecewise_boundaries(self):
        assert gate_fourier_K(-1.0) == pytest.approx(0.0, abs=1e-15)
        assert gate_fourier_K(1.0) == pytest.approx(1.0, abs=1e-15)
        assert gate_fourier_L(-1.0) == pytest.approx(0.0, abs=1e-15)
        assert gate_fourier_L(1.0) == pytest.approx(1.0, abs=1e-15)
        assert gate_fourier_K(-2.0) == 0.0 and gate_fourier_K(2.0) == 1.0
        assert gate_fourier_L(-2.0) == 0.0 and gate_fourier_L(2.0) == 2.0

    def test_midpoint_values(self):
        assert gate_fourier_K(0.0) == pytest.approx(0.5, abs=1e-15)
        assert gate_fourier_L(0.0) == pytest.approx(1.0 / np.pi, abs=1e-15)

    def test_monotone_nondecreasing(self):
        rs = np.linspace(-1.0, 1.0, 401)
        assert np.all(np.diff(gate_fourier_K(rs)) >= -1e-12)
        assert np.all(np.diff(gate_fourier_L(rs)) >= -1e-12)


class TestMeasureOracles:
    def test_constant_signal(self):
        st = measure_signal(np.full(5000, 0.73), dt=1e-3)
        assert st.bias == pytest.approx(0.73)
        assert st.amplitude == 0.0
        assert not st.is_limit_cycle
        assert np.isnan(st.frequency)

    def test_pure_sine(self):
        dt, w, amp, off = 1e-3, 4.2, 0.8, 0.31
        t = np.arange(0, 60.0, dt)
        st = measure_signal(amp * np.sin(w * t) + off, dt, transient_cut=1.0)
        assert st.bias == pytest.approx(off, rel=0.01)
        assert st.amplitude == pytest.approx(amp, rel=0.01)
        assert st.frequency == pytest.approx(w, rel=0.01)
        assert st.is_limit_cycle
        assert st.duty == pytest.approx(0.5, abs=0.01)

    def test_square_wave_duty(self):
        dt, period, duty = 1e-3, 2.0, 0.30
        t = np.arange(0, 40.0, dt)
        x = np.where((t / period) % 1.0 < duty, 1.0, -1.0)
        st = measure_signal(x, dt, transient_cut=0.5)
        assert st.duty == pytest.approx(duty, abs=dt / period + 1e-9)

    def test_bias_is_integer_period_average(self):
        # offset sine plus a second harmonic: the mean over whole periods is
        # exactly the offset, while the raw mean over a partial window is not
        dt, w = 1e-3, 3.0
        t = np.arange(0, 30.0, dt)
        x = 0.4 + np.sin(w * t) + 0.3 * np.sin(2 * w * t)
        st = measure_signal(x, dt, transient_cut=0.0)
        assert st.bias == pytest.approx(0.4, abs=2e-3)

    def test_decaying_signal_is_not_limit_cycle(self):
        dt = 1e-3
        t = np.arange(0, 30.0, dt)
        x = np.exp(-0.3 * t) * np.sin(3.0 * t)
        st = measure_signal(x, dt, transient_cut=0.0)
        assert not st.is_limit_cycle

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            measure_signal(np.ones(10), dt=1e-3, transient_cut=1.0)
