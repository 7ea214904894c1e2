import numpy as np
import pytest
from scipy.integrate import quad

from nmbloch import (
    ConfigurationError,
    ExponentialKernel,
    FitError,
    FrequencyGrid,
    ThermalKernelSpec,
    eval_kernel,
    eval_thermal_kernel,
    fit_exponential,
    hamiltonian_shift_v,
    kernel_from_json,
    thermal_occupation,
)


class TestExponentialKernel:
    def test_zero_lag_equals_amplitude(self):
        k = ExponentialKernel(0.1, 0.2)
        assert eval_kernel(k, 0.0) == 0.1

    def test_real_decay_value(self):
        # a * e^{-1} at lag = 1/decay
        k = ExponentialKernel(0.1, 0.2)
        assert eval_kernel(k, 5.0) == pytest.approx(0.1 * np.exp(-1.0), abs=1e-15)

    def test_modulated_value_at_pi(self):
        # Euler identity: phase pi flips the sign
        k = ExponentialKernel(0.1, 0.2, 1.0)
        expected = -0.1 * np.exp(-0.2 * np.pi)
        got = eval_kernel(k, np.pi)
        assert got.real == pytest.approx(expected, rel=1e-14)
        assert got.imag == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("modulation", [0.0, 0.7, -1.3])
    def test_hermitian_symmetry(self, modulation):
        k = ExponentialKernel(0.3, 0.5, modulation)
        taus = np.linspace(-8, 8, 161)
        vals = eval_kernel(k, taus)
        flipped = eval_kernel(k, -taus)
        assert np.abs(flipped - vals.conj()).max() < 1e-15

    def test_real_kernel_is_real_everywhere(self):
        k = ExponentialKernel(1.0, 0.4)
        assert np.abs(eval_kernel(k, np.linspace(-5, 5, 101)).imag).max() == 0.0

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ConfigurationError):
            ExponentialKernel(-0.1, 0.2)
        with pytest.raises(ConfigurationError):
            ExponentialKernel(0.1, 0.0)

    def test_nonfinite_lag_rejected(self):
        with pytest.raises(ConfigurationError):
            eval_kernel(ExponentialKernel(0.1, 0.2), np.nan)


class TestThermalOccupation:
    def test_ln2_at_unit_temperature(self):
        assert thermal_occupation(np.log(2.0), 1.0) == pytest.approx(1.0, rel=1e-14)

    def test_zero_temperature(self):
        assert thermal_occupation(1.0, 0.0) == 0.0

    def test_unit_values(self):
        assert thermal_occupation(1.0, 1.0) == pytest.approx(1.0 / (np.e - 1.0), rel=1e-14)

    def test_nonpositive_frequency_rejected(self):
        with pytest.raises(ConfigurationError):
            thermal_occupation(0.0, 1.0)
        with pytest.raises(ConfigurationError):
            thermal_occupation(-1.0, 1.0)


class TestThermalKernel:
    def test_zero_temperature_reduces_to_mode_sum(self):
        spec = ThermalKernelSpec(1.0, 0.2, 0.0)
        from nmbloch.correlations import thermal_modes

        w, g2 = thermal_modes(spec)
        taus = np.array([0.0, 0.7, 3.0])
        expected = g2 @ np.exp(-1j * np.outer(w, taus))
        assert np.abs(eval_thermal_kernel(spec, taus) - expected).max() < 1e-15

    def test_zero_lag_real_positive(self):
        spec = ThermalKernelSpec(1.0, 0.2, 0.5)
        v = eval_thermal_kernel(spec, 0.0)
        assert v.imag == pytest.approx(0.0, abs=1e-12 * abs(v))
        assert v.real > 0
        # equals sum g^2 (2 nbar + 1)
        from nmbloch.correlations import thermal_modes

        w, g2 = thermal_modes(spec)
        nbar = thermal_occupation(w, 0.5)
        assert v.real == pytest.approx(float(g2 @ (2 * nbar + 1)), rel=1e-12)

    def test_refined_quadrature_agreement(self):
        # independent oracle: same rule at 10x the grid density
        spec = ThermalKernelSpec(1.0, 0.2, 0.5)
        fine = ThermalKernelSpec(
            1.0, 0.2, 0.5,
            grid=FrequencyGrid(spec.grid.min, spec.grid.max, 10 * spec.grid.n),
        )
        assert abs(eval_thermal_kernel(spec, 1.0) - eval_thermal_kernel(fine, 1.0)) < 1e-6

    @pytest.mark.parametrize("temperature", [0.0, 0.3, 2.0])
    def test_hermitian_symmetry(self, temperature):
        spec = ThermalKernelSpec(1.0, 0.2, temperature)
        taus = np.linspace(0.1, 10, 37)
        diff = eval_thermal_kernel(spec, -taus) - eval_thermal_kernel(spec, taus).conj()
        assert np.abs(diff).max() < 1e-14

    def test_zero_temperature_continuity(self):
        # invariant: T = 1e-6 within 1e-4 of the T = 0 discretized kernel
        taus = np.linspace(0.0, 5.0 / 0.2, 200)
        cold = eval_thermal_kernel(ThermalKernelSpec(1.0, 0.2, 1e-6), taus)
        zero = eval_thermal_kernel(ThermalKernelSpec(1.0, 0.2, 0.0), taus)
        assert np.abs(cold - zero).max() < 1e-4

    def test_degenerate_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            ThermalKernelSpec(1.0, 0.2, 0.0, grid=FrequencyGrid(1e-3, 4.0, 2))

    def test_negative_temperature_rejected(self):
        with pytest.raises(ConfigurationError):
            ThermalKernelSpec(1.0, 0.2, -0.1)


class TestFitExponential:
    def test_exact_recovery_real(self):
        k = ExponentialKernel(0.1, 0.2)
        lags = np.arange(11.0)
        fit = fit_exponential((l, eval_kernel(k, l)) for l in lags)
        assert fit.kernel.amplitude == pytest.approx(0.1, abs=1e-12)
        assert fit.kernel.decay == pytest.approx(0.2, abs=1e-10)
        assert fit.kernel.modulation == 0.0
        assert fit.residual < 1e-10

    def test_exact_recovery_complex(self):
        k = ExponentialKernel(0.1, 0.2, 0.7)
        lags = np.arange(11.0)
        fit = fit_exponential((l, eval_kernel(k, l)) for l in lags)
        assert fit.kernel.amplitude == pytest.approx(0.1, abs=1e-10)
        assert fit.kernel.decay == pytest.approx(0.2, abs=1e-8)
        assert fit.kernel.modulation == pytest.approx(0.7, abs=1e-8)
        assert fit.residual < 1e-8

    def test_thermal_fit_regression(self):
        # frozen after the first verified run of this configuration
        spec = ThermalKernelSpec(1.0, 0.2, 0.1)
        lags = np.linspace(0.0, 25.0, 64)
        fit = fit_exponential(zip(lags, eval_thermal_kernel(spec, lags)))
        assert fit.residual == pytest.approx(0.06099988790060928, rel=1e-9)
        assert fit.kernel.amplitude == pytest.approx(0.18619548976983452, rel=1e-9)
        assert fit.kernel.decay == pytest.approx(0.028084456595850484, rel=1e-9)

    def test_zero_crossing_rejected(self):
        lags = np.array([0.0, 0.5, np.pi / 4.0, 1.5, 2.0])
        vals = 0.5 * np.cos(2.0 * lags)  # crosses zero at pi/4
        with pytest.raises(FitError, match="zero"):
            fit_exponential(zip(lags, vals))

    def test_missing_zero_lag_rejected(self):
        with pytest.raises(FitError):
            fit_exponential([(1.0, 0.5), (2.0, 0.4), (3.0, 0.3)])

    def test_too_few_samples_rejected(self):
        with pytest.raises(FitError):
            fit_exponential([(0.0, 1.0), (1.0, 0.5)])


class TestHamiltonianShift:
    def test_real_kernel_gives_zero(self):
        k = ExponentialKernel(0.1, 0.2)
        assert hamiltonian_shift_v(k, 3.7) == 0.0

    def test_zero_time_gives_zero(self):
        k = ExponentialKernel(0.1, 0.2, 1.0)
        assert hamiltonian_shift_v(k, 0.0) == 0.0

    @pytest.mark.parametrize("t", [0.5, 2.0, 10.0])
    def test_against_quadrature(self, t):
        k = ExponentialKernel(0.1, 0.2, 1.0)
        oracle, err = quad(lambda s: 4.0 * eval_kernel(k, s).imag, 0.0, t, epsabs=1e-12)
        assert hamiltonian_shift_v(k, t) == pytest.approx(oracle, abs=max(1e-9, 10 * err))

    def test_negative_time_rejected(self):
        with pytest.raises(ConfigurationError):
            hamiltonian_shift_v(ExponentialKernel(0.1, 0.2, 1.0), -1.0)


class TestKernelJson:
    def test_ou(self):
        k = kernel_from_json({"type": "ou", "Gamma": 1.0, "gamma": 0.2})
        assert isinstance(k, ExponentialKernel)
        assert k.amplitude == pytest.approx(0.1)
        assert k.modulation == 0.0

    def test_complex_exp(self):
        k = kernel_from_json({"type": "complex-exp", "Gamma": 1.0, "gamma": 0.2, "Omega": 0.7})
        assert k.modulation == 0.7

    def test_thermal(self):
        k = kernel_from_json(
            {"type": "thermal", "Gamma": 1.0, "gamma": 0.2, "T": 0.5,
             "grid": {"min": 1e-3, "max": 4.0, "n": 500}}
        )
        assert isinstance(k, ThermalKernelSpec)
        assert k.temperature == 0.5
        assert k.grid.n == 500

    def test_unknown_fields_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            kernel_from_json({"type": "ou", "Gamma": 1.0, "gamma": 0.2, "color": "blue"})
        with pytest.raises(ConfigurationError, match="unknown"):
            kernel_from_json({"type": "ou", "Gamma": 1.0, "gamma": 0.2, "Omega": 0.5})

    def test_unknown_type_rejected(self):
        with pytest.raises(ConfigurationError):
            kernel_from_json({"type": "lorentz", "Gamma": 1.0, "gamma": 0.2})

    def test_missing_fields_rejected(self):
        with pytest.raises(ConfigurationError):
            kernel_from_json({"type": "ou", "Gamma": 1.0})
