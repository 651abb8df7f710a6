import numpy as np
import pytest

from defectspec.errors import DomainError, FitError
from defectspec.photostats import (CorrelationTrace, DecayHistogram, fit_g2, fit_lifetime, g2_model,
                                   is_single_emitter)
from defectspec.synth import NoiseSpec, generate_decay, generate_g2

TAU = np.linspace(-50, 50, 201)
T = np.arange(1000) * 0.1


class TestG2:
    def test_flat_trace(self):
        fit = fit_g2(CorrelationTrace(TAU, np.ones_like(TAU)))
        assert fit.dip_depth == pytest.approx(0.0, abs=1e-9)
        assert fit.g2_zero == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("a,tc", [(1.0, 3.0), (0.9, 3.0), (0.6, 1.2), (0.3, 8.0)])
    def test_noiseless_recovery(self, a, tc):
        fit = fit_g2(CorrelationTrace(TAU, g2_model(TAU, a, tc)))
        assert fit.dip_depth == pytest.approx(a, abs=1e-6)
        assert fit.correlation_time_ns == pytest.approx(tc, abs=1e-6)
        assert fit.g2_zero == pytest.approx(1 - a, abs=1e-6)
        assert fit.background == pytest.approx(1.0, abs=1e-9)
        assert fit.iterations <= 200

    def test_time_reversal(self):
        tr = generate_g2(0.8, 2.5, TAU, NoiseSpec(seed=11))
        f1 = fit_g2(tr)
        f2 = fit_g2(CorrelationTrace(-tr.tau_ns[::-1], tr.g2[::-1], tr.g2_err[::-1]))
        # equal up to solver termination; summation order differs
        assert f2.g2_zero == pytest.approx(f1.g2_zero, abs=1e-6)
        assert f2.correlation_time_ns == pytest.approx(f1.correlation_time_ns, rel=1e-6)

    def test_amplitude_scaling(self):
        g = g2_model(TAU, 0.7, 4.0) + 0.01 * np.cos(TAU)
        f1 = fit_g2(CorrelationTrace(TAU, g))
        f2 = fit_g2(CorrelationTrace(TAU, 3.0 * g))
        assert f2.g2_zero == pytest.approx(f1.g2_zero, abs=1e-8)
        assert f2.background == pytest.approx(3.0 * f1.background, rel=1e-8)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            fit_g2(CorrelationTrace(TAU[:10], np.ones(10)))

    def test_no_signal(self):
        with pytest.raises(FitError):
            fit_g2(CorrelationTrace(TAU, np.zeros_like(TAU)))

    def test_fit_error_has_diagnostics(self):
        err = FitError("x", {"nfev": 200})
        assert err.to_dict()["diagnostics"]["nfev"] == 200

    def test_poisson_monte_carlo(self):
        single = 0
        for seed in range(500):
            fit = fit_g2(generate_g2(0.9, 3.0, TAU, NoiseSpec(seed=seed)))
            single += is_single_emitter(fit.g2_zero, fit.g2_zero_err) == "single"
        assert single >= 495


class TestVerdict:
    def test_examples(self):
        assert is_single_emitter(0.1, 0.05) == "single"
        assert is_single_emitter(0.7, 0.05) == "not_single"
        assert is_single_emitter(0.48, 0.05) == "inconclusive"


class TestLifetime:
    @pytest.mark.parametrize("tau", [1.5, 3.0, 8.0])
    def test_noiseless(self, tau):
        fit = fit_lifetime(generate_decay(tau, 1e5, T), (0.0, 4.0))
        assert fit.tau_ns == pytest.approx(tau, rel=1e-6)
        assert fit.background == pytest.approx(2.0)

    def test_background_after_decay(self):
        t = np.arange(3000) * 0.1
        fit = fit_lifetime(generate_decay(3.0, 1e5, t), (250.0, 299.0))
        assert fit.tau_ns == pytest.approx(3.0, rel=1e-3)

    def test_time_rescaling(self):
        c = 2.5
        h = generate_decay(3.0, 1e5, T)
        f1 = fit_lifetime(h, (0.0, 4.0))
        f2 = fit_lifetime(DecayHistogram(c * h.time_ns, h.counts), (0.0, 4.0 * c), skip_ns=c)
        assert f2.tau_ns == pytest.approx(c * f1.tau_ns, rel=1e-8)

    def test_amplitude_scaling(self):
        h = generate_decay(3.0, 1e5, T, background_per_bin=0.0)
        f1 = fit_lifetime(h, (0.0, 4.0))
        f2 = fit_lifetime(DecayHistogram(h.time_ns, 7 * h.counts), (0.0, 4.0))
        assert f2.tau_ns == pytest.approx(f1.tau_ns, rel=1e-8)

    def test_poisson_within_five_percent(self):
        for seed in range(100):
            fit = fit_lifetime(generate_decay(3.0, 1e5, T, noise=NoiseSpec(seed=seed)), (0.0, 4.0))
            assert abs(fit.tau_ns - 3.0) <= 0.15

    def test_rising_tail(self):
        t = np.arange(150) * 0.1
        y = np.full(150, 2.0)
        y[50] = 1000.0
        y[51:] = np.linspace(10.0, 100.0, 99)
        with pytest.raises(FitError):
            fit_lifetime(DecayHistogram(t, y), (0.0, 4.0))

    def test_window_checks(self):
        h = generate_decay(3.0, 1e5, T)
        with pytest.raises(DomainError):
            fit_lifetime(h, (4.0, 1.0))
        with pytest.raises(DomainError):
            fit_lifetime(h, (5.0, 20.0))
        with pytest.raises(DomainError):
            fit_lifetime(DecayHistogram(T[:60], h.counts[:60]), (0.0, 4.0))
