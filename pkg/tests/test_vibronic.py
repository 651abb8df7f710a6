import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ive

from defectspec.errors import DomainError, TruncationError
from defectspec.vibronic import (PhononMode, VibronicSystem, bose_occupation, combined_lines,
                                 debye_waller, franck_condon_column, franck_condon_factor,
                                 franck_condon_matrix, overlap_oracle, sideband_weights)
from defectspec.constants import KB_MEV_PER_K


def poisson(S, m):
    return math.exp(-S) * S ** m / math.factorial(m)


class TestFranckCondonFactor:
    def test_one_phonon_at_unit_coupling(self):
        assert franck_condon_factor(1.0, 1, 0) == pytest.approx(math.exp(-1), abs=1e-15)

    @pytest.mark.parametrize("k", [0, 1, 5, 30])
    def test_zero_displacement_is_identity(self, k):
        assert franck_condon_factor(0.0, k, k) == 1.0
        assert franck_condon_factor(0.0, k, k + 1) == 0.0
        assert franck_condon_factor(0.0, k + 3, k) == 0.0

    def test_mixed_counts_value(self):
        # frozen from Gauss-Hermite quadrature of the displaced-oscillator overlap
        expected = 0.3411734960883564
        assert overlap_oracle(0.5, 2, 1) == pytest.approx(expected, abs=1e-12)
        assert franck_condon_factor(0.5, 2, 1) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("args", [(-0.1, 0, 0), (1.0, -1, 0), (1.0, 0, -2), (1.0, 1.5, 0)])
    def test_domain_errors(self, args):
        with pytest.raises(DomainError):
            franck_condon_factor(*args)

    @pytest.mark.parametrize("S", [0.1, 0.5, 1.0, 2.0, 5.0])
    def test_poisson_row(self, S):
        for n in range(25):
            assert franck_condon_factor(S, n, 0) == pytest.approx(poisson(S, n), rel=1e-12, abs=1e-300)

    @given(S=st.floats(0.0, 10.0), n=st.integers(0, 60), m=st.integers(0, 60))
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, S, n, m):
        f = franck_condon_factor(S, n, m)
        assert f == franck_condon_factor(S, m, n)
        assert 0.0 <= f <= 1.0 + 1e-12

    @pytest.mark.parametrize("S", [0.1, 0.5, 1.0, 2.0, 5.0])
    def test_matrix_matches_scalar(self, S):
        F = franck_condon_matrix(S, 40)
        for n in (0, 3, 17, 40):
            for m in (0, 2, 11, 40):
                assert F[n, m] == pytest.approx(franck_condon_factor(S, n, m), rel=1e-10, abs=1e-300)

    @pytest.mark.parametrize("S", [0.1, 0.5, 1.0, 2.0, 5.0])
    @pytest.mark.parametrize("n_star", [0, 3, 9, 15])
    def test_completeness(self, S, n_star):
        col = franck_condon_column(S, n_star, tol=1e-12)
        assert abs(col.sum() - 1.0) < 1e-9


class TestOverlapOracle:
    def test_ground_state(self):
        assert overlap_oracle(1.0, 0, 0) == pytest.approx(math.exp(-1.0), abs=1e-14)

    @pytest.mark.parametrize("k", [0, 4, 20])
    def test_no_displacement(self, k):
        assert overlap_oracle(0.0, k, k) == pytest.approx(1.0, abs=1e-12)

    def test_self_consistency(self):
        assert abs(overlap_oracle(2.0, 3, 1) - franck_condon_factor(2.0, 3, 1)) < 1e-8

    def test_limits(self):
        with pytest.raises(DomainError):
            overlap_oracle(11.0, 0, 0)
        with pytest.raises(DomainError):
            overlap_oracle(1.0, 31, 0)

    @pytest.mark.parametrize("S", [0.1, 0.5, 1.0, 2.0, 5.0])
    def test_agrees_with_laguerre_route(self, S):
        for n in range(16):
            for m in range(16):
                assert abs(overlap_oracle(S, n, m) - franck_condon_factor(S, n, m)) <= 1e-8


class TestBose:
    def test_zero_temperature(self):
        assert bose_occupation(180.0, 0.0) == 0.0

    def test_forced_unity(self):
        T = 40.0
        e = KB_MEV_PER_K * T * math.log(2.0)
        assert bose_occupation(e, T) == pytest.approx(1.0, rel=1e-12)

    def test_room_temperature_optical_phonon(self):
        assert KB_MEV_PER_K * 300 == pytest.approx(25.852, abs=5e-4)
        # 1 / (exp(180 / 25.852) - 1)
        assert bose_occupation(180.0, 300.0) == pytest.approx(9.474239e-4, rel=1e-5)

    def test_cold_limit_does_not_overflow(self):
        assert bose_occupation(180.0, 0.5) == 0.0
        assert sideband_weights(PhononMode(180.0, 1.0), 1.0).weight(0) == pytest.approx(math.exp(-1))

    def test_preconditions(self):
        with pytest.raises(DomainError):
            bose_occupation(0.0, 10.0)
        with pytest.raises(DomainError):
            bose_occupation(10.0, -1.0)


class TestDebyeWaller:
    def test_zero_temperature(self):
        assert debye_waller([PhononMode(180.0, 1.0)], 0.0) == math.exp(-1.0)

    def test_uncoupled(self):
        assert debye_waller([PhononMode(50.0, 0.0)], 500.0) == 1.0

    def test_room_temperature(self):
        assert debye_waller([PhononMode(180.0, 1.0)], 300.0) == pytest.approx(0.367183, abs=1e-6)

    def test_monotone_in_temperature(self):
        modes = [PhononMode(180.0, 1.0), PhononMode(30.0, 0.3)]
        vals = [debye_waller(modes, T) for T in np.linspace(0, 800, 161)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert 0 < vals[-1] <= 1


class TestSidebandWeights:
    def test_poisson_at_zero_temperature(self):
        sb = sideband_weights(PhononMode(180.0, 1.0), 0.0)
        assert sb.net_phonon_min == 0
        np.testing.assert_allclose(sb.weights[:4], [0.3679, 0.3679, 0.1839, 0.0613], atol=5e-5)
        for m, w in zip(sb.net_phonons, sb.weights):
            assert abs(w - poisson(1.0, int(m))) <= 1e-12
        assert sb.mean == pytest.approx(1.0, abs=1e-9)

    def test_uncoupled(self):
        sb = sideband_weights(PhononMode(180.0, 0.0), 0.0)
        assert sb.net_phonon_min == 0 and list(sb.weights) == [1.0]

    def test_anti_stokes_at_room_temperature(self):
        S, T = 1.0, 300.0
        sb = sideband_weights(PhononMode(180.0, S), T)
        nbar = bose_occupation(180.0, T)
        w = sb.weight(-1)
        assert 0 < w < 1e-3
        assert w == pytest.approx(nbar * math.exp(-S * (2 * nbar + 1)) * S, rel=2e-3)

    @pytest.mark.parametrize("S,energy,T", [(1.0, 180.0, 300.0), (2.0, 20.0, 300.0), (0.3, 10.0, 77.0)])
    def test_thermal_closed_form(self, S, energy, T):
        # exp(-S(2n+1)) I_m(2S sqrt(n(n+1))) ((n+1)/n)^(m/2)
        nbar = bose_occupation(energy, T)
        z = 2 * S * math.sqrt(nbar * (nbar + 1))
        sb = sideband_weights(PhononMode(energy, S), T)
        for m, w in zip(sb.net_phonons, sb.weights):
            ref = math.exp(-S * (2 * nbar + 1) + z) * ive(abs(m), z) * ((nbar + 1) / nbar) ** (m / 2)
            assert w == pytest.approx(ref, rel=1e-8, abs=1e-12)
        assert sb.total >= 1 - 1e-9
        assert sb.mean == pytest.approx(S, rel=1e-8)

    def test_no_anti_stokes_at_zero_temperature(self):
        assert sideband_weights(PhononMode(20.0, 3.0), 0.0).net_phonon_min == 0

    def test_debye_waller_matches_zero_phonon_weight(self):
        for S in (0.1, 1.0, 4.0):
            assert sideband_weights(PhononMode(100.0, S), 0.0).weight(0) == \
                pytest.approx(debye_waller([PhononMode(100.0, S)], 0.0), abs=1e-15)

    def test_truncation_error(self):
        with pytest.raises(TruncationError):
            sideband_weights(PhononMode(50.0, 400.0), 0.0)

    def test_tolerance_range(self):
        with pytest.raises(DomainError):
            sideband_weights(PhononMode(50.0, 1.0), 0.0, truncation_tolerance=0.01)


def test_two_mode_lines_convolve():
    a, b = PhononMode(180.0, 1.0), PhononMode(50.0, 0.5)
    off, w, n = combined_lines([a, b])
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    # joint weight of (1 of a, 2 of b)
    sel = np.isclose(off, 180.0 + 100.0) & (n == 3)
    assert w[sel].sum() == pytest.approx(poisson(1.0, 1) * poisson(0.5, 2), rel=1e-12)


def test_system_invariants():
    sys = VibronicSystem(2.0, [PhononMode(100.0, 1.0)], 190.0, -10.0)
    assert sys.emission_dipole_deg == pytest.approx(10.0)
    assert sys.absorption_dipole_deg == pytest.approx(170.0)
    with pytest.raises(DomainError):
        VibronicSystem(0.0, [PhononMode(100.0, 1.0)])
    with pytest.raises(DomainError):
        VibronicSystem(2.0, [])
    with pytest.raises(DomainError):
        PhononMode(0.0, 1.0)


def test_thread_safe_and_deterministic():
    args = [(S, n, m) for S in (0.5, 2.0) for n in range(10) for m in range(10)]
    serial = [franck_condon_factor(*a) for a in args]
    with ThreadPoolExecutor(4) as ex:
        parallel = list(ex.map(lambda a: franck_condon_factor(*a), args))
    assert serial == parallel
