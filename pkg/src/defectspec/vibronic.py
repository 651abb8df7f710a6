"""Franck-Condon factors and phonon sideband weights for linear displaced modes.

All energies of phonon quanta are in meV, temperatures in K. Functions here are
pure and deterministic.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial.hermite import hermgauss

from . import kernels
from .constants import KB_MEV_PER_K
from .errors import DomainError, NumericalError, TruncationError

#: Initial-occupation sums stop once this much Bose weight is covered.
THERMAL_COVERAGE = 1.0 - 1e-12
#: Hard cap on initial phonon occupation in thermal sums.
THERMAL_N_CAP = 200
#: Hard cap on final phonon number when searching for sideband coverage.
FINAL_N_CAP = 600


@dataclass(frozen=True)
class PhononMode:
    """One linear phonon mode: quantum ``energy_mev`` and Huang-Rhys factor.

    The Huang-Rhys factor already folds in the effective mass and the
    displacement of the potential minima, so neither is stored separately.
    """

    energy_mev: float
    huang_rhys: float

    def __post_init__(self):
        if not self.energy_mev > 0:
            raise DomainError(f"phonon energy must be positive, got {self.energy_mev}")
        if not self.huang_rhys >= 0:
            raise DomainError(f"Huang-Rhys factor must be >= 0, got {self.huang_rhys}")


@dataclass(frozen=True)
class VibronicSystem:
    """Two electronic states coupled to one or more phonon modes.

    Dipole angles describe axes, so they are stored reduced mod 180 degrees.
    """

    zpl_energy_ev: float
    modes: tuple
    emission_dipole_deg: float = 0.0
    absorption_dipole_deg: float = 0.0

    def __post_init__(self):
        if not self.zpl_energy_ev > 0:
            raise DomainError(f"ZPL energy must be positive, got {self.zpl_energy_ev}")
        modes = tuple(self.modes)
        if not modes:
            raise DomainError("a vibronic system needs at least one phonon mode")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "emission_dipole_deg", float(self.emission_dipole_deg) % 180.0)
        object.__setattr__(self, "absorption_dipole_deg", float(self.absorption_dipole_deg) % 180.0)

    @property
    def total_huang_rhys(self):
        return sum(m.huang_rhys for m in self.modes)


@dataclass(frozen=True)
class SidebandWeights:
    """Probability of a net change of ``m`` phonons, for ``m`` from ``net_phonon_min``."""

    net_phonon_min: int
    weights: np.ndarray = field(repr=False)

    @property
    def net_phonons(self):
        return np.arange(self.net_phonon_min, self.net_phonon_min + len(self.weights))

    def weight(self, m):
        i = m - self.net_phonon_min
        if 0 <= i < len(self.weights):
            return float(self.weights[i])
        return 0.0

    @property
    def total(self):
        return float(np.sum(self.weights))

    @property
    def mean(self):
        return float(np.dot(self.net_phonons, self.weights) / np.sum(self.weights))


def _check_counts(S, n, n_star):
    if S < 0 or not math.isfinite(S):
        raise DomainError(f"Huang-Rhys factor must be finite and >= 0, got {S}")
    if n < 0 or n_star < 0 or int(n) != n or int(n_star) != n_star:
        raise DomainError(f"phonon counts must be non-negative integers, got {n}, {n_star}")


def _laguerre(k, alpha, x):
    """``L_k^alpha(x)`` by upward recurrence, returned as ``(mantissa, log_scale)``."""
    prev, cur, log_scale = 0.0, 1.0, 0.0
    for j in range(1, k + 1):
        if j == 1:
            prev, cur = cur, 1.0 + alpha - x
        else:
            prev, cur = cur, ((2 * j - 1 + alpha - x) * cur - (j - 1 + alpha) * prev) / j
        if abs(cur) > 1e150:
            cur /= 1e150
            prev /= 1e150
            log_scale += math.log(1e150)
    return cur, log_scale


def franck_condon_factor(S, n, n_star):
    """Squared overlap of oscillator states ``n`` and ``n_star`` displaced by ``S``.

    For ``n >= n_star``::

        F = exp(-S) S**(n - n_star) (n_star! / n!) [L_{n_star}^{n - n_star}(S)]**2

    and ``F(n, n_star) = F(n_star, n)``. With ``n_star = 0`` this is the Poisson
    weight ``exp(-S) S**n / n!``.
    """
    _check_counts(S, n, n_star)
    n, n_star = int(n), int(n_star)
    lo, hi = min(n, n_star), max(n, n_star)
    if S == 0.0:
        return 1.0 if n == n_star else 0.0
    alpha = hi - lo
    lag, log_scale = _laguerre(lo, alpha, S)
    if lag == 0.0:
        return 0.0
    log_f = (-S + alpha * math.log(S) + math.lgamma(lo + 1) - math.lgamma(hi + 1)
             + 2.0 * (math.log(abs(lag)) + log_scale))
    return math.exp(log_f)


def franck_condon_matrix(S, n_max):
    """Table ``F[n, n_star]`` for all counts up to ``n_max`` (compiled kernel)."""
    _check_counts(S, n_max, 0)
    return kernels.fc_matrix(float(S), int(n_max))


def franck_condon_column(S, n_star, tol=1e-12, n_cap=FINAL_N_CAP):
    """``F(n, n_star)`` for ``n = 0..N`` with ``N`` grown until the column sums to ``1 - tol``."""
    _check_counts(S, 0, n_star)
    n_max = max(int(n_star) + 1, int(math.ceil(S + 10.0 * math.sqrt(S) + 10)) + int(n_star))
    while True:
        n_max = min(n_max, n_cap)
        col = franck_condon_matrix(S, n_max)[:, n_star]
        if col.sum() >= 1.0 - tol:
            return col
        if n_max >= n_cap:
            raise TruncationError(
                "Franck-Condon column did not reach tolerance",
                {"S": S, "n_star": n_star, "n_max": n_max, "sum": float(col.sum())},
            )
        n_max *= 2


def _hermite_functions(n_max, x):
    """Normalized oscillator eigenfunctions ``psi_0..psi_{n_max}`` at points ``x``."""
    psi = np.empty((n_max + 1, len(x)))
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        psi[1] = np.sqrt(2.0) * x * psi[0]
    for k in range(1, n_max):
        psi[k + 1] = np.sqrt(2.0 / (k + 1)) * x * psi[k] - np.sqrt(k / (k + 1)) * psi[k - 1]
    return psi


def _overlap_quadrature(S, n, n_star, n_nodes):
    d = math.sqrt(2.0 * S)
    y, w = hermgauss(n_nodes)
    # the integrand is polynomial times exp(-y^2) after centring between wells
    a = _hermite_functions(n, y + 0.5 * d)[n]
    b = _hermite_functions(n_star, y - 0.5 * d)[n_star]
    return float(np.sum(w * np.exp(y * y) * a * b))


def overlap_oracle(S, n, n_star):
    """Franck-Condon factor by direct Gauss-Hermite quadrature of the overlap integral.

    Independent of the Laguerre route; used to validate it. Raises
    :class:`NumericalError` if two node counts disagree beyond 1e-12.
    """
    _check_counts(S, n, n_star)
    n, n_star = int(n), int(n_star)
    if n > 30 or n_star > 30 or S > 10:
        raise DomainError("overlap_oracle supports n, n_star <= 30 and S <= 10")
    k = n + n_star + 20
    coarse = _overlap_quadrature(S, n, n_star, k)
    fine = _overlap_quadrature(S, n, n_star, 2 * k)
    if abs(coarse * coarse - fine * fine) > 1e-12:
        raise NumericalError(
            "overlap quadrature did not converge",
            {"S": S, "n": n, "n_star": n_star, "coarse": coarse ** 2, "fine": fine ** 2},
        )
    return fine * fine


def bose_occupation(energy_mev, temperature_k):
    """Mean Bose-Einstein occupation; exactly 0 at zero temperature."""
    if not energy_mev > 0:
        raise DomainError(f"phonon energy must be positive, got {energy_mev}")
    if temperature_k < 0:
        raise DomainError(f"temperature must be >= 0, got {temperature_k}")
    if temperature_k == 0:
        return 0.0
    x = energy_mev / (KB_MEV_PER_K * temperature_k)
    if x > 700.0:
        # 1 / (e^x - 1) == e^-x to double precision; avoids overflow
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def debye_waller(modes, temperature_k):
    """Zero-phonon fraction ``exp(-sum_k S_k (2 n_k + 1))``."""
    expo = 0.0
    for mode in modes:
        nbar = bose_occupation(mode.energy_mev, temperature_k)
        expo += mode.huang_rhys * (2.0 * nbar + 1.0)
    return math.exp(-expo)


def _bose_distribution(energy_mev, temperature_k):
    """Occupation probabilities ``P(n)`` truncated at :data:`THERMAL_COVERAGE`."""
    if temperature_k == 0:
        return np.array([1.0])
    x = energy_mev / (KB_MEV_PER_K * temperature_k)
    q = math.exp(-x)
    # geometric distribution: tail beyond N is q^(N+1)
    if q > 0:
        n_needed = int(math.ceil(math.log(1.0 - THERMAL_COVERAGE) / math.log(q)))
    else:
        n_needed = 1
    n_top = min(max(n_needed, 1), THERMAL_N_CAP)
    p = (1.0 - q) * q ** np.arange(n_top + 1)
    if p.sum() < THERMAL_COVERAGE:
        raise TruncationError(
            "thermal occupation exceeds the hard cap",
            {"energy_mev": energy_mev, "temperature_k": temperature_k, "cap": THERMAL_N_CAP},
        )
    return p


def sideband_weights(mode, temperature_k=0.0, truncation_tolerance=1e-9):
    """Distribution of net phonons created in emission by one mode.

    ``W_m = sum_n P(n) F(n + m, n)`` with ``P`` the Bose distribution of the
    initial occupation. At zero temperature this is Poisson(S) on ``m >= 0``.
    """
    if not 0 < truncation_tolerance <= 1e-3:
        raise DomainError("truncation_tolerance must lie in (0, 1e-3]")
    if temperature_k < 0:
        raise DomainError(f"temperature must be >= 0, got {temperature_k}")
    S = mode.huang_rhys
    p_init = _bose_distribution(mode.energy_mev, temperature_k)
    n_init = len(p_init) - 1
    if S == 0.0:
        return SidebandWeights(0, np.array([float(p_init.sum())]))

    m_top = int(math.ceil(S + 10.0 * math.sqrt(S) + 10))
    while True:
        n_max = n_init + m_top
        if n_max > FINAL_N_CAP:
            raise TruncationError(
                "sideband weights did not reach tolerance",
                {"S": S, "temperature_k": temperature_k, "n_max": n_max},
            )
        F = franck_condon_matrix(S, n_max)
        m_min = -n_init
        weights = np.empty(m_top - m_min + 1)
        for i, m in enumerate(range(m_min, m_top + 1)):
            ns = np.arange(max(0, -m), n_init + 1)
            weights[i] = np.dot(p_init[ns], F[ns + m, ns])
        if weights.sum() >= 1.0 - truncation_tolerance:
            break
        m_top *= 2

    # leading anti-Stokes entries that underflowed carry nothing
    nz = np.nonzero(weights > 0)[0]
    lo = min(int(nz[0]) if len(nz) else -m_min, -m_min)
    return SidebandWeights(m_min + int(lo), weights[lo:])


def combined_lines(modes, temperature_k=0.0, truncation_tolerance=1e-9, prune=1e-16):
    """Joint sideband lines of independent modes.

    Returns arrays ``(offset_mev, weight, phonon_count)``: the energy removed
    from the photon relative to the ZPL, the probability of that channel, and
    the total number of phonons exchanged (used for line broadening).
    """
    offsets = np.array([0.0])
    weights = np.array([1.0])
    counts = np.array([0])
    for mode in modes:
        sb = sideband_weights(mode, temperature_k, truncation_tolerance)
        m = sb.net_phonons
        offsets = (offsets[:, None] + m[None, :] * mode.energy_mev).ravel()
        weights = (weights[:, None] * sb.weights[None, :]).ravel()
        counts = (counts[:, None] + np.abs(m)[None, :]).ravel()
        keep = weights > prune
        offsets, weights, counts = offsets[keep], weights[keep], counts[keep]
    return offsets, weights, counts
