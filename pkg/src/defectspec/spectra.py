"""Band synthesis, spectral-density conversions, and peak finding.

Energies on spectrum axes are in eV; Stokes axes are in meV. No operation
resamples implicitly: every output lives on the grid it was given or on a
pointwise transform of it.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks, peak_widths

from . import kernels
from .constants import HC_EV_NM
from .errors import DomainError, PeakNotFoundError, SamplingError
from .vibronic import VibronicSystem, combined_lines

AXIS_KINDS = ("wavelength_nm", "energy_ev", "stokes_mev")
UNITS_KINDS = ("counts_per_wavelength", "counts_per_energy", "band_density")


@dataclass(frozen=True)
class Spectrum:
    """Intensity sampled on a strictly monotone axis."""

    axis_kind: str
    axis: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    units_kind: str = "counts_per_energy"

    def __post_init__(self):
        if self.axis_kind not in AXIS_KINDS:
            raise DomainError(f"unknown axis kind {self.axis_kind!r}")
        if self.units_kind not in UNITS_KINDS:
            raise DomainError(f"unknown units kind {self.units_kind!r}")
        axis = np.asarray(self.axis, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if axis.ndim != 1 or axis.shape != values.shape:
            raise DomainError("axis and values must be 1-D and of equal length")
        if len(axis) > 1:
            d = np.diff(axis)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise DomainError("axis must be strictly monotone")
        if np.any(values < 0):
            raise DomainError("spectrum values must be non-negative")
        axis.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.axis)

    def scaled(self, factor):
        return replace(self, values=self.values * factor)

    def integral(self):
        """Trapezoidal area, sign-independent of axis direction."""
        return abs(float(np.trapezoid(self.values, self.axis)))


@dataclass(frozen=True)
class LineshapeSpec:
    """Unit-area line profile; sideband width grows linearly with phonon count."""

    kind: str = "gaussian"
    zpl_fwhm_mev: float = 10.0
    sideband_fwhm_growth_mev: float = 10.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "lorentzian"):
            raise DomainError(f"unknown lineshape {self.kind!r}")
        if not (self.zpl_fwhm_mev > 0 and self.sideband_fwhm_growth_mev > 0):
            raise DomainError("lineshape widths must be positive")

    def fwhm_mev(self, phonon_count):
        return self.zpl_fwhm_mev + np.asarray(phonon_count) * self.sideband_fwhm_growth_mev


@dataclass(frozen=True)
class BandModel:
    system: VibronicSystem
    lineshape: LineshapeSpec = LineshapeSpec()
    oscillator_strength: float = 1.0
    temperature_k: float = 0.0
    truncation_tolerance: float = 1e-9

    def __post_init__(self):
        if not self.oscillator_strength > 0:
            raise DomainError("oscillator strength must be positive")
        if self.temperature_k < 0:
            raise DomainError("temperature must be >= 0")


@dataclass(frozen=True)
class PeakReport:
    zpl_energy_ev: float
    zpl_energy_err_ev: float
    sideband_energies_ev: tuple
    sideband_energies_err_ev: tuple
    phonon_energy_mev: float
    phonon_energy_err_mev: float


def band_lines(model, sign=-1):
    """Line centres (eV), weights (sum ~ 1) and FWHMs (meV) of a band.

    ``sign=-1`` gives emission (sidebands below the ZPL), ``+1`` absorption.
    """
    offsets, weights, counts = combined_lines(
        model.system.modes, model.temperature_k, model.truncation_tolerance)
    centres = model.system.zpl_energy_ev + sign * offsets * 1e-3
    return centres, weights, model.lineshape.fwhm_mev(counts)


def _check_energy_grid(grid, fwhm_mev):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise DomainError("grid must be a 1-D array with at least two samples")
    step_mev = float(np.max(np.abs(np.diff(grid)))) * 1e3
    if step_mev * 4 > fwhm_mev * (1 + 1e-9):
        raise SamplingError(
            f"grid step {step_mev:.3g} meV gives fewer than 4 samples per {fwhm_mev:.3g} meV FWHM")
    return grid


def _synthesize(model, grid, sign):
    grid = _check_energy_grid(grid, model.lineshape.zpl_fwhm_mev)
    centres, weights, fwhms = band_lines(model, sign)
    # integrate over energy in eV: widths must be in eV too
    values = kernels.render_lines(grid, centres, weights, fwhms * 1e-3, model.lineshape.kind)
    return Spectrum("energy_ev", grid, model.oscillator_strength * values, "band_density")


def synthesize_emission_band(model, grid):
    """Emission band ``W0 sum_m W_m f(E - (E_ZPL - m hw))`` on an energy grid (eV)."""
    return _synthesize(model, grid, -1)


def synthesize_absorption_band(model, grid):
    """Absorption band; lines at ``E_ZPL + m hw`` with the same weights as emission."""
    return _synthesize(model, grid, +1)


def band_to_luminescence(band):
    """Inverse of :func:`luminescence_to_emission_band`: multiply by ``E**3``."""
    _require_positive_energy(band)
    return Spectrum("energy_ev", band.axis, band.values * band.axis ** 3, "counts_per_energy")


def _require_positive_energy(s):
    if s.axis_kind != "energy_ev":
        raise DomainError(f"expected an energy axis, got {s.axis_kind}")
    if np.any(s.axis <= 0):
        raise DomainError("energy axis must be strictly positive")


def wavelength_counts_to_energy_counts(s):
    """Counts per nm on a wavelength axis to counts per eV on an ascending energy axis."""
    if s.axis_kind != "wavelength_nm" or s.units_kind != "counts_per_wavelength":
        raise DomainError("expected a wavelength_nm / counts_per_wavelength spectrum")
    if np.any(s.axis <= 0):
        raise DomainError("wavelengths must be positive")
    lam = s.axis
    energy = HC_EV_NM / lam
    values = s.values * lam ** 2 / HC_EV_NM
    order = np.argsort(energy)
    return Spectrum("energy_ev", energy[order], values[order], "counts_per_energy")


def energy_counts_to_wavelength_counts(s):
    """Counts per eV to counts per nm, ascending in wavelength."""
    if s.axis_kind != "energy_ev" or s.units_kind != "counts_per_energy":
        raise DomainError("expected an energy_ev / counts_per_energy spectrum")
    if np.any(s.axis <= 0):
        raise DomainError("energies must be positive")
    energy = s.axis
    lam = HC_EV_NM / energy
    values = s.values * energy ** 2 / HC_EV_NM
    order = np.argsort(lam)
    return Spectrum("wavelength_nm", lam[order], values[order], "counts_per_wavelength")


def luminescence_to_emission_band(s):
    """Divide a luminescence spectrum by ``E**3`` (density of optical states)."""
    if s.units_kind != "counts_per_energy":
        raise DomainError("expected counts_per_energy units")
    _require_positive_energy(s)
    return Spectrum("energy_ev", s.axis, s.values / s.axis ** 3, "band_density")


def mirror_band(band, zpl_energy_ev):
    """Reflect a band about ``zpl_energy_ev``; the output axis is ascending."""
    if band.units_kind != "band_density":
        raise DomainError("mirror_band expects band_density units")
    if band.axis_kind != "energy_ev":
        raise DomainError("mirror_band expects an energy axis")
    axis = 2.0 * zpl_energy_ev - band.axis
    order = np.argsort(axis)
    return Spectrum("energy_ev", axis[order], band.values[order], "band_density")


def to_stokes_axis(band, zpl_energy_ev):
    """Shift an energy axis by ``-E_ZPL`` and express it in meV."""
    if band.axis_kind != "energy_ev":
        raise DomainError("to_stokes_axis expects an energy axis")
    return Spectrum("stokes_mev", (band.axis - zpl_energy_ev) * 1e3, band.values, band.units_kind)


def absorption_profile_from_luminescence(lum, zpl_energy_ev):
    """Luminescence -> E^-3 band -> mirror -> Stokes axis, i.e. ``W(dE)``."""
    band = luminescence_to_emission_band(lum)
    return to_stokes_axis(mirror_band(band, zpl_energy_ev), zpl_energy_ev)


def _refine_peak(x, y, i, half_window):
    """Vertex of a local quadratic fit around sample ``i`` and its standard error."""
    lo = max(0, i - half_window)
    hi = min(len(x), i + half_window + 1)
    xs = x[lo:hi] - x[i]
    ys = y[lo:hi]
    if len(xs) < 5:
        return float(x[i]), float(abs(x[1] - x[0]))
    coef, cov = np.polyfit(xs, ys, 2, cov=True)
    a, b, _ = coef
    if a >= 0:
        return float(x[i]), float(abs(x[1] - x[0]))
    x0 = -b / (2.0 * a)
    # d x0 / d(a, b)
    g = np.array([b / (2.0 * a * a), -1.0 / (2.0 * a)])
    var = float(g @ cov[:2, :2] @ g)
    step = abs(x[1] - x[0])
    if abs(x0) > step * half_window:
        return float(x[i]), float(step)
    return float(x[i] + x0), math.sqrt(max(var, 0.0))


def find_zpl_and_sidebands(s, min_prominence=0.05, emission=True, smoothing_samples=2.0):
    """Locate the zero-phonon line and phonon replicas of a spectrum.

    Peaks are detected on a lightly smoothed copy with a prominence threshold
    of ``min_prominence`` times the maximum, then refined by a quadratic fit to
    the raw samples near each maximum. For emission the ZPL is the
    highest-energy peak. The phonon energy is the inverse-variance weighted
    mean of consecutive peak spacings.
    """
    if s.axis_kind != "energy_ev":
        raise DomainError("peak finding expects an energy axis")
    if len(s) < 16:
        raise DomainError("peak finding needs at least 16 samples")
    order = np.argsort(s.axis)
    x = s.axis[order]
    y = s.values[order]
    smooth = gaussian_filter1d(y, smoothing_samples, mode="nearest") if smoothing_samples > 0 else y
    top = float(smooth.max())
    if top <= 0:
        raise PeakNotFoundError("spectrum has no signal")
    idx, _ = find_peaks(smooth, prominence=min_prominence * top)
    if len(idx) == 0:
        raise PeakNotFoundError(f"no peak above {min_prominence:.3g} of maximum")
    widths = peak_widths(smooth, idx, rel_height=0.5)[0]

    positions, errors = [], []
    step = float(np.median(np.diff(x)))
    for i, w in zip(idx, widths):
        half = max(2, int(round(0.5 * w)))
        raw_i = int(np.argmax(y[max(0, i - half): i + half + 1])) + max(0, i - half)
        pos, err = _refine_peak(x, y, raw_i, half)
        positions.append(pos)
        errors.append(max(err, 1e-3 * step))
    positions = np.array(positions)
    errors = np.array(errors)
    srt = np.argsort(positions)
    if emission:
        srt = srt[::-1]
    positions, errors = positions[srt], errors[srt]

    if len(positions) == 1:
        return PeakReport(float(positions[0]), float(errors[0]), (), (), float("nan"), float("nan"))
    spacing = np.abs(np.diff(positions)) * 1e3
    spacing_err = np.hypot(errors[1:], errors[:-1]) * 1e3
    w = 1.0 / spacing_err ** 2
    mean = float(np.sum(w * spacing) / np.sum(w))
    return PeakReport(
        zpl_energy_ev=float(positions[0]),
        zpl_energy_err_ev=float(errors[0]),
        sideband_energies_ev=tuple(float(p) for p in positions[1:]),
        sideband_energies_err_ev=tuple(float(e) for e in errors[1:]),
        phonon_energy_mev=mean,
        phonon_energy_err_mev=float(1.0 / math.sqrt(np.sum(w))),
    )
