"""Polarization fitting of ``A + B cos^2(theta - theta0)`` and instrument calibration.

All angles are in degrees in the lab frame. Dipoles are axes, so orientations
are reported mod 180.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import kernels
from .constants import HC_EV_NM
from .errors import (CalibrationError, DegenerateDesignError, DomainError,
                     IncompleteCalibrationError, UnreliableCorrectionError)
from .spectra import Spectrum

REFERENCE_ANGLES_DEG = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)


def wrap_axis(theta_deg):
    """Reduce an orientation to ``[0, 180)``."""
    t = np.mod(theta_deg, 180.0)
    # np.mod(-tiny, 180) rounds to 180 itself
    return np.where(t >= 180.0, 0.0, t) if np.ndim(t) else (0.0 if t >= 180.0 else float(t))


def _wrap_signed(d):
    """Reduce an angular difference of axes to ``[-90, 90)``."""
    return np.mod(np.asarray(d) + 90.0, 180.0) - 90.0


@dataclass(frozen=True)
class Cos2Fit:
    """Result of a cos^2 fit. ``theta0_deg`` is NaN when the fit is degenerate."""

    offset_a: float
    amplitude_b: float
    theta0_deg: float
    residual_rms: float
    degenerate: bool
    theta0_err_deg: float = float("nan")
    chi2_red: float = float("nan")
    n_points: int = 0
    constrained: bool = False


@dataclass(frozen=True)
class AngleResolvedSpectrum:
    """One spectrum per polarizer angle on a shared axis.

    ``counts`` has shape ``(n_angles, n_axis)``.
    """

    angles_deg: np.ndarray
    axis: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    role: str = "emission_scan"
    axis_kind: str = "energy_ev"
    units_kind: str = "counts_per_energy"

    def __post_init__(self):
        angles = np.asarray(self.angles_deg, dtype=float)
        axis = np.asarray(self.axis, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if self.role not in ("absorption_scan", "emission_scan"):
            raise DomainError(f"unknown scan role {self.role!r}")
        if counts.shape != (len(angles), len(axis)):
            raise DomainError("counts must have shape (n_angles, n_axis)")
        if len(np.unique(angles)) != len(angles):
            raise DomainError("scan angles must be distinct")
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "counts", counts)

    def spectrum(self, i):
        return Spectrum(self.axis_kind, self.axis, self.counts[i], self.units_kind)

    def summed_spectrum(self):
        """Unpolarized spectrum: sum over angles."""
        return Spectrum(self.axis_kind, self.axis, self.counts.sum(axis=0), self.units_kind)

    def angular_profile(self):
        """Spectrally averaged profile: sum over the axis at each angle."""
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class SpectrallyResolvedPolarization:
    energies_ev: np.ndarray
    theta_deg: np.ndarray
    visibility: np.ndarray
    fit_quality: np.ndarray
    degenerate: np.ndarray
    total_counts: np.ndarray
    fits: tuple = field(repr=False, default=())

    def theta_at(self, energy_ev):
        """Orientation of the bin closest to ``energy_ev``."""
        return float(self.theta_deg[int(np.argmin(np.abs(self.energies_ev - energy_ev)))])


def poisson_weights(counts):
    """Inverse-variance weights for photon counts: variance ``max(count, 1)``."""
    return 1.0 / np.maximum(np.asarray(counts, dtype=float), 1.0)


def _check_design(angles):
    if len(angles) < 6:
        raise DomainError("cos^2 fitting needs at least 6 samples")
    distinct = np.unique(np.round(wrap_axis(angles), 9) % 180.0)
    if len(distinct) < 4:
        raise DegenerateDesignError("need at least 4 distinct angles mod 180 degrees")


def _solve_moments(xtwx, xtwy, angles, y, w, absolute_sigma):
    """Fit from precomputed normal equations. Shared by single and batched fits."""
    n = len(y)
    try:
        cond = np.linalg.cond(xtwx)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e12:
        if np.all(w == 0):
            return None
        raise DegenerateDesignError("design matrix is rank deficient")
    coef = np.linalg.solve(xtwx, xtwy)
    a, b, c = coef
    t = np.deg2rad(2.0 * angles)
    model = a + b * np.cos(t) + c * np.sin(t)
    resid = y - model
    chi2 = float(np.sum(w * resid * resid))
    dof = max(n - 3, 1)
    cov = np.linalg.inv(xtwx)
    if not absolute_sigma:
        cov = cov * chi2 / dof
    r = math.hypot(b, c)
    scale = max(abs(a), r, 1e-300)
    if r > 1e-12 * scale:
        var_r = (b * b * cov[1, 1] + c * c * cov[2, 2] + 2 * b * c * cov[1, 2]) / (r * r)
        var_phi = (c * c * cov[1, 1] + b * b * cov[2, 2] - 2 * b * c * cov[1, 2]) / r ** 4
        sigma_r = math.sqrt(max(var_r, 0.0))
        theta_err = 0.5 * math.degrees(math.sqrt(max(var_phi, 0.0)))
    else:
        sigma_r = math.inf
        theta_err = math.nan
    degenerate = not (r > 1e-12 * scale and r >= 2.0 * sigma_r)
    return dict(a=a, r=r, theta=wrap_axis(0.5 * math.degrees(math.atan2(c, b))),
                resid=resid, chi2=chi2, dof=dof, theta_err=theta_err, degenerate=degenerate)


def _fit_zero_offset(angles, y, w):
    """Best ``B cos^2(theta - theta0)`` with ``A`` pinned to 0."""

    def profile(theta0):
        g = np.cos(np.deg2rad(angles - theta0)) ** 2
        den = float(np.sum(w * g * g))
        B = max(float(np.sum(w * y * g)) / den, 0.0) if den > 0 else 0.0
        res = y - B * g
        return float(np.sum(w * res * res)), B

    def slope(theta0):
        # d chi2 / d theta0 at the profiled B, up to a positive factor
        _, B = profile(theta0)
        x = np.deg2rad(angles - theta0)
        return float(np.sum(w * (y - B * np.cos(x) ** 2) * np.sin(2.0 * x)))

    grid = np.arange(0.0, 180.0, 1.0)
    best = grid[int(np.argmin([profile(t)[0] for t in grid]))]
    lo, hi = best - 1.0, best + 1.0
    if slope(lo) * slope(hi) < 0:
        theta0 = brentq(slope, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    else:
        opt = minimize_scalar(lambda t: profile(t)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        theta0 = float(opt.x)
    theta0 = wrap_axis(theta0)
    chi2, B = profile(theta0)
    return theta0, B, chi2


def _finish(sol, angles, y, w, absolute_sigma):
    n = len(y)
    if sol is None:
        return Cos2Fit(0.0, 0.0, math.nan, 0.0, True, n_points=n)
    a, r = sol["a"], sol["r"]
    B = 2.0 * r
    A = a - r
    theta0 = sol["theta"]
    chi2, resid = sol["chi2"], sol["resid"]
    constrained = False
    if -1e-12 * max(abs(a), r) <= A < 0:
        A = 0.0
    elif A < 0:
        theta0, B, chi2 = _fit_zero_offset(angles, y, w)
        A = 0.0
        resid = y - B * np.cos(np.deg2rad(angles - theta0)) ** 2
        constrained = True
    degenerate = sol["degenerate"]
    if degenerate:
        B = 0.0
        A = max(float(np.sum(w * y) / np.sum(w)), 0.0)
        theta0 = math.nan
    return Cos2Fit(
        offset_a=float(A), amplitude_b=float(B), theta0_deg=float(theta0),
        residual_rms=float(math.sqrt(np.mean(resid * resid))), degenerate=bool(degenerate),
        theta0_err_deg=float(sol["theta_err"]) if not degenerate else math.nan,
        chi2_red=chi2 / sol["dof"], n_points=n, constrained=constrained,
    )


def fit_cos2(angles_deg, intensities, weights=None):
    """Closed-form weighted least-squares fit of ``A + B cos^2(theta - theta0)``.

    Uses ``A + B/2 + (B/2) cos 2(theta - theta0)`` so the model is linear in
    ``(1, cos 2theta, sin 2theta)``. ``weights`` are inverse variances; when
    given, uncertainties are absolute, otherwise they are scaled by the
    residual variance. A negative offset triggers a refit with ``A = 0``.
    """
    angles = np.asarray(angles_deg, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if angles.shape != y.shape:
        raise DomainError("angles and intensities must have equal length")
    _check_design(angles)
    absolute = weights is not None
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    xtwx, xtwy = kernels.cos2_moments(angles, y[:, None], w[:, None])
    sol = _solve_moments(xtwx[0], xtwy[0], angles, y, w, absolute)
    return _finish(sol, angles, y, w, absolute)


def visibility_from(a, b):
    """``B / (B + 2A)``; zero when both vanish."""
    den = b + 2.0 * a
    return float(b / den) if den > 0 else 0.0


def visibility(fit):
    """Polarization visibility of a fit; 0 for degenerate fits."""
    if fit.degenerate:
        return 0.0
    return visibility_from(fit.offset_a, fit.amplitude_b)


def delta_theta(theta_abs_deg, theta_emit_deg):
    """Folded misalignment of two dipole axes, in ``[0, 90]``."""
    d = abs(theta_abs_deg - theta_emit_deg) % 180.0
    return min(d, 180.0 - d)


def _energy_scan(scan):
    if scan.axis_kind == "energy_ev":
        return scan.axis, scan.counts
    if scan.axis_kind == "wavelength_nm":
        lam = scan.axis
        energy = HC_EV_NM / lam
        counts = scan.counts
        if scan.units_kind == "counts_per_wavelength":
            counts = counts * lam ** 2 / HC_EV_NM
        order = np.argsort(energy)
        return energy[order], counts[:, order]
    raise DomainError(f"cannot fit a scan on a {scan.axis_kind} axis")


def fit_spectrally_resolved(scan, bin_width_ev):
    """Fit every energy bin of a scan independently with Poisson weights.

    Bins are contiguous runs of axis samples of width ``bin_width_ev``
    starting at the lowest energy; each bin's counts are summed per angle.
    """
    if scan.counts.size == 0:
        raise DomainError("empty scan")
    if not bin_width_ev > 0:
        raise DomainError("bin width must be positive")
    _check_design(scan.angles_deg)
    energy, counts = _energy_scan(scan)
    idx = np.floor((energy - energy[0]) / bin_width_ev + 1e-9).astype(int)
    labels, inverse = np.unique(idx, return_inverse=True)
    n_bins = len(labels)
    binned = np.zeros((len(scan.angles_deg), n_bins))
    np.add.at(binned.T, inverse, counts.T)
    centres = np.bincount(inverse, weights=energy) / np.bincount(inverse)

    weights = poisson_weights(binned)
    xtwx, xtwy = kernels.cos2_moments(scan.angles_deg, binned, weights)
    fits = []
    for j in range(n_bins):
        y = binned[:, j]
        if not np.any(y > 0):
            fits.append(Cos2Fit(0.0, 0.0, math.nan, 0.0, True, n_points=len(y)))
            continue
        sol = _solve_moments(xtwx[j], xtwy[j], scan.angles_deg, y, weights[:, j], True)
        fits.append(_finish(sol, scan.angles_deg, y, weights[:, j], True))
    return SpectrallyResolvedPolarization(
        energies_ev=centres,
        theta_deg=np.array([f.theta0_deg for f in fits]),
        visibility=np.array([visibility(f) for f in fits]),
        fit_quality=np.array([f.chi2_red for f in fits]),
        degenerate=np.array([f.degenerate for f in fits]),
        total_counts=binned.sum(axis=0),
        fits=tuple(fits),
    )


@dataclass(frozen=True)
class CalibrationMap:
    """Angular error and instrument visibility on a wavelength x reference-angle grid.

    ``angle_error_deg[i, j]`` is measured minus true orientation at
    ``wavelengths_nm[i]`` for a source polarized at ``thetas_deg[j]``.
    """

    wavelengths_nm: np.ndarray
    thetas_deg: np.ndarray
    angle_error_deg: np.ndarray
    instrument_visibility: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.wavelengths_nm, dtype=float)
        th = np.asarray(self.thetas_deg, dtype=float)
        err = np.asarray(self.angle_error_deg, dtype=float)
        vis = np.asarray(self.instrument_visibility, dtype=float)
        if len(lam) < 2 or np.any(np.diff(lam) <= 0):
            raise IncompleteCalibrationError("calibration needs >= 2 increasing wavelengths")
        if not np.allclose(th, REFERENCE_ANGLES_DEG):
            raise IncompleteCalibrationError("calibration angles must be 0, 30, ..., 150")
        if err.shape != (len(lam), len(th)) or vis.shape != err.shape:
            raise DomainError("calibration tables must have shape (n_wavelengths, 6)")
        if np.any(vis <= 0) or np.any(vis > 1):
            raise DomainError("instrument visibilities must lie in (0, 1]")
        for name, val in (("wavelengths_nm", lam), ("thetas_deg", th),
                          ("angle_error_deg", err), ("instrument_visibility", vis)):
            object.__setattr__(self, name, val)

    @classmethod
    def identity(cls, wavelengths_nm=(550.0, 740.0)):
        shape = (len(wavelengths_nm), len(REFERENCE_ANGLES_DEG))
        return cls(np.array(wavelengths_nm, dtype=float), np.array(REFERENCE_ANGLES_DEG),
                   np.zeros(shape), np.ones(shape))

    def to_dict(self):
        return {
            "wavelengths_nm": self.wavelengths_nm.tolist(),
            "thetas_deg": self.thetas_deg.tolist(),
            "angle_error_deg": self.angle_error_deg.tolist(),
            "instrument_visibility": self.instrument_visibility.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["wavelengths_nm"]), np.array(d["thetas_deg"]),
                   np.array(d["angle_error_deg"]), np.array(d["instrument_visibility"]))

    def _interp(self, table, wavelength_nm, theta_deg, warn=True):
        lam = self.wavelengths_nm
        if warn and not lam[0] <= wavelength_nm <= lam[-1]:
            warnings.warn(f"wavelength {wavelength_nm} nm outside calibration range "
                          f"[{lam[0]}, {lam[-1]}]; clamping", RuntimeWarning, stacklevel=3)
        x = min(max(wavelength_nm, lam[0]), lam[-1])
        i = int(np.clip(np.searchsorted(lam, x, side="right") - 1, 0, len(lam) - 2))
        u = (x - lam[i]) / (lam[i + 1] - lam[i])
        t = float(theta_deg) % 180.0
        j = int(t // 30.0) % 6
        v = (t - 30.0 * j) / 30.0
        j1 = (j + 1) % 6
        return ((1 - u) * (1 - v) * table[i, j] + (1 - u) * v * table[i, j1]
                + u * (1 - v) * table[i + 1, j] + u * v * table[i + 1, j1])

    def angle_error(self, wavelength_nm, theta_true_deg, warn=True):
        """Bilinear interpolation, periodic in angle with period 180 degrees."""
        return float(self._interp(self.angle_error_deg, wavelength_nm, theta_true_deg, warn))

    def visibility(self, wavelength_nm, theta_true_deg, warn=True):
        return float(self._interp(self.instrument_visibility, wavelength_nm, theta_true_deg, warn))


def build_calibration(measurements):
    """Tabulate ``(wavelength_nm, theta_true, theta_measured, visibility)`` rows.

    Measured angles are expected in polarization-angle space (analyzer
    readings already doubled). Repeated cells are averaged; angle errors use
    an axial circular mean.
    """
    rows = [tuple(map(float, m)) for m in measurements]
    if not rows:
        raise IncompleteCalibrationError("no calibration measurements")
    cells = {}
    for lam, t_true, t_meas, vis in rows:
        j = int(round((t_true % 180.0) / 30.0)) % 6
        if not math.isclose(t_true % 180.0, REFERENCE_ANGLES_DEG[j], abs_tol=1e-6) and not \
                math.isclose(t_true % 180.0, 180.0, abs_tol=1e-6):
            raise IncompleteCalibrationError(f"{t_true} deg is not a reference angle")
        cells.setdefault((lam, j), []).append((float(_wrap_signed(t_meas - t_true)), vis))
    wavelengths = sorted({lam for lam, _ in cells})
    if len(wavelengths) < 2:
        raise IncompleteCalibrationError("calibration needs at least 2 wavelengths")
    err = np.empty((len(wavelengths), 6))
    vis = np.empty((len(wavelengths), 6))
    for i, lam in enumerate(wavelengths):
        for j in range(6):
            cell = cells.get((lam, j))
            if cell is None:
                raise IncompleteCalibrationError(
                    f"missing reference angle {REFERENCE_ANGLES_DEG[j]} deg at {lam} nm")
            e = np.array([c[0] for c in cell])
            z = np.mean(np.exp(2j * np.deg2rad(e)))
            err[i, j] = 0.5 * math.degrees(math.atan2(z.imag, z.real))
            vis[i, j] = float(np.mean([c[1] for c in cell]))
    return CalibrationMap(np.array(wavelengths), np.array(REFERENCE_ANGLES_DEG), err, vis)


def apply_calibration(theta_measured_deg, wavelength_nm, cal, damping=0.5, tol=1e-10,
                      max_iter=50):
    """Invert ``measured = true + error(lambda, true)`` by damped fixed-point iteration."""
    if not cal.wavelengths_nm[0] <= wavelength_nm <= cal.wavelengths_nm[-1]:
        warnings.warn(f"wavelength {wavelength_nm} nm outside calibration range; clamping",
                      RuntimeWarning, stacklevel=2)
    theta = float(theta_measured_deg) % 180.0
    for it in range(max_iter):
        target = theta_measured_deg - cal.angle_error(wavelength_nm, theta, warn=False)
        step = float(_wrap_signed(target - theta))
        theta = wrap_axis(theta + damping * step)
        if abs(step) < tol:
            return theta
    raise CalibrationError(
        "calibration inversion did not converge",
        {"theta_measured_deg": theta_measured_deg, "wavelength_nm": wavelength_nm,
         "last_step_deg": step, "iterations": max_iter},
    )


def correct_visibility(v_measured, wavelength_nm, theta_true_deg, cal):
    """Divide out the instrument visibility; result capped at 1."""
    v_inst = cal.visibility(wavelength_nm, theta_true_deg)
    if v_inst <= 0.05:
        raise UnreliableCorrectionError(
            f"instrument visibility {v_inst:.3g} at {wavelength_nm} nm is too low to correct")
    return min(1.0, v_measured / v_inst)
