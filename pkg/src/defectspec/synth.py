"""Forward models that generate synthetic measurements with known ground truth.

Randomness comes from numpy's Philox4x64-10 counter-based generator, keyed by
``(seed, *stream)`` through a ``SeedSequence`` so independent streams (one per
scan or defect) never overlap.
"""
from dataclasses import dataclass
import json
import os
from importlib import resources

import numpy as np

from .classify import DEFAULT_CATALOG, DefectRecord, wavelength_to_energy
from .constants import HC_EV_NM
from .errors import DomainError
from .photostats import CorrelationTrace, DecayHistogram, g2_model
from .polarfit import REFERENCE_ANGLES_DEG, AngleResolvedSpectrum
from .spectra import (BandModel, LineshapeSpec, band_to_luminescence,
                      synthesize_emission_band)
from .vibronic import PhononMode, VibronicSystem

RNG_ALGORITHM = "numpy.random.Philox (Philox4x64-10), SeedSequence(seed, *stream)"


@dataclass(frozen=True)
class NoiseSpec:
    seed: int = 0
    kind: str = "poisson"

    def __post_init__(self):
        if self.kind not in ("none", "poisson"):
            raise DomainError(f"unknown noise kind {self.kind!r}")

    def rng(self, *stream):
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(self.seed), *map(int, stream)])))

    def sample(self, expected, *stream):
        expected = np.asarray(expected, dtype=float)
        if self.kind == "none":
            return expected.copy()
        return self.rng(*stream).poisson(expected).astype(float)


@dataclass(frozen=True)
class ExcitationMechanism:
    """How the exciting light reaches the emitting state.

    ``direct`` absorbs through the emitting dipole; ``indirect`` through a
    dipole at ``theta_abs_override_deg``; ``mixed`` adds both channels
    incoherently with ``indirect_weight`` on the indirect one.
    """

    kind: str = "direct"
    theta_abs_override_deg: float = None
    indirect_weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("direct", "indirect", "mixed"):
            raise DomainError(f"unknown mechanism {self.kind!r}")
        if self.kind != "direct" and self.theta_abs_override_deg is None:
            raise DomainError(f"{self.kind} mechanism needs theta_abs_override_deg")
        if not 0.0 <= self.indirect_weight <= 1.0:
            raise DomainError("mixed weight must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticDefect:
    system: VibronicSystem
    mechanism: ExcitationMechanism = ExcitationMechanism()
    abs_visibility: float = 1.0
    emit_visibility: float = 1.0
    brightness: float = 1000.0
    temperature_k: float = 0.0
    lineshape: LineshapeSpec = LineshapeSpec()
    truncation_tolerance: float = 1e-9

    def __post_init__(self):
        for name in ("abs_visibility", "emit_visibility"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v}")

    def absorption_channels(self):
        """``[(dipole_deg, weight), ...]`` of the excitation channels."""
        emit = self.system.emission_dipole_deg
        m = self.mechanism
        if m.kind == "direct":
            return [(emit, 1.0)]
        if m.kind == "indirect":
            return [(m.theta_abs_override_deg % 180.0, 1.0)]
        return [(emit, 1.0 - m.indirect_weight), (m.theta_abs_override_deg % 180.0, m.indirect_weight)]

    def expected_absorption_theta(self):
        """Axial mean of the channels, weighted by their modulation amplitude."""
        _, b = polarization_coefficients(self.abs_visibility)
        z = sum(w * b * np.exp(2j * np.deg2rad(t)) for t, w in self.absorption_channels())
        return float(np.rad2deg(np.angle(z)) / 2.0) % 180.0


@dataclass(frozen=True)
class SyntheticInstrument:
    """Smooth wavelength- and polarization-dependent retardance of a collection path.

    ``error(lambda, theta) = offset + slope (lambda - 645) + amp sin(2 theta + phase(lambda))``
    in degrees; instrument visibility dips by ``vis_depth`` with a similar
    angular pattern.
    """

    offset_deg: float = 2.0
    slope_deg_per_nm: float = 0.02
    amp_deg: float = 2.5
    phase_deg_per_nm: float = 0.5
    vis_base: float = 0.95
    vis_depth: float = 0.05

    def error(self, wavelength_nm, theta_deg):
        phase = np.deg2rad(self.phase_deg_per_nm * (wavelength_nm - 550.0))
        return (self.offset_deg + self.slope_deg_per_nm * (wavelength_nm - 645.0)
                + self.amp_deg * np.sin(np.deg2rad(2.0 * theta_deg) + phase))

    def visibility(self, wavelength_nm, theta_deg):
        phase = np.deg2rad(self.phase_deg_per_nm * (wavelength_nm - 550.0))
        return self.vis_base - self.vis_depth * np.cos(np.deg2rad(2.0 * theta_deg) + phase) ** 2

    def distort(self, theta_true_deg, wavelength_nm):
        return (theta_true_deg + self.error(wavelength_nm, theta_true_deg)) % 180.0

    def calibration_rows(self, wavelengths_nm):
        """Reference-source readings at the six calibration angles."""
        rows = []
        for lam in wavelengths_nm:
            for t in REFERENCE_ANGLES_DEG:
                rows.append((float(lam), t, float(self.distort(t, lam)),
                             float(self.visibility(lam, t))))
        return rows


def polarization_coefficients(vis):
    """``(A, B)`` with ``A + B = 1`` and ``B / (B + 2A) = vis``."""
    return (1.0 - vis) / (1.0 + vis), 2.0 * vis / (1.0 + vis)


def cos2_profile(angles_deg, theta0_deg, vis):
    a, b = polarization_coefficients(vis)
    return a + b * np.cos(np.deg2rad(np.asarray(angles_deg) - theta0_deg)) ** 2


def luminescence(defect, grid):
    """Noiseless luminescence ``E**3 W(E)`` scaled so its maximum is ``brightness``."""
    model = BandModel(defect.system, defect.lineshape, 1.0, defect.temperature_k,
                      defect.truncation_tolerance)
    lum = band_to_luminescence(synthesize_emission_band(model, grid))
    return lum.values * (defect.brightness / lum.values.max())


def generate_scan(defect, role, angles_deg, grid, noise=NoiseSpec(kind="none"),
                  instrument=None, stream=0):
    """Angle-resolved spectrum ``lum(E) * [A + B cos^2(theta - theta_dipole)]``.

    For emission scans an optional :class:`SyntheticInstrument` rotates the
    apparent dipole and lowers the visibility at each wavelength.
    """
    angles = np.asarray(angles_deg, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if angles.size == 0 or grid.size == 0:
        raise DomainError("angles and grid must be non-empty")
    lum = luminescence(defect, grid)
    if role == "absorption_scan":
        prof = sum(w * cos2_profile(angles, t, defect.abs_visibility)
                   for t, w in defect.absorption_channels())
        expected = prof[:, None] * lum[None, :]
    elif role == "emission_scan":
        theta = defect.system.emission_dipole_deg
        if instrument is None:
            expected = cos2_profile(angles, theta, defect.emit_visibility)[:, None] * lum[None, :]
        else:
            lam = HC_EV_NM / grid
            theta_m = instrument.distort(theta, lam)
            vis_m = defect.emit_visibility * instrument.visibility(lam, theta)
            a = (1.0 - vis_m) / (1.0 + vis_m)
            b = 2.0 * vis_m / (1.0 + vis_m)
            expected = a[None, :] + b[None, :] * np.cos(np.deg2rad(angles[:, None] - theta_m[None, :])) ** 2
            expected = expected * lum[None, :]
    else:
        raise DomainError(f"unknown scan role {role!r}")
    counts = noise.sample(expected, stream)
    return AngleResolvedSpectrum(angles, grid, counts, role, "energy_ev", "counts_per_energy")


def generate_g2(a, tau_c_ns, grid, noise=NoiseSpec(kind="none"), counts_per_bin=1000.0,
                stream=0):
    """Coincidence histogram normalized to its long-delay level, with Poisson errors."""
    tau = np.asarray(grid, dtype=float)
    expected = counts_per_bin * g2_model(tau, a, tau_c_ns)
    k = noise.sample(expected, stream)
    return CorrelationTrace(tau, k / counts_per_bin, np.sqrt(np.maximum(k, 1.0)) / counts_per_bin)


def generate_decay(tau_ns, total_counts, grid, pulse_ns=5.0, background_per_bin=2.0,
                   noise=NoiseSpec(kind="none"), stream=0):
    """Pulsed-excitation decay histogram: bin-integrated exponential after ``pulse_ns``."""
    t = np.asarray(grid, dtype=float)
    step = np.diff(t)
    edges = np.append(t, t[-1] + step[-1])
    lo = np.clip(edges[:-1] - pulse_ns, 0.0, None)
    hi = np.clip(edges[1:] - pulse_ns, 0.0, None)
    expected = total_counts * (np.exp(-lo / tau_ns) - np.exp(-hi / tau_ns)) + background_per_bin
    return DecayHistogram(t, noise.sample(expected, stream))


@dataclass(frozen=True)
class SurveyModel:
    """Population model for a defect survey.

    Direct records have Stokes shifts in ``direct_shift_mev`` and a
    half-normal misalignment of width ``direct_sigma_deg``; indirect records
    have shifts in ``indirect_shift_mev`` and uniform misalignment on [0, 90].
    """

    excitation_nm: float = 532.0
    direct_shift_mev: tuple = (75.0, 203.0)
    indirect_shift_mev: tuple = (203.0, 650.0)
    direct_sigma_deg: float = 4.0
    emit_visibility: tuple = (0.6, 0.95)
    indirect_abs_ratio: tuple = (0.4, 0.95)
    direct_abs_jitter: float = 0.05


def generate_survey(n_defects, indirect_fraction=0.6, catalog=DEFAULT_CATALOG,
                    noise=NoiseSpec(seed=0), model=SurveyModel()):
    """Draw ``n_defects`` records; each defect uses its own RNG stream."""
    if n_defects < 1:
        raise DomainError("need at least one defect")
    e_exc = wavelength_to_energy(model.excitation_nm)
    out = []
    for i in range(n_defects):
        rng = noise.rng(1, i)
        indirect = rng.random() < indirect_fraction
        theta_emit = rng.uniform(0.0, 180.0)
        v_emit = rng.uniform(*model.emit_visibility)
        if indirect:
            shift = rng.uniform(*model.indirect_shift_mev)
            dtheta = rng.uniform(0.0, 90.0)
            v_abs = v_emit * rng.uniform(*model.indirect_abs_ratio)
        else:
            shift = rng.uniform(*model.direct_shift_mev)
            dtheta = min(abs(rng.normal(0.0, model.direct_sigma_deg)), 90.0)
            v_abs = float(np.clip(v_emit + rng.normal(0.0, model.direct_abs_jitter), 0.01, 1.0))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        theta_abs = (theta_emit + sign * dtheta) % 180.0
        rec = DefectRecord(
            zpl_energy_ev=e_exc - shift * 1e-3, excitation_energy_ev=e_exc,
            theta_abs_deg=float(theta_abs), theta_emit_deg=float(theta_emit),
            abs_visibility=float(v_abs), emit_visibility=float(v_emit),
        )
        out.append(rec.classified(catalog))
    return out


# scenarios ------------------------------------------------------------------

def load_scenario(name_or_path):
    """Read a scenario JSON by file path or by bundled name (``fig3``, ``fig5``)."""
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            return json.load(fh)
    name = os.path.basename(name_or_path)
    if not name.endswith(".json"):
        name += ".json"
    try:
        text = resources.files("defectspec").joinpath("scenarios", name).read_text()
    except FileNotFoundError:
        raise DomainError(f"no scenario file or bundled scenario named {name_or_path!r}") from None
    return json.loads(text)


def _defect_from(sc, exc):
    system = VibronicSystem(
        zpl_energy_ev=(sc["zpl_ev"] if "zpl_ev" in sc else wavelength_to_energy(sc["zpl_nm"])),
        modes=tuple(PhononMode(**m) for m in sc["modes"]),
        emission_dipole_deg=sc["emission_dipole_deg"],
        absorption_dipole_deg=(exc or {}).get("theta_abs_deg", sc["emission_dipole_deg"]),
    )
    mech = ExcitationMechanism()
    abs_vis = 1.0
    if exc:
        kind = exc.get("mechanism", "direct")
        mech = ExcitationMechanism(kind, exc.get("theta_abs_deg"), exc.get("indirect_weight", 1.0 if kind == "indirect" else 0.0))
        abs_vis = exc.get("abs_visibility", 1.0)
    return SyntheticDefect(
        system=system, mechanism=mech, abs_visibility=abs_vis,
        emit_visibility=sc.get("emit_visibility", 1.0), brightness=sc.get("brightness", 1000.0),
        temperature_k=sc.get("temperature_k", 0.0), lineshape=LineshapeSpec(**sc.get("lineshape", {})),
        truncation_tolerance=sc.get("truncation_tolerance", 1e-9),
    )


def scenario_grid(sc):
    g = sc["grid"]
    n = int(round((g["stop_ev"] - g["start_ev"]) / g["step_ev"])) + 1
    return g["start_ev"] + g["step_ev"] * np.arange(n)


def run_scenario(sc, seed=None):
    """Generate every scan a scenario describes.

    Returns a dict with ``emission`` (scan), ``absorption`` ({label: scan}),
    ``luminescence`` (noiseless summed spectrum values), ``calibration_rows``
    (or ``None``) and ``truth`` (ground-truth parameters).
    """
    seed = sc.get("seed", 0) if seed is None else seed
    noise = NoiseSpec(int(seed), sc.get("noise", "poisson"))
    grid = scenario_grid(sc)
    angles = np.asarray(sc.get("angles_deg", list(range(0, 180, 10))), dtype=float)
    instrument = SyntheticInstrument(**sc["instrument"]) if "instrument" in sc else None
    base = _defect_from(sc, None)
    emission = generate_scan(base, "emission_scan", angles, grid, noise, instrument, stream=0)
    absorption = {}
    truth = {"zpl_ev": base.system.zpl_energy_ev,
             "emission_dipole_deg": base.system.emission_dipole_deg, "excitations": {}}
    for k, exc in enumerate(sc.get("excitations", [])):
        d = _defect_from(sc, exc)
        label = exc["label"]
        absorption[label] = generate_scan(d, "absorption_scan", angles, grid, noise, stream=k + 1)
        truth["excitations"][label] = {
            "wavelength_nm": exc["wavelength_nm"],
            "theta_abs_deg": d.expected_absorption_theta(),
            "mechanism": exc.get("mechanism", "direct"),
        }
    cal_rows = None
    if instrument is not None:
        cal = sc.get("calibration_wavelengths_nm", {"start": 550, "stop": 740, "step": 10})
        lams = np.arange(cal["start"], cal["stop"] + 0.5 * cal["step"], cal["step"])
        cal_rows = instrument.calibration_rows(lams)
    return {"emission": emission, "absorption": absorption,
            "luminescence": luminescence(base, grid), "calibration_rows": cal_rows,
            "truth": truth, "seed": int(seed), "rng": RNG_ALGORITHM}
