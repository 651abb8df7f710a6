"""Stokes-shift bookkeeping, phonon-region labels, and excitation-mechanism verdicts."""
from dataclasses import asdict, dataclass
import enum
import json
import math

import numpy as np
from scipy import stats

from .constants import HC_EV_NM
from .errors import DomainError
from .polarfit import delta_theta

#: Records with a Stokes shift below this could not pass the collection filters.
FILTER_CUTOFF_MEV = 75.0
#: Predicted misalignment angles for crystallographically related states.
GROUP_THEORY_ANGLES_DEG = (0.0, 30.0, 60.0, 90.0)


class RegionLabel(str, enum.Enum):
    SUB_PHONON = "SubPhonon"
    OUT_OF_PLANE_I = "OutOfPlaneI"
    REGION_I = "RegionI"
    REGION_II = "RegionII"
    REGION_III = "RegionIII"
    BEYOND_III = "BeyondIII"
    GAP = "Gap"


class Mechanism(str, enum.Enum):
    DIRECT_CONSISTENT = "DirectConsistent"
    INDIRECT_LIKELY = "IndirectLikely"
    AMBIGUOUS = "Ambiguous"


@dataclass(frozen=True)
class PhononCatalog:
    """Bulk phonon energy ranges in meV, as closed intervals.

    ``critical_shift_mev`` defaults to the top of the in-plane optical band.
    """

    acoustic_mev: tuple = (0.0, 107.0)
    out_of_plane_optical_mev: tuple = (72.0, 145.0)
    in_plane_optical_mev: tuple = (150.0, 203.0)
    critical_shift_mev: float = None

    def __post_init__(self):
        for name in ("acoustic_mev", "out_of_plane_optical_mev", "in_plane_optical_mev"):
            lo, hi = map(float, getattr(self, name))
            if lo > hi:
                raise DomainError(f"{name}: lower bound exceeds upper bound")
            object.__setattr__(self, name, (lo, hi))
        if self.critical_shift_mev is None:
            object.__setattr__(self, "critical_shift_mev", self.in_plane_optical_mev[1])

    def region(self, k):
        """In-plane optical interval scaled by ``k`` (``k`` phonons)."""
        lo, hi = self.in_plane_optical_mev
        return (k * lo, k * hi)

    @classmethod
    def from_dict(cls, d):
        keys = ("acoustic_mev", "out_of_plane_optical_mev", "in_plane_optical_mev",
                "critical_shift_mev")
        unknown = set(d) - set(keys)
        if unknown:
            raise DomainError(f"unknown catalog keys: {sorted(unknown)}")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


DEFAULT_CATALOG = PhononCatalog()


def wavelength_to_energy(lambda_nm):
    if not lambda_nm > 0:
        raise DomainError(f"wavelength must be positive, got {lambda_nm}")
    return HC_EV_NM / lambda_nm


def energy_to_wavelength(energy_ev):
    if not energy_ev > 0:
        raise DomainError(f"energy must be positive, got {energy_ev}")
    return HC_EV_NM / energy_ev


def stokes_shift(excitation_energy_ev, zpl_energy_ev):
    """``E_exc - E_ZPL`` in meV; negative values are anti-Stokes."""
    if not (excitation_energy_ev > 0 and zpl_energy_ev > 0):
        raise DomainError("energies must be positive")
    return (excitation_energy_ev - zpl_energy_ev) * 1e3


def _inside(x, interval):
    return interval[0] <= x <= interval[1]


def phonon_region(stokes_mev, catalog=DEFAULT_CATALOG):
    """Label a Stokes shift by the phonon process that could bridge it.

    Priority: RegionI, RegionII, RegionIII, OutOfPlaneI, SubPhonon, BeyondIII,
    Gap. Negative shifts are labelled SubPhonon.
    """
    if not math.isfinite(stokes_mev):
        raise DomainError("Stokes shift must be finite")
    if stokes_mev < 0:
        return RegionLabel.SUB_PHONON
    for k, label in ((1, RegionLabel.REGION_I), (2, RegionLabel.REGION_II),
                     (3, RegionLabel.REGION_III)):
        if _inside(stokes_mev, catalog.region(k)):
            return label
    if _inside(stokes_mev, catalog.out_of_plane_optical_mev):
        return RegionLabel.OUT_OF_PLANE_I
    if _inside(stokes_mev, catalog.acoustic_mev) and stokes_mev < catalog.out_of_plane_optical_mev[0]:
        return RegionLabel.SUB_PHONON
    if stokes_mev > catalog.region(3)[1]:
        return RegionLabel.BEYOND_III
    return RegionLabel.GAP


@dataclass(frozen=True)
class DefectRecord:
    zpl_energy_ev: float
    excitation_energy_ev: float
    theta_abs_deg: float
    theta_emit_deg: float
    delta_theta_deg: float = None
    stokes_shift_mev: float = None
    region: str = None
    mechanism: str = None
    tilt_caveat: bool = True
    abs_visibility: float = None
    emit_visibility: float = None
    anti_stokes: bool = None
    below_filter: bool = None

    def __post_init__(self):
        dt = delta_theta(self.theta_abs_deg, self.theta_emit_deg)
        if self.delta_theta_deg is None:
            object.__setattr__(self, "delta_theta_deg", dt)
        elif not math.isclose(self.delta_theta_deg, dt, abs_tol=1e-6):
            raise DomainError(
                f"delta_theta_deg {self.delta_theta_deg} inconsistent with angles ({dt})")
        shift = stokes_shift(self.excitation_energy_ev, self.zpl_energy_ev)
        if self.stokes_shift_mev is None:
            object.__setattr__(self, "stokes_shift_mev", shift)
        elif not math.isclose(self.stokes_shift_mev, shift, abs_tol=1e-6):
            raise DomainError(f"stokes_shift_mev {self.stokes_shift_mev} inconsistent ({shift})")
        object.__setattr__(self, "anti_stokes", shift < 0)
        object.__setattr__(self, "below_filter", shift < FILTER_CUTOFF_MEV)

    def classified(self, catalog=DEFAULT_CATALOG, theta_tolerance_deg=10.0):
        """Copy with ``region`` and ``mechanism`` filled in."""
        d = asdict(self)
        d["region"] = phonon_region(self.stokes_shift_mev, catalog).value
        d["mechanism"] = predict_mechanism(self, theta_tolerance_deg, catalog).value
        return DefectRecord(**d)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown record fields: {sorted(unknown)}")
        return cls(**d)


def predict_mechanism(record, theta_tolerance_deg=10.0, catalog=DEFAULT_CATALOG):
    """Direct excitation needs a one-phonon Stokes shift and aligned dipoles."""
    shift = record.stokes_shift_mev
    aligned = record.delta_theta_deg <= theta_tolerance_deg
    if shift <= catalog.critical_shift_mev and aligned:
        return Mechanism.DIRECT_CONSISTENT
    if shift > catalog.critical_shift_mev and not aligned:
        return Mechanism.INDIRECT_LIKELY
    return Mechanism.AMBIGUOUS


@dataclass
class SurveyStats:
    scatter: list
    bin_edges_deg: np.ndarray
    histogram: np.ndarray
    cluster_fractions: dict
    n_records: int
    n_below_critical: int
    n_above_critical: int
    frac_aligned_below: float
    ks_pvalue_above: float
    n_visibility_pairs: int
    n_emit_exceeds_abs: int
    n_indirect_visibility_pairs: int
    n_indirect_emit_exceeds_abs: int
    aligned_threshold_deg: float = 15.0

    def summary(self):
        d = {k: v for k, v in self.__dict__.items() if k not in ("scatter",)}
        d["bin_edges_deg"] = self.bin_edges_deg.tolist()
        d["histogram"] = self.histogram.tolist()
        return d


def survey_stats(records, histogram_bin_deg=5.0, catalog=DEFAULT_CATALOG,
                 theta_tolerance_deg=10.0, cluster_tolerance_deg=5.0,
                 aligned_threshold_deg=15.0):
    """Aggregate a survey into the scatter table, the misalignment histogram and tests.

    Results do not depend on record order. The KS p-value tests shifts above
    the critical value against a uniform misalignment on [0, 90] (NaN with
    fewer than two such records).
    """
    records = [r.classified(catalog, theta_tolerance_deg) for r in records]
    if not records:
        raise DomainError("survey_stats needs at least one record")
    if not histogram_bin_deg > 0:
        raise DomainError("histogram bin width must be positive")
    dtheta = np.array([r.delta_theta_deg for r in records])
    shift = np.array([r.stokes_shift_mev for r in records])
    n_bins = int(math.ceil(90.0 / histogram_bin_deg - 1e-9))
    edges = np.minimum(np.arange(n_bins + 1) * histogram_bin_deg, 90.0)
    hist, _ = np.histogram(dtheta, bins=edges)

    clusters = {}
    for ang in GROUP_THEORY_ANGLES_DEG:
        clusters[f"{ang:g}"] = float(np.mean(np.abs(dtheta - ang) <= cluster_tolerance_deg))

    below = shift <= catalog.critical_shift_mev
    above = ~below
    frac_aligned = float(np.mean(dtheta[below] < aligned_threshold_deg)) if below.any() else math.nan
    if np.count_nonzero(above) >= 2:
        ks_p = float(stats.kstest(np.sort(dtheta[above]), stats.uniform(0.0, 90.0).cdf).pvalue)
    else:
        ks_p = math.nan

    pairs = [(r.abs_visibility, r.emit_visibility, r.mechanism) for r in records
             if r.abs_visibility is not None and r.emit_visibility is not None]
    indirect = [p for p in pairs if p[2] == Mechanism.INDIRECT_LIKELY.value]
    scatter = sorted(
        ({"stokes_shift_mev": r.stokes_shift_mev, "delta_theta_deg": r.delta_theta_deg,
          "region": r.region, "mechanism": r.mechanism} for r in records),
        key=lambda row: (row["stokes_shift_mev"], row["delta_theta_deg"]),
    )
    return SurveyStats(
        scatter=scatter, bin_edges_deg=edges, histogram=hist,
        cluster_fractions=clusters, n_records=len(records),
        n_below_critical=int(below.sum()), n_above_critical=int(above.sum()),
        frac_aligned_below=frac_aligned, ks_pvalue_above=ks_p,
        n_visibility_pairs=len(pairs), n_emit_exceeds_abs=sum(e > a for a, e, _ in pairs),
        n_indirect_visibility_pairs=len(indirect),
        n_indirect_emit_exceeds_abs=sum(e > a for a, e, _ in indirect),
        aligned_threshold_deg=aligned_threshold_deg,
    )
