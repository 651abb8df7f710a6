"""Vibronic band synthesis and polarization spectroscopy analysis for single point defects."""
from .kernels import BACKEND
from .vibronic import (PhononMode, VibronicSystem, SidebandWeights, franck_condon_factor,
                       overlap_oracle, bose_occupation, debye_waller, sideband_weights)
from .spectra import (Spectrum, LineshapeSpec, BandModel, PeakReport, synthesize_emission_band,
                      synthesize_absorption_band, wavelength_counts_to_energy_counts,
                      luminescence_to_emission_band, mirror_band, to_stokes_axis,
                      find_zpl_and_sidebands)
from .polarfit import (AngleResolvedSpectrum, Cos2Fit, CalibrationMap,
                       SpectrallyResolvedPolarization, fit_cos2, visibility,
                       fit_spectrally_resolved, delta_theta, build_calibration,
                       apply_calibration, correct_visibility)
from .photostats import (CorrelationTrace, DecayHistogram, fit_g2, is_single_emitter,
                         fit_lifetime)
from .classify import (PhononCatalog, DefectRecord, RegionLabel, Mechanism, wavelength_to_energy,
                       stokes_shift, phonon_region, predict_mechanism, survey_stats)

__version__ = "0.1.0"
