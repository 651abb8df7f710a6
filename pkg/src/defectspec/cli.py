"""Command-line interface.

Exit status: 0 on success, 2 on usage errors, 1 on data or fit errors (with a
JSON error object on stderr).
"""
import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import io
from .classify import (DEFAULT_CATALOG, FILTER_CUTOFF_MEV, DefectRecord, PhononCatalog,
                       phonon_region, survey_stats, wavelength_to_energy)
from .constants import HC_EV_NM
from .errors import DefectSpecError, DomainError
from .photostats import fit_g2, fit_lifetime, is_single_emitter
from .polarfit import (apply_calibration, build_calibration, correct_visibility, fit_cos2,
                       fit_spectrally_resolved, poisson_weights, visibility)
from .spectra import (absorption_profile_from_luminescence, find_zpl_and_sidebands,
                      wavelength_counts_to_energy_counts)
from .synth import (NoiseSpec, RNG_ALGORITHM, generate_decay, generate_g2, generate_survey,
                    load_scenario, run_scenario)
from .vibronic import franck_condon_factor

OUTPUT_DIR_ENV = "DEFECTSPEC_OUTPUT_DIR"

# option -> (low, high) accepted range
TOLERANCE_RANGES = {
    "theta_tolerance_deg": (0.0, 90.0),
    "truncation_tolerance": (0.0, 1e-3),
    "prominence": (0.0, 1.0),
}


class UsageError(Exception):
    pass


def _out(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        io.write_text(path, text)


def _out_dir(args):
    d = args.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "."
    os.makedirs(d, exist_ok=True)
    return d


def _catalog(args):
    path = getattr(args, "catalog", None)
    if not path:
        cat = DEFAULT_CATALOG
    else:
        with open(path) as fh:
            cat = PhononCatalog.from_dict(json.load(fh))
    crit = getattr(args, "critical_shift_mev", None)
    if crit is not None:
        cat = PhononCatalog(cat.acoustic_mev, cat.out_of_plane_optical_mev,
                            cat.in_plane_optical_mev, crit)
    return cat


# subcommands --------------------------------------------------------------------

def cmd_fc_table(args):
    rows = []
    for S in args.s:
        for n_star in range(args.n_star_max + 1):
            for n in range(args.n_max + 1):
                rows.append((float(S), n, n_star, franck_condon_factor(S, n, n_star)))
    _out(args.out, io._csv_text({}, ["S", "n", "n_star", "F"], rows))


def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    out_dir = _out_dir(args)
    kind = sc.get("kind", "defect")
    seed = args.seed if args.seed is not None else sc.get("seed", 0)
    manifest = {"scenario": sc.get("name", os.path.basename(args.scenario)), "kind": kind,
                "seed": int(seed), "rng": RNG_ALGORITHM, "files": []}

    def emit(name, text):
        io.write_text(os.path.join(out_dir, name), text)
        manifest["files"].append(name)

    noise = NoiseSpec(int(seed), sc.get("noise", "poisson"))
    if kind == "defect":
        sc = dict(sc, truncation_tolerance=args.truncation_tolerance)
        res = run_scenario(sc, seed)
        meta = {"seed": seed}
        em = res["emission"]
        emit("emission_scan.csv", io.scan_csv(em, meta))
        for label, scan in res["absorption"].items():
            exc = next(e for e in sc["excitations"] if e["label"] == label)
            emit(f"absorption_{label}.csv",
                 io.scan_csv(scan, dict(meta, excitation_nm=exc["wavelength_nm"])))
        emit("luminescence.csv", io.spectrum_csv(em.summed_spectrum()))
        if res["calibration_rows"] is not None:
            emit("calibration.csv", io.calibration_csv(res["calibration_rows"]))
        manifest["truth"] = res["truth"]
    elif kind == "survey":
        recs = generate_survey(sc["n_defects"], sc.get("indirect_fraction", 0.6),
                               _catalog(args), noise)
        emit("records.jsonl", io.records_jsonl(recs))
    elif kind == "g2":
        grid = np.linspace(-sc["tau_max_ns"], sc["tau_max_ns"], sc["n_points"])
        tr = generate_g2(sc["dip_depth"], sc["correlation_time_ns"], grid, noise,
                         sc.get("counts_per_bin", 1000.0))
        emit("g2.csv", io.g2_csv(tr))
    elif kind == "lifetime":
        grid = np.arange(sc["n_bins"]) * sc["bin_ns"]
        h = generate_decay(sc["tau_ns"], sc["total_counts"], grid, sc.get("pulse_ns", 5.0),
                           sc.get("background_per_bin", 2.0), noise)
        emit("decay.csv", io.decay_csv(h))
    else:
        raise DomainError(f"unknown scenario kind {kind!r}")
    io.write_text(os.path.join(out_dir, "manifest.json"), io.dumps_json(manifest))


def _load_energy_spectrum(path):
    s = io.read_spectrum(path)
    if s.axis_kind == "wavelength_nm":
        s = wavelength_counts_to_energy_counts(s)
    return s


def cmd_band(args):
    lum = _load_energy_spectrum(args.inp)
    if lum.units_kind != "counts_per_energy":
        raise DomainError("band expects a luminescence spectrum in counts_per_energy")
    zpl = args.zpl_ev
    if zpl is None:
        zpl = find_zpl_and_sidebands(lum, args.prominence).zpl_energy_ev
    W = absorption_profile_from_luminescence(lum, zpl)
    _out(args.out, io.spectrum_csv(W))
    above = W.axis > args.min_shift_mev
    peak = float(W.axis[above][np.argmax(W.values[above])]) if above.any() else math.nan
    summary = {"zpl_energy_ev": zpl, "peak_stokes_shift_mev": peak,
               "peak_region": phonon_region(peak, _catalog(args)).value if math.isfinite(peak) else None,
               "min_shift_mev": args.min_shift_mev}
    if args.summary:
        io.write_text(args.summary, io.dumps_json(summary))
    if args.svg:
        io.write_text(args.svg, io.svg_plot(W.axis, W.values, "Stokes shift (meV)", "W (arb.)"))


def _fit_window(scan_energy, counts, angles, zpl, window_mev):
    sel = np.abs(scan_energy - zpl) <= window_mev * 1e-3
    if not sel.any():
        sel = np.zeros_like(scan_energy, dtype=bool)
        sel[int(np.argmin(np.abs(scan_energy - zpl)))] = True
    y = counts[:, sel].sum(axis=1)
    return fit_cos2(angles, y, poisson_weights(y))


def cmd_fit_polarization(args):
    scan, meta = io.read_scan(args.inp)
    res = fit_spectrally_resolved(scan, args.bin_width_ev)
    summed = scan.summed_spectrum()
    if summed.axis_kind == "wavelength_nm":
        summed = wavelength_counts_to_energy_counts(summed)
        energy_axis = HC_EV_NM / scan.axis
        counts = scan.counts * scan.axis ** 2 / HC_EV_NM
    else:
        energy_axis, counts = scan.axis, scan.counts
    zpl = args.zpl_ev if args.zpl_ev is not None else \
        find_zpl_and_sidebands(summed, args.prominence).zpl_energy_ev
    cal = io.read_calibration_map(args.calibration) if args.calibration else None
    apply_cal = cal is not None and scan.role == "emission_scan"

    theta_cal = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for e, t in zip(res.energies_ev, res.theta_deg):
            if apply_cal and np.isfinite(t):
                theta_cal.append(apply_calibration(t, HC_EV_NM / e, cal))
            else:
                theta_cal.append(t)
    header = ["energy_ev", "theta_deg", "theta_calibrated_deg", "visibility", "chi2_red",
              "degenerate", "total_counts"]
    rows = [(float(e), float(t), float(tc), float(v), float(q), int(d), float(c))
            for e, t, tc, v, q, d, c in zip(res.energies_ev, res.theta_deg, theta_cal,
                                             res.visibility, res.fit_quality, res.degenerate,
                                             res.total_counts)]
    _out(args.out, io._csv_text({"role": scan.role}, header, rows))

    avg = fit_cos2(scan.angles_deg, scan.angular_profile(), poisson_weights(scan.angular_profile()))
    zfit = _fit_window(energy_axis, counts, scan.angles_deg, zpl, args.zpl_window_mev)
    theta_zpl = zfit.theta0_deg
    vis_zpl = visibility(zfit)
    lam_zpl = HC_EV_NM / zpl
    if apply_cal and np.isfinite(theta_zpl):
        theta_zpl = apply_calibration(theta_zpl, lam_zpl, cal)
        vis_zpl = correct_visibility(vis_zpl, lam_zpl, theta_zpl, cal)
    summary = {
        "role": scan.role, "zpl_energy_ev": zpl, "zpl_wavelength_nm": lam_zpl,
        "theta_zpl_deg": theta_zpl, "theta_zpl_err_deg": zfit.theta0_err_deg,
        "visibility_zpl": vis_zpl, "calibrated": bool(apply_cal),
        "spectrally_averaged": {"offset_a": avg.offset_a, "amplitude_b": avg.amplitude_b,
                                "theta0_deg": avg.theta0_deg, "visibility": visibility(avg),
                                "degenerate": avg.degenerate},
        "n_bins": int(len(res.energies_ev)), "n_degenerate_bins": int(res.degenerate.sum()),
        "scan_metadata": meta,
    }
    if args.summary:
        io.write_text(args.summary, io.dumps_json(summary))
    if args.svg:
        ok = np.isfinite(np.asarray(theta_cal))
        io.write_text(args.svg, io.svg_plot(res.energies_ev[ok], np.asarray(theta_cal)[ok],
                                            "energy (eV)", "theta (deg)", scatter=True))


def cmd_calibrate(args):
    cal = build_calibration(io.read_calibration_rows(args.inp))
    _out(args.out, io.dumps_json(cal.to_dict()))


def _load_summary(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_classify(args):
    abs_vis = args.abs_visibility
    emit_vis = args.emit_visibility
    theta_abs, theta_emit = args.theta_abs, args.theta_emit
    zpl = args.zpl_ev if args.zpl_ev is not None else (
        wavelength_to_energy(args.zpl_nm) if args.zpl_nm is not None else None)
    exc = args.exc_ev if args.exc_ev is not None else (
        wavelength_to_energy(args.exc_nm) if args.exc_nm is not None else None)
    if args.abs_summary:
        s = _load_summary(args.abs_summary)
        theta_abs = s["theta_zpl_deg"] if theta_abs is None else theta_abs
        abs_vis = s.get("visibility_zpl") if abs_vis is None else abs_vis
        if exc is None and "excitation_nm" in s.get("scan_metadata", {}):
            exc = wavelength_to_energy(float(s["scan_metadata"]["excitation_nm"]))
    if args.emit_summary:
        s = _load_summary(args.emit_summary)
        theta_emit = s["theta_zpl_deg"] if theta_emit is None else theta_emit
        emit_vis = s.get("visibility_zpl") if emit_vis is None else emit_vis
        zpl = s["zpl_energy_ev"] if zpl is None else zpl
    missing = [n for n, v in (("theta_abs", theta_abs), ("theta_emit", theta_emit),
                              ("zpl energy", zpl), ("excitation energy", exc)) if v is None]
    if missing:
        raise UsageError(f"classify: missing {', '.join(missing)}")
    rec = DefectRecord(zpl_energy_ev=zpl, excitation_energy_ev=exc, theta_abs_deg=theta_abs,
                       theta_emit_deg=theta_emit, abs_visibility=abs_vis,
                       emit_visibility=emit_vis).classified(_catalog(args), args.theta_tolerance_deg)
    _out(args.out, io.dumps_json(rec.__dict__))


def cmd_survey(args):
    recs = io.read_records(args.inp)
    st = survey_stats(recs, args.bin, _catalog(args), args.theta_tolerance_deg,
                      args.cluster_tolerance_deg)
    out_dir = _out_dir(args)
    io.write_text(os.path.join(out_dir, "scatter.csv"), io._csv_text(
        {}, ["stokes_shift_mev", "delta_theta_deg", "region", "mechanism"],
        ((r["stokes_shift_mev"], r["delta_theta_deg"], r["region"], r["mechanism"])
         for r in st.scatter)))
    edges = st.bin_edges_deg
    io.write_text(os.path.join(out_dir, "histogram.csv"), io._csv_text(
        {}, ["bin_lo_deg", "bin_hi_deg", "count"],
        ((float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], st.histogram))))
    io.write_text(os.path.join(out_dir, "survey_stats.json"), io.dumps_json(st.summary()))
    if args.svg:
        io.write_text(os.path.join(out_dir, "scatter.svg"), io.svg_plot(
            [r["stokes_shift_mev"] for r in st.scatter], [r["delta_theta_deg"] for r in st.scatter],
            "Stokes shift (meV)", "delta theta (deg)", scatter=True))


def cmd_g2_fit(args):
    fit = fit_g2(io.read_g2(args.inp))
    d = fit.to_dict()
    d["verdict"] = is_single_emitter(fit.g2_zero, fit.g2_zero_err)
    _out(args.out, io.dumps_json(d))


def cmd_lifetime_fit(args):
    fit = fit_lifetime(io.read_decay(args.inp), tuple(args.bg_window), args.skip_ns)
    _out(args.out, io.dumps_json(fit.to_dict()))


# parser -------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(2)


def build_parser():
    p = _Parser(prog="defectspec", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of option defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, catalog=False, prominence=False, theta_tol=False):
        if catalog:
            sp.add_argument("--catalog", help="JSON phonon catalog override")
            sp.add_argument("--critical-shift-mev", type=float, default=None)
        if prominence:
            sp.add_argument("--prominence", type=float, default=0.05)
        if theta_tol:
            sp.add_argument("--theta-tolerance-deg", "--tol", type=float, default=10.0)

    sp = sub.add_parser("fc-table", help="Franck-Condon factor table as CSV")
    sp.add_argument("--s", type=float, nargs="+", required=True)
    sp.add_argument("--n-max", type=int, required=True)
    sp.add_argument("--n-star-max", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fc_table)

    sp = sub.add_parser("simulate", help="generate synthetic data from a scenario")
    sp.add_argument("--scenario", required=True, help="path or bundled name (fig3, fig5, ...)")
    sp.add_argument("--out-dir")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--truncation-tolerance", type=float, default=1e-9)
    common(sp, catalog=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("band", help="luminescence CSV -> absorption profile W(dE) CSV")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--zpl-ev", type=float)
    sp.add_argument("--out")
    sp.add_argument("--summary")
    sp.add_argument("--svg")
    sp.add_argument("--min-shift-mev", type=float, default=FILTER_CUTOFF_MEV)
    common(sp, catalog=True, prominence=True)
    sp.set_defaults(func=cmd_band)

    sp = sub.add_parser("fit-polarization", help="spectrally resolved cos^2 fits of a scan")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--bin-width-ev", type=float, default=0.001)
    sp.add_argument("--calibration", help="calibration map JSON (emission scans)")
    sp.add_argument("--zpl-ev", type=float)
    sp.add_argument("--zpl-window-mev", type=float, default=2.0)
    sp.add_argument("--out")
    sp.add_argument("--summary")
    sp.add_argument("--svg")
    common(sp, prominence=True)
    sp.set_defaults(func=cmd_fit_polarization)

    sp = sub.add_parser("calibrate", help="calibration CSV -> calibration map JSON")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("classify", help="classify one defect")
    for name in ("--zpl-ev", "--zpl-nm", "--exc-ev", "--exc-nm", "--theta-abs", "--theta-emit",
                 "--abs-visibility", "--emit-visibility"):
        sp.add_argument(name, type=float)
    sp.add_argument("--abs-summary", help="fit-polarization summary of the absorption scan")
    sp.add_argument("--emit-summary", help="fit-polarization summary of the emission scan")
    sp.add_argument("--out")
    common(sp, catalog=True, theta_tol=True)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("survey", help="survey statistics from a records JSON-lines file")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--bin", type=float, default=5.0)
    sp.add_argument("--cluster-tolerance-deg", type=float, default=5.0)
    sp.add_argument("--out-dir")
    sp.add_argument("--svg", action="store_true")
    common(sp, catalog=True, theta_tol=True)
    sp.set_defaults(func=cmd_survey)

    sp = sub.add_parser("g2-fit", help="fit an antibunching trace")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_g2_fit)

    sp = sub.add_parser("lifetime-fit", help="fit a pulsed decay histogram")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--bg-window", type=float, nargs=2, required=True, metavar=("T0", "T1"))
    sp.add_argument("--skip-ns", type=float, default=1.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_lifetime_fit)
    return p


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()
                               if k.replace("-", "_") in dests})


def _check_ranges(args):
    for name, (lo, hi) in TOLERANCE_RANGES.items():
        v = getattr(args, name, None)
        if v is not None and not lo < v <= hi:
            raise UsageError(f"{name.replace('_', '-')} must lie in ({lo}, {hi}], got {v}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        _check_ranges(args)
    except UsageError as exc:
        sys.stderr.write(f"defectspec: error: {exc}\n")
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    try:
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"defectspec: error: {exc}\n")
        return 2
    except DefectSpecError as exc:
        sys.stderr.write(json.dumps(io._plain(exc.to_dict()), sort_keys=True) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
