"""Readers and writers for the CSV / JSON / JSON-lines file formats.

CSV files start with one ``# key=value,key=value`` metadata comment, followed
by a header row whose column names carry units, then data rows. Malformed
input raises :class:`FormatError` naming the offending line.
"""
import csv
import io as _io
import json
import math

import numpy as np

from .classify import DefectRecord
from .errors import DefectSpecError
from .photostats import CorrelationTrace, DecayHistogram
from .polarfit import AngleResolvedSpectrum, CalibrationMap
from .spectra import Spectrum


class FormatError(DefectSpecError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = f"{path or '<input>'}" + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line

    def to_dict(self):
        d = super().to_dict()
        d["path"] = self.path
        d["line"] = self.line
        return d


def fmt(x):
    """Shortest round-trip text for a float, so reruns are byte-identical."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def dumps_json(obj):
    """Stable JSON text; NaN and infinities become ``null``."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv_text(meta, header, rows):
    buf = _io.StringIO()
    if meta:
        buf.write("# " + ",".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _read_csv(path, expected_cols):
    """Return ``(meta, header, float rows)``; rows must have ``expected_cols`` fields."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    meta = {}
    header = None
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header is None:
                for part in line[1:].split(","):
                    if "=" in part:
                        k, v = part.split("=", 1)
                        meta[k.strip()] = v.strip()
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = [f.strip() for f in fields]
            if len(header) not in expected_cols:
                raise FormatError(f"expected {sorted(expected_cols)} columns, got {len(header)}",
                                  path, lineno)
            continue
        if len(fields) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(fields)}", path, lineno)
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise FormatError(f"non-numeric field in {line!r}", path, lineno) from None
    if header is None or not rows:
        raise FormatError("no data rows", path)
    return meta, header, np.array(rows)


# spectra ----------------------------------------------------------------------

def spectrum_csv(s):
    return _csv_text({"axis_kind": s.axis_kind, "units_kind": s.units_kind},
                     [s.axis_kind, s.units_kind], zip(s.axis, s.values))


def write_spectrum(path, s):
    write_text(path, spectrum_csv(s))


def read_spectrum(path):
    meta, header, data = _read_csv(path, {2})
    axis_kind = meta.get("axis_kind", header[0])
    units_kind = meta.get("units_kind", header[1])
    try:
        return Spectrum(axis_kind, data[:, 0], data[:, 1], units_kind)
    except DefectSpecError as exc:
        raise FormatError(f"schema mismatch: {exc}", path) from None


def scan_csv(scan, extra_meta=None):
    meta = {"axis_kind": scan.axis_kind, "units_kind": scan.units_kind, "role": scan.role}
    meta.update(extra_meta or {})
    rows = ((a, x, c) for i, a in enumerate(scan.angles_deg)
            for x, c in zip(scan.axis, scan.counts[i]))
    return _csv_text(meta, ["angle_deg", scan.axis_kind, "counts"], rows)


def write_scan(path, scan, extra_meta=None):
    write_text(path, scan_csv(scan, extra_meta))


def read_scan(path):
    meta, header, data = _read_csv(path, {3})
    if header[0] != "angle_deg" or header[2] != "counts":
        raise FormatError("scan header must be angle_deg,<axis>,counts", path, None)
    axis_kind = meta.get("axis_kind", header[1])
    role = meta.get("role", "emission_scan")
    units = meta.get("units_kind",
                     "counts_per_wavelength" if axis_kind == "wavelength_nm" else "counts_per_energy")
    angles = np.unique(data[:, 0])
    axis = np.unique(data[:, 1])
    if len(angles) * len(axis) != len(data):
        raise FormatError("scan is not a complete angle x axis grid", path)
    counts = np.full((len(angles), len(axis)), np.nan)
    ia = np.searchsorted(angles, data[:, 0])
    ix = np.searchsorted(axis, data[:, 1])
    counts[ia, ix] = data[:, 2]
    if np.isnan(counts).any():
        raise FormatError("scan has duplicate or missing (angle, axis) cells", path)
    try:
        return AngleResolvedSpectrum(angles, axis, counts, role, axis_kind, units), meta
    except DefectSpecError as exc:
        raise FormatError(f"schema mismatch: {exc}", path) from None


# calibration ------------------------------------------------------------------

CALIBRATION_HEADER = ["wavelength_nm", "theta_true_deg", "theta_measured_deg", "visibility"]


def calibration_csv(rows):
    return _csv_text({"kind": "polarization_calibration"}, CALIBRATION_HEADER,
                     ([float(v) for v in r] for r in rows))


def read_calibration_rows(path):
    _, header, data = _read_csv(path, {4})
    if header != CALIBRATION_HEADER:
        raise FormatError(f"calibration header must be {','.join(CALIBRATION_HEADER)}", path, None)
    return [tuple(r) for r in data]


def read_calibration_map(path):
    with open(path) as fh:
        try:
            return CalibrationMap.from_dict(json.load(fh))
        except (KeyError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad calibration map: {exc}", path) from None


# photon statistics ------------------------------------------------------------

def g2_csv(trace):
    if trace.g2_err is None:
        return _csv_text({}, ["tau_ns", "g2"], zip(trace.tau_ns, trace.g2))
    return _csv_text({}, ["tau_ns", "g2", "g2_err"], zip(trace.tau_ns, trace.g2, trace.g2_err))


def read_g2(path):
    _, header, data = _read_csv(path, {2, 3})
    if header[:2] != ["tau_ns", "g2"]:
        raise FormatError("g2 header must be tau_ns,g2[,g2_err]", path, None)
    err = data[:, 2] if data.shape[1] == 3 else None
    return CorrelationTrace(data[:, 0], data[:, 1], err)


def decay_csv(hist):
    return _csv_text({}, ["time_ns", "counts"], zip(hist.time_ns, hist.counts))


def read_decay(path):
    _, header, data = _read_csv(path, {2})
    if header != ["time_ns", "counts"]:
        raise FormatError("decay header must be time_ns,counts", path, None)
    return DecayHistogram(data[:, 0], data[:, 1])


# records ----------------------------------------------------------------------

def records_jsonl(records):
    return "".join(r.to_json() + "\n" for r in records)


def read_records(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(DefectRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path, lineno) from None
            except (TypeError, DefectSpecError) as exc:
                raise FormatError(f"schema mismatch: {exc}", path, lineno) from None
    if not out:
        raise FormatError("no records", path)
    return out


# plots --------------------------------------------------------------------------

def svg_plot(x, y, xlabel, ylabel, scatter=False, width=480, height=320):
    """Minimal standalone SVG line or scatter plot."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = 40
    x0, x1 = float(np.nanmin(x)), float(np.nanmax(x))
    y0, y1 = float(np.nanmin(y)), float(np.nanmax(y))
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    px = m + (x - x0) / (x1 - x0) * (width - 2 * m)
    py = height - m - (y - y0) / (y1 - y0) * (height - 2 * m)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" '
             'fill="none" stroke="black"/>']
    if scatter:
        parts += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2"/>' for a, b in zip(px, py)
                  if np.isfinite(a) and np.isfinite(b)]
    else:
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py) if np.isfinite(a) and np.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="black" points="{pts}"/>')
    parts.append(f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" '
                 f'text-anchor="middle">{ylabel}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)
