import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from defectspec import io
from defectspec.cli import main
from defectspec.errors import DomainError
from defectspec.spectra import Spectrum

from pipelines import fig5_pipeline, run


def read_csv_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class TestFormats:
    def test_spectrum_round_trip(self, tmp_path):
        s = Spectrum("energy_ev", [1.9, 2.0, 2.1], [0.1, 1 / 3, 0.0])
        path = tmp_path / "s.csv"
        io.write_spectrum(path, s)
        back = io.read_spectrum(path)
        assert back.axis_kind == "energy_ev" and back.units_kind == "counts_per_energy"
        assert np.array_equal(back.values, s.values)

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# axis_kind=energy_ev,units_kind=counts_per_energy\n"
                        "energy_ev,counts_per_energy\n2.0,1.0\n2.1,abc\n")
        with pytest.raises(io.FormatError) as info:
            io.read_spectrum(path)
        assert info.value.line == 4
        path.write_text("energy_ev,counts_per_energy\n2.0,1.0,3.0\n")
        with pytest.raises(io.FormatError) as info:
            io.read_spectrum(path)
        assert info.value.line == 2

    def test_schema_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("energy_ev,counts_per_energy\n2.0,1.0\n1.9,-1.0\n")
        with pytest.raises(io.FormatError):
            io.read_spectrum(path)

    def test_records_bad_line(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text('{"zpl_energy_ev": 2.0, "excitation_energy_ev": 2.2, "theta_abs_deg": 1, '
                        '"theta_emit_deg": 2}\n{oops\n')
        with pytest.raises(io.FormatError) as info:
            io.read_records(path)
        assert info.value.line == 2

    def test_fmt_round_trips(self):
        for x in (0.1, 1 / 3, 1e-300, 2.0, math.pi):
            assert float(io.fmt(x)) == x
        assert io.fmt(float("nan")) == "nan"


class TestCommands:
    def test_fc_table(self, tmp_path):
        out = tmp_path / "fc.csv"
        assert main(["fc-table", "--s", "1", "--n-max", "5", "--out", str(out)]) == 0
        rows = read_csv_rows(out)
        assert len(rows) == 6
        for r in rows:
            n = int(r["n"])
            assert float(r["F"]) == pytest.approx(math.exp(-1) / math.factorial(n), abs=1e-15)

    def test_fig5_verdicts(self, tmp_path):
        v = fig5_pipeline(tmp_path)
        assert v["532nm"]["mechanism"] == "DirectConsistent"
        assert v["473nm"]["mechanism"] == "IndirectLikely"

    def test_survey_histogram_mass(self, tmp_path):
        run("simulate", "--scenario", "survey", "--out-dir", tmp_path)
        run("survey", "--in", tmp_path / "records.jsonl", "--bin", 5, "--out-dir", tmp_path)
        hist = read_csv_rows(tmp_path / "histogram.csv")
        assert sum(int(float(r["count"])) for r in hist) == 103
        assert len(read_csv_rows(tmp_path / "scatter.csv")) == 103

    def test_classify_direct_values(self, tmp_path, capsys):
        code = main(["classify", "--zpl-nm", "577", "--exc-nm", "473", "--theta-abs", "120",
                     "--theta-emit", "70"])
        assert code == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["mechanism"] == "IndirectLikely" and rec["region"] == "RegionIII"

    def test_critical_shift_override(self, capsys):
        argv = ["classify", "--zpl-ev", "2.0", "--exc-ev", "2.201", "--theta-abs", "40", "--theta-emit", "0"]
        assert main(argv) == 0
        assert json.loads(capsys.readouterr().out)["mechanism"] == "Ambiguous"
        assert main(argv + ["--critical-shift-mev", "200"]) == 0
        assert json.loads(capsys.readouterr().out)["mechanism"] == "IndirectLikely"

    def test_config_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"theta_tolerance_deg": 60.0}))
        argv = ["classify", "--zpl-ev", "2.0", "--exc-ev", "2.5", "--theta-abs", "40", "--theta-emit", "0"]
        assert main(argv) == 0
        assert json.loads(capsys.readouterr().out)["mechanism"] == "IndirectLikely"
        assert main(["--config", str(cfg)] + argv) == 0
        assert json.loads(capsys.readouterr().out)["mechanism"] == "Ambiguous"

    def test_catalog_file(self, tmp_path, capsys):
        cat = tmp_path / "cat.json"
        cat.write_text(json.dumps({"in_plane_optical_mev": [150, 200]}))
        argv = ["classify", "--zpl-ev", "2.0", "--exc-ev", "2.201", "--theta-abs", "40", "--theta-emit", "0",
                "--catalog", str(cat)]
        assert main(argv) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["mechanism"] == "IndirectLikely" and rec["region"] == "Gap"

    def test_g2_and_lifetime(self, tmp_path):
        run("simulate", "--scenario", "g2", "--out-dir", tmp_path)
        run("g2-fit", "--in", tmp_path / "g2.csv", "--out", tmp_path / "fit.json")
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert fit["verdict"] == "single"
        run("simulate", "--scenario", "lifetime", "--out-dir", tmp_path)
        run("lifetime-fit", "--in", tmp_path / "decay.csv", "--bg-window", 0, 4, "--out", tmp_path / "lt.json")
        assert json.loads((tmp_path / "lt.json").read_text())["tau_ns"] == pytest.approx(3.0, rel=0.05)

    def test_band_summary(self, tmp_path):
        run("simulate", "--scenario", "fig3", "--out-dir", tmp_path)
        run("band", "--in", tmp_path / "luminescence.csv", "--out", tmp_path / "w.csv",
            "--summary", tmp_path / "s.json")
        s = json.loads((tmp_path / "s.json").read_text())
        assert s["peak_region"] == "RegionI"
        w = io.read_spectrum(tmp_path / "w.csv")
        assert w.axis_kind == "stokes_mev" and w.units_kind == "band_density"

    def test_output_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DEFECTSPEC_OUTPUT_DIR", str(tmp_path / "envdir"))
        assert main(["simulate", "--scenario", "g2"]) == 0
        assert (tmp_path / "envdir" / "g2.csv").exists()
        manifest = json.loads((tmp_path / "envdir" / "manifest.json").read_text())
        assert manifest["seed"] == 2 and "Philox" in manifest["rng"]

    def test_seed_override_changes_output(self, tmp_path):
        run("simulate", "--scenario", "g2", "--out-dir", tmp_path / "a")
        run("simulate", "--scenario", "g2", "--out-dir", tmp_path / "b", "--seed", 99)
        assert (tmp_path / "a" / "g2.csv").read_bytes() != (tmp_path / "b" / "g2.csv").read_bytes()


class TestExitCodes:
    def test_usage_errors(self, capsys):
        assert main(["no-such-command"]) == 2
        assert main(["fc-table", "--s", "1"]) == 2
        assert main(["fc-table", "--s", "1", "--n-max", "3", "--bogus"]) == 2
        assert main(["classify", "--zpl-ev", "2.0"]) == 2
        assert main(["classify", "--zpl-ev", "2", "--exc-ev", "2.2", "--theta-abs", "1", "--theta-emit", "1",
                     "--theta-tolerance-deg", "120"]) == 2

    def test_data_error_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("tau_ns,g2\n0,1\n1,x\n")
        assert main(["g2-fit", "--in", str(bad)]) == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "FormatError" and err["line"] == 3

    def test_domain_error_json(self, capsys):
        assert main(["fc-table", "--s", "-1", "--n-max", "3"]) == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == DomainError.__name__

    def test_missing_file(self, capsys):
        assert main(["g2-fit", "--in", "/nonexistent/file.csv"]) == 1
        assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "defectspec", "fc-table", "--s", "0", "--n-max", "1"],
                             capture_output=True, text=True, env={**os.environ})
        assert res.returncode == 0
        assert res.stdout.splitlines()[0] == "S,n,n_star,F"


def test_json_non_finite_is_null():
    assert json.loads(io.dumps_json({"x": float("nan"), "y": np.float64(np.inf), "z": 1.5})) == \
        {"x": None, "y": None, "z": 1.5}
