import csv
import json

import numpy as np
import pytest

from fiosample import cli
from fiosample.grid_core import coherent_state, read_grid_bin, read_grid_png
from fiosample.radon_parallel import read_sinogram


def run(tmp_path, command, config=None, *extra):
    out = tmp_path / command
    args = [command, "--out", str(out), *extra]
    if config is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    code = cli.main(args)
    report = json.loads((out / "report.json").read_text()) if code == 0 else None
    return code, out, report


SMALL_PHANTOM = {
    "kind": "gaussian_sum",
    "params": {"centers": [[0.1, 0.2]], "widths": [0.05], "amplitudes": [1.0]},
    "support_radius": 0.5,
}


class TestConfig:
    def test_unknown_key(self, tmp_path):
        code, _, _ = run(tmp_path, "counts", {"bogus": 1})
        assert code == cli.EXIT_CONFIG

    def test_unknown_nested_key(self, tmp_path):
        code, _, _ = run(tmp_path, "phantom", {"phantom": {"kind": "gaussian_sum", "colour": "red"}})
        assert code == cli.EXIT_CONFIG

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert cli.main(["counts", "--config", str(path), "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert cli.main(["counts", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_wrong_type(self, tmp_path):
        code, _, _ = run(tmp_path, "counts", {"R": "one"})
        assert code == cli.EXIT_CONFIG

    def test_phantom_outside_support(self, tmp_path):
        bad = {"kind": "gaussian_sum", "params": {"centers": [[2.0, 0.0]], "widths": [0.05], "amplitudes": [1.0]}}
        code, _, _ = run(tmp_path, "phantom", {"phantom": bad})
        assert code == cli.EXIT_CONFIG

    def test_numeric_failure(self, tmp_path):
        code, _, _ = run(tmp_path, "resolution-diagram", {"R": 1.0, "points": [[2.0, 0.0]]})
        assert code == cli.EXIT_NUMERIC

    def test_flags_override_config(self, tmp_path):
        code, _, report = run(tmp_path, "counts", {"h": 0.05}, "--h", "0.02")
        assert code == 0
        assert report["h"] == 0.02


class TestCounts:
    def test_csv_columns(self, tmp_path):
        code, out, report = run(tmp_path, "counts")
        assert code == 0
        with open(out / "counts.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 2
        need = {"N_f", "weyl_bound", "parallel_rectangular", "parallel_efficient", "fan_rectangular", "fan_efficient"}
        need |= {f"strips_{k}" for k in (1, 2, 4, 8)}
        assert need <= set(rows[0])
        assert report["parallel_rectangular"] == int(rows[1][rows[0].index("parallel_rectangular")])

    def test_deterministic(self, tmp_path):
        _, out1, _ = run(tmp_path / "a", "counts")
        _, out2, _ = run(tmp_path / "b", "counts")
        assert (out1 / "counts.csv").read_bytes() == (out2 / "counts.csv").read_bytes()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


class TestWeyl:
    def test_rows(self, tmp_path):
        code, _, report = run(tmp_path, "weyl", {"hs": [0.04, 0.02]})
        assert code == 0
        assert [r["h"] for r in report["rows"]] == [0.04, 0.02]
        assert report["rows"][0]["ratio"] < report["rows"][1]["ratio"] <= 1


class TestPhantom:
    def test_seeded_random(self, tmp_path):
        cfg = {"phantom": {"kind": "random_gaussians", "count": 6, "width": 0.03}, "n": 64, "h": 0.02}
        _, out1, r1 = run(tmp_path / "a", "phantom", cfg, "--seed", "7")
        _, out2, r2 = run(tmp_path / "b", "phantom", cfg, "--seed", "7")
        _, _, r3 = run(tmp_path / "c", "phantom", cfg, "--seed", "8")
        assert r1 == r2
        assert r1["params"]["centers"] != r3["params"]["centers"]
        assert len(r1["params"]["centers"]) == 6
        assert (out1 / "phantom.png").read_bytes() == (out2 / "phantom.png").read_bytes()

    def test_png_sidecar_holds_range(self, tmp_path):
        code, out, _ = run(tmp_path, "phantom", {"phantom": SMALL_PHANTOM, "n": 64, "h": 0.02, "half_width": 0.5})
        assert code == 0
        side = json.loads((out / "phantom.png.json").read_text())
        vals = read_grid_png(out / "phantom.png")
        assert side["max"] == pytest.approx(1.0, abs=0.05)
        assert vals.max() == pytest.approx(side["max"])
        assert vals.min() == pytest.approx(side["min"])

    @pytest.mark.parametrize("fmt", ["csv", "bin"])
    def test_formats(self, tmp_path, fmt):
        code, out, report = run(tmp_path, "phantom", {"phantom": SMALL_PHANTOM, "n": 32, "h": 0.02, "half_width": 0.5}, "--format", fmt)
        assert code == 0
        assert report["files"] == [f"phantom.{fmt}"]


class TestSampleReconstruct:
    def test_roundtrip(self, tmp_path):
        phantom = {"kind": "coherent_state", "params": {"x0": [0.0, 0.0], "xi0": [0.0, 0.5]}}
        code, out, report = run(tmp_path, "sample", {"phantom": phantom, "h": 0.02, "s": 0.8, "B": [1.0, 1.0]})
        assert code == 0
        assert report["count"] > 0
        lattice = json.loads((out / "lattice.json").read_text())
        cfg = {"samples": str(out / "samples.csv"), "lattice": lattice, "n": 64, "format": "bin"}
        code, out2, _ = run(tmp_path, "reconstruct", cfg)
        assert code == 0
        rec = read_grid_bin(out2 / "reconstruction.bin")
        ref = coherent_state(*rec.mesh(), (0.0, 0.0), (0.0, 0.5), 0.02).real
        assert np.linalg.norm(rec.values - ref) / np.linalg.norm(ref) < 1e-2

    def test_missing_samples(self, tmp_path):
        lattice = {"W": [[1, 0], [0, 1]], "s": 1.0, "h": 0.02}
        code, _, _ = run(tmp_path, "reconstruct", {"samples": str(tmp_path / "none.csv"), "lattice": lattice})
        assert code == cli.EXIT_CONFIG


class TestRadon:
    def test_parallel(self, tmp_path):
        cfg = {"phantom": SMALL_PHANTOM, "n": 64, "n_phi": 90, "h": 0.02}
        code, out, report = run(tmp_path, "radon-parallel", cfg)
        assert code == 0
        sino = read_sinogram(out / "sinogram.mrs")
        assert sino.grid.n == (90, 64)
        assert report["fbp_relative_error"] < 0.05

    def test_fan(self, tmp_path):
        cfg = {"phantom": SMALL_PHANTOM, "n": 64, "n_alpha": 120, "n_beta": 120, "h": 0.02}
        code, _, report = run(tmp_path, "radon-fan", cfg)
        assert code == 0
        assert report["fbp_relative_error"] < 0.05


class TestDemos:
    def test_classical_alias(self, tmp_path):
        code, out, report = run(tmp_path, "alias-demo", {"mode": "classical"})
        assert code == 0
        aliased = [p for p in report["peaks"] if p["aliased"]]
        assert len(aliased) == 2
        assert all(p["bin_error"] == [0, 0] for p in report["peaks"])
        for name in ("original", "undersampled", "spectrum_original", "spectrum_undersampled"):
            assert (out / f"{name}.png").exists()

    def test_resolution_diagram(self, tmp_path):
        code, out, report = run(tmp_path, "resolution-diagram", {"R": 1.0, "points": [[0.0, 0.0], [0.8, 0.0]], "directions": 36})
        assert code == 0
        assert report["center_isotropy"] < 1e-12
        with open(out / "resolution_diagram.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 72
        edge = [r for r in rows if float(r["x1"]) == 0.8]
        assert all(float(r["union"]) >= float(r["intersection"]) for r in edge)

    def test_tat_zero_phantom(self, tmp_path):
        code, out, report = run(tmp_path, "tat-demo", {"n": 64, "T": 0.5, "zero_phantom": True, "speeds": ["slow"]})
        assert code == 0
        assert report["slow"]["phantom_max_frequency"] == 0.0
        assert report["slow"]["cone_fraction"] == 0.0
        side = json.loads((out / "slow_trace.png.json").read_text())
        assert side["min"] == side["max"] == 0.0
