"""CLI contract: schemas, exit codes, determinism, artifacts."""

import json
import math
import subprocess
import sys
from pathlib import Path

EXE = [sys.executable, "-m", "mtriples.cli"]

DISK = {"kind": "disk", "center": [0, 0], "radius": 1.0, "punctures": []}


def run_cli(tmp_path, group, action, cfg, name="cfg", extra=None):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / f"out_{name}"
    cmd = EXE + [group, action, "--config", str(cfg_path), "--out", str(out)]
    if extra:
        cmd += extra
    proc = subprocess.run(cmd, capture_output=True, text=True)
    report = None
    report_path = out / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
    return proc, report, out


class TestTripleCommands:
    def test_check_reports_anchor_curvature(self, tmp_path):
        cfg = {"triple": {"domain": DISK, "f": "1", "g": "z", "m": 2}}
        proc, report, _ = run_cli(tmp_path, "triple", "check", cfg)
        assert proc.returncode == 0
        assert abs(report["curvature_at_anchor"] + 4.0) < 1e-10
        assert proc.stdout.strip().endswith("report.json")

    def test_check_regularity_failure_exits_2(self, tmp_path):
        cfg = {
            "triple": {
                "domain": {"kind": "disk", "center": [0, 0], "radius": 2.0, "punctures": []},
                "f": "1",
                "g": "1/z",
                "m": 1,
            }
        }
        proc, report, _ = run_cli(tmp_path, "triple", "check", cfg)
        assert proc.returncode == 2
        assert report["regularity"]["overall"] is False

    def test_curvature_points(self, tmp_path):
        cfg = {
            "triple": {"domain": DISK, "f": "1", "g": "z", "m": 2},
            "points": [[0, 0], [0.5, 0]],
        }
        proc, report, _ = run_cli(tmp_path, "triple", "curvature", cfg)
        assert proc.returncode == 0
        k0 = report["points"][0]
        assert abs(k0["curvature"] + 4.0) < 1e-10
        assert abs(k0["curvature_fd"] + 4.0) < 1e-4


class TestEstimateCommand:
    CFG = {
        "triple": {"domain": DISK, "f": "1", "g": "z/2", "m": 2},
        "property": {"bounded": 1.0},
        "resolution": 80,
        "seed": 5,
    }

    def test_pass_and_constant(self, tmp_path):
        proc, report, _ = run_cli(tmp_path, "estimate", "verify", self.CFG)
        assert proc.returncode == 0
        assert report["estimate"]["verdict"] == "pass"
        assert report["estimate"]["constant_squared"] == 16.0

    def test_deterministic_bytes(self, tmp_path):
        _, _, out1 = run_cli(tmp_path, "estimate", "verify", self.CFG, name="a")
        _, _, out2 = run_cli(tmp_path, "estimate", "verify", self.CFG, name="b")
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_property_violation_exit_2(self, tmp_path):
        cfg = dict(self.CFG, property={"bounded": 0.25})
        proc, _, _ = run_cli(tmp_path, "estimate", "verify", cfg)
        assert proc.returncode == 2
        err = json.loads(proc.stderr.splitlines()[0])
        assert err["error"]["kind"] == "verdict"

    def test_schema_error_carries_pointer(self, tmp_path):
        cfg = {"triple": {"domain": DISK, "f": "1", "m": 2}, "property": {"bounded": 1.0}}
        proc, _, _ = run_cli(tmp_path, "estimate", "verify", cfg)
        assert proc.returncode == 1
        err = json.loads(proc.stderr.splitlines()[0])
        assert err["error"]["pointer"] == "/triple/g"

    def test_bad_expression_rejected(self, tmp_path):
        cfg = {
            "triple": {"domain": DISK, "f": "1", "g": "sin(z)", "m": 2},
            "property": {"bounded": 1.0},
        }
        proc, _, _ = run_cli(tmp_path, "estimate", "verify", cfg)
        assert proc.returncode == 1
        err = json.loads(proc.stderr.splitlines()[0])
        assert err["error"]["pointer"] == "/triple/g"


class TestSurfaceCommand:
    def test_synth_enneper_artifacts(self, tmp_path):
        cfg = {
            "class": "minimal",
            "f": "1",
            "g": "z",
            "domain": {"kind": "disk", "center": [0, 0], "radius": 1.2, "punctures": []},
            "base_point": [0, 0],
            "resolution": 48,
            "exports": ["obj", "ply", "csv", "json"],
        }
        proc, report, out = run_cli(tmp_path, "surface", "synth", cfg)
        assert proc.returncode == 0
        for f in ("mesh.obj", "mesh.ply", "vertices.csv", "surface.json", "nodes.csv", "edges.csv"):
            assert (out / f).exists(), f
        inv = report["invariants"]
        assert inv["conformal_asymmetry"] <= 1e-3
        assert inv["laplacian"] <= 1e-3
        assert report["gauss_normal"]["max_angle"] <= 1e-2

    def test_singular_locus_subcommand(self, tmp_path):
        cfg = {
            "class": "maxface",
            "f": "1",
            "g": "z",
            "domain": {"kind": "disk", "center": [0, 0], "radius": 2.0, "punctures": []},
            "resolution": 100,
        }
        proc, report, _ = run_cli(tmp_path, "surface", "singular", cfg)
        assert proc.returncode == 0
        pts = [complex(p[0], p[1]) for poly in report["singular_locus"] for p in poly]
        assert pts and max(abs(abs(p) - 1.0) for p in pts) < 0.01

    def test_periods_subcommand(self, tmp_path):
        circle = [
            [math.cos(2 * math.pi * k / 48), math.sin(2 * math.pi * k / 48)] for k in range(48)
        ]
        cfg = {
            "class": "minimal",
            "f": "i/z^2",
            "g": "z",
            "domain": {"kind": "annulus", "center": [0, 0], "r_inner": 0.5, "r_outer": 2.0,
                        "punctures": []},
            "base_point": [1, 0],
            "cycles": [circle],
        }
        proc, report, _ = run_cli(tmp_path, "surface", "periods", cfg)
        assert proc.returncode == 0
        third = report["periods"][0]["values"][2]
        assert abs(abs(third) - 4 * math.pi) < 1e-6


class TestProbeCommands:
    def test_zalcman(self, tmp_path):
        proc, report, _ = run_cli(
            tmp_path, "probe", "zalcman", {"h": "10*z", "searchgrid": 120}
        )
        assert proc.returncode == 0
        assert abs(report["zalcman"]["gradient_at_zero"] - 1.0) <= 1e-9

    def test_marty_template(self, tmp_path):
        cfg = {
            "family": "({n})*z",
            "indices": [1, 2, 4, 8],
            "region": {"center": [0, 0], "radius": 0.5},
            "grid": 60,
        }
        proc, report, _ = run_cli(tmp_path, "probe", "marty", cfg)
        assert proc.returncode == 0
        assert report["marty"]["verdict"] == "unbounded-growth"

    def test_completeness_multi_target(self, tmp_path):
        cfg = {
            "triple": {
                "domain": {"kind": "truncated_plane", "radius": 3.0,
                           "punctures": [[1, 0], [-1, 0]]},
                "f": "1/(z^2-1)",
                "g": "z",
                "m": 1,
            },
            "targets": [[1, 0], "infinity"],
            "eps_levels": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        }
        proc, report, _ = run_cli(tmp_path, "probe", "completeness", cfg, extra=["--jobs", "2"])
        assert proc.returncode == 0
        assert all(r["divergence_evidence"] for r in report["completeness"])

    def test_fujimoto_eta_precondition(self, tmp_path):
        cfg = {
            "f": "exp(z)/(1+exp(z))",
            "omits": [[0, 0], [1, 0], "inf"],
            "eta": 0.4,
            "radius": 3.0,
            "resolution": 60,
        }
        proc, _, _ = run_cli(tmp_path, "probe", "fujimoto", cfg)
        assert proc.returncode == 1  # (q-2)/q = 1/3 < 0.4


class TestExampleCommand:
    def test_optimal(self, tmp_path):
        cfg = {"m": 1, "alphas": [[1, 0], [-1, 0]], "resolution": 100}
        proc, report, _ = run_cli(tmp_path, "example", "optimal", cfg)
        assert proc.returncode == 0
        assert report["omitted_count"] == 3
        assert report["regularity"]["overall"] is True
        assert report["omission_check"]["verdict"] is True

    def test_duplicate_alphas_rejected(self, tmp_path):
        cfg = {"m": 1, "alphas": [[1, 0], [1, 0]]}
        proc, _, _ = run_cli(tmp_path, "example", "optimal", cfg)
        assert proc.returncode == 1


class TestReportHygiene:
    def test_reports_carry_provenance(self, tmp_path):
        cfg = {"triple": {"domain": DISK, "f": "1", "g": "z", "m": 2}}
        _, report, _ = run_cli(tmp_path, "triple", "check", cfg)
        assert report["tool"]["name"] == "mtriples"
        assert len(report["config_sha256"]) == 64
        assert "seed" in report

    def test_missing_config_file(self, tmp_path):
        proc = subprocess.run(
            EXE + ["triple", "check", "--config", str(tmp_path / "nope.json")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 1
        err = json.loads(proc.stderr.splitlines()[0])
        assert err["error"]["kind"] == "io"

    def test_invalid_json_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        proc = subprocess.run(
            EXE + ["triple", "check", "--config", str(bad)], capture_output=True, text=True
        )
        assert proc.returncode == 1
        err = json.loads(proc.stderr.splitlines()[0])
        assert err["error"]["kind"] == "config"
