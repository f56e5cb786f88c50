import csv
import io
import json
import logging

import numpy as np
import pytest

from ossimm import cli, container

C = [7.5, 7.5]
TINY = {
    "phantom": {
        "ny": 16, "nx": 16, "n_frames": 12, "n_coils": 2,
        "regions": [
            {"shape": {"type": "disk", "center": C, "radius": 7.0}, "r2star_hz": 45.0,
             "f0_hz": 0.0, "m0": 0.6},
            {"shape": {"type": "disk", "center": C, "radius": 6.0}, "r2star_hz": 20.0},
            {"shape": {"type": "and", "shapes": [
                {"type": "disk", "center": C, "radius": 6.0},
                {"type": "rect", "rows": [0, 8], "cols": [0, 8]}]},
             "r2star_hz": 26.0, "f0_hz": 0.22, "m0": [0.5, 0.5]},
        ],
        "activation_roi": {"type": "rect", "rows": [9, 12], "cols": [9, 12]},
        "task": {"rest_s": 0.6, "block_s": 0.3, "n_cycles": 2, "frame_period_s": 0.15},
    },
    "sampling": {"accel": 3.0},
    "dictionary": {"r2star_hz": [12.0, 38.0, 1.0], "f0_window_hz": [-0.5, 0.5]},
    "recon": {"window": 4, "lr": {"alpha": 0.05}, "ossimm": {"beta": 0.05}},
    "analysis": {"discard_first_block": False},
    "signal": {"t1_ms": [1400.0], "t2_ms": [92.6], "f0_hz": [0.0, 2.0, 5.0]},
    "study": {"task": {"rest_s": 1.5, "block_s": 1.5, "n_cycles": 1},
              "t2_grid_ms": [80.0, 110.0, 10.0], "r2star_grid_hz": [16.0, 26.0, 1.0]},
}


def _write_cfg(tmp_path, doc=TINY):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    return p


def _snapshot(out):
    return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _write_cfg(tmp)
    assert cli.main(["all", "-c", str(cfg)]) == 0
    return cfg, tmp / "out"


def test_all_outputs(full_run):
    _, out = full_run
    names = {p.name for p in out.iterdir()}
    for want in ("signals.osmm", "signals.csv", "dictionary.osmm", "phantom.osmm",
                 "kspace.osmm", "recon_ossimm.osmm", "recon_lr.osmm", "recon_cgsense.osmm",
                 "maps_ossimm.osmm", "analysis_lr.osmm", "metrics.csv", "report.csv"):
        assert want in names
    rows = list(csv.DictReader(io.StringIO((out / "report.csv").read_bytes().decode())))
    assert [r["method"] for r in rows] == ["ossimm", "lr", "cgsense"]
    assert all(float(r["nrmse"]) > 0 for r in rows)
    assert (out / "renders" / "r2star_ossimm.pgm").read_bytes().startswith(b"P5")


def test_sidecars(full_run):
    _, out = full_run
    meta = container.read_meta(out / "recon_ossimm.osmm")
    assert meta["stage"] == "recon" and len(meta["config_hash"]) == 16
    assert meta["tool_version"]


def test_dictionary_file_arrays(full_run):
    _, out = full_run
    arrays = container.read(out / "dictionary.osmm")
    for name in ("atoms", "norms", "t2_s", "r2star_hz", "f0_hz"):
        assert name in arrays
    assert container.read_meta(out / "dictionary.osmm")["sequence"]["n_c"] == 10


def test_simulate_signal_sweep(full_run):
    _, out = full_run
    sig = container.read(out / "signals.osmm")["signals"]
    assert sig.shape == (3, 10)


def test_rerun_byte_identical(full_run):
    cfg, out = full_run
    before = _snapshot(out)
    assert cli.main(["all", "-c", str(cfg)]) == 0
    assert _snapshot(out) == before


def test_stage_rerun_identical(full_run):
    cfg, out = full_run
    before = _snapshot(out)
    for stage in (["acquire"], ["recon", "--method", "cgsense"], ["quantify"], ["analyze"],
                  ["report"], ["build-dict"], ["phantom"], ["simulate-signal"]):
        assert cli.main(stage[:1] + ["-c", str(cfg)] + stage[1:]) == 0
    assert _snapshot(out) == before


def test_recon_auto_logs(full_run, caplog):
    cfg, _ = full_run
    caplog.set_level(logging.INFO)
    assert cli.main(["recon", "-c", str(cfg), "--method", "ossimm", "--auto"]) == 0
    text = caplog.text
    assert "beta = " in text and "sigma(A) = " in text


def test_recon_flags_recorded(full_run):
    cfg, out = full_run
    assert cli.main(["recon", "-c", str(cfg), "--method", "ossimm", "--outer", "2", "--cg", "1",
                     "--beta", "0.1", "--init", "adjoint"]) == 0
    meta = container.read_meta(out / "recon_ossimm.osmm")
    assert meta["n_outer"] == 2 and meta["n_cg"] == 1 and meta["params"]["beta"] == 0.1
    assert container.read(out / "recon_ossimm.osmm")["costs"].shape[1] == 3


def test_estimation_modes_rows(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert cli.main(["estimation-modes", "-c", str(cfg)]) == 0
    text = (tmp_path / "out" / "estimation_modes.csv").read_bytes().decode()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["mode"] for r in rows] == ["a", "b", "c", "d"]
    assert {"t2p_rmse_ms", "t2star_rmse_ms", "m0_rel_err"} <= set(rows[0])


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert cli.main(["phantom", "-c", str(missing)]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, {"recon": {"bogus": 1}})
        assert cli.main(["phantom", "-c", str(cfg)]) == 2
        assert "recon" in capsys.readouterr().err

    def test_missing_upstream(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path)
        assert cli.main(["recon", "-c", str(cfg), "--method", "cgsense"]) == 3
        assert "ossimm acquire" in capsys.readouterr().err
        assert cli.main(["report", "-c", str(cfg)]) == 3

    def test_negative_parameter(self, full_run):
        cfg, _ = full_run
        assert cli.main(["recon", "-c", str(cfg), "--method", "cgsense", "--lambda", "-1"]) == 2

    def test_numerical_failure(self, full_run, monkeypatch):
        cfg, _ = full_run

        def boom(*a, **k):
            raise FloatingPointError("non-finite")

        monkeypatch.setattr(cli.pipeline, "reconstruct_series", boom)
        assert cli.main(["recon", "-c", str(cfg), "--method", "cgsense"]) == 4

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["recon"])
        assert exc.value.code == 2


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "ossimm", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "ossimm" in res.stdout
