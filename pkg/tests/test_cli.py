"""End-to-end exercises of the command-line interface via subprocess."""

import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from mosaicnet import tensorio
from mosaicnet.archmodel import ArchConfig, entropy_at_resolution, entropy_invariant, flops

SUBCOMMANDS = (
    "search", "sweep", "flops", "entropy", "mosaic", "demosaic",
    "gradcheck", "train-toy", "compare", "eval", "report",
)


def run_cli(*argv, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "mosaicnet.cli", *argv],
        capture_output=True, text=True, cwd=cwd,
    )


def test_help_screens(tmp_path):
    top = run_cli("--help", cwd=tmp_path)
    assert top.returncode == 0 and "usage:" in top.stdout
    for name in SUBCOMMANDS:
        proc = run_cli(name, "--help", cwd=tmp_path)
        assert proc.returncode == 0, name
        assert name in proc.stdout


def test_unknown_flag_exits_two_without_artifacts(tmp_path):
    proc = run_cli("flops", "--bogus", cwd=tmp_path)
    assert proc.returncode == 2
    assert "usage:" in proc.stderr
    assert list(tmp_path.iterdir()) == []


def test_missing_subcommand_exits_two(tmp_path):
    proc = run_cli(cwd=tmp_path)
    assert proc.returncode == 2


def test_flops_json_matches_library(tmp_path):
    proc = run_cli(
        "flops", "--d", "2", "--w", "16", "--blocks", "2", "--c-in", "1",
        "--height", "48", "--width", "48", "--out", str(tmp_path / "o"),
        cwd=tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    want = flops(ArchConfig(2, 16, 2, c_in=1), 48, 48).to_dict()
    assert json.loads(proc.stdout) == want
    assert json.loads((tmp_path / "o" / "flops.json").read_text()) == want


def test_entropy_json_matches_library(tmp_path):
    proc = run_cli(
        "entropy", "--d", "2", "--w", "16", "--blocks", "2", "--c-in", "1",
        "--height", "48", "--out", str(tmp_path / "o"), cwd=tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    cfg = ArchConfig(2, 16, 2, c_in=1)
    want = {
        "invariant": entropy_invariant(cfg).to_dict(),
        "at_resolution": entropy_at_resolution(cfg, 48, 48).to_dict(),
    }
    assert json.loads(proc.stdout) == want
    assert json.loads((tmp_path / "o" / "entropy.json").read_text()) == want


def test_search_small_grid(tmp_path):
    proc = run_cli(
        "search", "--budget-gflops", "0.5", "--rho", "1.0",
        "--d-max", "3", "--w-max", "48", "--b-max", "40",
        "--out", str(tmp_path / "o"), cwd=tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads((tmp_path / "o" / "search.json").read_text())
    assert payload["status"] == "ok"
    best = payload["best"]
    assert f"best d={best['d']} w={best['w']} B={best['B']}" in proc.stdout
    from mosaicnet.search import SearchConstraints, solve

    want = solve(SearchConstraints(
        budget_gflops=0.5, rho=1, d_range=(1, 3), w_range=(8, 48), b_range=(4, 40),
    ))
    assert (best["d"], best["w"], best["B"]) == (want.best.d, want.best.w, want.best.B)


def test_search_infeasible_still_writes_json(tmp_path):
    proc = run_cli(
        "search", "--budget-gflops", "0.0001", "--rho", "1.0",
        "--w-min", "256", "--w-max", "256", "--out", str(tmp_path / "o"),
        cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert "infeasible" in proc.stdout
    payload = json.loads((tmp_path / "o" / "search.json").read_text())
    assert payload["status"] == "infeasible" and "best" not in payload


def test_sweep_writes_csv_and_json(tmp_path):
    proc = run_cli(
        "sweep", "--budgets-gflops", "0.5", "--rhos", "0.5,1.0",
        "--d-max", "3", "--w-max", "48", "--b-max", "40",
        "--out", str(tmp_path / "o"), cwd=tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "sweep.csv").exists()
    cells = json.loads((tmp_path / "o" / "sweep.json").read_text())
    assert isinstance(cells, list) and len(cells) == 2


def test_mosaic_demosaic_round_trip_constant(tmp_path):
    rgb = np.full((16, 16, 3), 200, dtype=np.uint8)
    Image.fromarray(rgb, mode="RGB").save(tmp_path / "in.png")
    m = run_cli(
        "mosaic", "--input", str(tmp_path / "in.png"),
        "--out", str(tmp_path / "m"), cwd=tmp_path,
    )
    assert m.returncode == 0, m.stderr
    raw = tensorio.load_tensor(tmp_path / "m" / "raw.tns")
    assert raw.shape == (1, 1, 16, 16)
    assert np.allclose(raw, 200.0 / 255.0, atol=1e-7)
    d = run_cli(
        "demosaic", "--input", str(tmp_path / "m" / "raw.tns"),
        "--out", str(tmp_path / "d"), cwd=tmp_path,
    )
    assert d.returncode == 0, d.stderr
    out = tensorio.load_tensor(tmp_path / "d" / "rgb.tns")
    assert out.shape == (1, 3, 16, 16)
    assert np.allclose(out, 200.0 / 255.0, atol=1e-7)
    png = np.asarray(Image.open(tmp_path / "d" / "rgb.png"))
    assert (png == 200).all()


def test_mosaic_append_cfa_and_noise_determinism(tmp_path):
    rgb = (np.arange(16 * 16 * 3).reshape(16, 16, 3) % 256).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(tmp_path / "in.png")
    argv = ("mosaic", "--input", str(tmp_path / "in.png"),
            "--noise", "iso1600", "--append-cfa", "--seed", "5")
    a = run_cli(*argv, "--out", str(tmp_path / "a"), cwd=tmp_path)
    b = run_cli(*argv, "--out", str(tmp_path / "b"), cwd=tmp_path)
    assert a.returncode == 0 and b.returncode == 0
    bytes_a = (tmp_path / "a" / "raw.tns").read_bytes()
    assert bytes_a == (tmp_path / "b" / "raw.tns").read_bytes()
    packed = tensorio.load_tensor(tmp_path / "a" / "net_input.tns")
    assert packed.shape == (1, 5, 16, 16)


def test_gradcheck_cli(tmp_path):
    proc = run_cli(
        "gradcheck", "--trials", "1", "--out", str(tmp_path / "o"), cwd=tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads((tmp_path / "o" / "gradcheck.json").read_text())
    assert report["passed"] is True
    assert "conv2d" in proc.stdout and "ok" in proc.stdout


def test_gradcheck_ops_filter(tmp_path):
    proc = run_cli("gradcheck", "--trials", "1", "--ops", "simple_gate", cwd=tmp_path)
    assert proc.returncode == 0
    assert "simple_gate" in proc.stdout and "conv2d" not in proc.stdout


def test_train_toy_then_eval(tmp_path):
    t = run_cli(
        "train-toy", "--d", "2", "--w", "8", "--blocks", "1",
        "--steps", "2", "--count", "2", "--patch", "16", "--batch", "2",
        "--out", str(tmp_path / "run"), cwd=tmp_path,
    )
    assert t.returncode == 0, t.stderr
    training = json.loads((tmp_path / "run" / "training.json").read_text())
    assert training["steps"] == 2
    assert training["config"] == {"d": 2, "w": 8, "B": 1, "c_in": 1, "c_out": 3}
    assert (tmp_path / "run" / "checkpoint" / "manifest.json").exists()

    e = run_cli(
        "eval", "--checkpoint", str(tmp_path / "run" / "checkpoint"),
        "--count", "2", "--patch", "16", "--out", str(tmp_path / "ev"),
        cwd=tmp_path,
    )
    assert e.returncode == 0, e.stderr
    scores = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert scores["step"] == 2 and scores["count"] == 2
    assert np.isfinite(scores["psnr"]) and np.isfinite(scores["margin_db"])
    assert "PSNR" in e.stdout


def test_eval_patch_not_divisible_errors(tmp_path):
    t = run_cli(
        "train-toy", "--d", "2", "--w", "8", "--blocks", "1",
        "--steps", "1", "--count", "1", "--patch", "16", "--batch", "1",
        "--out", str(tmp_path / "run"), cwd=tmp_path,
    )
    assert t.returncode == 0
    e = run_cli(
        "eval", "--checkpoint", str(tmp_path / "run" / "checkpoint"),
        "--patch", "15", "--out", str(tmp_path / "ev"), cwd=tmp_path,
    )
    assert e.returncode == 1
    assert e.stderr.startswith("error:")


def test_bad_input_path_exits_one(tmp_path):
    proc = run_cli(
        "demosaic", "--input", str(tmp_path / "nope.png"),
        "--out", str(tmp_path / "o"), cwd=tmp_path,
    )
    assert proc.returncode == 1
    assert proc.stderr.startswith("error:")


def test_report_renders_search_json(tmp_path):
    run_cli(
        "search", "--budget-gflops", "0.5", "--rho", "1.0",
        "--d-max", "3", "--w-max", "48", "--b-max", "40",
        "--out", str(tmp_path / "o"), cwd=tmp_path,
    )
    proc = run_cli("report", "--input", str(tmp_path / "o" / "search.json"), cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() != ""


@pytest.mark.parametrize("argv", [
    ("flops", "--d", "3", "--w", "64", "--blocks", "4", "--height", "96", "--width", "96"),
    ("entropy", "--d", "3", "--w", "64", "--blocks", "4", "--height", "96"),
    ("gradcheck", "--trials", "2"),
])
def test_stdout_reproducible(tmp_path, argv):
    a = run_cli(*argv, "--threads", "1", cwd=tmp_path)
    b = run_cli(*argv, "--threads", "1", cwd=tmp_path)
    assert a.returncode == 0 and b.returncode == 0
    assert a.stdout == b.stdout
