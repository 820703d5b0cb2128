import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from openpyxl import load_workbook

from jtiv_lrr.cli import main
from jtiv_lrr.dataset_io import read_matrix, read_mask, read_tensor, write_labels

ROOT = Path(__file__).resolve().parents[1]
SCRIPT = str(ROOT / "jtiv_lrr.py")


def _run(*args):
    return subprocess.run([sys.executable, SCRIPT, *args, "--quiet"], cwd=ROOT, capture_output=True, text=True)


def _generate(tmp_path, n=15):
    data = tmp_path / "data"
    code = main(["generate", "--out", str(data), "--n", str(n), "--dims", "4", "5", "3",
                 "--clusters", "3", "--quiet"])
    assert code == 0
    return data


def test_generate_then_fit(tmp_path):
    data = tmp_path / "data"
    proc = _run("generate", "--out", str(data), "--n", "15", "--dims", "4", "5", "3", "--clusters", "3")
    assert proc.returncode == 0, proc.stderr
    assert (data / "manifest.json").exists()

    out = tmp_path / "fit"
    proc = _run("fit", "--dataset", str(data), "--out", str(out), "--max-iter", "20", "--track-every", "5")
    assert proc.returncode in (0, 2), proc.stderr

    run = json.loads((out / "run.json").read_text(encoding="utf-8"))
    assert run["command"] == "fit"
    assert run["iterations"] <= 20
    assert run["status"] == ("converged" if proc.returncode == 0 else "max_iter")
    assert len(run["run_hash"]) == 64
    for name in ("L.t3d", "S.t3d", "C.m2d", "trace.csv", "metrics.json", "labels.csv", "convergence.csv"):
        assert name in run["outputs"]
        assert (out / name).exists()

    L = read_tensor(out / "L.t3d")
    C = read_matrix(out / "C.m2d")
    assert L.shape == (15, 15, 3)
    assert np.array_equal(C, C.T)
    metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert set(metrics) == {"acc", "nmi", "ari"}


def test_bench_modes_output_is_deterministic(tmp_path):
    args = ["bench-modes", "--dims", "8", "8", "4", "--trials", "2", "--max-iter", "20", "--quiet"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("bench_modes.csv", "bench_modes_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "bench_modes.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 14
    assert list(rows[0]) == ["combo", "trial", "l_er", "s_er"]


def test_coupling_and_signal_flags_reach_run_meta(tmp_path):
    out = tmp_path / "modes"
    args = ["bench-modes", "--dims", "6", "6", "3", "--trials", "1", "--max-iter", "5", "--coupling", "shared"]
    assert main(args + ["--out", str(out), "--quiet"]) == 0
    run = json.loads((out / "run.json").read_text(encoding="utf-8"))
    assert run["coupling"] == "shared"
    with pytest.raises(SystemExit) as exc:
        main(["bench-modes", "--coupling", "product", "--out", str(out), "--quiet"])
    assert exc.value.code == 3

    data = tmp_path / "data"
    assert main(["generate", "--n", "9", "--dims", "4", "3", "--clusters", "3", "--out", str(data), "--quiet"]) == 0
    fit_out = tmp_path / "fit"
    code = main(["fit", "--dataset", str(data), "--signal-rtol", "0", "--max-iter", "3", "--out", str(fit_out), "--quiet"])
    assert code in (0, 2)
    assert json.loads((fit_out / "run.json").read_text(encoding="utf-8"))["signal_rtol"] == 0.0


def test_missing_manifest_is_an_io_error(tmp_path):
    out = tmp_path / "out"
    code = main(["fit", "--dataset", str(tmp_path / "missing"), "--out", str(out), "--quiet"])
    assert code == 4
    assert not out.exists()


def test_invalid_values_exit_with_code_3(tmp_path):
    out = str(tmp_path / "out")
    assert main(["bench-modes", "--sparsity", "1.5", "--out", out, "--quiet"]) == 3
    assert main(["bench-modes", "--quiet"]) == 3
    proc = _run("bench-modes", "--max-iter", "lots", "--out", out)
    assert proc.returncode == 3
    proc = _run("no-such-command")
    assert proc.returncode == 3


def test_mask_then_fit_with_mask(tmp_path):
    data = _generate(tmp_path)
    masks = tmp_path / "mask"
    assert main(["mask", "--dataset", str(data), "--ratio", "0.4", "--seed", "3", "--out", str(masks), "--quiet"]) == 0
    mask = read_mask(masks / "mask.json")
    assert mask["ratio"] == 0.4
    assert mask["seed"] == 3
    assert sorted(mask["views"]) == ["0", "1", "2"]
    incomplete = sum(1 for i in range(15) if any(i not in obs for obs in mask["views"].values()))
    assert incomplete == 6

    out = tmp_path / "fit"
    code = main(["fit", "--dataset", str(data), "--mask", str(masks / "mask.json"), "--max-iter", "5",
                 "--out", str(out), "--quiet"])
    assert code in (0, 2)
    assert (out / "C.m2d").exists()


def test_eval_scores_stored_labels(tmp_path):
    write_labels(tmp_path / "truth.csv", [0, 0, 1, 1])
    write_labels(tmp_path / "pred.csv", [1, 1, 0, 0])
    out = tmp_path / "eval"
    code = main(["eval", "--pred", str(tmp_path / "pred.csv"), "--labels", str(tmp_path / "truth.csv"),
                 "--out", str(out), "--quiet"])
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert metrics["acc"] == 1.0
    # exactly one of --pred / --affinity
    assert main(["eval", "--labels", str(tmp_path / "truth.csv"), "--out", str(out), "--quiet"]) == 3


def test_ablate_writes_workbook(tmp_path):
    out = tmp_path / "ablate"
    code = main(["ablate", "--n", "12", "--clusters", "2", "--dims", "4", "5", "3", "--ratios", "0.3",
                 "--seeds", "1", "--max-iter", "3", "--xlsx", "--out", str(out), "--quiet"])
    assert code == 0
    wb = load_workbook(out / "ablate.xlsx")
    assert wb.sheetnames[0] == "Charts"
    assert "ablate" in wb.sheetnames
    with open(out / "ablate.csv", newline="", encoding="utf-8") as f:
        assert len(list(csv.DictReader(f))) == 8


def test_json_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"kind": "mixture", "dims": [6, 6, 3], "rank_frac": 0.2, "seed": 5}), encoding="utf-8")
    out = tmp_path / "gen"
    assert main(["generate", "--config", str(cfg), "--seed", "6", "--out", str(out), "--quiet"]) == 0
    run = json.loads((out / "run.json").read_text(encoding="utf-8"))
    assert run["seed"] == 6
    assert run["kind"] == "mixture"
    L = read_tensor(out / "L.t3d")
    S = read_tensor(out / "S.t3d")
    assert np.array_equal(read_tensor(out / "X.t3d"), L + S)
