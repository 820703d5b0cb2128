import math

import numpy as np
import pytest

from jtiv_lrr import benchmarks
from jtiv_lrr.benchmarks import (
    ABLATION_VARIANTS,
    BENCH_MODES_FIELDS,
    ablate,
    bench_mi,
    bench_modes,
    cluster_count,
    fit_viewset,
    run_parallel,
    sweep,
)
from jtiv_lrr.config import build_run_config
from jtiv_lrr.dataset_io import save_viewset
from jtiv_lrr.recovery import SolverParams, normalize_viewset
from jtiv_lrr.synth import gen_planted_multiview
from jtiv_lrr.trpca import MODE_COMBOS, combo_label

PLANTED = {"n": 12, "clusters": 2, "dims": [4, 5, 3], "max_iter": 5}


def _modes_config(**over):
    flags = {"dims": [8, 8, 4], "trials": 2, "max_iter": 30, "seed": 1}
    flags.update(over)
    return build_run_config("bench-modes", flag_values=flags)


def test_run_parallel_keeps_order():
    assert run_parallel(lambda x: x * x, range(6), jobs=3) == [0, 1, 4, 9, 16, 25]
    assert run_parallel(lambda x: x, [], jobs=2) == []


def test_bench_modes_rows_and_summary():
    lines = []
    rows, summary = bench_modes(_modes_config(), status_cb=lines.append)
    assert len(rows) == 14
    assert set(rows[0]) == set(BENCH_MODES_FIELDS)
    assert [r["combo"] for r in rows[:2]] == ["1", "1"]
    assert [r["trial"] for r in rows[:2]] == [0, 1]
    assert [s["combo"] for s in summary] == [combo_label(c) for c in MODE_COMBOS]
    assert all(r["l_er"] >= 0 and math.isfinite(r["l_er"]) for r in rows)
    assert len(lines) == 2


def test_bench_modes_is_independent_of_jobs():
    a, _ = bench_modes(_modes_config(jobs=1))
    b, _ = bench_modes(_modes_config(jobs=3))
    assert a == b


def test_bench_modes_without_sparse_noise_reports_nan():
    rows, summary = bench_modes(_modes_config(sparsity=0.0, trials=1))
    assert all(math.isnan(r["s_er"]) for r in rows)
    assert all(math.isnan(s["s_er_mean"]) for s in summary)


def test_bench_mi_shapes():
    cfg = build_run_config(
        "bench-mi", flag_values={"mi_views": 4, "mi_size": 6, "seeds": 2, "max_iter": 20, "mi_bins": 4}
    )
    rows, seed_rows, summary = bench_mi(cfg)
    assert len(rows) == 7 * 3
    assert len(seed_rows) == 7 * 3 * 2
    assert len(summary) == 7
    assert sorted({r["w"] for r in rows}) == [1, 2, 3]
    for s in summary:
        assert math.isnan(s["spearman"]) or -1.0 <= s["spearman"] <= 1.0
    # mi is shared by every combo for one (seed, window)
    first = {(r["seed"], r["w"]): r["mi"] for r in seed_rows if r["combo"] == "1"}
    assert all(first[(r["seed"], r["w"])] == r["mi"] for r in seed_rows)


def test_cluster_count(rng):
    vs = gen_planted_multiview(9, 3, (3,), 0.0, rng)
    assert cluster_count(vs, None) == 3
    assert cluster_count(vs, 4) == 4
    vs.labels = None
    with pytest.raises(ValueError):
        cluster_count(vs, None)


def test_fit_viewset_tracks_metrics(rng):
    vs = normalize_viewset(gen_planted_multiview(12, 2, (4, 5), 0.05, rng))
    out = fit_viewset(vs, SolverParams(max_iter=6, tol=1e-300), track_every=2)
    assert [r["iter"] for r in out["convergence"]] == [2, 4, 6]
    assert set(out["convergence"][0]) == {"iter", "acc", "nmi", "ari"}
    assert out["clustering"].labels.shape == (12,)
    assert 0.0 <= out["clustering"].acc <= 1.0

    vs.labels = None
    with pytest.raises(ValueError):
        fit_viewset(vs, SolverParams(max_iter=2), track_every=1)
    assert fit_viewset(vs, SolverParams(max_iter=2))["clustering"] is None


def test_ablate_rows():
    cfg = build_run_config("ablate", flag_values={**PLANTED, "ratios": [0.3, 0.5], "seeds": 1})
    rows = ablate(cfg)
    assert len(rows) == len(ABLATION_VARIANTS) * 2 == 16
    assert [r["variant"] for r in rows[::2]] == [v[0] for v in ABLATION_VARIANTS]
    for r in rows:
        assert 0.0 <= r["acc"] <= 1.0
        assert 0.0 <= r["nmi"] <= 1.0 + 1e-12


def test_ablate_honors_cluster_flag_on_stored_dataset(tmp_path, rng, monkeypatch):
    vs = gen_planted_multiview(12, 3, (4, 5), 0.05, rng)
    save_viewset(vs, tmp_path / "data")
    seen = []
    real = benchmarks.cluster_consistency

    def recording(C, K, **kw):
        seen.append(K)
        return real(C, K, **kw)

    monkeypatch.setattr(benchmarks, "cluster_consistency", recording)
    flags = {"dataset": str(tmp_path / "data"), "clusters": 2, "ratios": [0.3], "seeds": 1, "max_iter": 3}
    ablate(build_run_config("ablate", flag_values=flags))
    assert seen and set(seen) == {2}

    seen.clear()
    ablate(build_run_config("ablate", flag_values={**flags, "clusters": None}))
    assert set(seen) == {3}


def test_sweep_rows_and_determinism():
    flags = {**PLANTED, "ratios": [0.3], "seeds": 1, "lambda_grid": [1.0, 10.0]}
    rows = sweep(build_run_config("sweep", flag_values=flags))
    assert len(rows) == 6
    assert [(r["param"], r["value"]) for r in rows[:2]] == [("lambda1", 1.0), ("lambda1", 10.0)]
    again = sweep(build_run_config("sweep", flag_values={**flags, "jobs": 2}))
    assert rows == again


def test_bench_modes_rejects_invalid_params():
    cfg = _modes_config(max_iter=1)
    cfg.values["rho0"] = -1.0
    with pytest.raises(ValueError):
        bench_modes(cfg)


@pytest.mark.slow
def test_all_modes_beat_every_smaller_combination():
    cfg = build_run_config("bench-modes", flag_values={"trials": 5, "jobs": 4})
    _, summary = bench_modes(cfg)
    by_combo = {s["combo"]: s for s in summary}
    full = by_combo.pop("1+2+3")
    for label, s in by_combo.items():
        assert full["l_er_mean"] < s["l_er_mean"], label
        assert full["s_er_mean"] < s["s_er_mean"], label


@pytest.mark.slow
def test_bench_mi_error_falls_as_information_rises():
    cfg = build_run_config(
        "bench-mi", flag_values={"seeds": 1, "windows": [1, 3, 5, 8, 12, 16, 19], "jobs": 4}
    )
    _, _, summary = bench_mi(cfg)
    by_combo = {s["combo"]: s for s in summary}
    assert by_combo["1+2+3"]["spearman"] <= -0.8


@pytest.mark.slow
def test_planted_clustering_accuracy():
    cfg = build_run_config("ablate", flag_values={"ratios": [0.3], "seeds": 10, "jobs": 4})
    rows = ablate(cfg)
    full = [r for r in rows if r["variant"] == "full"][0]
    assert full["acc"] >= 0.9
    assert np.isfinite(full["nmi"])


@pytest.mark.slow
@pytest.mark.parametrize("p, floor", [(0.3, 0.9), (0.7, 0.75)])
def test_planted_accuracy_with_four_clusters(p, floor):
    cfg = build_run_config(
        "ablate", flag_values={"n": 100, "clusters": 4, "ratios": [p], "seeds": 3, "jobs": 4}
    )
    full = [r for r in ablate(cfg) if r["variant"] == "full"][0]
    assert full["acc"] >= floor


@pytest.mark.slow
def test_full_model_matches_or_beats_single_modes():
    cfg = build_run_config("ablate", flag_values={"ratios": [0.5], "seeds": 5, "jobs": 4})
    acc = {r["variant"]: r["acc"] for r in ablate(cfg)}
    for single in ("L1", "L2", "L3"):
        assert acc["full"] >= acc[single] - 1e-12, single
