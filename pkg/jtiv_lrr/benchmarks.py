"""Experiment drivers behind the CLI subcommands.

Each driver takes a validated RunConfig and returns plain row dicts sorted in
a fixed order, so the files written from them do not depend on ``jobs``.
Work items are independent and seeded from (config seed, item keys).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .cluster_eval import cluster_consistency
from .config import RunConfig
from .constants import DEFAULT_PLANTED_CLUSTERS, DEFAULT_TRPCA_COUPLING
from .dataset_io import apply_mask, load_viewset
from .recovery import SolverParams, ViewSet, consistency_matrix, jtiv_lrr_fit, normalize_viewset
from .stats import spearman, summarize
from .synth import (
    derive_seed,
    gen_missing_mask,
    gen_mi_sequence,
    gen_mode_mixture,
    gen_planted_multiview,
    gen_sparse_noise,
    mutual_information,
    rng_for,
)
from .trpca import MODE_COMBOS, combo_label, default_lambda, relative_error, trpca_fit

BENCH_MODES_FIELDS = ("combo", "trial", "l_er", "s_er")
BENCH_MODES_SUMMARY_FIELDS = ("combo", "l_er_mean", "l_er_std", "s_er_mean", "s_er_std")
BENCH_MI_FIELDS = ("w", "mi", "combo", "l_er", "s_er")
BENCH_MI_SEED_FIELDS = ("seed", "w", "mi", "combo", "l_er", "s_er")
BENCH_MI_SUMMARY_FIELDS = ("combo", "spearman", "spearman_seed_mean")
ABLATE_FIELDS = ("variant", "p", "acc", "nmi", "ari")
SWEEP_FIELDS = ("param", "value", "p", "acc", "nmi", "ari")
CONVERGENCE_FIELDS = ("iter", "acc", "nmi", "ari")

# name, active modes (lambda zeroing), sparse term
ABLATION_VARIANTS = (
    ("L1", (1, 0, 0), False),
    ("L2", (0, 1, 0), False),
    ("L3", (0, 0, 1), False),
    ("L12", (1, 1, 0), False),
    ("L13", (1, 0, 1), False),
    ("L23", (0, 1, 1), False),
    ("L123", (1, 1, 1), False),
    ("full", (1, 1, 1), True),
)

SWEEP_PARAMS = ("lambda1", "lambda2", "lambda3")


def _annotate(exc: Exception, where: str):
    for cls in (np.linalg.LinAlgError, FloatingPointError, ValueError):
        if isinstance(exc, cls):
            return cls(f"{where}: {exc}")
    return exc


def run_parallel(fn, items, jobs: int = 1) -> list:
    """fn over items, results in item order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _report(status_cb, msg):
    if status_cb is not None:
        status_cb(msg)


def _trpca_params(config: RunConfig) -> SolverParams:
    return SolverParams(
        rho0=config["rho0"],
        rho_mult=config["rho_mult"],
        rho_max=config["rho_max"],
        tol=config["tol"],
        max_iter=config["max_iter"],
        seed=config["seed"],
    )


def _split_errors(L, S, x, modes, lam, params, coupling=DEFAULT_TRPCA_COUPLING):
    L_hat, S_hat, trace = trpca_fit(x, modes, lam=lam, params=params, coupling=coupling)
    l_er = relative_error(L, L_hat)
    # no sparse component was planted
    s_er = relative_error(S, S_hat) if np.any(S) else math.nan
    return l_er, s_er, trace


# --------------------------------------------------------------------------
# mode-combination benchmarks
# --------------------------------------------------------------------------

def bench_modes(config: RunConfig, status_cb=None):
    """Rows combo,trial,l_er,s_er and one summary row per combo."""
    params = _trpca_params(config)
    trials = int(config["trials"])
    dims = tuple(config["dims"])
    lam = config.get("trpca_lambda", default_lambda(dims))

    def one_trial(trial):
        spec = config.mixture_spec(derive_seed(config["seed"], trial))
        L, S, X = gen_mode_mixture(spec)
        out = []
        for ci, modes in enumerate(MODE_COMBOS):
            label = combo_label(modes)
            try:
                l_er, s_er, _ = _split_errors(L, S, X, modes, lam, params, config["coupling"])
            except Exception as exc:
                raise _annotate(exc, f"combo {label} trial {trial}") from exc
            out.append((ci, trial, {"combo": label, "trial": trial, "l_er": l_er, "s_er": s_er}))
        _report(status_cb, f"bench-modes trial {trial + 1}/{trials} done")
        return out

    cells = [c for chunk in run_parallel(one_trial, range(trials), config["jobs"]) for c in chunk]
    cells.sort(key=lambda c: (c[0], c[1]))
    rows = [c[2] for c in cells]

    summary = []
    for modes in MODE_COMBOS:
        label = combo_label(modes)
        mine = [r for r in rows if r["combo"] == label]
        l_mean, l_std = summarize(r["l_er"] for r in mine)
        s_mean, s_std = summarize(r["s_er"] for r in mine)
        summary.append({"combo": label, "l_er_mean": l_mean, "l_er_std": l_std, "s_er_mean": s_mean, "s_er_std": s_std})
    return rows, summary


def bench_mi(config: RunConfig, status_cb=None):
    """Reconstruction error against inter-view mutual information.

    Returns (rows, seed_rows, summary): rows are seed-averaged and sorted by
    combo then window; summary holds the Spearman correlation of mi and l_er
    per combo.
    """
    params = _trpca_params(config)
    V0 = int(config["mi_views"])
    m = int(config["mi_size"])
    windows = sorted(set(config.get("windows") or range(1, V0)))
    seeds = int(config["seeds"])
    dims = (m, m, V0)
    lam = config.get("trpca_lambda", default_lambda(dims))

    def one_cell(item):
        s, w = item
        # same base matrices for every window of one seed
        L = gen_mi_sequence(V0, m, w, rng_for(config["seed"], s))
        mi = mutual_information(L, bins=config["mi_bins"])
        rms = float(np.sqrt(np.mean(L ** 2)))
        S = gen_sparse_noise(dims, config["sparsity"], rms, rng_for(config["seed"], s, w))
        out = []
        for ci, modes in enumerate(MODE_COMBOS):
            label = combo_label(modes)
            try:
                l_er, s_er, _ = _split_errors(L, S, L + S, modes, lam, params, config["coupling"])
            except Exception as exc:
                raise _annotate(exc, f"combo {label} window {w} seed {s}") from exc
            out.append((ci, w, s, {"seed": s, "w": w, "mi": mi, "combo": label, "l_er": l_er, "s_er": s_er}))
        _report(status_cb, f"bench-mi seed {s + 1}/{seeds} window {w} done")
        return out

    items = [(s, w) for s in range(seeds) for w in windows]
    cells = [c for chunk in run_parallel(one_cell, items, config["jobs"]) for c in chunk]
    cells.sort(key=lambda c: (c[0], c[1], c[2]))
    seed_rows = [c[3] for c in cells]

    rows = []
    summary = []
    for modes in MODE_COMBOS:
        label = combo_label(modes)
        curve = []
        for w in windows:
            mine = [r for r in seed_rows if r["combo"] == label and r["w"] == w]
            curve.append({
                "w": w,
                "mi": summarize(r["mi"] for r in mine)[0],
                "combo": label,
                "l_er": summarize(r["l_er"] for r in mine)[0],
                "s_er": summarize(r["s_er"] for r in mine)[0],
            })
        rows.extend(curve)
        per_seed = []
        for s in range(seeds):
            mine = [r for r in seed_rows if r["combo"] == label and r["seed"] == s]
            per_seed.append(spearman([r["mi"] for r in mine], [r["l_er"] for r in mine]))
        summary.append({
            "combo": label,
            "spearman": spearman([r["mi"] for r in curve], [r["l_er"] for r in curve]),
            "spearman_seed_mean": summarize(per_seed)[0],
        })
    return rows, seed_rows, summary


# --------------------------------------------------------------------------
# incomplete multiview clustering
# --------------------------------------------------------------------------

def cluster_count(vs: ViewSet, requested: int | None) -> int:
    if requested:
        return int(requested)
    if vs.labels is None:
        raise ValueError("number of clusters is required when the dataset has no labels")
    return int(np.unique(vs.labels).size)


def fit_viewset(vs: ViewSet, params: SolverParams, clusters: int | None = None, pipeline: str = "spectral",
                restarts: int = 10, seed: int = 0, track_every: int = 0, status_cb=None, status_every: int = 0):
    """Solve, then cluster C when a cluster count is known.

    Returns a dict with L, S, C, trace, clustering (or None) and convergence
    rows (iter, acc, nmi, ari) taken every ``track_every`` iterations.
    """
    K = None
    if clusters or vs.labels is not None:
        K = cluster_count(vs, clusters)
    convergence = []
    callback = None
    if track_every:
        if vs.labels is None or K is None:
            raise ValueError("tracking clustering metrics needs ground-truth labels")

        def callback(it, state):
            if it % track_every == 0:
                res = cluster_consistency(consistency_matrix(state.L), K, truth=vs.labels,
                                          pipeline=pipeline, restarts=restarts, seed=seed)
                convergence.append({"iter": it, **res.metrics()})

    L, S, C, trace = jtiv_lrr_fit(vs, params, callback=callback, status_cb=status_cb, status_every=status_every)
    clustering = None
    if K is not None:
        clustering = cluster_consistency(C, K, truth=vs.labels, pipeline=pipeline, restarts=restarts, seed=seed)
    return {"L": L, "S": S, "C": C, "trace": trace, "clustering": clustering, "convergence": convergence}


def _mask_dict(vs: ViewSet, observed_sets) -> dict:
    return {"views": {v.view_id: obs for v, obs in zip(vs.views, observed_sets)}}


def _ratio_key(p: float) -> int:
    return int(round(p * 1_000_000))


def _base_viewset(config: RunConfig, s: int) -> ViewSet:
    if config.get("dataset"):
        return load_viewset(config["dataset"])
    vs = gen_planted_multiview(
        config["n"], config.get("clusters", DEFAULT_PLANTED_CLUSTERS), config["dims"], config["noise"],
        rng_for(config["seed"], s), subspace_dim=config["subspace_dim"],
    )
    return normalize_viewset(vs)


def _imvc_cell(config: RunConfig, base: ViewSet, s: int, p: float, params: SolverParams) -> dict:
    if base.labels is None:
        raise ValueError("clustering experiments need a dataset with labels")
    mask = gen_missing_mask(base.n, base.V, p, rng_for(config["seed"], s, _ratio_key(p)))
    vs = apply_mask(base, _mask_dict(base, mask))
    K = cluster_count(vs, config.get("clusters"))
    _, _, C, _ = jtiv_lrr_fit(vs, params)
    res = cluster_consistency(C, K, truth=vs.labels, pipeline=config["pipeline"],
                              restarts=config["restarts"], seed=config["seed"])
    return res.metrics()


def _mean_metrics(cells) -> dict:
    return {k: summarize(c[k] for c in cells)[0] for k in ("acc", "nmi", "ari")}


def ablate(config: RunConfig, status_cb=None) -> list[dict]:
    """Rows variant,p,acc,nmi,ari (seed means), variants x missing ratios."""
    seeds = int(config["seeds"])
    ratios = list(config["ratios"])
    bases = [_base_viewset(config, s) for s in range(seeds)]
    total = len(ABLATION_VARIANTS) * len(ratios) * seeds

    def one_cell(item):
        vi, pi, s = item
        name, active, sparse = ABLATION_VARIANTS[vi]
        p = ratios[pi]
        lambdas = {f"lambda{m + 1}": (config[f"lambda{m + 1}"] if on else 0.0) for m, on in enumerate(active)}
        params = config.solver_params(sparse=sparse, **lambdas)
        try:
            metrics = _imvc_cell(config, bases[s], s, p, params)
        except Exception as exc:
            raise _annotate(exc, f"variant {name} p={p} seed {s}") from exc
        _report(status_cb, f"ablate {name} p={p} seed {s + 1}/{seeds}")
        return item, metrics

    items = [(vi, pi, s) for vi in range(len(ABLATION_VARIANTS)) for pi in range(len(ratios)) for s in range(seeds)]
    _report(status_cb, f"ablate: {total} fits")
    results = dict(run_parallel(one_cell, items, config["jobs"]))

    rows = []
    for vi, (name, _, _) in enumerate(ABLATION_VARIANTS):
        for pi, p in enumerate(ratios):
            cells = [results[(vi, pi, s)] for s in range(seeds)]
            rows.append({"variant": name, "p": p, **_mean_metrics(cells)})
    return rows


def sweep(config: RunConfig, status_cb=None) -> list[dict]:
    """Rows param,value,p,acc,nmi,ari: one lambda varied, the others fixed."""
    seeds = int(config["seeds"])
    ratios = list(config["ratios"])
    grid = list(config["lambda_grid"])
    bases = [_base_viewset(config, s) for s in range(seeds)]

    def one_cell(item):
        name, gi, pi, s = item
        value, p = grid[gi], ratios[pi]
        params = config.solver_params(**{name: value})
        try:
            metrics = _imvc_cell(config, bases[s], s, p, params)
        except Exception as exc:
            raise _annotate(exc, f"{name}={value} p={p} seed {s}") from exc
        _report(status_cb, f"sweep {name}={value} p={p} seed {s + 1}/{seeds}")
        return item, metrics

    items = [(name, gi, pi, s) for name in SWEEP_PARAMS for gi in range(len(grid))
             for pi in range(len(ratios)) for s in range(seeds)]
    results = dict(run_parallel(one_cell, items, config["jobs"]))

    rows = []
    for name in SWEEP_PARAMS:
        for gi, value in enumerate(grid):
            for pi, p in enumerate(ratios):
                cells = [results[(name, gi, pi, s)] for s in range(seeds)]
                rows.append({"param": name, "value": value, "p": p, **_mean_metrics(cells)})
    return rows
