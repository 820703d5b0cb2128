import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .benchmarks import (
    ABLATE_FIELDS,
    ABLATION_VARIANTS,
    BENCH_MI_FIELDS,
    BENCH_MI_SEED_FIELDS,
    BENCH_MI_SUMMARY_FIELDS,
    BENCH_MODES_FIELDS,
    BENCH_MODES_SUMMARY_FIELDS,
    CONVERGENCE_FIELDS,
    SWEEP_FIELDS,
    SWEEP_PARAMS,
    ablate,
    bench_mi,
    bench_modes,
    fit_viewset,
    sweep,
)
from .cluster_eval import PIPELINES, cluster_consistency, evaluate
from .config import build_run_config, load_config_file
from .constants import DEFAULT_MI_BINS, EXIT_INVALID, EXIT_IO, EXIT_MAX_ITER, EXIT_NUMERICAL, EXIT_OK
from .dataset_io import (
    apply_mask,
    load_viewset,
    read_labels,
    read_matrix,
    save_result,
    save_viewset,
    write_labels,
    write_mask,
    write_tensor,
)
from .report_writer import ChartSpec, write_csv, write_json, write_run_meta, write_xlsx
from .synth import MixtureSpec, gen_missing_mask, gen_mi_sequence, gen_mode_mixture, gen_planted_multiview, mutual_information, rng_for
from .trpca import TRPCA_COUPLINGS

_T0 = time.time()

STATUS_EVERY_ITERS = 10


def status(msg: str, enabled: bool = True):
    """Emit a lightweight progress message to stderr."""
    if not enabled:
        return
    dt = time.time() - _T0
    print(f"[{dt:6.1f}s] {msg}", file=sys.stderr, flush=True)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the invalid-input code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# argument groups shared between subcommands
# --------------------------------------------------------------------------

def _common_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--out", help="Output directory")
    p.add_argument("--config", help="JSON or key = value config file; flags override its values")
    p.add_argument("--seed", type=int, help="Base random seed (default: 0)")
    p.add_argument("--jobs", type=int, help="Parallel work items (default: 1)")
    p.add_argument("--quiet", action="store_true", help="Disable progress messages on stderr")
    return p


def _penalty_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--rho0", type=float, help="Initial ADMM penalty")
    p.add_argument("--rho-mult", type=float, help="Penalty growth factor per iteration")
    p.add_argument("--rho-max", type=float, help="Penalty cap")
    p.add_argument("--tol", type=float, help="Stop when every residual is at or below this")
    p.add_argument("--max-iter", type=int, help="Iteration limit")
    return p


def _lambda_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--lambda1", type=float, help="Weight of the mode-1 TNN (default: 10)")
    p.add_argument("--lambda2", type=float, help="Weight of the mode-2 TNN (default: 10)")
    p.add_argument("--lambda3", type=float, help="Weight of the mode-3 TNN (default: 10)")
    p.add_argument("--signal-rtol", type=float,
                   help="Keep singular values of each view at or above this fraction of the largest (default: 0.25; 0 keeps all)")
    return p


def _cluster_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--clusters", type=int, help="Number of clusters (default: from labels)")
    p.add_argument("--pipeline", choices=PIPELINES, help="spectral embedding + k-means, or k-means on rows of C")
    p.add_argument("--restarts", type=int, help="k-means restarts (default: 10)")
    return p


def _planted_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--n", type=int, help="Planted data: sample count")
    p.add_argument("--dims", type=int, nargs="+", help="Planted data: feature dimension per view")
    p.add_argument("--noise", type=float, help="Planted data: Gaussian noise level")
    p.add_argument("--subspace-dim", type=int, help="Planted data: subspace dimension per cluster")
    return p


def _grid_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--dataset", help="Dataset manifest (default: planted data)")
    p.add_argument("--ratios", type=float, nargs="+", help="Missing ratios (default: 0.1 0.3 0.5 0.7 0.9)")
    p.add_argument("--seeds", type=int, help="Repetitions averaged per cell")
    p.add_argument("--xlsx", action="store_true", default=None, help="Also write an Excel workbook")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="jtiv_lrr",
        description="Joint tensor and inter-view low-rank recovery for incomplete multiview clustering.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    common = _common_flags()
    penalty = _penalty_flags()
    lambdas = _lambda_flags()
    clusters = _cluster_flags()
    planted = _planted_flags()
    grid = _grid_flags()

    p = sub.add_parser("bench-modes", parents=[common, penalty], help="TRPCA reconstruction error per mode combination")
    p.add_argument("--trials", type=int, help="Trials per combination (default: 20)")
    p.add_argument("--dims", type=int, nargs=3, help="Tensor dims n1 n2 n3 (default: 50 50 20)")
    p.add_argument("--rank-frac", type=float, help="Tubal rank as a fraction of n1 (default: 0.1)")
    p.add_argument("--sparsity", type=float, help="Fraction of corrupted entries (default: 0.05)")
    p.add_argument("--trpca-lambda", type=float, help="Sparse weight (default: 1/sqrt(max(n1,n2)*n3))")
    p.add_argument("--coupling", choices=TRPCA_COUPLINGS, help="sum: one low-rank part per mode (default); shared: one L for all modes")
    p.add_argument("--xlsx", action="store_true", default=None, help="Also write an Excel workbook")
    p.set_defaults(func=cmd_bench_modes)

    p = sub.add_parser("bench-mi", parents=[common, penalty], help="Reconstruction error against inter-view mutual information")
    p.add_argument("--mi-views", type=int, help="Base matrices / frontal slices (default: 20)")
    p.add_argument("--mi-size", type=int, help="Slice size m (default: 40)")
    p.add_argument("--mi-bins", type=int, help="Histogram bins per axis (default: 16)")
    p.add_argument("--windows", type=int, nargs="+", help="Correlation windows (default: 1..mi_views-1)")
    p.add_argument("--seeds", type=int, help="Repetitions averaged per window (default: 5)")
    p.add_argument("--sparsity", type=float, help="Fraction of corrupted entries (default: 0.05)")
    p.add_argument("--trpca-lambda", type=float, help="Sparse weight (default: 1/sqrt(m*V0))")
    p.add_argument("--coupling", choices=TRPCA_COUPLINGS, help="sum: one low-rank part per mode (default); shared: one L for all modes")
    p.add_argument("--xlsx", action="store_true", default=None, help="Also write an Excel workbook")
    p.set_defaults(func=cmd_bench_mi)

    p = sub.add_parser("fit", parents=[common, penalty, lambdas, clusters], help="Run the solver on a dataset")
    p.add_argument("--dataset", help="Dataset manifest (file or directory)")
    p.add_argument("--mask", help="Mask JSON applied before fitting")
    p.add_argument("--track-every", type=int, help="Record ACC/NMI/ARI every N iterations (needs labels)")
    p.add_argument("--no-normalize", dest="normalize", action="store_false", default=None,
                   help="Keep view columns as stored")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mask", parents=[common], help="Draw a missing-view mask for a dataset")
    p.add_argument("--dataset", help="Dataset manifest (file or directory)")
    p.add_argument("--ratio", type=float, help="Missing ratio p in [0, 1) (default: 0.3)")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("ablate", parents=[common, penalty, lambdas, clusters, planted, grid], help="Ablation over TNN modes and the sparse term")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", parents=[common, penalty, lambdas, clusters, planted, grid], help="One-at-a-time lambda sweep")
    p.add_argument("--lambda-grid", type=float, nargs="+", help="Values tried for each lambda")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", parents=[common, clusters], help="Cluster a stored consistency matrix or score stored labels")
    p.add_argument("--affinity", help="Consistency matrix (M2D1)")
    p.add_argument("--pred", help="Predicted labels CSV")
    p.add_argument("--labels", help="Ground-truth labels CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", parents=[common, planted], help="Write synthetic data")
    p.add_argument("--kind", choices=("planted", "mixture", "mi"), help="What to generate (default: planted)")
    p.add_argument("--clusters", type=int, help="Planted data: cluster count")
    p.add_argument("--rank-frac", type=float, help="Mixture: tubal rank fraction")
    p.add_argument("--sparsity", type=float, help="Mixture: corrupted fraction")
    p.add_argument("--mi-views", type=int, help="MI tensor: slices")
    p.add_argument("--mi-size", type=int, help="MI tensor: slice size")
    p.add_argument("--window", type=int, help="MI tensor: correlation window")
    p.set_defaults(func=cmd_generate)

    return ap


_NOT_CONFIG = ("command", "config", "quiet", "func")


def _run_config(args):
    file_values = load_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    config = build_run_config(args.command, file_values, flags)
    if not config.out:
        raise ValueError("--out is required (flag or config file)")
    return config


def _finish(out: Path, config, outputs, extra=None):
    meta = {"outputs": sorted(outputs)}
    meta.update(extra or {})
    write_run_meta(out, config, meta)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_bench_modes(config, say) -> int:
    say(f"bench-modes: dims {tuple(config['dims'])}, {config['trials']} trial(s), sparsity {config['sparsity']}")
    rows, summary = bench_modes(config, status_cb=say)
    out = Path(config.out)
    write_csv(out / "bench_modes.csv", BENCH_MODES_FIELDS, rows)
    write_csv(out / "bench_modes_summary.csv", BENCH_MODES_SUMMARY_FIELDS, summary)
    outputs = ["bench_modes.csv", "bench_modes_summary.csv"]
    if config.get("xlsx"):
        write_xlsx(
            out / "bench_modes.xlsx",
            {"summary": (BENCH_MODES_SUMMARY_FIELDS, summary), "trials": (BENCH_MODES_FIELDS, rows)},
            charts=[ChartSpec("bar", "summary", "Mean relative error per mode combination", "combo",
                              ("l_er_mean", "s_er_mean"), "modes", "relative error")],
            highlight={"l_er": 1.0, "s_er": 1.0},
        )
    _finish(out, config, outputs)
    print(f"Wrote {len(rows)} trial rows and {len(summary)} summary rows to {out}")
    return EXIT_OK


def cmd_bench_mi(config, say) -> int:
    rows, seed_rows, summary = bench_mi(config, status_cb=say)
    out = Path(config.out)
    write_csv(out / "bench_mi.csv", BENCH_MI_FIELDS, rows)
    write_csv(out / "bench_mi_seeds.csv", BENCH_MI_SEED_FIELDS, seed_rows)
    write_csv(out / "bench_mi_summary.csv", BENCH_MI_SUMMARY_FIELDS, summary)
    outputs = ["bench_mi.csv", "bench_mi_seeds.csv", "bench_mi_summary.csv"]
    if config.get("xlsx"):
        write_xlsx(
            out / "bench_mi.xlsx",
            {"bench_mi": (BENCH_MI_FIELDS, rows), "summary": (BENCH_MI_SUMMARY_FIELDS, summary)},
            charts=[ChartSpec("scatter", "bench_mi", "Low-rank error against mutual information", "mi",
                              ("l_er",), "mean pairwise MI (nats)", "L relative error")],
        )
    _finish(out, config, outputs)
    print(f"Wrote {len(rows)} rows to {out / 'bench_mi.csv'}")
    return EXIT_OK


def cmd_fit(config, say) -> int:
    if not config.get("dataset"):
        raise ValueError("--dataset is required")
    vs = load_viewset(config["dataset"], normalize=config["normalize"])
    if config.get("mask"):
        vs = apply_mask(vs, config["mask"])
    say(f"Loaded n={vs.n}, V={vs.V}, observed per view {[v.n_v for v in vs.views]}")
    params = config.solver_params()
    result = fit_viewset(
        vs, params,
        clusters=config.get("clusters"),
        pipeline=config["pipeline"],
        restarts=config["restarts"],
        seed=config["seed"],
        track_every=config["track_every"],
        status_cb=say,
        status_every=STATUS_EVERY_ITERS,
    )
    trace = result["trace"]
    clustering = result["clustering"]
    metrics = clustering.metrics() if clustering is not None else {}

    out = Path(config.out)
    paths = save_result(result["L"], result["S"], result["C"], trace, metrics, out,
                        labels=None if clustering is None else clustering.labels)
    outputs = [Path(p).name for p in paths.values()]
    if config["track_every"]:
        write_csv(out / "convergence.csv", CONVERGENCE_FIELDS, result["convergence"])
        outputs.append("convergence.csv")
    _finish(out, config, outputs, {
        "status": trace.status,
        "iterations": trace.iterations,
        "final_max_residual": trace.max_residual() if trace.records else None,
    })
    say(f"Solver {trace.status} after {trace.iterations} iteration(s)")
    print(f"Wrote result ({trace.status}, {trace.iterations} iterations) to {out}")
    return EXIT_OK if trace.converged else EXIT_MAX_ITER


def cmd_mask(config, say) -> int:
    if not config.get("dataset"):
        raise ValueError("--dataset is required")
    vs = load_viewset(config["dataset"], normalize=False)
    observed = gen_missing_mask(vs.n, vs.V, config["ratio"], rng_for(config["seed"]))
    out = Path(config.out)
    write_mask(out / "mask.json", observed, [v.view_id for v in vs.views], config["ratio"], config["seed"])
    _finish(out, config, ["mask.json"])
    print(f"Wrote mask (p={config['ratio']}, n={vs.n}, V={vs.V}) to {out / 'mask.json'}")
    return EXIT_OK


def _pivot(rows, row_key, col_key, value_key, label=str):
    keys = list(dict.fromkeys(r[row_key] for r in rows))
    cols = list(dict.fromkeys(r[col_key] for r in rows))
    table = []
    for k in keys:
        entry = {row_key: k}
        for c in cols:
            vals = [r[value_key] for r in rows if r[row_key] == k and r[col_key] == c]
            entry[label(c)] = float(np.mean(vals)) if vals else None
        table.append(entry)
    return [row_key] + [label(c) for c in cols], table


def cmd_ablate(config, say) -> int:
    say(f"ablate: {len(ABLATION_VARIANTS)} variants x {len(config['ratios'])} ratios x {config['seeds']} seed(s)")
    rows = ablate(config, status_cb=say)
    out = Path(config.out)
    write_csv(out / "ablate.csv", ABLATE_FIELDS, rows)
    outputs = ["ablate.csv"]
    if config.get("xlsx"):
        fields, pivot = _pivot(rows, "variant", "p", "acc", label=lambda p: f"p={p}")
        write_xlsx(
            out / "ablate.xlsx",
            {"ablate": (ABLATE_FIELDS, rows), "acc_by_variant": (fields, pivot)},
            charts=[ChartSpec("bar", "acc_by_variant", "ACC per variant and missing ratio", "variant",
                              tuple(fields[1:]), "variant", "ACC")],
        )
    _finish(out, config, outputs)
    print(f"Wrote {len(rows)} rows to {out / 'ablate.csv'}")
    return EXIT_OK


def cmd_sweep(config, say) -> int:
    rows = sweep(config, status_cb=say)
    out = Path(config.out)
    write_csv(out / "sweep.csv", SWEEP_FIELDS, rows)
    outputs = ["sweep.csv"]
    if config.get("xlsx"):
        fields, pivot = _pivot(rows, "value", "param", "acc")
        write_xlsx(
            out / "sweep.xlsx",
            {"sweep": (SWEEP_FIELDS, rows), "acc_by_value": (fields, pivot)},
            charts=[ChartSpec("scatter", "acc_by_value", "ACC against lambda (mean over ratios)", "value",
                              SWEEP_PARAMS, "lambda", "ACC")],
        )
    _finish(out, config, outputs)
    print(f"Wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_eval(config, say) -> int:
    if not config.get("labels"):
        raise ValueError("--labels is required")
    if bool(config.get("affinity")) == bool(config.get("pred")):
        raise ValueError("give exactly one of --affinity or --pred")
    truth = read_labels(config["labels"])
    out = Path(config.out)
    outputs = []
    if config.get("pred"):
        pred = read_labels(config["pred"])
        metrics = evaluate(pred, truth)
    else:
        C = read_matrix(config["affinity"])
        if C.shape[0] != truth.size:
            raise ValueError(f"affinity is {C.shape[0]}x{C.shape[1]} but there are {truth.size} labels")
        K = config.get("clusters") or int(np.unique(truth).size)
        res = cluster_consistency(C, K, truth=truth, pipeline=config["pipeline"],
                                  restarts=config["restarts"], seed=config["seed"])
        write_labels(out / "labels.csv", res.labels)
        outputs.append("labels.csv")
        metrics = res.metrics()
    write_json(out / "metrics.json", metrics)
    outputs.append("metrics.json")
    _finish(out, config, outputs)
    say(f"acc={metrics['acc']:.4f} nmi={metrics['nmi']:.4f} ari={metrics['ari']:.4f}")
    print(f"Wrote metrics to {out / 'metrics.json'}")
    return EXIT_OK


def cmd_generate(config, say) -> int:
    out = Path(config.out)
    kind = config["kind"]
    rng = rng_for(config["seed"])
    if kind == "planted":
        vs = gen_planted_multiview(config["n"], config["clusters"], config["dims"], config["noise"], rng,
                                   subspace_dim=config["subspace_dim"])
        manifest = save_viewset(vs, out, name="planted")
        outputs = [manifest.name, "labels.csv"] + [f"view_{v.view_id}.m2d" for v in vs.views]
        msg = f"Wrote planted dataset (n={vs.n}, V={vs.V}) to {manifest}"
    elif kind == "mixture":
        if len(config["dims"]) != 3:
            raise ValueError(f"mixture needs three dims, got {config['dims']}")
        spec = MixtureSpec(tuple(config["dims"]), config["rank_frac"], config["sparsity"], config["seed"])
        L, S, X = gen_mode_mixture(spec)
        for name, t in (("L", L), ("S", S), ("X", X)):
            write_tensor(out / f"{name}.t3d", t)
        outputs = ["L.t3d", "S.t3d", "X.t3d"]
        msg = f"Wrote mixture tensors {spec.dims} (r={spec.rank}) to {out}"
    else:
        x = gen_mi_sequence(config["mi_views"], config["mi_size"], config["window"], rng)
        write_tensor(out / "mi.t3d", x)
        write_json(out / "mi.json", {"window": config["window"], "mi": mutual_information(x, bins=DEFAULT_MI_BINS)})
        outputs = ["mi.t3d", "mi.json"]
        msg = f"Wrote MI tensor (window {config['window']}) to {out}"
    _finish(out, config, outputs)
    print(msg)
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    enabled = not args.quiet

    def say(msg):
        status(msg, enabled)

    try:
        config = _run_config(args)
        say(f"{args.command}: config hash {config.run_hash[:12]}")
        code = args.func(config, say)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    say("Done")
    return code


if __name__ == "__main__":
    sys.exit(main())
