"""Run configuration: defaults < config file < command-line flags.

A config file is either a JSON object or an ini-style ``key = value`` file
(``#`` comments, quoted strings, ``nil``/``none``, percentages). Keys are
the long flag names with underscores.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import constants as C
from .recovery import SolverParams
from .synth import MixtureSpec
from .trpca import TRPCA_COUPLINGS


def _ini_value(v: str):
    """Best-effort parse of a raw ini value.

    Handles:
      - plain floats/ints ("35", "0.2", "1e-6")
      - percentages ("5%" -> 0.05)
      - comma separated lists ("50, 50, 20")
      - nil/none -> None
      - quoted strings
    """
    if v is None:
        return None
    s = str(v).strip()
    if not s or s.lower() in ("nil", "none"):
        return None
    if (s.startswith('"') and s.endswith('"')) or (s.startswith("'") and s.endswith("'")):
        return s[1:-1].strip()
    if "," in s:
        return [_ini_value(part) for part in s.split(",") if part.strip()]
    if s.endswith("%"):
        try:
            return float(s[:-1].strip()) / 100.0
        except ValueError:
            return s
    if s.lower() in ("true", "yes", "on"):
        return True
    if s.lower() in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_config_ini(path) -> dict:
    """Parse a `key = value` file into a dict of parsed values."""
    out: dict = {}
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.lstrip().startswith(("#", ";", "[")):
                continue
            m = re.match(r"^([^=]+?)\s*=\s*(.*)$", line)
            if not m:
                continue
            out[m.group(1).strip().replace("-", "_")] = _ini_value(m.group(2))
    return out


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8", errors="replace")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON config ({exc.msg} at line {exc.lineno})") from exc
        return {str(k).replace("-", "_"): v for k, v in doc.items()}
    return parse_config_ini(path)


def _as_float(v):
    return float(v)


def _as_int(v):
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(f"expected an integer, got {v}")
    return int(v)


def _as_list(item):
    def cast(v):
        if not isinstance(v, (list, tuple)):
            v = [v]
        return [item(x) for x in v]
    return cast


def _as_str(v):
    return str(v)


def _as_bool(v):
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


KEY_TYPES = {
    "lambda1": _as_float,
    "lambda2": _as_float,
    "lambda3": _as_float,
    "rho0": _as_float,
    "rho_mult": _as_float,
    "rho_max": _as_float,
    "tol": _as_float,
    "max_iter": _as_int,
    "signal_rtol": _as_float,
    "coupling": _as_str,
    "seed": _as_int,
    "jobs": _as_int,
    "clusters": _as_int,
    "restarts": _as_int,
    "pipeline": _as_str,
    "trials": _as_int,
    "dims": _as_list(_as_int),
    "rank_frac": _as_float,
    "sparsity": _as_float,
    "trpca_lambda": _as_float,
    "mi_views": _as_int,
    "mi_size": _as_int,
    "mi_bins": _as_int,
    "windows": _as_list(_as_int),
    "seeds": _as_int,
    "ratios": _as_list(_as_float),
    "ratio": _as_float,
    "lambda_grid": _as_list(_as_float),
    "track_every": _as_int,
    "n": _as_int,
    "noise": _as_float,
    "subspace_dim": _as_int,
    "normalize": _as_bool,
    "kind": _as_str,
    "window": _as_int,
    "dataset": _as_str,
    "mask": _as_str,
    "affinity": _as_str,
    "pred": _as_str,
    "labels": _as_str,
    "xlsx": _as_bool,
}

# Solver defaults differ between the multiview solver and the TRPCA benchmarks.
SOLVER_DEFAULTS = {
    "lambda1": C.DEFAULT_LAMBDA,
    "lambda2": C.DEFAULT_LAMBDA,
    "lambda3": C.DEFAULT_LAMBDA,
    "rho0": C.DEFAULT_RHO0,
    "rho_mult": C.DEFAULT_RHO_MULT,
    "rho_max": C.DEFAULT_RHO_MAX,
    "tol": C.DEFAULT_TOL,
    "max_iter": C.DEFAULT_MAX_ITER,
    "signal_rtol": C.DEFAULT_SIGNAL_RTOL,
}

TRPCA_DEFAULTS = {
    "rho0": C.DEFAULT_TRPCA_RHO0,
    "rho_mult": C.DEFAULT_TRPCA_RHO_MULT,
    "rho_max": C.DEFAULT_RHO_MAX,
    "tol": C.DEFAULT_TOL,
    "max_iter": C.DEFAULT_TRPCA_MAX_ITER,
    "trpca_lambda": None,
    "coupling": C.DEFAULT_TRPCA_COUPLING,
}

COMMON_DEFAULTS = {"seed": C.DEFAULT_SEED, "jobs": 1, "xlsx": False}

PLANTED_DEFAULTS = {
    "n": C.DEFAULT_PLANTED_N,
    "clusters": C.DEFAULT_PLANTED_CLUSTERS,
    "dims": list(C.DEFAULT_PLANTED_DIMS),
    "noise": C.DEFAULT_PLANTED_NOISE,
    "subspace_dim": C.DEFAULT_SUBSPACE_DIM,
}

EVAL_DEFAULTS = {"restarts": C.DEFAULT_KMEANS_RESTARTS, "pipeline": "spectral"}

COMMAND_DEFAULTS = {
    "bench-modes": {
        **TRPCA_DEFAULTS,
        "trials": C.DEFAULT_BENCH_TRIALS,
        "dims": list(C.DEFAULT_BENCH_DIMS),
        "rank_frac": C.DEFAULT_RANK_FRAC,
        "sparsity": C.DEFAULT_SPARSITY,
    },
    "bench-mi": {
        **TRPCA_DEFAULTS,
        "mi_views": C.DEFAULT_MI_VIEWS,
        "mi_size": C.DEFAULT_MI_SIZE,
        "mi_bins": C.DEFAULT_MI_BINS,
        "windows": None,
        "seeds": C.DEFAULT_MI_SEEDS,
        "sparsity": C.DEFAULT_SPARSITY,
    },
    "fit": {
        **SOLVER_DEFAULTS,
        **EVAL_DEFAULTS,
        "dataset": None,
        "mask": None,
        "clusters": None,
        "track_every": 0,
        "normalize": True,
    },
    "mask": {"dataset": None, "ratio": 0.3},
    "ablate": {
        **SOLVER_DEFAULTS,
        **EVAL_DEFAULTS,
        **PLANTED_DEFAULTS,
        "dataset": None,
        "clusters": None,
        "ratios": list(C.DEFAULT_MISSING_RATIOS),
        "seeds": C.DEFAULT_EVAL_SEEDS,
    },
    "sweep": {
        **SOLVER_DEFAULTS,
        **EVAL_DEFAULTS,
        **PLANTED_DEFAULTS,
        "dataset": None,
        "clusters": None,
        "ratios": list(C.DEFAULT_MISSING_RATIOS),
        "lambda_grid": list(C.DEFAULT_LAMBDA_GRID),
        "seeds": C.DEFAULT_EVAL_SEEDS,
    },
    "eval": {**EVAL_DEFAULTS, "affinity": None, "pred": None, "labels": None, "clusters": None},
    "generate": {
        **PLANTED_DEFAULTS,
        "kind": "planted",
        "rank_frac": C.DEFAULT_RANK_FRAC,
        "sparsity": C.DEFAULT_SPARSITY,
        "mi_views": C.DEFAULT_MI_VIEWS,
        "mi_size": C.DEFAULT_MI_SIZE,
        "window": 1,
    },
}


@dataclass
class RunConfig:
    """Merged, typed settings for one subcommand invocation."""

    command: str
    values: dict = field(default_factory=dict)
    out: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def solver_params(self, **overrides) -> SolverParams:
        keys = ("rho0", "rho_mult", "rho_max", "tol", "max_iter", "seed", "signal_rtol")
        kw = {k: self.values[k] for k in keys if k in self.values}
        for k in ("lambda1", "lambda2", "lambda3"):
            if k in self.values:
                kw[k] = self.values[k]
        kw.update(overrides)
        return SolverParams(**kw)

    def mixture_spec(self, seed: int) -> MixtureSpec:
        return MixtureSpec(
            dims=tuple(self.values["dims"]),
            rank_frac=self.values["rank_frac"],
            sparsity=self.values["sparsity"],
            seed=seed,
        )

    def validate(self):
        v = self.values
        if "jobs" in v and v["jobs"] < 1:
            raise ValueError(f"jobs must be >= 1, got {v['jobs']}")
        if "rho0" in v:
            self.solver_params()
        if self.command == "bench-modes":
            if v["trials"] < 1:
                raise ValueError(f"trials must be >= 1, got {v['trials']}")
            self.mixture_spec(v["seed"])
        if self.command == "bench-mi":
            if v["seeds"] < 1:
                raise ValueError(f"seeds must be >= 1, got {v['seeds']}")
            if v["mi_bins"] < 2:
                raise ValueError(f"mi_bins must be >= 2, got {v['mi_bins']}")
            for w in v["windows"] or []:
                if not 1 <= w <= v["mi_views"] - 1:
                    raise ValueError(f"window {w} out of range [1, {v['mi_views'] - 1}]")
        if v.get("trpca_lambda") is not None and v["trpca_lambda"] <= 0:
            raise ValueError(f"trpca_lambda must be positive, got {v['trpca_lambda']}")
        if v.get("coupling") not in (None, *TRPCA_COUPLINGS):
            raise ValueError(f"coupling must be one of {TRPCA_COUPLINGS}, got {v['coupling']!r}")
        if "sparsity" in v and not 0 <= v["sparsity"] <= 1:
            raise ValueError(f"sparsity must be in [0, 1], got {v['sparsity']}")
        for r in v.get("ratios") or []:
            if not 0 <= r < 1:
                raise ValueError(f"missing ratio must be in [0, 1), got {r}")
        if "ratio" in v and not 0 <= v["ratio"] < 1:
            raise ValueError(f"missing ratio must be in [0, 1), got {v['ratio']}")
        if self.command in ("ablate", "sweep") and v["seeds"] < 1:
            raise ValueError(f"seeds must be >= 1, got {v['seeds']}")
        if self.command == "sweep" and not v["lambda_grid"]:
            raise ValueError("lambda_grid must not be empty")
        if v.get("pipeline") not in (None, "spectral", "rows"):
            raise ValueError(f"pipeline must be 'spectral' or 'rows', got {v['pipeline']!r}")
        if v.get("restarts") is not None and v["restarts"] < 1:
            raise ValueError(f"restarts must be >= 1, got {v['restarts']}")
        if v.get("track_every", 0) < 0:
            raise ValueError(f"track_every must be >= 0, got {v['track_every']}")
        return self

    def as_dict(self) -> dict:
        return {"command": self.command, **{k: self.values[k] for k in sorted(self.values)}}

    @property
    def run_hash(self) -> str:
        return config_hash(self.as_dict())


def config_hash(meta: dict) -> str:
    return hashlib.sha256(json.dumps(meta, sort_keys=True).encode("utf-8")).hexdigest()


def _coerce(key: str, value):
    if value is None:
        return None
    caster = KEY_TYPES.get(key)
    if caster is None:
        raise ValueError(f"unknown config key {key!r}")
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config key {key!r}: invalid value {value!r}") from exc


def build_run_config(command: str, file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Merge defaults, file values and flags (in that order) and validate.

    File keys that do not apply to ``command`` are ignored so one file can
    serve several subcommands; unknown keys are an error.
    """
    if command not in COMMAND_DEFAULTS:
        raise ValueError(f"unknown command {command!r}")
    merged = {**COMMON_DEFAULTS, **COMMAND_DEFAULTS[command]}
    file_values = dict(file_values or {})
    flag_values = dict(flag_values or {})
    out = flag_values.pop("out", None) or file_values.pop("out", None)
    for key, value in file_values.items():
        value = _coerce(key, value)
        if key in merged and value is not None:
            merged[key] = value
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = _coerce(key, value)
    return RunConfig(command, merged, None if out is None else str(out)).validate()
