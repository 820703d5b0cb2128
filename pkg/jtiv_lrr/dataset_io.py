"""On-disk formats: T3D1/M2D1 containers, dataset manifests, masks, results.

Binary containers:
  T3D1  magic(4) I J K (uint64 LE)  then I*J*K float64 LE, slice-major,
        row-major within each slice
  M2D1  magic(4) R C   (uint64 LE)  then R*C float64 LE, row-major

A dataset directory holds ``manifest.json`` plus one M2D1 file per view and an
optional labels CSV. All relative paths in a manifest resolve against the
manifest's own directory.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .recovery import SolverTrace, View, ViewSet, normalize_viewset

_T3D_HEADER = struct.Struct("<4sQQQ")
_M2D_HEADER = struct.Struct("<4sQQ")
_LE_F8 = np.dtype("<f8")

MANIFEST_NAME = "manifest.json"


class ManifestError(ValueError):
    """Malformed manifest, mask file or binary container."""


class DimensionMismatchError(ValueError):
    """Stored data disagrees with declared dimensions."""


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"File not found: {path}")
    return path.read_bytes()


def _write_bytes(path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(payload)


def write_tensor(path, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"T3D1 holds order-3 tensors, got shape {x.shape}")
    I, J, K = x.shape
    body = np.ascontiguousarray(x.transpose(2, 0, 1), dtype=_LE_F8).tobytes()
    _write_bytes(path, _T3D_HEADER.pack(b"T3D1", I, J, K) + body)
    return Path(path)


def read_tensor(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < _T3D_HEADER.size:
        raise ManifestError(f"{path}: truncated T3D1 header")
    magic, I, J, K = _T3D_HEADER.unpack_from(raw)
    if magic != b"T3D1":
        raise ManifestError(f"{path}: bad magic {magic!r}, expected b'T3D1'")
    expected = _T3D_HEADER.size + 8 * I * J * K
    if len(raw) != expected:
        raise ManifestError(f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    vals = np.frombuffer(raw, dtype=_LE_F8, offset=_T3D_HEADER.size).reshape(K, I, J)
    return np.ascontiguousarray(vals.transpose(1, 2, 0), dtype=float)


def write_matrix(path, m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"M2D1 holds matrices, got shape {m.shape}")
    R, C = m.shape
    body = np.ascontiguousarray(m, dtype=_LE_F8).tobytes()
    _write_bytes(path, _M2D_HEADER.pack(b"M2D1", R, C) + body)
    return Path(path)


def read_matrix(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < _M2D_HEADER.size:
        raise ManifestError(f"{path}: truncated M2D1 header")
    magic, R, C = _M2D_HEADER.unpack_from(raw)
    if magic != b"M2D1":
        raise ManifestError(f"{path}: bad magic {magic!r}, expected b'M2D1'")
    expected = _M2D_HEADER.size + 8 * R * C
    if len(raw) != expected:
        raise ManifestError(f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    vals = np.frombuffer(raw, dtype=_LE_F8, offset=_M2D_HEADER.size).reshape(R, C)
    return np.array(vals, dtype=float)


def write_labels(path, labels):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        for v in np.asarray(labels).ravel():
            w.writerow([int(v)])
    return path


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Labels file not found: {path}")
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or not row[0].strip():
                continue
            cell = row[0].strip()
            if lineno == 1 and not cell.lstrip("-").isdigit():
                continue  # header
            try:
                out.append(int(cell))
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: label {cell!r} is not an integer") from exc
    return np.asarray(out, dtype=np.int64)


def _load_json(path, what: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top level must be a JSON object")
    return doc


def _index_list(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in value):
        raise ManifestError(f"{where}: observed must be a list of integers")
    return np.asarray(value, dtype=np.int64)


def load_viewset(manifest_path, normalize: bool = True) -> ViewSet:
    """Read a dataset manifest and its view matrices.

    Columns are scaled to unit norm unless ``normalize`` is False.
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    doc = _load_json(manifest_path, "Manifest")
    base = manifest_path.parent

    try:
        n = int(doc["n"])
        entries = doc["views"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{manifest_path}: missing or invalid 'n'/'views'") from exc
    if not isinstance(entries, list) or not entries:
        raise ManifestError(f"{manifest_path}: 'views' must be a nonempty list")

    views = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "data_file" not in entry:
            raise ManifestError(f"{manifest_path}: view #{i} needs a 'data_file'")
        vid = str(entry.get("id", i))
        observed = _index_list(entry.get("observed", list(range(n))), f"view {vid}")
        X = read_matrix(base / entry["data_file"])
        d = entry.get("d")
        if d is not None and int(d) != X.shape[0]:
            raise DimensionMismatchError(f"view {vid}: manifest declares d={d} but data has {X.shape[0]} rows")
        if X.shape[1] != observed.size:
            raise DimensionMismatchError(
                f"view {vid}: data has {X.shape[1]} columns but {observed.size} observed samples"
            )
        views.append(View(X, observed, vid))

    labels = None
    if doc.get("labels_file"):
        labels = read_labels(base / doc["labels_file"])

    vs = ViewSet(n, views, labels)
    return normalize_viewset(vs) if normalize else vs


def save_viewset(vs: ViewSet, out_dir, name: str = "dataset") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for v in vs.views:
        data_file = f"view_{v.view_id}.m2d"
        write_matrix(out_dir / data_file, v.X)
        entries.append({"id": v.view_id, "d": v.d, "data_file": data_file, "observed": [int(i) for i in v.observed]})
    doc = {"name": name, "n": vs.n, "views": entries}
    if vs.labels is not None:
        write_labels(out_dir / "labels.csv", vs.labels)
        doc["labels_file"] = "labels.csv"
    path = out_dir / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
    return path


def write_mask(path, observed_sets, view_ids, ratio: float, seed: int) -> Path:
    if len(observed_sets) != len(view_ids):
        raise ValueError("one observed set per view id is required")
    doc = {
        "ratio": float(ratio),
        "seed": int(seed),
        "views": [{"id": str(vid), "observed": [int(i) for i in obs]} for vid, obs in zip(view_ids, observed_sets)],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
    return path


def read_mask(path) -> dict:
    doc = _load_json(path, "Mask file")
    views = doc.get("views")
    if not isinstance(views, list):
        raise ManifestError(f"{path}: 'views' must be a list")
    out = {}
    for i, entry in enumerate(views):
        if not isinstance(entry, dict) or "id" not in entry:
            raise ManifestError(f"{path}: mask view #{i} needs an 'id'")
        vid = str(entry["id"])
        if vid in out:
            raise ManifestError(f"{path}: duplicate view id {vid!r}")
        out[vid] = _index_list(entry.get("observed"), f"mask view {vid}")
    return {"ratio": doc.get("ratio"), "seed": doc.get("seed"), "views": out}


def apply_mask(vs: ViewSet, mask) -> ViewSet:
    """Intersect every view's observed set with the mask's.

    ``mask`` is a path or the dict returned by ``read_mask``. Views the mask
    does not mention are left as they are.
    """
    if not isinstance(mask, dict):
        mask = read_mask(mask)
    unknown = set(mask["views"]) - {v.view_id for v in vs.views}
    if unknown:
        raise ManifestError(f"mask names unknown view id(s): {sorted(unknown)}")
    views = []
    for v in vs.views:
        keep_idx = mask["views"].get(v.view_id)
        if keep_idx is None:
            views.append(View(v.X.copy(), v.observed.copy(), v.view_id))
            continue
        if keep_idx.size and (keep_idx.min() < 0 or keep_idx.max() >= vs.n):
            raise ManifestError(f"mask view {v.view_id}: index out of range [0, {vs.n})")
        keep = np.isin(v.observed, keep_idx)
        views.append(View(v.X[:, keep], v.observed[keep], v.view_id))
    return ViewSet(vs.n, views, None if vs.labels is None else vs.labels.copy())


def write_trace(path, trace: SolverTrace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(SolverTrace.HEADER))
        w.writeheader()
        for r in trace.records:
            w.writerow({k: r[k] for k in SolverTrace.HEADER})
    return path


def save_result(L, S, C, trace: SolverTrace, metrics, out_dir, labels=None) -> dict:
    """Write L.t3d, S.t3d, C.m2d, trace.csv, metrics.json (and labels.csv)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if np.shape(L) != np.shape(S):
        raise ValueError(f"L and S shapes differ: {np.shape(L)} vs {np.shape(S)}")
    n = np.shape(L)[0]
    if np.shape(C) != (n, n):
        raise ValueError(f"C must be {n}x{n}, got {np.shape(C)}")
    paths = {
        "L": write_tensor(out_dir / "L.t3d", L),
        "S": write_tensor(out_dir / "S.t3d", S),
        "C": write_matrix(out_dir / "C.m2d", C),
        "trace": write_trace(out_dir / "trace.csv", trace),
    }
    paths["metrics"] = out_dir / "metrics.json"
    with open(paths["metrics"], "w", encoding="utf-8") as f:
        json.dump(dict(metrics or {}), f, indent=2)
    if labels is not None:
        paths["labels"] = write_labels(out_dir / "labels.csv", labels)
    return {k: str(p) for k, p in paths.items()}
