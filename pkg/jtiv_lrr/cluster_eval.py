"""Consistency matrix -> cluster labels -> ACC / NMI / ARI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score
from sklearn.metrics.cluster import contingency_matrix
from sklearn.preprocessing import normalize

from .constants import DEFAULT_KMEANS_MAX_ITER, DEFAULT_KMEANS_RESTARTS, DEFAULT_KMEANS_TOL

PIPELINES = ("spectral", "rows")


@dataclass
class ClusteringResult:
    labels: np.ndarray
    acc: float | None = None
    nmi: float | None = None
    ari: float | None = None
    embedding: np.ndarray | None = None

    def metrics(self) -> dict:
        if self.acc is None:
            return {}
        return {"acc": self.acc, "nmi": self.nmi, "ari": self.ari}


def spectral_embed(C, K: int) -> np.ndarray:
    """Top-K eigenvectors of D^-1/2 C D^-1/2, rows scaled to unit length."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"affinity must be square, got shape {C.shape}")
    n = C.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, n={n}], got {K}")
    scale = max(1.0, float(np.max(np.abs(C)))) if C.size else 1.0
    if not np.allclose(C, C.T, rtol=0.0, atol=1e-10 * scale):
        raise ValueError("affinity matrix is not symmetric")
    if np.any(C < 0):
        raise ValueError("affinity matrix has negative entries")

    deg = C.sum(axis=1)
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    A = inv_sqrt[:, None] * C * inv_sqrt[None, :]
    A = (A + A.T) / 2.0
    _, vecs = scipy.linalg.eigh(A, subset_by_index=[n - K, n - 1])
    # eigh returns ascending order
    vecs = vecs[:, ::-1]
    return normalize(vecs, axis=1)


def kmeans(points, K: int, restarts: int = DEFAULT_KMEANS_RESTARTS, seed: int = 0) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError(f"points must be a matrix, got shape {points.shape}")
    n = points.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, n={n}], got {K}")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    model = KMeans(
        n_clusters=K,
        init="k-means++",
        n_init=restarts,
        max_iter=DEFAULT_KMEANS_MAX_ITER,
        tol=DEFAULT_KMEANS_TOL,
        random_state=seed,
    )
    return model.fit_predict(points).astype(np.int64)


def _check_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"label length mismatch: {pred.size} predicted vs {truth.size} true")
    if pred.size == 0:
        raise ValueError("labels are empty")
    return pred, truth


def acc(pred, truth) -> float:
    """Best one-to-one matching of predicted to true ids (Hungarian)."""
    pred, truth = _check_pair(pred, truth)
    table = contingency_matrix(truth, pred)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / pred.size


def nmi(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(normalized_mutual_info_score(truth, pred, average_method="arithmetic"))


def ari(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(adjusted_rand_score(truth, pred))


def evaluate(pred, truth) -> dict:
    return {"acc": acc(pred, truth), "nmi": nmi(pred, truth), "ari": ari(pred, truth)}


def cluster_consistency(C, K: int, truth=None, pipeline: str = "spectral",
                        restarts: int = DEFAULT_KMEANS_RESTARTS, seed: int = 0) -> ClusteringResult:
    """Cluster a consistency matrix, scoring against ``truth`` when given.

    ``pipeline="rows"`` runs k-means on the raw rows of C instead of the
    spectral embedding.
    """
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
    if pipeline == "spectral":
        emb = spectral_embed(C, K)
    else:
        emb = np.asarray(C, dtype=float)
    labels = kmeans(emb, K, restarts=restarts, seed=seed)
    result = ClusteringResult(labels=labels, embedding=emb if pipeline == "spectral" else None)
    if truth is not None:
        m = evaluate(labels, truth)
        result.acc, result.nmi, result.ari = m["acc"], m["nmi"], m["ari"]
    return result
