"""Synthetic data for the simulation studies.

Every generator takes an explicit ``numpy.random.Generator`` (or, for the
mixture generator, a seed) so that the same seed always reproduces the same bits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .constants import (
    DEFAULT_MI_BINS,
    DEFAULT_RANK_FRAC,
    DEFAULT_SPARSITY,
    DEFAULT_SUBSPACE_DIM,
)
from .recovery import View, ViewSet
from .stats import contingency_mutual_information, joint_histogram
from .tensor_core import ModeId, permute, tprod


@dataclass
class MixtureSpec:
    dims: tuple[int, int, int]
    rank_frac: float = DEFAULT_RANK_FRAC
    sparsity: float = DEFAULT_SPARSITY
    seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.validate()

    @property
    def rank(self) -> int:
        return max(1, math.ceil(round(self.rank_frac * self.dims[0], 9)))

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if not 0 < self.rank_frac <= 1:
            raise ValueError(f"rank_frac must be in (0, 1], got {self.rank_frac}")
        if not 0 <= self.sparsity <= 1:
            raise ValueError(f"sparsity must be in [0, 1], got {self.sparsity}")
        for mode in ModeId:
            _check_rank(self.dims, self.rank, mode)


def rng_for(seed, *keys) -> np.random.Generator:
    """Independent generator for a (seed, key...) pair, e.g. one per trial."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def _oriented_dims(dims, mode) -> tuple[int, int, int]:
    n1, n2, n3 = dims
    return {
        ModeId.MODE1: (n1, n2, n3),
        ModeId.MODE2: (n1, n3, n2),
        ModeId.MODE3: (n3, n2, n1),
    }[ModeId(mode)]


def _check_rank(dims, r, mode):
    a, b, _ = _oriented_dims(dims, mode)
    if r < 1 or r > min(a, b):
        raise ValueError(f"rank {r} out of range for mode {int(mode)} (spatial dims {a}x{b})")


def gen_lowrank_mode_tensor(dims, r: int, mode, rng) -> np.ndarray:
    """t-product of two standard normal factors with inner tubal dimension r.

    The product is built in the mode's own orientation and permuted back, so
    the result has shape ``dims`` and tubal rank <= r along that mode.
    """
    mode = ModeId(mode)
    _check_rank(dims, r, mode)
    a, b, k = _oriented_dims(dims, mode)
    left = rng.standard_normal((a, r, k))
    right = rng.standard_normal((r, b, k))
    return permute(tprod(left, right), mode, inverse=True)


def gen_sparse_noise(dims, sparsity: float, scale: float, rng) -> np.ndarray:
    """ceil(sparsity * N) entries at uniform positions, values uniform on [-scale, scale]."""
    total = int(np.prod(dims))
    count = math.ceil(round(sparsity * total, 9))
    out = np.zeros(total)
    if count:
        pos = rng.choice(total, size=count, replace=False)
        vals = rng.uniform(-1.0, 1.0, size=count)
        # a draw of exactly 0.0 would break the nonzero-count contract
        vals[vals == 0.0] = 1.0
        out[pos] = scale * vals
    return out.reshape(dims)


def gen_mode_mixture(spec: MixtureSpec):
    """L = L1 + L2_[2] + L3_[3], S sparse, X = L + S."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    r = spec.rank
    L = sum(gen_lowrank_mode_tensor(spec.dims, r, mode, rng) for mode in ModeId)
    rms = float(np.sqrt(np.mean(L ** 2)))
    S = gen_sparse_noise(spec.dims, spec.sparsity, rms, rng)
    return L, S, L + S


def gen_mi_sequence(num_views: int, size: int, window: int, rng) -> np.ndarray:
    """Slices with graded inter-view correlation.

    ``num_views`` base matrices are drawn uniform on (0, 1); slice v is the
    mean of the ``window`` cyclically adjacent base matrices starting at v.
    """
    num_views = int(num_views)
    window = int(window)
    if num_views < 2:
        raise ValueError(f"need at least 2 base matrices, got {num_views}")
    if not 1 <= window <= num_views - 1:
        raise ValueError(f"window must be in [1, {num_views - 1}], got {window}")
    base = rng.uniform(0.0, 1.0, size=(num_views, size, size))
    out = np.empty((size, size, num_views))
    for v in range(num_views):
        idx = [(v + j) % num_views for j in range(window)]
        out[:, :, v] = base[idx].mean(axis=0)
    return out


def mutual_information(x, bins: int = DEFAULT_MI_BINS) -> float:
    """Mean histogram MI (natural log) over all unordered slice pairs."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] < 2:
        raise ValueError(f"need an order-3 tensor with at least 2 slices, got shape {x.shape}")
    if int(bins) < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    values = [
        contingency_mutual_information(joint_histogram(x[:, :, a], x[:, :, b], int(bins)))
        for a, b in itertools.combinations(range(x.shape[2]), 2)
    ]
    return float(np.mean(values))


def balanced_labels(n: int, clusters: int) -> np.ndarray:
    return (np.arange(n) * clusters) // n


def gen_planted_multiview(n: int, clusters: int, dims, noise: float, rng, subspace_dim: int = DEFAULT_SUBSPACE_DIM) -> ViewSet:
    """Union-of-subspaces data: one random basis per (view, cluster).

    Columns are raw (not normalized); ``normalize_viewset`` is applied by the
    consumers, exactly as ``load_viewset`` does on ingestion.
    """
    if not 1 <= clusters <= n:
        raise ValueError(f"clusters must be in [1, n={n}], got {clusters}")
    if noise < 0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    labels = balanced_labels(n, clusters)
    views = []
    for vid, d in enumerate(dims):
        d = int(d)
        s = max(1, min(int(subspace_dim), d))
        X = np.empty((d, n))
        for c in range(clusters):
            members = np.flatnonzero(labels == c)
            basis = np.linalg.qr(rng.standard_normal((d, s)))[0]
            X[:, members] = basis @ rng.standard_normal((s, members.size))
        if noise:
            X += noise * rng.standard_normal((d, n))
        views.append(View(X, np.arange(n), str(vid)))
    return ViewSet(n, views, labels)


def missing_count(n: int, ratio: float) -> int:
    return math.ceil(round(ratio * n, 9))


def gen_missing_mask(n: int, V: int, ratio: float, rng) -> list[np.ndarray]:
    """Per-view observed index sets with ceil(ratio * n) incomplete samples.

    Each incomplete sample is removed from a uniformly drawn nonempty proper
    subset of the views, so it stays observed in at least one view.
    """
    if not 0 <= ratio < 1:
        raise ValueError(f"missing ratio must be in [0, 1), got {ratio}")
    if V < 1:
        raise ValueError(f"need at least one view, got {V}")
    count = missing_count(n, ratio)
    if count and V < 2:
        raise ValueError("a positive missing ratio needs at least 2 views")
    observed = np.ones((V, n), dtype=bool)
    for i in rng.choice(n, size=count, replace=False):
        while True:
            drop = rng.random(V) < 0.5
            if 0 < drop.sum() < V:
                break
        observed[drop, i] = False
    return [np.flatnonzero(row) for row in observed]


def derive_seed(seed, *keys) -> int:
    """Integer seed for a (seed, key...) pair, for APIs that take an int."""
    return int(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]).generate_state(1)[0])
