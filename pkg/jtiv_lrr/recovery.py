"""Joint tensor and inter-view low-rank recovery (ADMM).

Each view v observes ``n_v`` of the ``n`` samples. With the selection matrix
A (n_v x n, A[j, observed[j]] = 1) the zero-filled complete view is
X~ = X A, and the per-view self-representation graph G (n x n) is tied to the
data through X = X~ G A^T. The graphs are stacked into G (n x n x V), split as
G = L + S, and L is penalized by the TNN in all three mode orientations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from sklearn.preprocessing import normalize

from .constants import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_ITER,
    DEFAULT_RHO0,
    DEFAULT_RHO_MAX,
    DEFAULT_RHO_MULT,
    DEFAULT_SEED,
    DEFAULT_SIGNAL_RTOL,
    DEFAULT_TOL,
)
from .tensor_core import ModeId, permute, soft_threshold, tsvt

MODES = (ModeId.MODE1, ModeId.MODE2, ModeId.MODE3)


class AvailabilityError(ValueError):
    """A sample is observed in no view."""


class NonFiniteError(FloatingPointError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite values in {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class View:
    X: np.ndarray
    observed: np.ndarray
    view_id: str = ""

    @property
    def d(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_v(self) -> int:
        return int(self.observed.size)


@dataclass
class ViewSet:
    n: int
    views: list[View]
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.n = int(self.n)
        for i, v in enumerate(self.views):
            v.X = np.asarray(v.X, dtype=float)
            v.observed = np.asarray(v.observed, dtype=np.int64)
            if not v.view_id:
                v.view_id = str(i)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    @property
    def V(self) -> int:
        return len(self.views)

    def validate(self):
        if self.n < 1:
            raise ValueError(f"sample count must be positive, got {self.n}")
        if not self.views:
            raise ValueError("a ViewSet needs at least one view")
        coverage = np.zeros(self.n, dtype=bool)
        for v in self.views:
            if v.X.ndim != 2:
                raise ValueError(f"view {v.view_id}: data must be a matrix, got shape {v.X.shape}")
            obs = v.observed
            if obs.ndim != 1 or obs.size > self.n:
                raise ValueError(f"view {v.view_id}: observed must be a list of at most n={self.n} indices")
            if obs.size and (obs[0] < 0 or obs[-1] >= self.n):
                raise ValueError(f"view {v.view_id}: observed index out of range [0, {self.n})")
            if np.any(np.diff(obs) <= 0):
                raise ValueError(f"view {v.view_id}: observed indices must be strictly increasing")
            if not np.all(np.isfinite(v.X)):
                raise ValueError(f"view {v.view_id}: data contains NaN or inf")
            if v.X.shape[1] != obs.size:
                raise ValueError(
                    f"view {v.view_id}: data has {v.X.shape[1]} columns but {obs.size} observed samples"
                )
            coverage[obs] = True
        if not coverage.all():
            missing = np.flatnonzero(~coverage)
            raise AvailabilityError(
                f"{missing.size} sample(s) observed in no view (first: {int(missing[0])})"
            )
        if self.labels is not None and self.labels.shape != (self.n,):
            raise ValueError(f"labels must have length n={self.n}, got {self.labels.shape}")


def normalize_viewset(vs: ViewSet) -> ViewSet:
    """Scale every sample column to unit Euclidean norm (zero columns kept)."""
    views = [View(normalize(v.X, axis=0), v.observed.copy(), v.view_id) for v in vs.views]
    return ViewSet(vs.n, views, None if vs.labels is None else vs.labels.copy())


def principal_view(view: View, rtol: float) -> View:
    """Replace X (d x n_v) by diag(s_r) Vt_r, its coordinates in the leading
    left singular subspace.

    Keeps the singular values at or above ``rtol * s_max`` (at least one).
    X^T X is unchanged up to the dropped directions, so the self-representation
    problem sees the same sample geometry with the noise floor removed.
    """
    if rtol <= 0 or view.X.size == 0:
        return View(view.X.copy(), view.observed.copy(), view.view_id)
    _, s, vh = np.linalg.svd(view.X, full_matrices=False)
    if s[0] <= 0:
        return View(view.X.copy(), view.observed.copy(), view.view_id)
    r = max(1, int(np.count_nonzero(s >= rtol * s[0])))
    return View(s[:r, None] * vh[:r], view.observed.copy(), view.view_id)


def principal_viewset(vs: ViewSet, rtol: float = DEFAULT_SIGNAL_RTOL) -> ViewSet:
    views = [principal_view(v, rtol) for v in vs.views]
    return ViewSet(vs.n, views, None if vs.labels is None else vs.labels.copy())


@dataclass
class SolverParams:
    lambda1: float = DEFAULT_LAMBDA
    lambda2: float = DEFAULT_LAMBDA
    lambda3: float = DEFAULT_LAMBDA
    rho0: float = DEFAULT_RHO0
    rho_mult: float = DEFAULT_RHO_MULT
    rho_max: float = DEFAULT_RHO_MAX
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = DEFAULT_SEED
    sparse: bool = True
    signal_rtol: float = DEFAULT_SIGNAL_RTOL

    def __post_init__(self):
        self.validate()

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)

    def validate(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.rho0 <= 0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if self.rho_mult < 1:
            raise ValueError(f"rho_mult must be >= 1, got {self.rho_mult}")
        if self.rho_max < self.rho0:
            raise ValueError(f"rho_max ({self.rho_max}) is below rho0 ({self.rho0})")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 <= self.signal_rtol < 1:
            raise ValueError(f"signal_rtol must be in [0, 1), got {self.signal_rtol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        self.max_iter = int(self.max_iter)


@dataclass
class SolverState:
    G: np.ndarray
    L: np.ndarray
    S: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    Z3: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    J4: np.ndarray
    F: list[np.ndarray]
    rho: float

    @classmethod
    def zeros(cls, views: ViewSet, rho: float) -> "SolverState":
        n, V = views.n, views.V
        t = np.zeros((n, n, V))
        return cls(
            G=t.copy(), L=t.copy(), S=t.copy(),
            Z1=t.copy(), Z2=np.zeros((n, V, n)), Z3=np.zeros((V, n, n)),
            J1=t.copy(), J2=t.copy(), J3=np.zeros((n, V, n)), J4=np.zeros((V, n, n)),
            F=[np.zeros_like(v.X) for v in views.views],
            rho=float(rho),
        )

    @property
    def Z(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.Z1, self.Z2, self.Z3)

    @property
    def J_modes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Multipliers of the L = Z_m constraints, in mode order."""
        return (self.J2, self.J3, self.J4)


@dataclass
class SolverTrace:
    records: list[dict] = field(default_factory=list)
    converged: bool = False

    HEADER = ("iter", "er1", "er2", "er3", "er4", "er5", "objective", "rho")

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iter"

    def max_residual(self, i: int = -1) -> float:
        r = self.records[i]
        return max(v for k, v in r.items() if k.startswith("er"))


def zero_filled(view: View, n: int) -> np.ndarray:
    """X~ = X A: the view with zero columns at unobserved samples."""
    out = np.zeros((view.X.shape[0], n))
    out[:, view.observed] = view.X
    return out


def graph_factor(view: View, n: int):
    """Cholesky factor of B + I with B = A^T X^T X A; fixed for the whole run."""
    xt = zero_filled(view, n)
    b = xt.T @ xt
    b[np.diag_indices_from(b)] += 1.0
    try:
        return scipy.linalg.cho_factor(b, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"view {view.view_id}: B + I is not positive definite (non-finite data?)") from exc


def graph_subproblem(view: View, Q: np.ndarray, P: np.ndarray, factor=None) -> np.ndarray:
    """Minimize ||Q - X~ G A^T||_F^2 + ||G - P||_F^2 over G (n x n).

    The normal equations read B G D + G = X~^T Q A + P with D = A^T A, a 0/1
    diagonal. Observed columns solve (B + I) g = m, the others copy m.
    """
    n = P.shape[0]
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(P))):
        raise FloatingPointError(f"view {view.view_id}: non-finite input to the graph subproblem")
    xt = zero_filled(view, n)
    qa = np.zeros_like(xt)
    qa[:, view.observed] = Q
    m = xt.T @ qa + P
    if factor is None:
        factor = graph_factor(view, n)
    g = m.copy()
    if view.observed.size == 0:
        return g
    g[:, view.observed] = scipy.linalg.cho_solve(factor, m[:, view.observed])
    return g


def z_update(L: np.ndarray, Jm: np.ndarray, mode, lambda_m: float, rho: float, return_tnn: bool = False):
    """Z_m = t-SVT_{lambda_m / rho}(L_[m] + J_m / rho), in mode-m orientation."""
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return tsvt(permute(L, mode) + Jm / rho, lambda_m / rho, return_tnn=return_tnn)


def l_update(G, S, Z1, Z2, Z3, J1, J2, J3, J4, rho: float) -> np.ndarray:
    """Closed-form L: average of the four quadratic terms, all in mode-1 orientation."""
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    shapes = {np.shape(G), np.shape(S), np.shape(Z1), np.shape(J1), np.shape(J2)}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent tensor shapes for the L update: {sorted(shapes)}")
    z2 = permute(Z2, ModeId.MODE2, inverse=True)
    z3 = permute(Z3, ModeId.MODE3, inverse=True)
    j3 = permute(J3, ModeId.MODE2, inverse=True)
    j4 = permute(J4, ModeId.MODE3, inverse=True)
    if z2.shape != np.shape(G) or z3.shape != np.shape(G) or j3.shape != np.shape(G) or j4.shape != np.shape(G):
        raise ValueError("mode-2/mode-3 variables do not match the graph tensor shape")
    return 0.25 * (G - S + Z1 + z2 + z3 + (J1 - J2 - j3 - j4) / rho)


def s_update(G, L, J1, rho: float) -> np.ndarray:
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return soft_threshold(G - L + J1 / rho, 1.0 / rho)


def view_residual(view: View, G_v: np.ndarray) -> np.ndarray:
    """X - X~ G A^T for one view."""
    xg = zero_filled(view, G_v.shape[0]) @ G_v
    return view.X - xg[:, view.observed]


def residuals(state: SolverState, views: ViewSet) -> tuple[float, float, float, float, float]:
    """Infinity-norm residuals ER1..ER5 of the five constraint families."""

    def _inf(a):
        return float(np.max(np.abs(a))) if np.size(a) else 0.0

    er1 = max(_inf(view_residual(v, state.G[:, :, i])) for i, v in enumerate(views.views))
    er2 = _inf(state.G - state.L - state.S)
    er3 = _inf(state.L - state.Z1)
    er4 = _inf(permute(state.L, ModeId.MODE2) - state.Z2)
    er5 = _inf(permute(state.L, ModeId.MODE3) - state.Z3)
    return (er1, er2, er3, er4, er5)


def multiplier_update(state: SolverState, views: ViewSet, rho_mult: float = 1.0, rho_max: float = np.inf) -> SolverState:
    """Dual ascent on all multipliers, then rho <- min(rho * rho_mult, rho_max)."""
    rho = state.rho
    F = [f + rho * view_residual(v, state.G[:, :, i]) for i, (f, v) in enumerate(zip(state.F, views.views))]
    return replace(
        state,
        F=F,
        J1=state.J1 + rho * (state.G - state.L - state.S),
        J2=state.J2 + rho * (state.L - state.Z1),
        J3=state.J3 + rho * (permute(state.L, ModeId.MODE2) - state.Z2),
        J4=state.J4 + rho * (permute(state.L, ModeId.MODE3) - state.Z3),
        rho=min(rho * rho_mult, rho_max),
    )


def stack_graph_tensor(graphs) -> np.ndarray:
    graphs = [np.asarray(g, dtype=float) for g in graphs]
    if not graphs:
        raise ValueError("need at least one graph")
    shape = graphs[0].shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"graphs must be square matrices, got {shape}")
    for i, g in enumerate(graphs):
        if g.shape != shape:
            raise ValueError(f"graph {i} has shape {g.shape}, expected {shape}")
    return np.stack(graphs, axis=2)


def consistency_matrix(L: np.ndarray) -> np.ndarray:
    """C = (1/V) sum_v (|L_v| + |L_v^T|) / 2."""
    a = np.abs(L)
    return (a + a.transpose(1, 0, 2)).mean(axis=2) / 2.0


def _check_finite(state: SolverState, iteration: int):
    for name in ("G", "L", "S", "Z1", "Z2", "Z3"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise NonFiniteError(iteration, name)


def jtiv_lrr_fit(views: ViewSet, params: SolverParams | None = None, callback=None, status_cb=None, status_every: int = 0):
    """Run the ADMM solver. Returns (L, S, C, trace).

    ``callback(iteration, state)`` runs after every iteration; ``status_cb``
    receives a progress line every ``status_every`` iterations. The views are
    reduced to their principal subspaces (``params.signal_rtol``) first; ER1
    is measured on the reduced data.
    """
    params = params or SolverParams()
    params.validate()
    views.validate()
    views = principal_viewset(views, params.signal_rtol)
    n = views.n
    lambdas = params.lambdas

    factors = [graph_factor(v, n) for v in views.views]
    state = SolverState.zeros(views, params.rho0)
    trace = SolverTrace()

    for it in range(1, params.max_iter + 1):
        rho = state.rho
        graphs = []
        for i, v in enumerate(views.views):
            Q = v.X + state.F[i] / rho
            P = state.L[:, :, i] + state.S[:, :, i] - state.J1[:, :, i] / rho
            graphs.append(graph_subproblem(v, Q, P, factor=factors[i]))
        G = stack_graph_tensor(graphs)

        Z = []
        objective = 0.0
        for mode, lam, Jm in zip(MODES, lambdas, state.J_modes):
            z, norm = z_update(state.L, Jm, mode, lam, rho, return_tnn=True)
            Z.append(z)
            objective += lam * norm

        L = l_update(G, state.S, Z[0], Z[1], Z[2], state.J1, state.J2, state.J3, state.J4, rho)
        S = s_update(G, L, state.J1, rho) if params.sparse else np.zeros_like(L)
        objective += float(np.abs(S).sum())

        state = replace(state, G=G, L=L, S=S, Z1=Z[0], Z2=Z[1], Z3=Z[2])
        _check_finite(state, it)
        er = residuals(state, views)
        state = multiplier_update(state, views, params.rho_mult, params.rho_max)

        trace.records.append(
            {
                "iter": it,
                "er1": er[0],
                "er2": er[1],
                "er3": er[2],
                "er4": er[3],
                "er5": er[4],
                "objective": objective,
                "rho": rho,
            }
        )
        if callback is not None:
            callback(it, state)
        if status_cb is not None and status_every and it % status_every == 0:
            status_cb(f"iter {it}: max residual {max(er):.3e}, rho {rho:.3e}")
        if max(er) <= params.tol:
            trace.converged = True
            break

    return state.L, state.S, consistency_matrix(state.L), trace
