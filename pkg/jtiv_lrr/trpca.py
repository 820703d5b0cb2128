"""Tensor robust PCA over any combination of mode orientations.

Solves  min  sum_{m in modes} ||L_m,[m]||_TNN + lam ||S||_1  s.t.  X = sum_m L_m + S
(or the shared form with every L_m = L) with one auxiliary Z_m per active
mode, using the same ADMM splitting, residual bookkeeping and stopping rule
as the multiview solver.
"""

from __future__ import annotations

import math

import numpy as np

from .constants import (
    DEFAULT_RHO_MAX,
    DEFAULT_TOL,
    DEFAULT_TRPCA_COUPLING,
    DEFAULT_TRPCA_MAX_ITER,
    DEFAULT_TRPCA_RHO0,
    DEFAULT_TRPCA_RHO_MULT,
)
from .recovery import NonFiniteError, SolverParams, SolverTrace, z_update
from .tensor_core import ModeId, as_tensor3, permute, soft_threshold

TRPCA_COUPLINGS = ("sum", "shared")

MODE_COMBOS = (
    (ModeId.MODE1,),
    (ModeId.MODE2,),
    (ModeId.MODE3,),
    (ModeId.MODE1, ModeId.MODE2),
    (ModeId.MODE1, ModeId.MODE3),
    (ModeId.MODE2, ModeId.MODE3),
    (ModeId.MODE1, ModeId.MODE2, ModeId.MODE3),
)


def combo_label(modes) -> str:
    return "+".join(str(int(m)) for m in modes)


def parse_combo(label: str) -> tuple[ModeId, ...]:
    try:
        modes = tuple(ModeId(int(tok)) for tok in str(label).replace(",", "+").split("+") if tok.strip())
    except ValueError as exc:
        raise ValueError(f"invalid mode combination {label!r}") from exc
    if not modes:
        raise ValueError("mode combination must not be empty")
    return modes


def trpca_params() -> SolverParams:
    return SolverParams(
        rho0=DEFAULT_TRPCA_RHO0,
        rho_mult=DEFAULT_TRPCA_RHO_MULT,
        rho_max=DEFAULT_RHO_MAX,
        tol=DEFAULT_TOL,
        max_iter=DEFAULT_TRPCA_MAX_ITER,
    )


def default_lambda(shape) -> float:
    n1, n2, n3 = shape
    return 1.0 / math.sqrt(max(n1, n2) * n3)


def trpca_fit(
    x,
    modes,
    lam: float | None = None,
    params: SolverParams | None = None,
    coupling: str = DEFAULT_TRPCA_COUPLING,
    status_cb=None,
    status_every: int = 0,
):
    """Split x into low-rank L and sparse S. Returns (L, S, trace).

    ``coupling="shared"`` puts every active mode's TNN on the same L.
    ``coupling="sum"`` writes L = sum_m L_m with one part per mode, each
    penalized by the TNN in its own orientation; with a single mode both
    are the same problem.

    Trace records carry er1 = ||X - L - S||_inf and er2..er4 =
    ||L_[m] - Z_m||_inf (of L_m under the sum coupling) for the active
    modes in the given order.
    """
    x = as_tensor3(x)
    modes = tuple(ModeId(m) for m in modes)
    if not modes:
        raise ValueError("trpca_fit needs at least one mode")
    if len(set(modes)) != len(modes):
        raise ValueError(f"duplicate modes in {modes}")
    if coupling not in TRPCA_COUPLINGS:
        raise ValueError(f"coupling must be one of {TRPCA_COUPLINGS}, got {coupling!r}")
    lam = default_lambda(x.shape) if lam is None else float(lam)
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    params = params or trpca_params()
    params.validate()
    shared = coupling == "shared"

    L = np.zeros_like(x)
    S = np.zeros_like(x)
    Y = np.zeros_like(x)
    parts = {m: np.zeros_like(x) for m in modes}
    Z = {m: permute(L, m) for m in modes}
    J = {m: np.zeros_like(Z[m]) for m in modes}
    rho = params.rho0
    trace = SolverTrace()

    for it in range(1, params.max_iter + 1):
        objective = 0.0
        for m in modes:
            Z[m], norm = z_update(L if shared else parts[m], J[m], m, 1.0, rho, return_tnn=True)
            objective += norm

        target = x - S + Y / rho
        pulled = {m: permute(Z[m] - J[m] / rho, m, inverse=True) for m in modes}
        if shared:
            L = (target + sum(pulled.values())) / (len(modes) + 1)
        else:
            shift = (target - sum(pulled.values())) / (len(modes) + 1)
            parts = {m: pulled[m] + shift for m in modes}
            L = sum(parts.values())
        S = soft_threshold(x - L + Y / rho, lam / rho)
        objective += lam * float(np.abs(S).sum())

        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(S))):
            raise NonFiniteError(it, "L/S")

        r0 = x - L - S
        er = [float(np.max(np.abs(r0)))]
        Y = Y + rho * r0
        for m in modes:
            rm = permute(L if shared else parts[m], m) - Z[m]
            er.append(float(np.max(np.abs(rm))))
            J[m] = J[m] + rho * rm

        record = {"iter": it}
        for i in range(5):
            record[f"er{i + 1}"] = er[i] if i < len(er) else 0.0
        record["objective"] = objective
        record["rho"] = rho
        trace.records.append(record)

        rho = min(rho * params.rho_mult, params.rho_max)
        if status_cb is not None and status_every and it % status_every == 0:
            status_cb(f"trpca iter {it}: max residual {max(er):.3e}")
        if max(er) <= params.tol:
            trace.converged = True
            break

    return L, S, trace


def relative_error(true, hat) -> float:
    true = np.asarray(true, dtype=float)
    if np.shape(hat) != true.shape:
        raise ValueError(f"shape mismatch: {np.shape(hat)} vs {true.shape}")
    ref = float(np.linalg.norm(true))
    if ref == 0.0:
        raise ValueError("ground-truth component has zero norm; relative error undefined")
    return float(np.linalg.norm(true - hat)) / ref


def reconstruction_errors(L_true, L_hat, S_true, S_hat) -> tuple[float, float]:
    """Relative Frobenius errors of the low-rank and sparse parts."""
    return relative_error(L_true, L_hat), relative_error(S_true, S_hat)
