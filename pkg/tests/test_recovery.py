import numpy as np
import pytest

from jtiv_lrr.recovery import (
    AvailabilityError,
    SolverParams,
    SolverState,
    View,
    ViewSet,
    consistency_matrix,
    graph_subproblem,
    jtiv_lrr_fit,
    l_update,
    multiplier_update,
    normalize_viewset,
    principal_view,
    principal_viewset,
    residuals,
    s_update,
    stack_graph_tensor,
    z_update,
)
from jtiv_lrr.synth import gen_missing_mask, gen_planted_multiview
from jtiv_lrr.tensor_core import ModeId, permute, tsvt


def _selection(view, n):
    A = np.zeros((view.n_v, n))
    A[np.arange(view.n_v), view.observed] = 1.0
    return A


def _small_viewset(rng, n=12, p=0.3):
    vs = normalize_viewset(gen_planted_multiview(n, 2, (5, 6, 4), 0.05, rng))
    observed = gen_missing_mask(n, vs.V, p, rng)
    views = [View(v.X[:, obs], obs, v.view_id) for v, obs in zip(vs.views, observed)]
    return ViewSet(n, views, vs.labels)


def _random_state(rng, vs, rho):
    state = SolverState.zeros(vs, rho)
    fields = {}
    for name in ("G", "L", "S", "Z1", "Z2", "Z3", "J1", "J2", "J3", "J4"):
        fields[name] = rng.standard_normal(getattr(state, name).shape)
    F = [rng.standard_normal(f.shape) for f in state.F]
    return SolverState(F=F, rho=rho, **fields)


def test_viewset_validation():
    X = np.ones((2, 3))
    with pytest.raises(AvailabilityError):
        ViewSet(4, [View(X, [0, 1, 2])])
    with pytest.raises(ValueError):
        ViewSet(3, [View(X, [0, 2, 1])])
    with pytest.raises(ValueError):
        ViewSet(3, [View(X, [0, 1])])
    with pytest.raises(ValueError):
        ViewSet(3, [View(X, [0, 1, 3])])
    with pytest.raises(ValueError):
        ViewSet(3, [View(X, [0, 1, 2])], labels=[0, 1])
    with pytest.raises(ValueError):
        ViewSet(3, [View(np.full((2, 3), np.nan), [0, 1, 2])])
    vs = ViewSet(3, [View(X, [0, 1, 2]), View(X[:, :1], [1])])
    assert vs.V == 2
    assert [v.view_id for v in vs.views] == ["0", "1"]


def test_normalize_viewset_unit_columns():
    X = np.array([[3.0, 0.0, 1.0], [4.0, 0.0, 0.0]])
    vs = normalize_viewset(ViewSet(3, [View(X, [0, 1, 2])]))
    norms = np.linalg.norm(vs.views[0].X, axis=0)
    assert np.allclose(norms, [1.0, 0.0, 1.0])
    assert np.allclose(vs.views[0].X[:, 0], [0.6, 0.8])


def test_solver_params_validation():
    with pytest.raises(ValueError):
        SolverParams(lambda1=-1.0)
    with pytest.raises(ValueError):
        SolverParams(rho0=0.0)
    with pytest.raises(ValueError):
        SolverParams(rho_mult=0.5)
    with pytest.raises(ValueError):
        SolverParams(tol=0.0)
    with pytest.raises(ValueError):
        SolverParams(max_iter=0)
    assert SolverParams().lambdas == (10.0, 10.0, 10.0)


def test_graph_subproblem_stationarity(rng):
    n = 10
    X = rng.standard_normal((4, 6))
    view = View(X, np.array([0, 2, 3, 5, 7, 9]), "v")
    Q = rng.standard_normal((4, 6))
    P = rng.standard_normal((n, n))
    G = graph_subproblem(view, Q, P)

    A = _selection(view, n)
    Xt = X @ A
    grad = -Xt.T @ (Q - Xt @ G @ A.T) @ A + (G - P)
    assert np.max(np.abs(grad)) < 1e-8


def test_graph_subproblem_empty_view_copies_p(rng):
    view = View(np.zeros((3, 0)), np.array([], dtype=np.int64), "empty")
    P = rng.standard_normal((5, 5))
    assert np.array_equal(graph_subproblem(view, np.zeros((3, 0)), P), P)


def test_z_update_is_tsvt_of_permuted(rng):
    L = rng.standard_normal((6, 6, 3))
    J = rng.standard_normal((6, 3, 6))
    rho = 2.0
    z = z_update(L, J, ModeId.MODE2, 0.8, rho)
    assert np.allclose(z, tsvt(permute(L, ModeId.MODE2) + J / rho, 0.4))


def test_l_update_stationarity(rng):
    vs = _small_viewset(rng)
    rho = 1e-4
    st = _random_state(rng, vs, rho)
    L = l_update(st.G, st.S, st.Z1, st.Z2, st.Z3, st.J1, st.J2, st.J3, st.J4, rho)

    inv2 = lambda t: permute(t, ModeId.MODE2, inverse=True)  # noqa: E731
    inv3 = lambda t: permute(t, ModeId.MODE3, inverse=True)  # noqa: E731
    grad = (
        -(st.G - L - st.S + st.J1 / rho)
        + (L - st.Z1 + st.J2 / rho)
        + (L - inv2(st.Z2) + inv2(st.J3) / rho)
        + (L - inv3(st.Z3) + inv3(st.J4) / rho)
    )
    scale = max(1.0, np.max(np.abs(st.J1 / rho)))
    assert np.max(np.abs(grad)) / scale < 1e-8


def test_s_update_subgradient(rng):
    G = rng.standard_normal((5, 5, 2))
    L = rng.standard_normal((5, 5, 2))
    J1 = rng.standard_normal((5, 5, 2))
    rho = 1.5
    S = s_update(G, L, J1, rho)
    M = G - L + J1 / rho
    nz = S != 0
    assert np.allclose(S[nz] - M[nz] + np.sign(S[nz]) / rho, 0.0, atol=1e-12)
    assert np.all(np.abs(M[~nz]) <= 1.0 / rho + 1e-12)


def test_multiplier_update_and_rho_schedule(rng):
    vs = _small_viewset(rng)
    st = _random_state(rng, vs, 0.5)
    new = multiplier_update(st, vs, rho_mult=1.5, rho_max=0.6)
    assert new.rho == 0.6
    assert np.allclose(new.J2, st.J2 + 0.5 * (st.L - st.Z1))
    assert np.allclose(new.J1, st.J1 + 0.5 * (st.G - st.L - st.S))
    assert np.allclose(new.J4, st.J4 + 0.5 * (permute(st.L, ModeId.MODE3) - st.Z3))
    assert st.rho == 0.5


def test_residuals_at_zero_state(rng):
    vs = _small_viewset(rng)
    st = SolverState.zeros(vs, 1.0)
    er = residuals(st, vs)
    assert len(er) == 5
    # G = 0 leaves only the data-fit residual
    assert er[0] > 0
    assert er[1:] == (0.0, 0.0, 0.0, 0.0)


def test_stack_graph_tensor(rng):
    g = [rng.standard_normal((4, 4)) for _ in range(3)]
    t = stack_graph_tensor(g)
    assert t.shape == (4, 4, 3)
    for i in range(3):
        assert np.array_equal(t[:, :, i], g[i])
    assert permute(t, ModeId.MODE3).shape == (3, 4, 4)
    assert np.array_equal(stack_graph_tensor(g[:1])[:, :, 0], g[0])
    with pytest.raises(ValueError):
        stack_graph_tensor([np.zeros((4, 4)), np.zeros((3, 3))])


def test_consistency_matrix_symmetric_nonnegative(rng):
    L = rng.standard_normal((6, 6, 3))
    C = consistency_matrix(L)
    assert np.array_equal(C, C.T)
    assert np.all(C >= 0)
    expected = sum(np.abs(L[:, :, v]) + np.abs(L[:, :, v]).T for v in range(3)) / 6.0
    assert np.allclose(C, expected)


def test_fit_trace_and_determinism(rng):
    vs = _small_viewset(rng)
    params = SolverParams(max_iter=15)
    calls = []
    L, S, C, trace = jtiv_lrr_fit(vs, params, callback=lambda it, st: calls.append(it))
    assert L.shape == (12, 12, 3)
    assert S.shape == L.shape
    assert np.array_equal(C, C.T)
    assert calls == list(range(1, trace.iterations + 1))
    assert trace.iterations <= 15
    assert set(trace.records[0]) == set(trace.HEADER)
    rhos = [r["rho"] for r in trace.records]
    assert rhos == sorted(rhos)

    L2, S2, C2, trace2 = jtiv_lrr_fit(vs, params)
    assert np.array_equal(L, L2)
    assert np.array_equal(C, C2)
    assert trace.records == trace2.records


def test_fit_stopping_rules(rng):
    vs = _small_viewset(rng)
    _, _, _, trace = jtiv_lrr_fit(vs, SolverParams(max_iter=2, tol=1e-300))
    assert trace.iterations == 2
    assert trace.status == "max_iter"

    _, _, _, trace = jtiv_lrr_fit(vs, SolverParams(max_iter=50, tol=1e300))
    assert trace.iterations == 1
    assert trace.status == "converged"
    assert trace.max_residual() <= 1e300


def test_fit_without_sparse_term(rng):
    vs = _small_viewset(rng)
    _, S, _, _ = jtiv_lrr_fit(vs, SolverParams(max_iter=5, sparse=False))
    assert not np.any(S)


def test_fit_status_callback(rng):
    vs = _small_viewset(rng)
    lines = []
    jtiv_lrr_fit(vs, SolverParams(max_iter=4, tol=1e-300), status_cb=lines.append, status_every=2)
    assert len(lines) == 2
    assert lines[0].startswith("iter 2:")


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
def test_fit_converges_on_planted_data(p):
    rng = np.random.default_rng(7)
    vs = normalize_viewset(gen_planted_multiview(60, 3, (30, 40, 50), 0.05, rng))
    observed = gen_missing_mask(60, 3, p, rng)
    vs = ViewSet(60, [View(v.X[:, o], o, v.view_id) for v, o in zip(vs.views, observed)], vs.labels)
    _, _, _, trace = jtiv_lrr_fit(vs, SolverParams())
    assert trace.converged
    assert trace.max_residual() <= 1e-6


def test_graph_subproblem_complete_identity():
    n = 5
    view = View(np.eye(n), np.arange(n), "v")
    G = graph_subproblem(view, np.eye(n), np.zeros((n, n)))
    assert np.allclose(G, 0.5 * np.eye(n), atol=1e-12)


def test_graph_subproblem_matches_dense_normal_equations(rng):
    n = 8
    X = rng.standard_normal((6, 5))
    view = View(X, np.array([0, 1, 3, 4, 6]), "v")
    Q = rng.standard_normal((6, 5))
    P = rng.standard_normal((n, n))
    A = _selection(view, n)
    M = np.kron(A, X @ A)
    rhs = M.T @ Q.ravel(order="F") + P.ravel(order="F")
    g = np.linalg.solve(M.T @ M + np.eye(n * n), rhs)
    expected = g.reshape((n, n), order="F")
    G = graph_subproblem(view, Q, P)
    assert np.linalg.norm(G - expected) / np.linalg.norm(expected) < 1e-8


def test_z_update_limits(rng):
    L = rng.standard_normal((5, 4, 3))
    J = np.zeros((5, 3, 4))
    assert np.allclose(z_update(L, J, ModeId.MODE2, 0.0, 1.0), permute(L, ModeId.MODE2))
    assert not np.any(z_update(L, J, ModeId.MODE2, 1e6, 1.0))
    with pytest.raises(ValueError):
        z_update(L, J, ModeId.MODE2, 1.0, 0.0)


def test_l_update_single_term(rng):
    T = rng.standard_normal((4, 4, 2))
    zero = np.zeros_like(T)
    z2 = np.zeros((4, 2, 4))
    z3 = np.zeros((2, 4, 4))
    L = l_update(4 * T, zero, zero, z2, z3, zero, zero, z2, z3, 1.0)
    assert np.allclose(L, T)
    with pytest.raises(ValueError):
        l_update(T, zero, zero, z2, z3, zero, zero, z2, np.zeros((3, 4, 4)), 1.0)


def test_multiplier_accumulates_with_fixed_rho(rng):
    vs = _small_viewset(rng)
    st = _random_state(rng, vs, 0.3)
    st.J1[:] = 0.0
    R = st.G - st.L - st.S
    once = multiplier_update(st, vs)
    twice = multiplier_update(once, vs)
    assert twice.rho == 0.3
    assert np.allclose(twice.J1, 0.3 * 2 * R)


def test_residual_spike_in_z1(rng):
    vs = _small_viewset(rng)
    st = SolverState.zeros(vs, 1.0)
    st.Z1[2, 3, 1] = 0.25
    assert residuals(st, vs)[2] == 0.25


def test_principal_view_keeps_gram_of_lowrank_data(rng):
    X = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 10))
    view = View(X, np.arange(10), "a")
    reduced = principal_view(view, 0.01)
    assert reduced.X.shape == (2, 10)
    assert np.allclose(reduced.X.T @ reduced.X, X.T @ X)
    assert np.array_equal(reduced.observed, view.observed)
    assert reduced.view_id == "a"


def test_principal_view_drops_weak_directions():
    X = np.diag([4.0, 2.0, 0.5])
    reduced = principal_view(View(X, np.arange(3)), 0.25)
    assert reduced.X.shape == (2, 3)
    assert np.allclose(np.abs(reduced.X), [[4.0, 0, 0], [0, 2.0, 0]])
    # rtol 0 and all-zero data are passed through
    assert np.array_equal(principal_view(View(X, np.arange(3)), 0.0).X, X)
    zeros = np.zeros((3, 2))
    assert np.array_equal(principal_view(View(zeros, np.arange(2)), 0.25).X, zeros)


def test_principal_viewset_keeps_structure(rng):
    vs = _small_viewset(rng)
    reduced = principal_viewset(vs, 0.25)
    assert reduced.n == vs.n
    assert [v.n_v for v in reduced.views] == [v.n_v for v in vs.views]
    assert all(r.d <= v.d for r, v in zip(reduced.views, vs.views))
    assert np.array_equal(reduced.labels, vs.labels)


def test_signal_rtol_is_validated():
    with pytest.raises(ValueError):
        SolverParams(signal_rtol=1.0)
    with pytest.raises(ValueError):
        SolverParams(signal_rtol=-0.1)
    assert SolverParams(signal_rtol=0.0).signal_rtol == 0.0
