import numpy as np
import pytest
from hypothesis import given, strategies as st

from hopuflow import forms
from hopuflow import linsolve as ls
from hopuflow import mesh as M
from hopuflow.fespace import SpaceSet, l2_project

from oracles import full_step1, full_step2

CHANNEL = {"x-": "inlet", "x+": "outlet", "y-": "wall", "y+": "wall"}


# pcg ---------------------------------------------------------------------


def test_pcg_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, rep = ls.pcg(np.eye(5), b)
    np.testing.assert_allclose(x, b)
    assert rep.iterations == 1 and rep.converged and rep.residual <= 1e-10


def test_pcg_dense_spd(rng):
    A = rng.normal(size=(10, 10))
    A = A @ A.T + 10 * np.eye(10)
    b = rng.normal(size=10)
    x, rep = ls.pcg(A, b, tol=1e-14)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-10)
    assert rep.applies >= rep.iterations


def test_pcg_path_laplacian_with_deflation():
    L = np.diag([1.0, 2, 2, 2, 1]) - np.eye(5, k=1) - np.eye(5, k=-1)
    b = np.array([1.0, -2, 0.5, 0, 0.5])
    x, rep = ls.pcg(L, b, tol=1e-14, deflation=np.ones(5))
    np.testing.assert_allclose(x, np.linalg.pinv(L) @ b, atol=1e-12)
    assert abs(x.sum()) <= 1e-12
    with pytest.raises(ls.SolverError, match="inconsistent"):
        ls.pcg(L, np.ones(5), deflation=np.ones(5))


def test_pcg_failures(rng):
    A = np.diag(np.linspace(1, 1e4, 50))
    with pytest.raises(ls.SolverError) as exc:
        ls.pcg(A, rng.normal(size=50), tol=1e-14, max_iter=3)
    assert exc.value.report is not None and len(exc.value.report.history) == 4
    with pytest.raises(ls.SolverError, match="positive definite"):
        ls.pcg(np.diag([1.0, -1.0]), np.array([1.0, 2.0]))


def test_pcg_zero_rhs():
    x, rep = ls.pcg(np.eye(3), np.zeros(3))
    assert rep.iterations == 0 and np.all(x == 0)


# step 1 --------------------------------------------------------------------


MESHES = [
    dict(cells_per_axis=(1, 1), boundary_tags="outlet"),
    dict(cells_per_axis=(2, 1), boundary_tags="wall"),
    dict(cells_per_axis=(2, 1), boundary_tags=CHANNEL),
    dict(cells_per_axis=(2, 2), periodic_axes=(0, 1)),
]


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("mesh_kw", MESHES)
@pytest.mark.parametrize("elim", ls.ELIMINATION_SETS)
def test_condensed_solve_matches_dense(k, mesh_kw, elim):
    rng = np.random.default_rng(k)
    S = SpaceSet(M.build_box_mesh(2, **mesh_kw), k)
    D = S.dofs
    nu, dt = 0.3, 0.1
    rV = rng.normal(size=D.ndofs["V"])
    ud = rng.normal(size=D.ndofs["V"])
    hd = rng.normal(size=D.ndofs["Vhat"])
    ref = full_step1(S, nu, dt, rV, ud, hd)
    cs = ls.condense(S, nu, dt, elim)
    xd = np.zeros(cs.n)
    xd[: cs.n_v_glob] = ud[: cs.n_v_glob]
    xd[cs.n_v_glob :] = hd
    u, uh, rep, _ = cs.solve(rV, xd, tol=1e-14)
    sig, gam = cs.recover_stress(u, uh)
    for a, b in zip(ref, (sig, gam, u, uh)):
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(a)))


def test_condensed_operator_single_element_and_bubble_equivalence():
    S = SpaceSet(M.build_box_mesh(2, (1, 1), boundary_tags="outlet"), 1)
    full = ls.condense(S, 0.5, 0.2, "stress_and_gamma")
    cs = ls.condense(S, 0.5, 0.2)
    M_, B, A = full.M, full.B, full.A
    dense = A - B @ np.linalg.solve(M_, B.T)
    np.testing.assert_allclose(full.S.toarray(), dense, rtol=1e-11, atol=1e-11 * np.abs(dense).max())
    f, b = cs.f_idx, cs.b_idx
    Sp = dense[np.ix_(f, f)] - dense[np.ix_(f, b)] @ np.linalg.solve(dense[np.ix_(b, b)], dense[np.ix_(b, f)])
    np.testing.assert_allclose(cs.S_elem, Sp, atol=1e-11 * np.abs(Sp).max())


@pytest.mark.parametrize("elim", ls.ELIMINATION_SETS)
def test_condensed_operator_spd(elim, rng):
    S = SpaceSet(M.build_box_mesh(2, (3, 2), boundary_tags=CHANNEL), 2)
    cs = ls.condense(S, 0.01, 0.01, elim)
    A = cs.S_free
    for _ in range(100):
        x, y = rng.normal(size=(2, A.shape[0]))
        assert abs(x @ A @ y - y @ A @ x) <= 1e-12 * np.linalg.norm(x) * np.linalg.norm(y) * max(1.0, abs(A).max())
        assert x @ A @ x > 0


def test_condense_rejects_bad_input():
    S = SpaceSet(M.build_box_mesh(2, (1, 1)), 1)
    with pytest.raises(ValueError):
        ls.condense(S, 0.1, 0.1, "everything")
    with pytest.raises(ValueError):
        ls.condense(S, 0.0, 0.1)


# BDDC ----------------------------------------------------------------------


def test_bddc_restrict_duplicate_identity(rng):
    S = SpaceSet(M.build_box_mesh(2, (3, 3), periodic_axes=(0,), boundary_tags="wall"), 2)
    pre = ls.BddcPreconditioner(ls.condense(S, 0.01, 0.01))
    x = rng.normal(size=pre.n)
    np.testing.assert_allclose(pre.restrict(pre.duplicate(x)), x, rtol=0, atol=1e-15 * np.abs(x).max())


def test_bddc_operator_spd(rng):
    S = SpaceSet(M.build_box_mesh(2, (3, 3), boundary_tags=CHANNEL), 2)
    pre = ls.BddcPreconditioner(ls.condense(S, 0.01, 0.01))
    n = pre.free.size
    for _ in range(100):
        x, y = rng.normal(size=(2, n))
        cx, cy = pre(x), pre(y)
        assert abs(y @ cx - x @ cy) <= 1e-12 * np.linalg.norm(cx) * np.linalg.norm(y) * 10
        assert x @ cx > 0
    np.testing.assert_allclose(ls.bddc_apply(pre, x), pre(x))


def test_bddc_single_element_exact():
    S = SpaceSet(M.build_box_mesh(2, (1, 1), boundary_tags="outlet"), 2)
    cs = ls.condense(S, 1e-3, 1e-2)
    rV = np.random.default_rng(0).normal(size=S.dofs.ndofs["V"])
    _, _, rep, _ = cs.solve(rV, tol=1e-10)
    assert rep.iterations == 1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bddc_two_elements(k):
    for kw in (dict(boundary_tags="outlet"), dict(boundary_tags=CHANNEL)):
        S = SpaceSet(M.build_box_mesh(2, (2, 1), **kw), k)
        cs = ls.condense(S, 1e-3, 1e-2)
        rV = np.random.default_rng(k).normal(size=S.dofs.ndofs["V"])
        u, uh, rep, _ = cs.solve(rV, tol=1e-10)
        assert rep.iterations <= 10
        ref = full_step1(S, 1e-3, 1e-2, rV, np.zeros_like(rV), np.zeros(S.dofs.ndofs["Vhat"]))
        assert np.max(np.abs(ref[2] - u)) <= 1e-8 * np.max(np.abs(ref[2]))


def test_bddc_stale_blocks_and_warning():
    S = SpaceSet(M.build_box_mesh(2, (2, 2), boundary_tags="wall"), 1)
    pre = ls.BddcPreconditioner(ls.condense(S, 0.01, 0.01))
    other = ls.condense(S, 0.01, 0.02)
    with pytest.raises(ls.SolverError, match="rebuild"):
        other.solve(np.zeros(S.dofs.ndofs["V"]), preconditioner=pre)
    with pytest.warns(RuntimeWarning):
        ls.BddcPreconditioner(ls.condense(S, 1.0, 1.0))


# step 2 --------------------------------------------------------------------


STEP2_MESHES = [
    dict(cells_per_axis=(1, 1), boundary_tags="outlet"),
    dict(cells_per_axis=(2, 1), boundary_tags="outlet"),
    dict(cells_per_axis=(2, 1), boundary_tags=CHANNEL),
    dict(cells_per_axis=(2, 2), periodic_axes=(0, 1)),
]


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("mesh_kw", STEP2_MESHES)
def test_pressure_projection_matches_dense(k, mesh_kw):
    S = SpaceSet(M.build_box_mesh(2, **mesh_kw), k)
    ustar = np.random.default_rng(10 + k).normal(size=S.dofs.ndofs["V"])
    ps = ls.PressureSchur(S)
    ut, p, ph, rep = ps.solve(ustar, tol=1e-14)
    ut2, p2, ph2 = full_step2(S, ustar)
    for a, b in ((ut, ut2), (p, p2), (ph, ph2)):
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(b)))
    assert S.max_divergence(ustar - ls.broken_to_conforming(S, ut)) <= 1e-10 * np.abs(ustar).max()


def test_pressure_uniform_field_gives_zero():
    S = SpaceSet(M.build_box_mesh(2, (2, 2), periodic_axes=(0, 1)), 2)
    u = l2_project(S, "V", lambda x, t: np.stack([1 + 0 * x[..., 0], -0.5 + 0 * x[..., 0]], -1))
    ps = ls.PressureSchur(S)
    assert np.max(np.abs(ps.rhs(u))) <= 1e-14
    ut, p, phat, rep = ps.solve(u)
    assert np.max(np.abs(phat)) <= 1e-12 and np.max(np.abs(ut)) <= 1e-12


@pytest.mark.parametrize("pre", ls.PRESSURE_PRECONDITIONERS)
def test_pressure_schur_definiteness(pre):
    out = ls.PressureSchur(SpaceSet(M.build_box_mesh(2, (2, 2), boundary_tags=CHANNEL), 2), pre)
    assert not out.singular
    A = out.S_free.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12 * np.abs(A).max())
    assert np.linalg.eigvalsh(A).min() > 0
    closed = ls.PressureSchur(SpaceSet(M.build_box_mesh(2, (2, 2), periodic_axes=(0, 1)), 2), pre)
    assert closed.singular
    ev = np.linalg.eigvalsh(closed.S_free.toarray())
    assert abs(ev[0]) <= 1e-10 * ev[-1] and ev[1] > 1e-8 * ev[-1]
    assert np.linalg.norm(closed.S_free @ closed.nullspace) <= 1e-10 * ev[-1]


def test_pressure_inconsistent_rhs_rejected():
    ps = ls.PressureSchur(SpaceSet(M.build_box_mesh(2, (2, 2), periodic_axes=(0, 1)), 1))
    with pytest.raises(ls.SolverError, match="inconsistent"):
        ls.solve_pressure_schur(ps, np.ones(ps.n))
    with pytest.raises(ValueError):
        ls.PressureSchur(ps.spaces, "multigrid")


@given(seed=st.integers(0, 2**32 - 1))
def test_broken_to_conforming_of_conforming_is_identity(seed):
    S = SpaceSet(M.build_box_mesh(2, (2, 2), periodic_axes=(0,), boundary_tags="wall"), 1)
    u = np.random.default_rng(seed).normal(size=S.dofs.ndofs["V"])
    v = np.zeros(S.dofs.ndofs["Vdisc"])
    v[S.dofs.l2g["Vdisc"]] = u[S.dofs.l2g["V"]]
    np.testing.assert_allclose(ls.broken_to_conforming(S, v), u, atol=1e-15 * np.abs(u).max())
