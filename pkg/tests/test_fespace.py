import numpy as np
import pytest
from hypothesis import given, strategies as st

from hopuflow import mesh as M
from hopuflow.fespace import SpaceError, SpaceSet, build_spaces, expected_dims, face_points, l2_project
from hopuflow.polynomials import dim_total_degree
from hopuflow.quadrature import gauss_box

K_VALUES = (1, 2, 3)


def unit_square(n=1, tags=M.WALL):
    return M.build_box_mesh(2, (n, n), boundary_tags=tags)


@pytest.fixture(scope="module", params=K_VALUES)
def ref(request):
    return SpaceSet(unit_square(), request.param).ref


def test_total_degree_convention_reported():
    S, _ = build_spaces(unit_square(), 1)
    rep = S.report()
    assert rep["convention"] == "total-degree"
    assert rep["local"]["Q"] == 3


@pytest.mark.parametrize("dim,k", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
def test_local_dimensions(dim, k):
    m = M.build_box_mesh(dim, (1,) * dim, boundary_tags=M.WALL)
    rep = SpaceSet(m, k).report()["local"]
    exp = expected_dims(dim, k)
    for name in ("V", "Q", "W", "Sigma"):
        assert rep[name] == exp[name]
    assert rep["V_bubble"] + rep["V_facet"] == rep["V"]
    assert rep["Qhat"] == 2 * dim * exp["facet"]


def test_2d_dimension_table():
    dims = {k: SpaceSet(unit_square(), k).report()["local"] for k in K_VALUES}
    assert [dims[k]["V"] for k in K_VALUES] == [10, 18, 28]
    assert [dims[k]["V_bubble"] for k in K_VALUES] == [2, 6, 12]
    assert [dims[k]["Sigma"] for k in K_VALUES] == [20, 34, 51]


@pytest.mark.parametrize("k", K_VALUES)
def test_vhat_count_identity(k):
    m = M.build_box_mesh(2, (3, 2), boundary_tags=M.WALL)
    S = SpaceSet(m, k)
    assert S.dofs.ndofs["Vhat"] == m.n_facets * (m.dim - 1) * dim_total_degree(1, k)
    gd = S.report()["gdofs_momentum"]
    assert gd == S.dofs.free("Vhat").size + np.setdiff1d(np.arange(S.dofs.n_vfacet_global), S.dofs.dirichlet["V"]).size


def test_k_zero_rejected():
    with pytest.raises(SpaceError):
        SpaceSet(unit_square(), 0)


def test_div_V_in_Q(ref):
    rule = ref.vol_rule
    D = ref.div_V(rule.points)  # (nV, q)
    Qv = ref.values("Q", rule.points)
    w = rule.weights
    coef = np.einsum("bq,cq,q->bc", D, Qv, w) @ np.linalg.inv(np.einsum("bq,cq,q->bc", Qv, Qv, w))
    resid = D - coef @ Qv
    assert np.max(np.abs(resid)) <= 1e-13 * max(1.0, np.max(np.abs(D)))


def test_sigma_trace_free_and_nt_degree(ref):
    pts = ref.vol_rule.points
    S = ref.values("Sigma", pts)
    assert np.max(np.abs(np.trace(S, axis1=2, axis2=3))) <= 1e-13
    d, k = ref.dim, ref.k
    fr = gauss_box(d - 1, 2 * k + 6)
    psi = ref.facet_basis_values(fr.points)  # orthonormal P^k on the reference facet
    for face in range(2 * d):
        a = face // 2
        vals = ref.values("Sigma", face_points(d, face, fr.points))
        nt = np.delete(vals[:, :, :, a], a, axis=2)  # (nS, q, d-1)
        proj = np.einsum("sqt,nq,q,np->spt", nt, psi, fr.weights, psi)
        assert np.sqrt(np.max(np.einsum("sqt,q->s", (nt - proj) ** 2, fr.weights))) <= 1e-12


def test_W_skew_and_vhat_tangential(ref):
    pts = ref.vol_rule.points
    W = ref.values("W", pts)
    assert np.max(np.abs(W + np.swapaxes(W, 2, 3))) == 0.0
    fr = ref.face_rule
    for face in range(4):
        Vh = ref.vhat_face_values(face, fr.points)
        assert np.all(Vh[:, :, face // 2] == 0.0)


@pytest.mark.parametrize("k", K_VALUES)
def test_local_mass_matrices_spd(k):
    r = SpaceSet(unit_square(), k).ref
    rule = r.vol_rule
    for name in ("V", "Sigma", "W", "Q"):
        B = r.values(name, rule.points)
        B = B.reshape(B.shape[0], B.shape[1], -1)
        G = np.einsum("bqi,cqi,q->bc", B, B, rule.weights)
        np.testing.assert_allclose(G, G.T, atol=1e-13)
        np.linalg.cholesky(G)


@pytest.mark.parametrize("k", K_VALUES)
def test_volume_rule_is_exact_for_stress_mass(k, rng):
    r = SpaceSet(unit_square(), k).ref
    c = rng.normal(size=r.nSigma)
    f = lambda rule: np.einsum("s,sqij->qij", c, r.values("Sigma", rule.points))
    lo, hi = r.vol_rule, gauss_box(2, r.vol_rule.degree + 4)
    a = np.einsum("qij,qij,q->", f(lo), f(lo), lo.weights)
    b = np.einsum("qij,qij,q->", f(hi), f(hi), hi.weights)
    assert abs(a - b) <= 1e-13 * abs(b)


def test_eval_basis_trace_identities():
    S = SpaceSet(unit_square(), 2)
    pts = np.array([[1.0, -0.3], [1.0, 0.4]])
    n = np.array([1.0, 0.0])
    full = S.eval_basis("Sigma", 0, pts) @ n
    nn = S.eval_basis("Sigma", 0, pts, "nn_trace")
    nt = S.eval_basis("Sigma", 0, pts, "nt_trace")
    np.testing.assert_allclose(nn[..., None] * n + nt, full, atol=1e-14)
    assert np.max(np.abs(nt @ n)) <= 1e-15
    tt = S.eval_basis("V", 0, pts, "tangential_trace")
    assert np.max(np.abs(tt @ n)) <= 1e-15
    with pytest.raises(SpaceError):
        S.eval_basis("V", 0, np.array([[0.1, 0.2]]), "normal_trace")


def test_lowest_facet_function_normal_trace():
    S = SpaceSet(unit_square(), 1)
    nf = S.ref.nf
    s = np.linspace(-1, 1, 7)
    target = 1 * nf  # first facet mode on the x = 1 face
    for face in range(4):
        a, side = divmod(face, 2)
        pts = np.zeros((s.size, 2))
        pts[:, a] = 1.0 if side else -1.0
        pts[:, 1 - a] = s
        tr = S.eval_basis("V", 0, pts, "normal_trace")[target]
        if face == 1:
            assert np.ptp(tr) <= 1e-14 and tr[0] > 0
            # unit flux moment against the normalised facet constant
            assert np.isclose(tr[0] * np.sqrt(2.0), 1.0, atol=1e-14)
        else:
            assert np.max(np.abs(tr)) <= 1e-14


def test_dof_map_sharing_and_dirichlet():
    tags = {"x-": M.INLET, "x+": M.OUTLET, "y-": M.WALL, "y+": M.WALL}
    m = M.build_box_mesh(2, (2, 1), boundary_tags=tags)
    S = SpaceSet(m, 2)
    dm, nf = S.dofs, S.ref.nf
    mid = m.facets_with_tag(M.INTERIOR)[0]
    # the shared facet dofs coincide in both elements
    left = dm.l2g["V"][0, 1 * nf : 2 * nf]
    right = dm.l2g["V"][1, 0:nf]
    np.testing.assert_array_equal(left, right)
    np.testing.assert_array_equal(left, mid * nf + np.arange(nf))
    for name in ("Sigma", "W", "Q", "Vdisc"):
        assert np.unique(dm.l2g[name]).size == dm.l2g[name].size
    out = m.facets_with_tag(M.OUTLET)
    np.testing.assert_array_equal(dm.dirichlet["Qhat"], np.sort((out[:, None] * nf + np.arange(nf)).ravel()))
    dirichlet_facets = np.sort(np.r_[m.facets_with_tag(M.INLET), m.facets_with_tag(M.WALL)])
    np.testing.assert_array_equal(np.unique(dm.dirichlet["V"] // nf), dirichlet_facets)
    np.testing.assert_array_equal(np.unique(dm.dirichlet["Vhat"] // nf), dirichlet_facets)


def test_l2_project_examples():
    m = M.build_box_mesh(2, (2, 2), boundary_tags=M.WALL)
    S = SpaceSet(m, 2)
    u = l2_project(S, "V", lambda x, t: np.broadcast_to([0.3, -1.2], x.shape))
    vals = S.quadrature_values("V", u)
    np.testing.assert_allclose(vals, np.broadcast_to([0.3, -1.2], vals.shape), atol=1e-13)
    assert S.max_divergence(u) <= 1e-13
    q = l2_project(S, "Q", lambda x, t: 1 + x[..., 0] - 2 * x[..., 0] * x[..., 1] + x[..., 1] ** 2)
    xq = S.quadrature_points()
    np.testing.assert_allclose(S.quadrature_values("Q", q), 1 + xq[..., 0] - 2 * xq[..., 0] * xq[..., 1] + xq[..., 1] ** 2, atol=1e-13)


@pytest.mark.parametrize("k", [2, 3])
def test_taylor_green_projection_is_divergence_free(k):
    m = M.build_box_mesh(2, (8, 8), [(0, 2 * np.pi)] * 2, periodic_axes=(0, 1))
    S = SpaceSet(m, k)
    tg = lambda x, t: np.stack([np.sin(x[..., 0]) * np.cos(x[..., 1]), -np.cos(x[..., 0]) * np.sin(x[..., 1])], -1)
    u = l2_project(S, "V", tg)
    assert S.max_divergence(u) <= 1e-11


def as_field(S, space, c):
    def field(x, t):
        v = S.evaluate(space, c, x.reshape(-1, x.shape[-1]))
        return v.reshape(x.shape[:-1] + v.shape[1:])

    return field


@given(seed=st.integers(0, 2**31 - 1), k=st.sampled_from(K_VALUES))
def test_projection_reproduces_space_members(seed, k):
    rng = np.random.default_rng(seed)
    m = M.build_box_mesh(2, (2, 2), boundary_tags=M.WALL)
    S = SpaceSet(m, k)
    for space in ("V", "Q", "Sigma", "W"):
        c = rng.normal(size=S.dofs.ndofs[space])
        back = l2_project(S, space, as_field(S, space, c))
        np.testing.assert_allclose(back, c, atol=1e-11 * max(1.0, np.abs(c).max()))


def test_projection_residual_orthogonal(rng):
    S = SpaceSet(unit_square(2), 2)
    f = lambda x, t: np.exp(x[..., 0]) * np.sin(3 * x[..., 1])
    q = l2_project(S, "Q", f)
    rule = gauss_box(2, 2 * 2 + 6)
    res = f(S.quadrature_points(rule), 0) - S.quadrature_values("Q", q, rule)
    B = S.ref.values("Q", rule.points)
    inner = np.einsum("eq,bq,q->eb", res, B, S.ref.vol_weights(rule))
    assert np.max(np.abs(inner)) <= 1e-13
