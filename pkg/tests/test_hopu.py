import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hopuflow import hopu
from hopuflow import mesh as M
from hopuflow.fespace import SpaceSet, l2_project
from hopuflow.forms import STANDARD_UPWIND, FluxMode
from hopuflow.splitting import Splitting, State, TimeParams, helmholtz_projection

LADDER = (0.1, 0.2, 0.3, 0.4)


@pytest.fixture(scope="module")
def S3():
    return SpaceSet(M.build_box_mesh(2, (3, 3), periodic_axes=(0, 1)), 3)


def tangential_samples(S, facet, fn):
    pts, w = hopu.facet_quadrature(S, facet)
    a = int(S.mesh.facet_axis[facet])
    t = 1 - a
    s = pts[:, t]
    v = np.zeros_like(pts)
    v[:, t] = fn(s)
    return s, v, w


def test_top_order_is_identity(S3):
    f = int(S3.mesh.facets_with_tag(M.INTERIOR)[0])
    _, v, _ = tangential_samples(S3, f, lambda s: 1 + s - 2 * s**2 + 0.5 * s**3)
    np.testing.assert_allclose(hopu.facet_project(S3, 3, f, v), v, atol=1e-13)


def test_constant_unchanged_at_order_zero(S3):
    f = int(S3.mesh.facets_with_tag(M.INTERIOR)[3])
    _, v, _ = tangential_samples(S3, f, lambda s: np.full_like(s, -0.7))
    np.testing.assert_allclose(hopu.facet_project(S3, 0, f, v), v, atol=1e-13)


def test_sine_projects_to_facet_mean(S3):
    f = int(S3.mesh.facets_with_tag(M.INTERIOR)[5])
    s, v, w = tangential_samples(S3, f, lambda s: np.sin(np.pi * s))
    mean = np.sum(v * w[:, None], axis=0) / w.sum()
    out = hopu.facet_project(S3, 0, f, v)
    np.testing.assert_allclose(out, np.broadcast_to(mean, out.shape), atol=1e-13)


def test_facet_project_errors(S3):
    f = int(S3.mesh.facets_with_tag(M.INTERIOR)[0])
    pts, _ = hopu.facet_quadrature(S3, f)
    with pytest.raises(hopu.HopuError):
        hopu.facet_project(S3, 4, f, np.zeros_like(pts))
    bad = np.zeros_like(pts)
    bad[:, int(S3.mesh.facet_axis[f])] = 1.0
    with pytest.raises(hopu.HopuError):
        hopu.facet_project(S3, 0, f, bad)


@given(seed=st.integers(0, 2**32 - 1), l=st.integers(0, 3))
def test_projection_properties(seed, l, S3):
    rng = np.random.default_rng(seed)
    f = int(rng.choice(S3.mesh.interior_like))
    pts, w = hopu.facet_quadrature(S3, f)
    a = int(S3.mesh.facet_axis[f])
    v = rng.normal(size=pts.shape)
    v[:, a] = 0.0
    P = hopu.facet_project(S3, l, f, v)
    np.testing.assert_allclose(hopu.facet_project(S3, l, f, P), P, atol=1e-12)  # idempotent
    r = v - P
    # residual orthogonal to the projection space: test against P^l monomials
    s = (pts[:, 1 - a] - pts[:, 1 - a].min()) / np.ptp(pts[:, 1 - a])
    for deg in range(l + 1):
        assert abs(np.sum(r[:, 1 - a] * s**deg * w)) <= 1e-12
    # contraction, and nestedness: a lower order never keeps more
    norm = lambda x: np.sqrt(np.sum(np.sum(x * x, axis=1) * w))
    assert norm(r) <= norm(v) + 1e-12
    if l > 0:
        assert norm(v - hopu.facet_project(S3, l - 1, f, v)) >= norm(r) - 1e-12


def piecewise_shear_spaces():
    m = M.build_box_mesh(2, (1, 2), periodic_axes=(0,), boundary_tags={"y-": "wall", "y+": "wall"})
    S = SpaceSet(m, 2)
    u = l2_project(S, "V", lambda x, t: np.stack([(x[..., 1] < 0.5).astype(float), 0 * x[..., 0]], -1))
    f = int(m.facets_with_tag(M.INTERIOR)[0])
    return S, u, f


def test_eta_hand_example():
    S, u, f = piecewise_shear_spaces()
    assert S.mesh.facet_axis[f] == 1
    assert np.isclose(hopu.compute_eta(S, u, f, STANDARD_UPWIND), 2.0, rtol=1e-12)
    assert hopu.compute_eta(S, u, f, 2) <= 1e-13  # Pi = I
    assert hopu.compute_eta(S, u, f, 0) <= 1e-12  # constant jump removed by P^0


def test_eta_zero_for_continuous_and_stagnant_fields():
    m = M.build_box_mesh(2, (3, 3), periodic_axes=(0, 1))
    S = SpaceSet(m, 2)
    u = l2_project(S, "V", lambda x, t: np.stack([1 + 0 * x[..., 0], 0.3 + 0 * x[..., 0]], -1))
    eta = hopu.compute_eta_all(S, u)
    assert np.all(eta[m.interior_like] <= 1e-12)
    assert np.all(hopu.compute_eta_all(S, np.zeros_like(u))[m.interior_like] == 0.0)
    with pytest.raises(hopu.HopuError):
        wall = M.build_box_mesh(2, (2, 2), boundary_tags=M.WALL)
        Sw = SpaceSet(wall, 2)
        hopu.compute_eta(Sw, np.zeros(Sw.dofs.ndofs["V"]), int(wall.facets_with_tag(M.WALL)[0]))


@given(seed=st.integers(0, 2**32 - 1))
def test_eta_scale_invariant(seed, S3):
    u = np.random.default_rng(seed).normal(size=S3.dofs.ndofs["V"])
    e1 = hopu.compute_eta_all(S3, u)
    e2 = hopu.compute_eta_all(S3, 7.5 * u)
    np.testing.assert_allclose(e1, e2, rtol=1e-12)
    assert np.all(e1[S3.mesh.interior_like] >= 0)


def test_threshold_mapping():
    th = hopu.EtaThresholds(LADDER)
    assert th.k == 3
    assert list(th.classify([0.05, 0.15, 0.45])) == [STANDARD_UPWIND, 0, 3]
    assert list(th.classify([0.25, 0.35, 2.0])) == [1, 2, 3]
    for bad in [(0.2, 0.1), (0.1, 1.0), (), (-0.1, 0.5)]:
        with pytest.raises(hopu.HopuError):
            hopu.EtaThresholds(bad)


def test_update_order_field_uses_eta(S3, rng):
    u = rng.normal(size=S3.dofs.ndofs["V"])
    th = hopu.EtaThresholds(LADDER)
    of = hopu.update_order_field(S3, u, th, hopu.OrderField.uniform(S3), step=0)
    act = S3.mesh.interior_like
    eta = hopu.compute_eta_all(S3, u)
    np.testing.assert_array_equal(of.orders[act], th.classify(eta[act]))
    assert np.all(of.orders <= 3)
    with pytest.raises(hopu.HopuError):
        hopu.update_order_field(S3, u, hopu.EtaThresholds((0.1, 0.2)))


def test_order_field_invariants(S3):
    with pytest.raises(hopu.HopuError):
        hopu.OrderField(np.full(S3.mesh.n_facets, 4), 3)
    with pytest.raises(hopu.HopuError):
        hopu.OrderField(np.zeros(S3.mesh.n_facets, dtype=int), 3, update_cadence=0)
    wall = SpaceSet(M.build_box_mesh(2, (2, 2), boundary_tags=M.WALL), 1)
    of = hopu.OrderField.uniform(wall, 0)
    assert np.all(of.orders[wall.mesh.facets_with_tag(M.WALL)] == hopu.NOT_CONVECTIVE)
    assert of.update_cadence == 10


def test_refresh_every_tenth_step():
    m = M.build_box_mesh(2, (3, 3), periodic_axes=(0, 1))
    S = SpaceSet(m, 3)
    st_ = Splitting(S, TimeParams(1e-3, 0.01, 0.025), FluxMode.HopuAdaptive(LADDER))
    rng = np.random.default_rng(5)
    state = State(helmholtz_projection(S, rng.normal(size=S.dofs.ndofs["V"])))
    of = st_.initial_order_field(state.u)
    assert of.last_refresh == 0
    refreshed = []
    for _ in range(25):
        state, _, new = st_.advance(state, of)
        if new is not of:
            refreshed.append(state.step)
        of = new
    assert refreshed == [10, 20]
    assert of.last_refresh == 20


def test_order_field_csv(tmp_path, S3, rng):
    of = hopu.update_order_field(S3, rng.normal(size=S3.dofs.ndofs["V"]), hopu.EtaThresholds(LADDER))
    path = tmp_path / "orders.csv"
    of.to_csv(S3, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["facet_id", "center_x", "center_y", "mode", "l_loc"]
    assert len(rows) - 1 == S3.mesh.interior_like.size
    for r in rows[1:]:
        o = int(r[-1])
        assert r[3] == ("upwind" if o == STANDARD_UPWIND else "hopu")
        assert o == of.orders[int(r[0])]
