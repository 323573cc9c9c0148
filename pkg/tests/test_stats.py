import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad, solve_ivp

from hopuflow import mesh as M
from hopuflow import stats
from hopuflow.fespace import SpaceSet, l2_project


def test_linear_shear_is_viscous_sublayer():
    nu, slope = 1e-3, 4.0
    n = np.linspace(0.0, 0.01, 21)
    wp = stats.wall_profile(n, slope * n, nu)
    assert wp.defined
    assert wp.u_tau == pytest.approx(np.sqrt(nu * slope), rel=1e-13)
    np.testing.assert_allclose(wp.ut_plus, wp.n_plus, rtol=1e-12, atol=1e-14)


def test_zero_flow_flagged_undefined():
    n = np.linspace(0, 1, 5)
    wp = stats.wall_profile(n, np.zeros(5), 0.01)
    assert not wp.defined and wp.u_tau == 0.0
    assert np.all(np.isnan(wp.n_plus)) and np.all(np.isnan(wp.ut_plus))


def test_wall_shear_fit_needs_points():
    with pytest.raises(stats.StatsError):
        stats.wall_shear_from_profile(np.array([0.0]), np.array([0.0]))
    n = np.linspace(0, 0.1, 6)
    assert stats.wall_shear_from_profile(n, 3 * n - 2 * n**2) == pytest.approx(3.0, rel=1e-12)


def test_log_law_constants():
    wp = stats.wall_profile(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 1.0)
    assert (wp.kappa, wp.c_plus) == (0.41, 5.2)
    assert wp.log_law(np.array([np.e]))[0] == pytest.approx(1 / 0.41 + 5.2)


def test_channel_friction_velocity_from_stress():
    """Laminar Poiseuille flow driven by g: u_tau = sqrt(g H) on a wall of half-height H."""
    g, nu, H = 0.1, 0.05, 1.0
    mesh = M.build_box_mesh(2, (2, 4), [(0, 1), (-H, H)], boundary_tags={"y-": "wall", "y+": "wall"}, periodic_axes=(0,))
    S = SpaceSet(mesh, 2)
    sigma = l2_project(S, "Sigma", lambda x, t: _poiseuille_stress(x, g))
    walls = mesh.facets_with_tag(M.WALL)
    for side in (walls[mesh.facet_owner_face[walls] == 2], walls[mesh.facet_owner_face[walls] == 3]):
        shear = stats.wall_shear_from_stress(S, sigma, side, nu)
        assert np.sqrt(nu * abs(shear)) == pytest.approx(np.sqrt(g * H), rel=1e-12)


def _poiseuille_stress(x, g):
    # u = g/(2 nu) (H^2 - y^2): nu grad u has the single entry d u_x / d y * nu = -g y
    out = np.zeros(x.shape[:-1] + (2, 2))
    out[..., 0, 1] = -g * x[..., 1]
    return out


def test_linear_profile_thicknesses():
    delta = 0.37
    n = np.linspace(0, 2 * delta, 201)
    u = np.minimum(n / delta, 1.0)
    dstar, theta, H = stats.boundary_layer_thicknesses(n, u)
    assert abs(dstar - delta / 2) <= 1e-12
    assert abs(theta - delta / 6) <= 1e-12
    assert abs(H - 3.0) <= 1e-12


def test_uniform_profile_and_errors():
    n = np.linspace(0, 1, 5)
    dstar, theta, H = stats.boundary_layer_thicknesses(n, np.ones(5))
    assert dstar == 0 and theta == 0 and np.isnan(H)
    with pytest.raises(stats.StatsError, match="non-monotone"):
        stats.boundary_layer_thicknesses(n, np.array([0, 1.0, 0.5, 1.0, 1.0]))
    with pytest.raises(stats.StatsError):
        stats.boundary_layer_thicknesses(n[::-1], np.ones(5))


def blasius():
    """Blasius profile f' on eta in [0, 10] and its exact thicknesses."""
    fpp0 = 0.332057336215
    sol = solve_ivp(lambda x, y: [y[1], y[2], -0.5 * y[0] * y[2]], (0, 10), [0, 0, fpp0], rtol=1e-12, atol=1e-14, dense_output=True)
    eta = 10.0
    dstar = eta - sol.sol(eta)[0]
    theta = quad(lambda x: sol.sol(x)[1] * (1 - sol.sol(x)[1]), 0, eta, limit=200)[0]
    return sol, dstar, theta


def test_blasius_thicknesses_within_two_percent():
    sol, dstar, theta = blasius()
    n = np.linspace(0, 10, 81)
    u = sol.sol(n)[1]
    d, t, H = stats.boundary_layer_thicknesses(n, u)
    assert d == pytest.approx(dstar, rel=0.02)
    assert t == pytest.approx(theta, rel=0.02)
    assert H == pytest.approx(dstar / theta, rel=0.02)


def test_accumulator_constant_signal():
    acc = stats.StatAccumulator(window=(1.0, 2.0))
    u = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert not acc.add(0.5, 10 * u)
    for t in np.linspace(1, 2, 11):
        assert acc.add(t, u, np.array([0.5, 0.5]))
    assert not acc.add(2.5, u)
    acc.close()
    np.testing.assert_array_equal(acc.mean_u, u)
    np.testing.assert_allclose(acc.reynolds_stress, 0, atol=1e-15)
    np.testing.assert_array_equal(acc.mean_p, [0.5, 0.5])
    with pytest.raises(stats.StatsError):
        acc.add(1.5, u)
    with pytest.raises(stats.StatsError):
        stats.StatAccumulator().mean_u


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_accumulator_linearity_and_reynolds_consistency(seed, a, b):
    rng = np.random.default_rng(seed)
    samples = rng.normal(size=(30, 4, 2))
    p1, p2, p3 = stats.StatAccumulator(), stats.StatAccumulator(), stats.StatAccumulator()
    for s in samples:
        p1.add(0, s)
        p2.add(0, 2 * s)
        p3.add(0, a * s + b)
    np.testing.assert_allclose(p3.mean_u, a * p1.mean_u + b, atol=1e-12)
    np.testing.assert_allclose(p2.reynolds_stress, 4 * p1.reynolds_stress, atol=1e-12)
    fluct = samples - samples.mean(axis=0)
    direct = np.einsum("sni,snj->nij", fluct, fluct) / len(samples)
    np.testing.assert_allclose(p1.reynolds_stress, direct, atol=1e-12)
    assert np.all(p1.tke >= 0)


def test_accumulator_homogeneous_average():
    acc = stats.StatAccumulator(homogeneous_shape=(2, 3))
    u = np.arange(12.0).reshape(6, 2)
    acc.add(0.0, u)
    np.testing.assert_allclose(acc.mean_u, u.reshape(2, 3, 2).mean(axis=1))


def test_profile_from_accumulator(tmp_path):
    acc = stats.StatAccumulator()
    n = np.linspace(0, 0.1, 6)
    acc.add(0.0, np.stack([2 * n, 0 * n], -1))
    with pytest.raises(stats.StatsError, match="closed"):
        stats.profile_from_accumulator(acc, n, 0.01)
    wp = stats.profile_from_accumulator(acc.close(), n, 0.01)
    np.testing.assert_allclose(wp.ut_plus, wp.n_plus, rtol=1e-12)
    path = tmp_path / "profile.csv"
    stats.write_profile_csv(wp, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert open(path).readline().strip() == "n,n_plus,ut_plus,K_plus,uv_plus"
    np.testing.assert_array_equal(data[:, 2], wp.ut_plus)


def test_kinetic_energy():
    S = SpaceSet(M.build_box_mesh(2, (2, 2), [(0, 2), (0, 1)], periodic_axes=(0, 1)), 2)
    u = l2_project(S, "V", lambda x, t: np.stack([3 + 0 * x[..., 0], 4 + 0 * x[..., 0]], -1))
    assert stats.kinetic_energy(S, u) == pytest.approx(0.5 * 25 * 2, rel=1e-13)
