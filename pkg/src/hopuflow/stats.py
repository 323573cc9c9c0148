"""Energies, time averages and wall-unit profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import forms
from .fespace import SpaceSet

KAPPA = 0.41
C_PLUS = 5.2


class StatsError(ValueError):
    pass


def kinetic_energy(spaces: SpaceSet, u: np.ndarray) -> float:
    """1/2 int |u|^2 dx."""
    M = getattr(spaces, "_mass_V", None)
    if M is None:
        M = forms.assemble_mass(spaces, "V")
        spaces._mass_V = M
    u = np.asarray(u)
    return 0.5 * float(u @ (M @ u))


# --------------------------------------------------------------------------
# time / homogeneous-direction averaging


@dataclass
class StatAccumulator:
    """Running sums of u, u (x) u and p sampled at fixed probe points.

    Samples are arrays of shape (npoints, d) (velocity) and (npoints,)
    (pressure).  With ``homogeneous_axis`` the probe points are arranged as
    ``(nlines, nhom)`` and each sample is first averaged along the second
    axis, so the statistics live on ``nlines`` points.
    """

    window: tuple = (0.0, np.inf)
    homogeneous_shape: tuple | None = None
    count: int = 0
    sum_u: np.ndarray | None = None
    sum_uu: np.ndarray | None = None
    sum_p: np.ndarray | None = None
    _closed: bool = field(default=False, repr=False)

    def _reduce(self, a: np.ndarray) -> np.ndarray:
        if self.homogeneous_shape is None:
            return a
        return a.reshape(tuple(self.homogeneous_shape) + a.shape[1:]).mean(axis=1)

    def add(self, t: float, u: np.ndarray, p: np.ndarray | None = None) -> bool:
        """Add one sample if t lies in the window; returns whether it was used."""
        if self._closed:
            raise StatsError("accumulator window already closed")
        if not (self.window[0] <= t <= self.window[1]):
            return False
        u = np.asarray(u, dtype=float)
        uu = u[..., :, None] * u[..., None, :]
        u_r, uu_r = self._reduce(u), self._reduce(uu)
        p_r = None if p is None else self._reduce(np.asarray(p, dtype=float))
        if self.count == 0:
            self.sum_u = np.zeros_like(u_r)
            self.sum_uu = np.zeros_like(uu_r)
            self.sum_p = None if p_r is None else np.zeros_like(p_r)
        self.sum_u += u_r
        self.sum_uu += uu_r
        if p_r is not None and self.sum_p is not None:
            self.sum_p += p_r
        self.count += 1
        return True

    def close(self):
        self._closed = True
        return self

    def _need(self):
        if self.count == 0:
            raise StatsError("no samples accumulated")

    @property
    def mean_u(self) -> np.ndarray:
        self._need()
        return self.sum_u / self.count

    @property
    def mean_p(self) -> np.ndarray | None:
        self._need()
        return None if self.sum_p is None else self.sum_p / self.count

    @property
    def reynolds_stress(self) -> np.ndarray:
        """<u_i' u_j'> = <u_i u_j> - <u_i><u_j>."""
        m = self.mean_u
        return self.sum_uu / self.count - m[..., :, None] * m[..., None, :]

    @property
    def tke(self) -> np.ndarray:
        """K = 1/2 trace <u'u'> (clipped at zero against round-off)."""
        return np.maximum(0.5 * np.trace(self.reynolds_stress, axis1=-2, axis2=-1), 0.0)


# --------------------------------------------------------------------------
# wall units


@dataclass
class WallProfile:
    n: np.ndarray
    u_tau: float
    n_plus: np.ndarray
    ut_plus: np.ndarray
    K_plus: np.ndarray
    uv_plus: np.ndarray
    defined: bool = True
    kappa: float = KAPPA
    c_plus: float = C_PLUS

    def log_law(self, n_plus=None) -> np.ndarray:
        n_plus = self.n_plus if n_plus is None else np.asarray(n_plus)
        with np.errstate(divide="ignore"):
            return np.log(n_plus) / self.kappa + self.c_plus


def wall_shear_from_profile(n: np.ndarray, ut: np.ndarray, degree: int = 2) -> float:
    """d<u_t>/dn at n = 0 by a one-sided polynomial fit through the wall points."""
    n = np.asarray(n, dtype=float)
    ut = np.asarray(ut, dtype=float)
    m = min(degree + 1, n.size)
    if m < 2:
        raise StatsError("need at least two wall-normal samples")
    c = np.polynomial.polynomial.polyfit(n[:m], ut[:m], m - 1)
    return float(c[1])


def wall_profile(
    n: np.ndarray,
    mean_ut: np.ndarray,
    nu: float,
    reynolds_stress: np.ndarray | None = None,
    tangent: int = 0,
    normal: int = 1,
    wall_shear: float | None = None,
) -> WallProfile:
    """Profiles in wall units.

    ``wall_shear`` (du_t/dn at the wall) is taken from the stress unknown
    when the caller has it (``sigma_nt / nu`` with sigma = nu grad u);
    otherwise it is obtained by one-sided differentiation of the profile.
    """
    n = np.asarray(n, dtype=float)
    ut = np.asarray(mean_ut, dtype=float)
    if wall_shear is None:
        wall_shear = wall_shear_from_profile(n, ut)
    u_tau = float(np.sqrt(nu * abs(wall_shear)))
    if reynolds_stress is None:
        R = np.zeros((n.size, 2, 2))
    else:
        R = np.asarray(reynolds_stress, dtype=float)
    K = np.maximum(0.5 * np.trace(R, axis1=-2, axis2=-1), 0.0)
    uv = R[:, tangent, normal]
    if u_tau == 0.0:
        nan = np.full(n.size, np.nan)
        return WallProfile(n, 0.0, nan, nan.copy(), nan.copy(), nan.copy(), defined=False)
    return WallProfile(n, u_tau, n * u_tau / nu, ut / u_tau, K / u_tau**2, uv / u_tau**2)


def wall_shear_from_stress(spaces: SpaceSet, sigma: np.ndarray, facets: np.ndarray, nu: float, tangent: int = 0) -> float:
    """Mean du_t/dn over wall facets from the stress variable (sigma = nu grad u scale).

    The stress unknown of the method approximates nu * grad(u) (trace-free),
    so du_t/dn = sigma_{t n} / nu averaged over the facets, taken with the
    wall-normal pointing into the fluid.
    """
    m, r = spaces.mesh, spaces.ref
    from .fespace import face_points

    fr = r.face_rule
    total, meas = 0.0, 0.0
    for f in np.atleast_1d(facets):
        face = int(m.facet_owner_face[f])
        a = face // 2
        pts = face_points(m.dim, face, fr.points)
        S = r.values("Sigma", pts)  # (nS, q, d, d)
        loc = sigma[spaces.dofs.l2g["Sigma"][m.facet_owner[f]]]
        s = np.tensordot(loc, S, axes=(0, 0))  # (q, d, d)
        inward = -1.0 if face % 2 else 1.0  # into the fluid
        val = s[:, tangent, a] * inward
        w = r.face_weights(face, fr)
        total += float(val @ w)
        meas += float(w.sum())
    return total / meas / nu


# --------------------------------------------------------------------------
# boundary-layer integrals


def _edge_index(u: np.ndarray, criterion: float) -> int:
    ue = np.max(u)
    idx = np.flatnonzero(u >= criterion * ue)
    if idx.size == 0:
        raise StatsError("no edge point found")
    first = idx[0]
    if np.any(u[first:] < criterion * ue - 1e-12):
        raise StatsError(
            "non-monotone profile beyond the detected edge: "
            + np.array2string(u, precision=6, separator=",")
        )
    return first


def _linear_product_integral(n, f, g):
    """Exact integral of the product of two piecewise-linear interpolants."""
    dn = np.diff(n)
    f0, f1, g0, g1 = f[:-1], f[1:], g[:-1], g[1:]
    return float(np.sum(dn * (2 * f0 * g0 + f0 * g1 + f1 * g0 + 2 * f1 * g1) / 6.0))


def boundary_layer_thicknesses(n: np.ndarray, u: np.ndarray, edge_criterion: float = 0.99):
    """Displacement and momentum thickness of a sampled profile and H = delta*/theta.

    The profile is treated as the piecewise-linear interpolant of the
    samples: delta* by the trapezoidal rule, theta integrated exactly for
    that interpolant.  The edge velocity is max(u); the profile must stay
    above ``edge_criterion * u_e`` beyond the first point reaching it.
    Returns (delta_star, theta, H); H is NaN when theta vanishes.
    """
    n = np.asarray(n, dtype=float)
    u = np.asarray(u, dtype=float)
    if n.shape != u.shape or n.size < 2:
        raise StatsError("profile needs matching arrays with at least two samples")
    if np.any(np.diff(n) <= 0):
        raise StatsError("wall-normal coordinates must increase")
    _edge_index(u, edge_criterion)
    ue = np.max(u)
    if ue <= 0:
        raise StatsError("edge velocity must be positive")
    r = u / ue
    defect = 1.0 - r
    dstar = float(np.sum(0.5 * np.diff(n) * (defect[:-1] + defect[1:])))
    theta = _linear_product_integral(n, r, defect)
    H = dstar / theta if theta > 0 else float("nan")
    return dstar, theta, H


def profile_from_accumulator(acc: StatAccumulator, n: np.ndarray, nu: float, tangent: int = 0, normal: int = 1, wall_shear: float | None = None) -> WallProfile:
    """Wall profile from a closed accumulator whose probe lines are ordered by ``n``."""
    if not acc._closed:
        raise StatsError("averaging window must be closed before computing wall profiles")
    return wall_profile(n, acc.mean_u[:, tangent], nu, acc.reynolds_stress, tangent, normal, wall_shear)


def write_profile_csv(wp: WallProfile, path) -> None:
    data = np.column_stack([wp.n, wp.n_plus, wp.ut_plus, wp.K_plus, wp.uv_plus])
    np.savetxt(path, data, delimiter=",", header="n,n_plus,ut_plus,K_plus,uv_plus", comments="", fmt="%.17g")
