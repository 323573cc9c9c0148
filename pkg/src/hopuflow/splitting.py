"""Fractional-step time integration: viscous prediction, then hybrid projection.

One step of size dt maps u^n to u^{n+1}:

1. ``predict_velocity``: implicit Stokes-type solve for (sigma, gamma, u*, uhat)
   with explicit convection c_h(u^n, u^n, .), statically condensed and solved
   by BDDC-preconditioned CG.
2. ``pressure_projection``: hybrid mixed projection of u* returning
   (utilde, p, phat); ``u^{n+1} = u* - utilde`` is pointwise divergence-free.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms
from . import hopu
from . import linsolve as ls
from . import mesh as meshmod
from .fespace import SpaceSet, boundary_data
from .forms import FluxMode


class SplittingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeParams:
    dt: float
    nu: float
    T_end: float = 1.0
    cfl_guard: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise SplittingError(f"dt must be positive, got {self.dt}")
        if not self.nu > 0:
            raise SplittingError(f"nu must be positive, got {self.nu}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))


@dataclass(frozen=True)
class State:
    """Velocity coefficients on V at t = step * dt (u_prev only for 2nd order)."""

    u: np.ndarray
    t: float = 0.0
    step: int = 0
    u_prev: np.ndarray | None = None


@dataclass
class StepWorkspace:
    sigma: np.ndarray | None = None
    gamma: np.ndarray | None = None
    uhat: np.ndarray | None = None
    ustar: np.ndarray | None = None
    utilde: np.ndarray | None = None
    p: np.ndarray | None = None
    phat: np.ndarray | None = None
    reports: dict = field(default_factory=dict)


class Splitting:
    """Time stepper holding the condensed operators for fixed (dt, nu).

    ``inflow(x, t)`` gives Dirichlet data on inlet facets (walls are no-slip),
    ``force(x, t)`` a body force.  ``order_field`` is required for adaptive
    HOPU and refreshed every ``order_field.update_cadence`` steps.
    """

    def __init__(
        self,
        spaces: SpaceSet,
        params: TimeParams,
        flux_mode: FluxMode = FluxMode.Upwind(),
        inflow: Callable | None = None,
        force: Callable | None = None,
        pressure_preconditioner: str = "jacobi",
        momentum_tol: float = 1e-12,
        pressure_tol: float = 1e-12,
        literal_update: bool = False,
        second_order: bool = False,
        convection: bool = True,
    ):
        flux_mode.check(spaces.k)
        self.spaces = spaces
        self.params = params
        self.flux_mode = flux_mode
        self.inflow = inflow
        self.force = force
        self.momentum_tol = momentum_tol
        self.pressure_tol = pressure_tol
        self.literal_update = literal_update
        self.second_order = second_order
        self.convection_on = convection
        self.conv = forms._convection(spaces)
        self.pressure_preconditioner = pressure_preconditioner
        self.pressure = ls.PressureSchur(spaces, pressure_preconditioner)
        self.thresholds = (
            hopu.EtaThresholds(flux_mode.thresholds) if flux_mode.kind == "adaptive" else None
        )
        self._cfl_warned = False
        self._build(params)

    def _build(self, params: TimeParams):
        self.cs = ls.condense(self.spaces, params.nu, params.dt, "stress_gamma_and_bubbles")
        self.bddc = ls.BddcPreconditioner(self.cs)
        self.Muu = forms.assemble_mass(self.spaces, "V", 1.0 / params.dt)

    def set_params(self, params: TimeParams):
        """Change (dt, nu); triggers recondensation when either differs."""
        if (params.dt, params.nu) != (self.params.dt, self.params.nu):
            self._build(params)
        self.params = params

    # pieces ---------------------------------------------------------------

    def dirichlet(self, t: float):
        uV, uH = boundary_data(self.spaces, self.inflow, t)
        return uV, uH

    def _cfl_check(self, u):
        if self._cfl_warned:
            return
        umax = np.max(np.abs(self.spaces.quadrature_values("V", u)))
        cfl = umax * self.params.dt / float(np.min(self.spaces.mesh.h))
        if cfl > self.params.cfl_guard:
            warnings.warn(f"CFL estimate {cfl:.3g} exceeds guard {self.params.cfl_guard}", RuntimeWarning, stacklevel=3)
            self._cfl_warned = True

    def predict_velocity(self, state: State, order_field=None, ws: StepWorkspace | None = None) -> StepWorkspace:
        ws = ws or StepWorkspace()
        p = self.params
        t_new = state.t + p.dt
        self._cfl_check(state.u)
        rhs = self.Muu @ state.u
        if self.convection_on:
            w = state.u
            if self.second_order and state.u_prev is not None:
                w = 1.5 * state.u - 0.5 * state.u_prev
            rhs -= self.conv.apply(w, self.flux_mode, order_field, self.inflow, state.t)
        rhs += forms.load_vector(self.spaces, self.force, t_new)
        uV, uH = self.dirichlet(t_new)
        cs = self.cs
        xd = np.zeros(cs.n)
        xd[: cs.n_v_glob] = uV[: cs.n_v_glob]
        xd[cs.n_v_glob :] = uH
        try:
            ustar, uhat, rep, _ = cs.solve(rhs, xd, tol=self.momentum_tol, preconditioner=self.bddc)
        except ls.SolverError as exc:
            raise SplittingError(f"momentum solve failed at step {state.step + 1}: {exc}") from exc
        ws.sigma, ws.gamma = cs.recover_stress(ustar, uhat)
        ws.ustar, ws.uhat = ustar, uhat
        ws.reports["momentum"] = rep
        return ws

    def pressure_projection(self, ustar: np.ndarray, ws: StepWorkspace | None = None) -> StepWorkspace:
        ws = ws or StepWorkspace(ustar=ustar)
        try:
            utilde, p, phat, rep = self.pressure.solve(ustar, tol=self.pressure_tol)
        except ls.SolverError as exc:
            raise SplittingError(f"pressure solve failed: {exc}") from exc
        ws.utilde, ws.p, ws.phat = utilde, p, phat
        ws.reports["pressure"] = rep
        return ws

    def update(self, state: State, ws: StepWorkspace, t_new: float) -> np.ndarray:
        ut = ls.broken_to_conforming(self.spaces, ws.utilde)
        if self.literal_update:
            u_new = state.u + self.params.dt * (ws.ustar - ut)
        else:
            u_new = ws.ustar - ut
        dirV = self.spaces.dofs.dirichlet["V"]
        uV, _ = self.dirichlet(t_new)
        u_new[dirV] = uV[dirV]
        return u_new

    def advance(self, state: State, order_field=None, ws: StepWorkspace | None = None):
        """One full step; returns (new State, workspace, order field)."""
        if self.flux_mode.kind == "adaptive" and order_field is None:
            raise SplittingError("adaptive HOPU requires an order field")
        ws = self.predict_velocity(state, order_field, ws)
        self.pressure_projection(ws.ustar, ws)
        step = state.step + 1
        t_new = step * self.params.dt
        u_new = self.update(state, ws, t_new)
        new_state = State(u_new, t_new, step, state.u if self.second_order else None)
        if order_field is not None and self.thresholds is not None and order_field.due(step):
            order_field = hopu.update_order_field(self.spaces, u_new, self.thresholds, order_field, self.inflow, step)
        return new_state, ws, order_field

    def initial_order_field(self, u: np.ndarray, cadence: int = 10):
        if self.thresholds is None:
            return None
        seed = hopu.OrderField.uniform(self.spaces, forms.STANDARD_UPWIND, cadence)
        return hopu.update_order_field(self.spaces, u, self.thresholds, seed, self.inflow, 0)


def predict_velocity(stepper: Splitting, state: State, order_field=None) -> StepWorkspace:
    return stepper.predict_velocity(state, order_field)


def pressure_projection(stepper: Splitting, ustar: np.ndarray) -> StepWorkspace:
    return stepper.pressure_projection(ustar)


def advance(stepper: Splitting, state: State, order_field=None):
    return stepper.advance(state, order_field)


def physical_pressure(p: np.ndarray, dt: float) -> np.ndarray:
    """The projection multiplier p carries dt; physical pressure is p / dt."""
    return np.asarray(p) / dt


_HELMHOLTZ_CACHE: dict = {}


def helmholtz_projection(spaces: SpaceSet, u: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Discretely divergence-free part of ``u`` (step 2 without a time step)."""
    ps = getattr(spaces, "_pressure_schur", None)
    if ps is None:
        ps = ls.PressureSchur(spaces)
        spaces._pressure_schur = ps
    utilde, _, _, _ = ps.solve(u, tol=tol)
    out = u - ls.broken_to_conforming(spaces, utilde)
    dirV = spaces.dofs.dirichlet["V"]
    out[dirV] = u[dirV]
    return out


# --------------------------------------------------------------------------
# steady solver (Picard iteration on the coupled Oseen problem)


@dataclass
class SteadyResult:
    u: np.ndarray
    p: np.ndarray
    uhat: np.ndarray
    sigma: np.ndarray
    iterations: int
    converged: bool
    history: list


def solve_steady(
    spaces: SpaceSet,
    nu: float,
    inflow: Callable | None,
    flux_mode: FluxMode = FluxMode.Upwind(),
    force: Callable | None = None,
    tol: float = 1e-9,
    max_iter: int = 100,
    u0: np.ndarray | None = None,
) -> SteadyResult:
    """Steady Navier-Stokes by Picard iteration, each step a sparse direct solve.

    Unknowns after local elimination of (sigma, gamma): (u, uhat, p) and a
    mean-pressure multiplier when no outlet is present.  Converged when the
    largest coefficient change of u falls below ``tol``.
    """
    flux_mode.check(spaces.k)
    dm = spaces.dofs
    cs = ls.condense(spaces, nu, 1.0, "stress_and_gamma")
    nV, nH, nQ = dm.ndofs["V"], dm.ndofs["Vhat"], dm.ndofs["Q"]
    M1 = forms.assemble_mass(spaces, "V", 1.0)
    Sv = (cs.S - sp.block_diag([M1, sp.csr_matrix((nH, nH))])).tocsr()  # viscous part only
    B1 = forms.assemble_b1h(spaces, "V")
    has_outlet = spaces.mesh.facets_with_tag(meshmod.OUTLET).size > 0
    conv = forms._convection(spaces)
    uV, uH = boundary_data(spaces, inflow, 0.0)
    x_d = np.r_[uV, uH]
    dir_idx = np.r_[dm.dirichlet["V"], nV + dm.dirichlet["Vhat"]].astype(int)
    n_vel = nV + nH
    free = np.setdiff1d(np.arange(n_vel), dir_idx)
    F = forms.load_vector(spaces, force, 0.0)
    # mean-value functional on Q (constant function has coefficient on the first Q basis per element)
    from .quadrature import gauss_box

    rule = gauss_box(spaces.dim, 2 * spaces.k)
    qv = spaces.ref.values("Q", rule.points)
    qmean = np.zeros(nQ)
    qmean[dm.l2g["Q"]] = np.einsum("bq,q->b", qv, spaces.ref.vol_weights(rule))[None, :]

    def solve_linear(w):
        if w is None:
            C, b = sp.csr_matrix((nV, nV)), np.zeros(nV)
        else:
            C, b = conv.oseen_matrix(w, flux_mode, None, inflow)
        A = (Sv + sp.block_diag([C, sp.csr_matrix((nH, nH))])).tocsr()
        Bfull = sp.hstack([B1, sp.csr_matrix((nQ, nH))]).tocsr()
        rhs_v = np.r_[F - b, np.zeros(nH)] - A @ x_d
        rhs_q = -Bfull @ x_d
        Af = A[free][:, free]
        Bf = Bfull[:, free]
        blocks = [[Af, Bf.T], [Bf, None]]
        rhs = [rhs_v[free], rhs_q]
        if not has_outlet:
            blocks = [[Af, Bf.T, None], [Bf, None, sp.csr_matrix(qmean[:, None])], [None, sp.csr_matrix(qmean[None, :]), None]]
            rhs.append(np.zeros(1))
        K = sp.bmat(blocks, format="csc")
        sol = spla.spsolve(K, np.concatenate(rhs))
        x = x_d.copy()
        x[free] = sol[: free.size]
        p = sol[free.size : free.size + nQ]
        return x[:nV], x[nV:], p

    u, uhat, p = solve_linear(None if u0 is None else u0)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u_new, uhat, p = solve_linear(u)
        change = float(np.max(np.abs(u_new - u)))
        history.append(change)
        u = u_new
        if change < tol:
            converged = True
            break
    sigma, _ = cs.recover_stress(u, uhat)
    return SteadyResult(u, p, uhat, sigma, it, converged, history)
