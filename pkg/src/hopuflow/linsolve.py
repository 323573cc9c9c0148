"""Static condensation, BDDC and conjugate gradients for both splitting steps."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import SpaceSet
from .forms import _local_matrices, _scatter


class SolverError(RuntimeError):
    """Raised when an iterative or local solve fails; carries a report if available."""

    def __init__(self, message: str, report: "SolverReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class SolverReport:
    iterations: int
    residual: float
    seconds: float
    applies: int
    converged: bool = True
    history: list = field(default_factory=list)


# --------------------------------------------------------------------------
# preconditioned conjugate gradients


def _as_apply(op):
    if op is None:
        return lambda x: x.copy()
    if callable(op) and not hasattr(op, "shape"):
        return op
    return lambda x: op @ x


def pcg(operator, rhs, preconditioner=None, tol: float = 1e-10, max_iter: int = 1000, deflation=None, x0=None):
    """Preconditioned CG with optional nullspace deflation.

    Convergence is declared when sqrt(r.z) <= tol * sqrt(b.M^{-1}b).  With
    ``deflation`` (n x m, columns spanning the nullspace) the rhs must be
    consistent, residuals and search directions are kept orthogonal to the
    nullspace and the returned solution has no nullspace component.
    """
    t0 = time.perf_counter()
    A = _as_apply(operator)
    Minv = _as_apply(preconditioner)
    b = np.asarray(rhs, dtype=float)
    n = b.size
    Z = None
    if deflation is not None:
        Z, _ = np.linalg.qr(np.asarray(deflation, dtype=float).reshape(n, -1))
        bz = Z.T @ b
        if np.linalg.norm(bz) > 1e-8 * max(np.linalg.norm(b), 1e-300):
            raise SolverError("inconsistent right-hand side for a singular operator")
        b = b - Z @ bz

    def proj(v):
        return v if Z is None else v - Z @ (Z.T @ v)

    applies = 0
    x = np.zeros(n) if x0 is None else proj(np.array(x0, dtype=float))
    if x0 is not None:
        r = b - A(x)
        applies += 1
    else:
        r = b.copy()
    zb = proj(Minv(b))
    bnorm = np.sqrt(max(b @ zb, 0.0))
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, time.perf_counter() - t0, applies)
    z = proj(Minv(r))
    rz = r @ z
    history = [np.sqrt(max(rz, 0.0)) / bnorm]
    if history[-1] <= tol:
        return x, SolverReport(0, history[-1], time.perf_counter() - t0, applies, True, history)
    p = z.copy()
    for it in range(1, max_iter + 1):
        Ap = A(p)
        applies += 1
        pAp = p @ Ap
        if pAp <= 0.0:
            rep = SolverReport(it, history[-1], time.perf_counter() - t0, applies, False, history)
            raise SolverError(f"operator not positive definite (p.Ap = {pAp:.3e})", rep)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = proj(Minv(r))
        rz_new = r @ z
        history.append(np.sqrt(max(rz_new, 0.0)) / bnorm)
        if history[-1] <= tol:
            return proj(x), SolverReport(it, history[-1], time.perf_counter() - t0, applies, True, history)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rep = SolverReport(max_iter, history[-1], time.perf_counter() - t0, applies, False, history)
    raise SolverError(f"PCG did not converge in {max_iter} iterations (residual {history[-1]:.3e})", rep)


# --------------------------------------------------------------------------
# step 1: condensed momentum system

ELIMINATION_SETS = ("stress_and_gamma", "stress_gamma_and_bubbles")


def _invert_checked(M: np.ndarray, what: str) -> np.ndarray:
    """Inverse of a small dense block; rows and columns are equilibrated first."""
    scale = np.max(np.abs(M), axis=1)
    if np.any(scale == 0):
        raise SolverError(f"singular {what}: zero row")
    D = 1.0 / np.sqrt(scale)
    Ms = D[:, None] * M * D[None, :]
    try:
        lu = la.lu_factor(Ms, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular {what}: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-13 * np.max(np.abs(np.diag(lu[0]))):
        raise SolverError(f"singular {what}")
    return D[:, None] * la.lu_solve(lu, np.eye(M.shape[0])) * D[None, :]


class CondensedSystem:
    """Step-1 Schur complement S = A - B M^{-1} B^T on (V, Vhat) unknowns.

    With ``stress_gamma_and_bubbles`` the velocity bubbles are also eliminated
    and the global unknowns are the facet velocity dofs followed by Vhat.
    """

    def __init__(self, spaces: SpaceSet, nu: float, dt: float, elimination_set: str = "stress_gamma_and_bubbles"):
        if elimination_set not in ELIMINATION_SETS:
            raise ValueError(f"elimination_set must be one of {ELIMINATION_SETS}")
        if not (nu > 0 and dt > 0):
            raise ValueError("nu and dt must be positive")
        self.spaces, self.nu, self.dt = spaces, float(nu), float(dt)
        self.elimination_set = elimination_set
        L = _local_matrices(spaces)
        r = spaces.ref
        nS, nW, nV, nH = r.nSigma, r.nW, r.nV, r.nVhat
        self.nS, self.nW, self.nV, self.nH = nS, nW, nV, nH
        M = np.zeros((nS + nW, nS + nW))
        M[:nS, :nS] = -L.sigma_mass / (2 * nu)
        M[nS:, :nS] = L.Bgamsig
        M[:nS, nS:] = L.Bgamsig.T
        B = np.zeros((nV + nH, nS + nW))
        B[:nV, :nS] = L.Busig
        B[nV:, :nS] = L.Buhatsig
        A = np.zeros((nV + nH, nV + nH))
        A[:nV, :nV] = L.mass_u / dt
        self.M, self.B, self.A = M, B, A
        self.Minv = _invert_checked(M, "element stress block (every element shares the reference block)")
        self.MinvBt = self.Minv @ B.T
        S = A - B @ self.MinvBt
        self.S_local = 0.5 * (S + S.T)

        dm = spaces.dofs
        gV = dm.l2g["V"]
        gH = dm.l2g["Vhat"]
        nvf = r.n_vfacet
        self.n_vfacet = nvf
        if elimination_set == "stress_and_gamma":
            self.loc = np.arange(nV + nH)
            self.n_v_glob = dm.ndofs["V"]
            self.l2g = np.concatenate([gV, gH + self.n_v_glob], axis=1)
            self.S_elem = self.S_local
            dirV = dm.dirichlet["V"]
        else:
            f = np.r_[np.arange(nvf), np.arange(nV, nV + nH)]
            b = np.arange(nvf, nV)
            self.f_idx, self.b_idx = f, b
            Sbb = self.S_local[np.ix_(b, b)]
            self.Sbb_inv = _invert_checked(Sbb, "velocity bubble block") if b.size else np.zeros((0, 0))
            self.Sbf = self.S_local[np.ix_(b, f)]
            self.Sfb = self.S_local[np.ix_(f, b)]
            Sp = self.S_local[np.ix_(f, f)] - self.Sfb @ self.Sbb_inv @ self.Sbf
            self.S_elem = 0.5 * (Sp + Sp.T)
            self.n_v_glob = dm.n_vfacet_global
            self.l2g = np.concatenate([gV[:, :nvf], gH + self.n_v_glob], axis=1)
            dirV = dm.dirichlet["V"]
            dirV = dirV[dirV < self.n_v_glob]
        self.n = self.n_v_glob + dm.ndofs["Vhat"]
        self.dirichlet = np.unique(np.r_[dirV, dm.dirichlet["Vhat"] + self.n_v_glob]).astype(int)
        mask = np.ones(self.n, dtype=bool)
        mask[self.dirichlet] = False
        self.free = np.flatnonzero(mask)
        self.S = _scatter(self.S_elem, self.l2g, self.l2g, (self.n, self.n))
        self.S_free = self.S[self.free][:, self.free].tocsr()

    @property
    def signature(self):
        return (self.nu, self.dt, self.elimination_set)

    # rhs handling -------------------------------------------------------

    def condense_rhs(self, rV: np.ndarray) -> np.ndarray:
        """Map a V load vector (u-row rhs) to the condensed unknowns."""
        dm = self.spaces.dofs
        out = np.zeros(self.n)
        if self.elimination_set == "stress_and_gamma":
            out[: self.n_v_glob] = rV
            return out
        out[: self.n_v_glob] = rV[: self.n_v_glob]
        rb = rV[dm.l2g["V"][:, self.n_vfacet :]]  # (ne, nb)
        corr = rb @ (self.Sfb @ self.Sbb_inv).T  # (ne, nf_loc)
        np.add.at(out, self.l2g, -corr)
        return out

    def solve(self, rV, x_dirichlet=None, tol=1e-12, max_iter=500, preconditioner=None, x0=None):
        """Solve the condensed system; returns (u on V, uhat, SolverReport)."""
        rc = self.condense_rhs(rV)
        x = np.zeros(self.n) if x_dirichlet is None else np.array(x_dirichlet, dtype=float)
        x[self.free] = 0.0
        rhs = rc[self.free] - self.S[self.free] @ x
        pre = preconditioner if preconditioner is not None else BddcPreconditioner(self)
        if isinstance(pre, BddcPreconditioner):
            pre.check(self)
        guess = None if x0 is None else x0[self.free]
        xf, rep = pcg(self.S_free, rhs, pre, tol=tol, max_iter=max_iter, x0=guess)
        x[self.free] = xf
        u, uhat = self.expand(x, rV)
        return u, uhat, rep, x

    def expand(self, x: np.ndarray, rV: np.ndarray):
        """Recover full V coefficients (bubbles included) and Vhat from condensed x."""
        dm = self.spaces.dofs
        uhat = x[self.n_v_glob :].copy()
        if self.elimination_set == "stress_and_gamma":
            return x[: self.n_v_glob].copy(), uhat
        u = np.zeros(dm.ndofs["V"])
        u[: self.n_v_glob] = x[: self.n_v_glob]
        xf = x[self.l2g]
        gb = dm.l2g["V"][:, self.n_vfacet :]
        rb = rV[gb]
        ub = (rb - xf @ self.Sbf.T) @ self.Sbb_inv.T
        u[gb] = ub
        return u, uhat

    def recover_stress(self, u: np.ndarray, uhat: np.ndarray):
        """(sigma, gamma) = -M^{-1} B^T (u, uhat) element by element."""
        dm = self.spaces.dofs
        X = np.concatenate([u[dm.l2g["V"]], uhat[dm.l2g["Vhat"]]], axis=1)
        Y = -X @ self.MinvBt.T
        sigma = np.zeros(dm.ndofs["Sigma"])
        gamma = np.zeros(dm.ndofs["W"])
        sigma[dm.l2g["Sigma"]] = Y[:, : self.nS]
        gamma[dm.l2g["W"]] = Y[:, self.nS :]
        return sigma, gamma


def condense(spaces: SpaceSet, nu: float, dt: float, elimination_set: str = "stress_gamma_and_bubbles") -> CondensedSystem:
    return CondensedSystem(spaces, nu, dt, elimination_set)


class BddcPreconditioner:
    """Element-wise BDDC without coarse space: C^{-1} = R S_BDDC^{-1} R^T."""

    def __init__(self, cs: CondensedSystem):
        self.signature = cs.signature
        self.l2g = cs.l2g
        self.n = cs.n
        self.free = cs.free
        if cs.nu * cs.dt > 0.1:
            warnings.warn(
                f"nu*dt = {cs.nu * cs.dt:.3g} > 0.1: element-wise BDDC without coarse space may converge slowly",
                RuntimeWarning,
                stacklevel=2,
            )
        mult = np.bincount(self.l2g.ravel(), minlength=self.n).astype(float)
        self.weight = np.zeros(self.n)
        self.weight[mult > 0] = 1.0 / mult[mult > 0]
        isdir = np.zeros(self.n, dtype=bool)
        isdir[cs.dirichlet] = True
        # elements grouped by their local Dirichlet pattern; one inverse per pattern
        masks = isdir[self.l2g]
        patterns, self.pattern_of = np.unique(masks, axis=0, return_inverse=True)
        self.pattern_of = self.pattern_of.ravel()
        self.inverses = []
        for pat in patterns:
            keep = np.flatnonzero(~pat)
            inv = np.zeros_like(cs.S_elem)
            if keep.size:
                inv[np.ix_(keep, keep)] = la.inv(cs.S_elem[np.ix_(keep, keep)])
            self.inverses.append(inv)
        self.groups = [np.flatnonzero(self.pattern_of == i) for i in range(len(patterns))]

    def check(self, cs: CondensedSystem):
        if cs.signature != self.signature:
            raise SolverError("BDDC preconditioner was built for different (nu, dt); rebuild it")

    def apply_full(self, r: np.ndarray) -> np.ndarray:
        wl = self.weight[self.l2g]
        R = r[self.l2g] * wl
        Z = np.empty_like(R)
        for inv, els in zip(self.inverses, self.groups):
            Z[els] = R[els] @ inv.T
        out = np.zeros(self.n)
        np.add.at(out, self.l2g, Z * wl)
        return out

    def __call__(self, r_free: np.ndarray) -> np.ndarray:
        r = np.zeros(self.n)
        r[self.free] = r_free
        return self.apply_full(r)[self.free]

    def restrict(self, x: np.ndarray) -> np.ndarray:
        """R: average broken (element-local) coefficients to conforming ones."""
        out = np.zeros(self.n)
        np.add.at(out, self.l2g, np.asarray(x) * self.weight[self.l2g])
        return out

    def duplicate(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.l2g]


def bddc_apply(pre: BddcPreconditioner, residual: np.ndarray) -> np.ndarray:
    return pre(residual)


# --------------------------------------------------------------------------
# step 2: hybrid mixed pressure system

PRESSURE_PRECONDITIONERS = ("jacobi", "two_level", "direct")


class PressureSchur:
    """S_p = -sum B_p M_p^{-1} B_p^T on the free facet pressure unknowns."""

    def __init__(self, spaces: SpaceSet, preconditioner: str = "jacobi"):
        if preconditioner not in PRESSURE_PRECONDITIONERS:
            raise ValueError(f"pressure preconditioner must be one of {PRESSURE_PRECONDITIONERS}")
        self.spaces = spaces
        L = _local_matrices(spaces)
        r = spaces.ref
        nV, nQ, nP = r.nV, r.nQ, r.nQhat
        self.nV, self.nQ = nV, nQ
        Mp = np.zeros((nV + nQ, nV + nQ))
        Mp[:nV, :nV] = -L.mass_u
        Mp[:nV, nV:] = L.Bpu.T
        Mp[nV:, :nV] = L.Bpu
        Minv = _invert_checked(Mp, "element pressure block")
        Bp = np.zeros((nP, nV + nQ))
        Bp[:, :nV] = L.Bphatu
        Sloc = -Bp @ Minv @ Bp.T
        self.S_local = 0.5 * (Sloc + Sloc.T)
        # rhs: -B_p M^{-1} [0; B1 u*]; recovery of (utilde, p)
        self.rhs_op = -(Bp @ Minv[:, nV:]) @ L.Bpu  # (nP, nV)
        self.rec_u = Minv[:nV, nV:] @ L.Bpu  # utilde from u*
        self.rec_up = -(Minv @ Bp.T)  # (nV+nQ, nP) from phat
        self.rec_p = Minv[nV:, nV:] @ L.Bpu
        dm = spaces.dofs
        self.l2g = dm.l2g["Qhat"]
        self.n = dm.ndofs["Qhat"]
        self.S = _scatter(self.S_local, self.l2g, self.l2g, (self.n, self.n))
        self.free = dm.free("Qhat")
        self.S_free = self.S[self.free][:, self.free].tocsr()
        nf = r.nf
        self.singular = self.free.size == self.n
        if self.singular:
            z = np.zeros(self.n)
            z[::nf] = 1.0  # constant facet pressure lives in the first Legendre mode
            self.nullspace = (z / np.linalg.norm(z))[self.free][:, None]
        else:
            self.nullspace = None
        self.kind = preconditioner
        self._build_preconditioner(nf)

    def _build_preconditioner(self, nf):
        d = self.S_free.diagonal()
        if np.any(d <= 0):
            raise SolverError("pressure Schur complement has a non-positive diagonal")
        dinv = 1.0 / d
        if self.kind == "jacobi":
            self.precond = lambda r: dinv * r
        elif self.kind == "two_level":
            coarse = np.flatnonzero(self.free % nf == 0)
            A0 = self.S_free[coarse][:, coarse].tocsc()
            keep = coarse if not self.singular else coarse[:-1]
            A0 = self.S_free[keep][:, keep].tocsc()
            lu0 = spla.splu(A0)

            def apply(r):
                z = dinv * r
                z[keep] += lu0.solve(r[keep])
                return z

            self.precond = apply
        else:
            keep = np.arange(self.free.size)
            if self.singular:
                keep = keep[:-1]
            lu = spla.splu(self.S_free[keep][:, keep].tocsc())

            def apply(r):
                z = np.zeros_like(r)
                z[keep] = lu.solve(r[keep])
                return z

            self.precond = apply

    def rhs(self, ustar: np.ndarray) -> np.ndarray:
        U = ustar[self.spaces.dofs.l2g["V"]]
        out = np.zeros(self.n)
        np.add.at(out, self.l2g, U @ self.rhs_op.T)
        return out

    def solve(self, ustar: np.ndarray, tol: float = 1e-12, max_iter: int = 5000):
        """Return (utilde on Vdisc, p on Q, phat on Qhat, SolverReport)."""
        b = self.rhs(ustar)[self.free]
        if self.singular:
            # the assembled rhs is consistent up to round-off; drop that part
            Z = self.nullspace
            scale = np.abs(self.rhs_op).max() * np.abs(ustar).max() * np.sqrt(b.size)
            bz = Z.T @ b
            if np.linalg.norm(bz) <= 1e-12 * scale:
                b = b - Z @ bz
        x, rep = pcg(self.S_free, b, self.precond, tol=tol, max_iter=max_iter, deflation=self.nullspace)
        phat = np.zeros(self.n)
        phat[self.free] = x
        return (*self.recover(ustar, phat), phat, rep)

    def recover(self, ustar: np.ndarray, phat: np.ndarray):
        dm = self.spaces.dofs
        U = ustar[dm.l2g["V"]]
        P = phat[self.l2g]
        Y = P @ self.rec_up.T
        ut = U @ self.rec_u.T + Y[:, : self.nV]
        pl = U @ self.rec_p.T + Y[:, self.nV :]
        utilde = np.zeros(dm.ndofs["Vdisc"])
        p = np.zeros(dm.ndofs["Q"])
        utilde[dm.l2g["Vdisc"]] = ut
        p[dm.l2g["Q"]] = pl
        return utilde, p


def solve_pressure_schur(ps: PressureSchur, rhs: np.ndarray, tol: float = 1e-12, max_iter: int = 5000):
    """Solve S_p phat = rhs on the free facet pressure dofs (rhs given on all Qhat dofs)."""
    b = np.asarray(rhs)[ps.free]
    x, rep = pcg(ps.S_free, b, ps.precond, tol=tol, max_iter=max_iter, deflation=ps.nullspace)
    phat = np.zeros(ps.n)
    phat[ps.free] = x
    return phat, rep


def broken_to_conforming(spaces: SpaceSet, v_disc: np.ndarray) -> np.ndarray:
    """Average element-wise V coefficients onto the normal-continuous V numbering."""
    dm = spaces.dofs
    loc = np.asarray(v_disc)[dm.l2g["Vdisc"]]
    gV = dm.l2g["V"]
    out = np.zeros(dm.ndofs["V"])
    cnt = np.zeros(dm.ndofs["V"])
    np.add.at(out, gV, loc)
    np.add.at(cnt, gV, 1.0)
    return out / cnt
