"""Bilinear forms and the convective term of the mixed stress discretization.

Element matrices are computed once on the reference element (all elements of
a uniform box mesh are congruent) and scattered with the DOF maps.  Global
blocks follow the row = test, column = trial convention::

    Msigsig[i, j]   = -1/(2 nu) (sigma_j, sigma_i)
    Bgamsig[i, j]   = -(sigma_j, eta_i)
    Busig[i, j]     = -(div sigma_j, v_i) + <sigma_j,nn, v_i.n>
    Buhatsig[i, j]  = <sigma_j,nt, vhat_i>
    Bpu[i, j]       = -(div u_j, q_i)                 (b_1h)
    Bphatu[i, j]    = <u_j.n, qhat_i>                 (b_3h on the broken space)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import mesh as meshmod
from .fespace import SpaceSet, face_points, tangent_axes
from .polynomials import dim_total_degree, legendre_facet_basis
from .quadrature import gauss_box


class FormError(ValueError):
    pass


# --------------------------------------------------------------------------
# flux modes


@dataclass(frozen=True)
class FluxMode:
    """Convective facet flux.

    ``kind`` is one of ``central``, ``upwind``, ``hopu`` (fixed projection
    order ``order``) or ``adaptive`` (per-facet orders from an order field,
    driven by ``thresholds``).
    """

    kind: str
    order: int | None = None
    thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("central", "upwind", "hopu", "adaptive"):
            raise FormError(f"unknown flux kind {self.kind!r}")
        if self.kind == "hopu" and (self.order is None or self.order < 0):
            raise FormError("HopuFixed requires an order l >= 0")
        if self.kind == "adaptive":
            if not self.thresholds:
                raise FormError("adaptive HOPU requires thresholds")
            t = np.asarray(self.thresholds, dtype=float)
            if np.any(np.diff(t) <= 0) or t[0] <= 0 or t[-1] >= 1:
                raise FormError("thresholds must be strictly increasing inside (0, 1)")

    @classmethod
    def Central(cls):
        return cls("central")

    @classmethod
    def Upwind(cls):
        return cls("upwind")

    @classmethod
    def HopuFixed(cls, l: int):
        return cls("hopu", order=int(l))

    @classmethod
    def HopuAdaptive(cls, thresholds):
        return cls("adaptive", thresholds=tuple(float(t) for t in thresholds))

    def check(self, k: int):
        if self.kind == "hopu" and self.order > k:
            raise FormError(f"HopuFixed(l) requires 0 <= l <= k={k}, got {self.order}")
        if self.kind == "adaptive" and len(self.thresholds) != k + 1:
            raise FormError(f"adaptive HOPU needs k+1={k + 1} thresholds, got {len(self.thresholds)}")


STANDARD_UPWIND = -1  # order-field marker for unprojected upwinding


# --------------------------------------------------------------------------
# element matrices


class LocalMatrices:
    """Element matrices that do not depend on nu or dt."""

    def __init__(self, spaces: SpaceSet):
        r = spaces.ref
        self.ref = r
        d = r.dim
        rule = r.vol_rule
        w = r.vol_weights(rule)
        S = r.values("Sigma", rule.points)  # (nS, q, d, d)
        divS = r.div_Sigma(rule.points)  # (nS, q, d)
        V = r.values("V", rule.points)  # (nV, q, d)
        divV = r.div_V(rule.points)  # (nV, q)
        Wv = r.values("W", rule.points)
        Q = r.values("Q", rule.points)

        self.sigma_mass = np.einsum("iqab,jqab,q->ij", S, S, w)
        self.Bgamsig = -np.einsum("jqab,iqab,q->ij", S, Wv, w)
        self.mass_u = np.einsum("iqa,jqa,q->ij", V, V, w)
        self.Bpu = -np.einsum("jq,iq,q->ij", divV, Q, w)
        Busig = -np.einsum("jqa,iqa,q->ij", divS, V, w)
        Buhatsig = np.zeros((r.nVhat, r.nSigma))
        Bphatu = np.zeros((r.nQhat, r.nV))
        fr = r.face_rule
        ntan = (d - 1) * r.nf
        for face in range(r.nfaces):
            pts = face_points(d, face, fr.points)
            fw = r.face_weights(face, fr)
            n = meshmod.outward_normal(d, face)
            Sf = r.values("Sigma", pts)
            Vf = r.values("V", pts)
            sn = Sf @ n  # (nS, q, d)
            snn = sn @ n
            snt = sn - snn[..., None] * n
            vn = Vf @ n
            Busig += np.einsum("jq,iq,q->ij", snn, vn, fw)
            vhat = r.vhat_face_values(face, np.delete(pts, face // 2, axis=1))
            Buhatsig[face * ntan : (face + 1) * ntan] = np.einsum("jqa,iqa,q->ij", snt, vhat, fw)
            psi = r.facet_basis_values(np.delete(pts, face // 2, axis=1))
            Bphatu[face * r.nf : (face + 1) * r.nf] = np.einsum("jq,iq,q->ij", vn, psi, fw)
        self.Busig = Busig
        self.Buhatsig = Buhatsig
        self.Bphatu = Bphatu


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    """Assemble identical (or per-element) local matrices into a sparse matrix."""
    ne = rows.shape[0]
    if local.ndim == 2:
        local = np.broadcast_to(local, (ne,) + local.shape)
    R = np.broadcast_to(rows[:, :, None], local.shape)
    C = np.broadcast_to(cols[:, None, :], local.shape)
    A = sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape)
    A.sum_duplicates()
    return A.tocsr()


def _local_matrices(spaces: SpaceSet) -> LocalMatrices:
    cached = getattr(spaces, "_local_matrices", None)
    if cached is None:
        cached = LocalMatrices(spaces)
        spaces._local_matrices = cached
    return cached


def assemble_ah(spaces: SpaceSet, nu: float) -> sp.csr_matrix:
    """Global a_h block on Sigma: -(1/2nu) (sigma_j, sigma_i)."""
    if not nu > 0:
        raise FormError(f"viscosity must be positive, got {nu}")
    L = _local_matrices(spaces)
    g = spaces.dofs.l2g["Sigma"]
    n = spaces.dofs.ndofs["Sigma"]
    return _scatter(-L.sigma_mass / (2.0 * nu), g, g, (n, n))


def assemble_b1h(spaces: SpaceSet, space: str = "V") -> sp.csr_matrix:
    """b_1h(u, q) = -(div u, q) as a (Q x space) matrix; ``space`` is V or Vdisc."""
    L = _local_matrices(spaces)
    dm = spaces.dofs
    return _scatter(L.Bpu, dm.l2g["Q"], dm.l2g[space], (dm.ndofs["Q"], dm.ndofs[space]))


def assemble_b2h(spaces: SpaceSet):
    """(Busig, Buhatsig, Bgamsig) blocks of the distributional divergence form."""
    L = _local_matrices(spaces)
    dm = spaces.dofs
    s = dm.l2g["Sigma"]
    ns = dm.ndofs["Sigma"]
    Busig = _scatter(L.Busig, dm.l2g["V"], s, (dm.ndofs["V"], ns))
    Buhatsig = _scatter(L.Buhatsig, dm.l2g["Vhat"], s, (dm.ndofs["Vhat"], ns))
    Bgamsig = _scatter(L.Bgamsig, dm.l2g["W"], s, (dm.ndofs["W"], ns))
    return Busig, Buhatsig, Bgamsig


def assemble_b3h(spaces: SpaceSet) -> sp.csr_matrix:
    """b_3h(utilde, qhat) = sum_T <utilde.n, qhat>_{dT} on Vdisc (Qhat x Vdisc)."""
    L = _local_matrices(spaces)
    dm = spaces.dofs
    return _scatter(L.Bphatu, dm.l2g["Qhat"], dm.l2g["Vdisc"], (dm.ndofs["Qhat"], dm.ndofs["Vdisc"]))


def assemble_mass(spaces: SpaceSet, space: str = "V", scale: float = 1.0) -> sp.csr_matrix:
    L = _local_matrices(spaces)
    g = spaces.dofs.l2g[space]
    n = spaces.dofs.ndofs[space]
    return _scatter(scale * L.mass_u, g, g, (n, n))


@dataclass
class SystemBlocks:
    """Assembled sparse blocks of both splitting steps."""

    nu: float
    dt: float
    Msigsig: sp.csr_matrix
    Bgamsig: sp.csr_matrix
    Busig: sp.csr_matrix
    Buhatsig: sp.csr_matrix
    Muu: sp.csr_matrix
    Mutut: sp.csr_matrix
    Bput: sp.csr_matrix
    Bphatut: sp.csr_matrix
    Bpu: sp.csr_matrix


def assemble_blocks(spaces: SpaceSet, nu: float, dt: float) -> SystemBlocks:
    if not dt > 0:
        raise FormError("time step must be positive")
    Busig, Buhatsig, Bgamsig = assemble_b2h(spaces)
    return SystemBlocks(
        nu=nu,
        dt=dt,
        Msigsig=assemble_ah(spaces, nu),
        Bgamsig=Bgamsig,
        Busig=Busig,
        Buhatsig=Buhatsig,
        Muu=assemble_mass(spaces, "V", 1.0 / dt),
        Mutut=assemble_mass(spaces, "Vdisc", -1.0),
        Bput=assemble_b1h(spaces, "Vdisc"),
        Bphatut=assemble_b3h(spaces),
        Bpu=assemble_b1h(spaces, "V"),
    )


def load_vector(spaces: SpaceSet, force: Callable | None, t: float = 0.0) -> np.ndarray:
    """(f, v) for every V basis function; ``force(x, t)`` returns (..., d)."""
    n = spaces.dofs.ndofs["V"]
    if force is None:
        return np.zeros(n)
    r = spaces.ref
    rule = gauss_box(r.dim, 2 * r.k + 6)
    X = spaces.quadrature_points(rule)
    F = np.asarray(force(X, t), dtype=float)
    if F.shape != X.shape:
        F = np.broadcast_to(F, X.shape)
    Phi = r.values("V", rule.points)
    loc = np.einsum("eqa,bqa,q->eb", F, Phi, r.vol_weights(rule))
    out = np.zeros(n)
    np.add.at(out, spaces.dofs.l2g["V"], loc)
    return out


# --------------------------------------------------------------------------
# convection


@dataclass
class _FacetGroup:
    """Facets of one axis, two-sided (interior/periodic) or one-sided (inlet)."""

    axis: int
    facets: np.ndarray
    owner: np.ndarray
    owner_face: int | np.ndarray
    neighbor: np.ndarray | None = None
    neighbor_face: int | None = None
    normal_sign: np.ndarray | None = None  # owner outward normal along axis


class Convection:
    """Matrix-free evaluation of the convective form c_h and its HOPU variants."""

    def __init__(self, spaces: SpaceSet):
        self.spaces = spaces
        r = spaces.ref
        self.k = r.k
        d = r.dim
        exact = 3 * r.k + 2
        self.vol_rule = gauss_box(d, exact)
        self.face_rule = gauss_box(d - 1, exact)
        self.w_vol = r.vol_weights(self.vol_rule)
        self.Phi = r.values("V", self.vol_rule.points)
        self.Grad = r.grad_V(self.vol_rule.points)
        self.PhiFace = [r.values("V", face_points(d, f, self.face_rule.points)) for f in range(2 * d)]
        # Legendre basis of the full tangential trace space (degree k+1); rung
        # l < k keeps P^l, the top rung l = k keeps everything (Pi = I).
        fm, fb = legendre_facet_basis(d - 1, r.k + 1)
        self.psi = np.moveaxis(np.tensordot(fb, fm.evaluate(self.face_rule.points), axes=([1], [1])), -1, 1)
        self.psi_w = self.psi * self.face_rule.weights
        self.n_modes = np.array(
            [dim_total_degree(d - 1, l) for l in range(-1, r.k)] + [dim_total_degree(d - 1, r.k + 1)]
        )
        m = spaces.mesh
        self.groups = []
        self.inlet_groups = []
        two_sided = m.facets_with_tag(meshmod.INTERIOR, meshmod.PERIODIC)
        inlet = m.facets_with_tag(meshmod.INLET)
        for a in range(d):
            fa = two_sided[m.facet_axis[two_sided] == a]
            if fa.size:
                self.groups.append(
                    _FacetGroup(a, fa, m.facet_owner[fa], 2 * a + 1, m.facet_neighbor[fa], 2 * a)
                )
            for side in (0, 1):
                fi = inlet[(m.facet_axis[inlet] == a) & (m.facet_owner_face[inlet] == 2 * a + side)]
                if fi.size:
                    self.inlet_groups.append(
                        _FacetGroup(a, fi, m.facet_owner[fi], 2 * a + side, normal_sign=1.0 if side else -1.0)
                    )
        self.facet_weight = [r.face_weights(2 * a, self.face_rule) for a in range(d)]
        self._inflow_cache = {}

    # helpers ------------------------------------------------------------

    def facet_points(self, facets: np.ndarray) -> np.ndarray:
        """Physical quadrature points (nf, q, d) on facets (owner side)."""
        m = self.spaces.mesh
        out = []
        for f in np.atleast_1d(facets):
            pts = face_points(m.dim, int(m.facet_owner_face[f]), self.face_rule.points)
            out.append(m.to_physical(int(m.facet_owner[f]), pts))
        return np.array(out).reshape(len(np.atleast_1d(facets)), -1, m.dim)

    def inflow_values(self, inflow, group: _FacetGroup, t: float = 0.0) -> np.ndarray:
        if inflow is None:
            return np.zeros((group.facets.size, len(self.face_rule), self.spaces.dim))
        if callable(inflow):
            X = self.facet_points(group.facets)
            return np.broadcast_to(np.asarray(inflow(X, t), dtype=float), X.shape)
        return np.asarray(inflow[group.facets])

    def _projection_mask(self, orders: np.ndarray) -> np.ndarray:
        """(nfacets, nf) mask selecting the Legendre modes kept by Pi^l."""
        nkeep = self.n_modes[np.asarray(orders) + 1]
        return (np.arange(self.psi.shape[0])[None, :] < nkeep[:, None]).astype(float)

    def project_tangential(self, values: np.ndarray, axis: int, orders: np.ndarray) -> np.ndarray:
        """Facet-wise L2 projection of the tangential part onto P^l (l=-1 gives 0)."""
        vt = values.copy()
        vt[..., axis] = 0.0
        coef = np.einsum("fqi,nq->fni", vt, self.psi_w)
        coef *= self._projection_mask(orders)[:, :, None]
        return np.einsum("fni,nq->fqi", coef, self.psi)

    def _orders_for(self, facets, mode: FluxMode, order_field):
        if mode.kind == "upwind":
            return np.full(facets.size, STANDARD_UPWIND)
        if mode.kind == "hopu":
            return np.full(facets.size, mode.order)
        if mode.kind == "adaptive":
            if order_field is None:
                raise FormError("adaptive flux mode requires an order field")
            return np.asarray(order_field.orders)[facets]
        return None

    def _traces(self, U, group: _FacetGroup):
        uo = np.einsum("fb,bqi->fqi", U[group.owner], self.PhiFace[group.owner_face])
        if group.neighbor is None:
            return uo, None
        un = np.einsum("fb,bqi->fqi", U[group.neighbor], self.PhiFace[group.neighbor_face])
        return uo, un

    # main entry points --------------------------------------------------

    def apply(self, u: np.ndarray, mode: FluxMode, order_field=None, inflow=None, t: float = 0.0) -> np.ndarray:
        """c_h(u, u, phi_i) for every V basis function phi_i."""
        mode.check(self.k)
        if mode.kind == "adaptive" and order_field is None:
            raise FormError("adaptive flux mode requires an order field")
        sp_ = self.spaces
        l2g = sp_.dofs.l2g["V"]
        U = np.asarray(u)[l2g]
        uq = np.einsum("eb,bqi->eqi", U, self.Phi)
        gq = np.einsum("eb,bqij->eqij", U, self.Grad)
        conv = np.einsum("eqij,eqj->eqi", gq, uq)
        R = np.einsum("eqi,bqi,q->eb", conv, self.Phi, self.w_vol)

        for g in self.groups:
            w = self.facet_weight[g.axis]
            uo, un = self._traces(U, g)
            un_n = uo[..., g.axis]  # global normal +e_axis is the owner's outward normal
            jump = uo - un
            central = -(un_n * w)[..., None] * jump
            ro = 0.5 * np.einsum("fqi,bqi->fb", central, self.PhiFace[g.owner_face])
            rn = 0.5 * np.einsum("fqi,bqi->fb", central, self.PhiFace[g.neighbor_face])
            orders = self._orders_for(g.facets, mode, order_field)
            if orders is not None:
                pj = jump - self.project_tangential(jump, g.axis, orders)
                a = 0.5 * np.abs(un_n)[..., None] * pj
                b = (a - self.project_tangential(a, g.axis, orders)) * w[:, None]
                ro += np.einsum("fqi,bqi->fb", b, self.PhiFace[g.owner_face])
                rn -= np.einsum("fqi,bqi->fb", b, self.PhiFace[g.neighbor_face])
            np.add.at(R, g.owner, ro)
            np.add.at(R, g.neighbor, rn)

        for g in self.inlet_groups:
            w = self.facet_weight[g.axis]
            uo, _ = self._traces(U, g)
            ui = self.inflow_values(inflow, g, t)
            un_n = uo[..., g.axis] * g.normal_sign
            jump = uo - ui
            central = -(un_n * w)[..., None] * jump
            ro = 0.5 * np.einsum("fqi,bqi->fb", central, self.PhiFace[g.owner_face])
            orders = self._orders_for(g.facets, mode, order_field)
            if orders is not None:
                pj = jump - self.project_tangential(jump, g.axis, orders)
                a = 0.5 * np.abs(un_n)[..., None] * pj
                b = (a - self.project_tangential(a, g.axis, orders)) * w[:, None]
                ro += np.einsum("fqi,bqi->fb", b, self.PhiFace[g.owner_face])
            np.add.at(R, g.owner, ro)

        out = np.zeros(sp_.dofs.ndofs["V"])
        np.add.at(out, l2g, R)
        return out

    def facet_jumps(self, u: np.ndarray, inflow=None, t: float = 0.0):
        """Per convective facet: (facet ids, axis, u.n, jump, average) at quadrature points."""
        U = np.asarray(u)[self.spaces.dofs.l2g["V"]]
        out = []
        for g in self.groups:
            uo, un = self._traces(U, g)
            out.append((g.facets, g.axis, uo[..., g.axis], uo - un, 0.5 * (uo + un)))
        for g in self.inlet_groups:
            uo, _ = self._traces(U, g)
            ui = self.inflow_values(inflow, g, t)
            out.append((g.facets, g.axis, uo[..., g.axis] * g.normal_sign, uo - ui, 0.5 * (uo + ui)))
        return out

    def dissipation(self, u: np.ndarray, mode: FluxMode, order_field=None, inflow=None, t: float = 0.0) -> float:
        """sum_E 1/2 int |u.n| |(I - Pi) [[u]]|^2 for the given flux mode."""
        mode.check(self.k)
        if mode.kind == "central":
            return 0.0
        total = 0.0
        for facets, axis, un_n, jump, _ in self.facet_jumps(u, inflow, t):
            orders = self._orders_for(facets, mode, order_field)
            pj = jump - self.project_tangential(jump, axis, orders)
            total += float(np.sum(0.5 * np.abs(un_n) * np.sum(pj * pj, axis=-1) * self.facet_weight[axis]))
        return total

    # linearised operator ------------------------------------------------

    def oseen_matrix(self, w: np.ndarray, mode: FluxMode, order_field=None, inflow=None, t: float = 0.0):
        """Matrix C and vector b with C @ u + b = c_h(w; u, .) for frozen advection w."""
        mode.check(self.k)
        sp_ = self.spaces
        l2g = sp_.dofs.l2g["V"]
        n = sp_.dofs.ndofs["V"]
        W = np.asarray(w)[l2g]
        wq = np.einsum("eb,bqi->eqi", W, self.Phi)
        K = np.einsum("cqij,eqj,bqi,q->ebc", self.Grad, wq, self.Phi, self.w_vol)
        rows, cols, vals = [], [], []

        def add(r_idx, c_idx, blocks):
            rows.append(np.broadcast_to(r_idx[:, :, None], blocks.shape).ravel())
            cols.append(np.broadcast_to(c_idx[:, None, :], blocks.shape).ravel())
            vals.append(blocks.ravel())

        add(l2g, l2g, K)
        b = np.zeros(n)
        for g in self.groups + self.inlet_groups:
            fw = self.facet_weight[g.axis]
            Po = self.PhiFace[g.owner_face]
            wo = np.einsum("fb,bqi->fqi", W[g.owner], Po)
            if g.neighbor is not None:
                wn = np.einsum("fb,bqi->fqi", W[g.neighbor], self.PhiFace[g.neighbor_face])
                wn_n = wo[..., g.axis]
            else:
                wn_n = wo[..., g.axis] * g.normal_sign
            orders = self._orders_for(g.facets, mode, order_field)
            nfac = g.facets.size
            # trial traces of the jump, per side: (f, b, q, i)
            sides = [(g.owner, Po, 1.0)]
            if g.neighbor is not None:
                sides.append((g.neighbor, self.PhiFace[g.neighbor_face], -1.0))
            tests = [(g.owner, Po, 0.5, 1.0)]
            if g.neighbor is not None:
                tests.append((g.neighbor, self.PhiFace[g.neighbor_face], 0.5, -1.0))
            for te, Pt, avg_w, jump_s in tests:
                for tr, Ptr, tr_s in sides:
                    J = tr_s * np.broadcast_to(Ptr, (nfac,) + Ptr.shape)
                    blk = -np.einsum("fq,fcqi,bqi,q->fbc", wn_n, J, Pt, fw) * avg_w
                    if orders is not None:
                        Jf = J.transpose(0, 2, 1, 3)  # (f, q, c, i)
                        PJ = self._project_basis(Jf, g.axis, orders)
                        Tt = jump_s * np.broadcast_to(Pt, (nfac,) + Pt.shape).transpose(0, 2, 1, 3)
                        PT = self._project_basis(Tt, g.axis, orders)
                        blk = blk + 0.5 * np.einsum("fq,fqci,fqbi,q->fbc", np.abs(wn_n), PJ, PT, fw)
                    add(l2g[te], l2g[tr], blk)
            if g.neighbor is None:
                ui = self.inflow_values(inflow, g, t)
                jv = -ui  # jump contribution of the prescribed exterior state
                bb = -0.5 * np.einsum("fq,fqi,bqi,q->fb", wn_n, jv, Po, fw)
                if orders is not None:
                    pj = jv - self.project_tangential(jv, g.axis, orders)
                    a = 0.5 * np.abs(wn_n)[..., None] * pj
                    a = (a - self.project_tangential(a, g.axis, orders)) * fw[:, None]
                    bb = bb + np.einsum("fqi,bqi->fb", a, Po)
                np.add.at(b, l2g[g.owner], bb)
        C = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        return C, b

    def _project_basis(self, T: np.ndarray, axis: int, orders: np.ndarray) -> np.ndarray:
        """(I - Pi^l) applied to per-facet basis traces T (f, q, c, i)."""
        Tt = T.copy()
        Tt[..., axis] = 0.0
        coef = np.einsum("fqci,nq->fnci", Tt, self.psi_w)
        coef *= self._projection_mask(orders)[:, :, None, None]
        return T - np.einsum("fnci,nq->fqci", coef, self.psi)


def apply_convection(spaces: SpaceSet, u, inflow_data, flux_mode: FluxMode, order_field=None, t: float = 0.0):
    return _convection(spaces).apply(u, flux_mode, order_field, inflow_data, t)


def convection_dissipation(spaces: SpaceSet, u, flux_mode: FluxMode, order_field=None, inflow_data=None) -> float:
    return _convection(spaces).dissipation(u, flux_mode, order_field, inflow_data)


def _convection(spaces: SpaceSet) -> Convection:
    c = getattr(spaces, "_convection", None)
    if c is None:
        c = Convection(spaces)
        spaces._convection = c
    return c
