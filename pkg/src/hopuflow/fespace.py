"""Local polynomial spaces of the mixed stress method and their DOF maps.

All elements of a uniform box mesh are translates of one another, so every
local basis is built once on the reference box [-1, 1]^d and reused.
Functions are pulled back by plain composition with the affine map (no
Piola transform): on axis-aligned boxes the map is a diagonal scaling, which
leaves each of the polynomial spaces below invariant and keeps normal and
tangential traces pointwise equal to their reference values.

Polynomial conventions (total degree everywhere):

``V``      velocity, ``u in P^{k+1}(T)^d`` with every normal trace in
           ``P^k``.  The divergence maps onto ``P^k``; the basis splits into
           facet functions, whose normal trace on exactly one face equals one
           facet Legendre polynomial in the global orientation ``+e_axis``,
           and k(k+1) (2D) bubbles with vanishing normal trace.  Tangential
           traces may reach degree k+1.
``Vhat``   tangential ``P^k`` facet fields.
``Sigma``  trace-free ``P^{k+1}`` matrices whose nt-trace is ``P^k`` on
           every face, plus the nt-trace-free bubbles
           ``(1 - x_j^2) P^k e_i (x) e_j`` (i != j); broken.  On boxes the
           plain total-degree space lets the nt-traces determine some skew
           moments, which leaves tangential facet modes uncontrolled by the
           weak-symmetry multiplier; the bubbles restore that control.
``W``      skew-symmetric ``P^k`` matrices; broken.
``Q``      discontinuous ``P^k``.
``Qhat``   ``P^k`` facet scalars, zero on outlet facets.
``Vdisc``  the velocity basis without inter-element sharing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import mesh as meshmod
from .polynomials import Monomials, dim_total_degree, legendre_facet_basis, null_space, orthonormalize
from .quadrature import QuadRule, gauss_box

SPACE_NAMES = ("V", "Vhat", "Sigma", "W", "Q", "Qhat", "Vdisc")
TRACE_KINDS = ("normal_trace", "tangential_trace", "nn_trace", "nt_trace")


class SpaceError(ValueError):
    pass


def _eval(C: np.ndarray, mono: Monomials, pts: np.ndarray) -> np.ndarray:
    """Evaluate coefficient array (nb, *vs, nm) at points -> (nb, npts, *vs)."""
    M = mono.evaluate(pts)
    out = np.tensordot(C, M, axes=([-1], [1]))
    return np.moveaxis(out, -1, 1)


def _diff(C: np.ndarray, mono: Monomials, axis: int) -> np.ndarray:
    return C @ mono.derivative[axis].T


def face_points(dim: int, face: int, facet_pts: np.ndarray) -> np.ndarray:
    """Embed (n, dim-1) facet reference points into the reference box face."""
    a, side = divmod(face, 2)
    n = facet_pts.shape[0]
    pts = np.empty((n, dim))
    others = [b for b in range(dim) if b != a]
    pts[:, others] = facet_pts
    pts[:, a] = 1.0 if side else -1.0
    return pts


def tangent_axes(dim: int, axis: int) -> list[int]:
    return [b for b in range(dim) if b != axis]


class ReferenceElement:
    """Local bases of every space on the reference box for order ``k``."""

    def __init__(self, dim: int, k: int, h: np.ndarray):
        if k < 1:
            raise SpaceError("order k must be >= 1 (stress space construction requires it)")
        self.dim = dim
        self.k = k
        self.h = np.asarray(h, dtype=float)
        self.jac = 0.5 * self.h  # dx / dxhat per axis
        self.detJ = float(np.prod(self.jac))
        self.mono = Monomials(dim, k + 2)  # ambient; only Sigma bubbles reach k+2
        self.nfaces = 2 * dim
        self.face_mono, self.face_basis = legendre_facet_basis(dim - 1, k)
        self.nf = self.face_basis.shape[0]
        self.vol_rule = gauss_box(dim, 2 * (k + 2))
        self.face_rule = gauss_box(dim - 1, 2 * k + 3)
        self._gram_scalar = self._mass_gram()
        self.Q = self._build_Q()
        self.W = self._build_W()
        self.Sigma = self._build_Sigma()
        self.V, self.n_vfacet, self.n_bubble = self._build_V()

    # construction -------------------------------------------------------

    def _mass_gram(self) -> np.ndarray:
        rule = gauss_box(self.dim, 2 * (self.k + 2))
        M = self.mono.evaluate(rule.points)
        return M.T @ (rule.weights[:, None] * M)

    def _build_Q(self) -> np.ndarray:
        nm = len(self.mono)
        keep = np.flatnonzero(self.mono.total_degree <= self.k)
        C = np.zeros((len(keep), nm))
        C[np.arange(len(keep)), keep] = 1.0
        return orthonormalize(C, self._gram_scalar)

    def _build_W(self) -> np.ndarray:
        d = self.dim
        mats = []
        for a in range(d):
            for b in range(a + 1, d):
                E = np.zeros((d, d))
                E[a, b], E[b, a] = 1.0, -1.0
                mats.append(E / np.sqrt(2.0))
        nq = self.Q.shape[0]
        C = np.zeros((len(mats) * nq, d, d, len(self.mono)))
        for i, E in enumerate(mats):
            C[i * nq : (i + 1) * nq] = E[None, :, :, None] * self.Q[:, None, None, :]
        return C

    def _top_free_of(self, axis: int) -> np.ndarray:
        """Monomials of degree k+1 not containing x_axis."""
        e = self.mono.exponents
        return np.flatnonzero((self.mono.total_degree == self.k + 1) & (e[:, axis] == 0))

    def _top(self) -> np.ndarray:
        """Monomials of degree k+2, excluded from every space except Sigma bubbles."""
        return np.flatnonzero(self.mono.total_degree == self.k + 2)

    def _build_Sigma(self) -> np.ndarray:
        d, nm = self.dim, len(self.mono)
        n = d * d * nm

        def pos(i, j, m):
            return (i * d + j) * nm + m

        rows = []
        for i in range(d * d):
            for m in self._top():
                r = np.zeros(n)
                r[i * nm + m] = 1.0
                rows.append(r)
        for m in range(nm):
            r = np.zeros(n)
            for i in range(d):
                r[pos(i, i, m)] = 1.0
            rows.append(r)
        for j in range(d):
            for i in range(d):
                if i == j:
                    continue
                for m in self._top_free_of(j):
                    r = np.zeros(n)
                    r[pos(i, j, m)] = 1.0
                    rows.append(r)
        N = null_space(np.array(rows), n)
        bubbles = []
        e = self.mono.exponents
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                for m in np.flatnonzero(self.mono.total_degree <= self.k):
                    r = np.zeros(n)
                    r[pos(i, j, m)] = 1.0
                    f = e[m].copy()
                    f[j] += 2
                    r[pos(i, j, self.mono.index(f))] = -1.0
                    bubbles.append(r)
        gram = np.kron(np.eye(d * d), self._gram_scalar)
        # drop bubble directions already contained in the P^{k+1} part
        B = np.array(bubbles)
        B = B - (B @ gram @ N.T) @ np.linalg.solve(N @ gram @ N.T, N)
        G = B @ gram @ B.T
        w, U = np.linalg.eigh(0.5 * (G + G.T))
        B = (U[:, w > 1e-10 * w.max()]).T @ B
        N = orthonormalize(np.concatenate([N, B]), gram)
        return N.reshape(-1, d, d, nm)

    def _build_V(self):
        d, nm, k = self.dim, len(self.mono), self.k
        n = d * nm
        rows = []
        for i in range(d):
            banned = set(self._top_free_of(i).tolist())
            banned.update(self._top().tolist())
            for m in sorted(banned):
                r = np.zeros(n)
                r[i * nm + m] = 1.0
                rows.append(r)
        N = null_space(np.array(rows), n)
        gram = np.kron(np.eye(d), self._gram_scalar)
        N = orthonormalize(N, gram)  # (nV, d*nm), L2-orthonormal
        C = N.reshape(-1, d, nm)
        # normal-trace moments against the facet Legendre basis, global orientation
        fr = self.face_rule
        psi = _eval(self.face_basis, self.face_mono, fr.points)  # (nf, nq)
        Tr = np.zeros((self.nfaces * self.nf, C.shape[0]))
        for face in range(self.nfaces):
            a = face // 2
            vals = _eval(C, self.mono, face_points(d, face, fr.points))[:, :, a]  # (nV, nq)
            Tr[face * self.nf : (face + 1) * self.nf] = (psi * fr.weights) @ vals.T
        if np.linalg.matrix_rank(Tr) != Tr.shape[0]:
            raise SpaceError("normal trace map of the velocity space is not surjective")
        X = np.linalg.pinv(Tr)  # min-norm => L2-orthogonal to bubbles
        B = null_space(Tr, C.shape[0])
        coeffs = np.concatenate([X.T, B], axis=0) @ N
        return coeffs.reshape(-1, d, nm), Tr.shape[0], B.shape[0]

    # sizes --------------------------------------------------------------

    @property
    def nV(self) -> int:
        return self.V.shape[0]

    @property
    def nSigma(self) -> int:
        return self.Sigma.shape[0]

    @property
    def nW(self) -> int:
        return self.W.shape[0]

    @property
    def nQ(self) -> int:
        return self.Q.shape[0]

    @property
    def nVhat(self) -> int:
        return self.nfaces * (self.dim - 1) * self.nf

    @property
    def nQhat(self) -> int:
        return self.nfaces * self.nf

    # evaluation on the reference element, physical derivatives ----------

    def values(self, name: str, pts: np.ndarray) -> np.ndarray:
        C = {"V": self.V, "Vdisc": self.V, "Sigma": self.Sigma, "W": self.W, "Q": self.Q}[name]
        return _eval(C, self.mono, pts)

    def grad_V(self, pts: np.ndarray) -> np.ndarray:
        """(nV, npts, i, j) = d u_i / d x_j in physical coordinates."""
        out = np.stack(
            [_eval(_diff(self.V, self.mono, j), self.mono, pts) / self.jac[j] for j in range(self.dim)],
            axis=-1,
        )
        return out

    def div_V(self, pts: np.ndarray) -> np.ndarray:
        g = self.grad_V(pts)
        return np.trace(g, axis1=2, axis2=3)

    def div_Sigma(self, pts: np.ndarray) -> np.ndarray:
        """Row-wise divergence (nS, npts, d)."""
        out = 0.0
        for j in range(self.dim):
            dj = _eval(_diff(self.Sigma[:, :, j, :], self.mono, j), self.mono, pts) / self.jac[j]
            out = out + dj
        return out

    def facet_basis_values(self, facet_pts: np.ndarray) -> np.ndarray:
        return _eval(self.face_basis, self.face_mono, facet_pts)

    def vhat_face_values(self, face: int, facet_pts: np.ndarray) -> np.ndarray:
        """Tangential facet basis on one face: (nf*(d-1), npts, d)."""
        psi = self.facet_basis_values(facet_pts)
        tangents = tangent_axes(self.dim, face // 2)
        out = np.zeros((len(tangents) * self.nf, psi.shape[1], self.dim))
        for t, ax in enumerate(tangents):
            out[t * self.nf : (t + 1) * self.nf, :, ax] = psi
        return out

    def face_weights(self, face: int, rule: QuadRule | None = None) -> np.ndarray:
        rule = rule or self.face_rule
        a = face // 2
        return rule.weights * np.prod(np.delete(self.jac, a))

    def vol_weights(self, rule: QuadRule | None = None) -> np.ndarray:
        rule = rule or self.vol_rule
        return rule.weights * self.detJ


@dataclass(frozen=True)
class DofMap:
    """Element-to-global maps and constrained index sets per space."""

    l2g: dict
    ndofs: dict
    dirichlet: dict  # space -> sorted array of constrained global dofs
    n_vfacet_global: int  # number of facet-based velocity dofs
    n_bubble_global: int

    def free(self, name: str) -> np.ndarray:
        mask = np.ones(self.ndofs[name], dtype=bool)
        mask[self.dirichlet.get(name, np.array([], dtype=int))] = False
        return np.flatnonzero(mask)


class SpaceSet:
    """All discrete spaces on a mesh for polynomial order ``k``."""

    def __init__(self, mesh: meshmod.Mesh, k: int):
        if k < 1:
            raise SpaceError("order k must be >= 1 (stress space construction requires it)")
        self.mesh = mesh
        self.k = k
        self.ref = ReferenceElement(mesh.dim, k, mesh.h)
        self.dofs = self._build_dofmap()

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def convention(self) -> str:
        return "total-degree"

    def _build_dofmap(self) -> DofMap:
        m, r = self.mesh, self.ref
        ne, nfac, nf, d = m.n_elements, m.n_facets, r.nf, m.dim
        ef = m.element_faces
        face_dofs = (ef[:, :, None] * nf + np.arange(nf)).reshape(ne, -1)
        nvf = nfac * nf
        bubbles = nvf + np.arange(ne)[:, None] * r.n_bubble + np.arange(r.n_bubble)
        ntan = (d - 1) * nf
        vhat = (ef[:, :, None] * ntan + np.arange(ntan)).reshape(ne, -1)

        def blocks(n):
            return np.arange(ne)[:, None] * n + np.arange(n)

        l2g = {
            "V": np.concatenate([face_dofs, bubbles], axis=1),
            "Vhat": vhat,
            "Sigma": blocks(r.nSigma),
            "W": blocks(r.nW),
            "Q": blocks(r.nQ),
            "Qhat": face_dofs.copy(),
            "Vdisc": blocks(r.nV),
        }
        ndofs = {
            "V": nvf + ne * r.n_bubble,
            "Vhat": nfac * ntan,
            "Sigma": ne * r.nSigma,
            "W": ne * r.nW,
            "Q": ne * r.nQ,
            "Qhat": nfac * nf,
            "Vdisc": ne * r.nV,
        }
        dir_f = m.facets_with_tag(meshmod.WALL, meshmod.INLET)
        out_f = m.facets_with_tag(meshmod.OUTLET)
        dirichlet = {
            "V": (dir_f[:, None] * nf + np.arange(nf)).ravel(),
            "Vhat": (dir_f[:, None] * ntan + np.arange(ntan)).ravel(),
            "Qhat": (out_f[:, None] * nf + np.arange(nf)).ravel(),
        }
        for v in list(l2g.values()) + list(dirichlet.values()):
            v.flags.writeable = False
        return DofMap(l2g, ndofs, dirichlet, nvf, ne * r.n_bubble)

    # reporting ----------------------------------------------------------

    def report(self) -> dict:
        free_vf = np.setdiff1d(np.arange(self.dofs.n_vfacet_global), self.dofs.dirichlet["V"]).size
        free_vhat = self.dofs.free("Vhat").size
        return {
            "convention": self.convention,
            "k": self.k,
            "dim": self.dim,
            "local": {
                "V": self.ref.nV,
                "V_facet": self.ref.n_vfacet,
                "V_bubble": self.ref.n_bubble,
                "Vhat": self.ref.nVhat,
                "Sigma": self.ref.nSigma,
                "W": self.ref.nW,
                "Q": self.ref.nQ,
                "Qhat": self.ref.nQhat,
            },
            "global": dict(self.dofs.ndofs),
            "gdofs_momentum": int(free_vf + free_vhat),
            "gdofs_pressure": int(self.dofs.free("Qhat").size),
        }

    # evaluation ---------------------------------------------------------

    def eval_basis(self, space: str, element: int, reference_points, what: str = "value") -> np.ndarray:
        """Evaluate local basis functions of ``space`` on ``element``.

        ``what`` is one of ``value``, ``divergence`` or a trace kind from
        :data:`TRACE_KINDS`.  Trace kinds use the outward normal of the face
        the points lie on.  Returns an array (nbasis, npoints, ...).
        """
        if not 0 <= element < self.mesh.n_elements:
            raise IndexError(f"element {element} out of range")
        pts = np.atleast_2d(np.asarray(reference_points, dtype=float))
        r = self.ref
        if space in ("Vhat", "Qhat"):
            if what != "value":
                raise SpaceError(f"{space} only supports 'value'")
            face = self._face_of(pts)
            fpts = np.delete(pts, face // 2, axis=1)
            if space == "Qhat":
                return r.facet_basis_values(fpts)
            return r.vhat_face_values(face, fpts)
        if what == "value":
            return r.values(space, pts)
        if what == "divergence":
            if space in ("V", "Vdisc"):
                return r.div_V(pts)
            if space == "Sigma":
                return r.div_Sigma(pts)
            raise SpaceError(f"divergence not defined for {space}")
        if what not in TRACE_KINDS:
            raise SpaceError(f"unknown evaluation kind {what!r}")
        face = self._face_of(pts)
        n = meshmod.outward_normal(self.dim, face)
        vals = r.values(space, pts)
        if space in ("V", "Vdisc"):
            un = vals @ n
            if what == "normal_trace":
                return un
            if what == "tangential_trace":
                return vals - un[..., None] * n
        elif space == "Sigma":
            sn = vals @ n
            snn = sn @ n
            if what == "nn_trace":
                return snn
            if what == "nt_trace":
                return sn - snn[..., None] * n
        raise SpaceError(f"trace {what!r} not defined for {space}")

    def _face_of(self, pts: np.ndarray) -> int:
        for face in range(2 * self.dim):
            a, side = divmod(face, 2)
            if np.allclose(pts[:, a], 1.0 if side else -1.0, atol=1e-14, rtol=0):
                return face
        raise SpaceError("trace evaluation requested at points not on a single face")

    def local_coeffs(self, space: str, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs)[self.dofs.l2g[space]]

    def evaluate(self, space: str, coeffs: np.ndarray, points: np.ndarray, what: str = "value"):
        """Evaluate a global coefficient vector at physical points."""
        elems, ref = meshmod.locate(self.mesh, points)
        loc = self.local_coeffs(space, coeffs)
        out = []
        for e, x in zip(elems, ref):
            b = self.eval_basis(space, int(e), x[None, :], what)[:, 0]
            out.append(np.tensordot(loc[e], b, axes=(0, 0)))
        return np.array(out)

    def quadrature_values(self, space: str, coeffs: np.ndarray, rule: QuadRule | None = None, what="value"):
        """Values of a global field at every element's volume quadrature points.

        Returns (nelem, nq, ...) arrays; ``what`` in {"value", "divergence"}.
        """
        rule = rule or self.ref.vol_rule
        if what == "value":
            B = self.ref.values(space, rule.points)
        elif what == "divergence":
            B = self.ref.div_V(rule.points) if space in ("V", "Vdisc") else self.ref.div_Sigma(rule.points)
        elif what == "gradient":
            B = self.ref.grad_V(rule.points)
        else:
            raise SpaceError(what)
        loc = self.local_coeffs(space, coeffs)
        return np.tensordot(loc, B, axes=(1, 0))

    def quadrature_points(self, rule: QuadRule | None = None) -> np.ndarray:
        rule = rule or self.ref.vol_rule
        return self.mesh.to_physical(np.arange(self.mesh.n_elements), rule.points)

    def max_divergence(self, u: np.ndarray) -> float:
        return float(np.max(np.abs(self.quadrature_values("V", u, what="divergence"))))


def build_spaces(mesh: meshmod.Mesh, k: int) -> tuple[SpaceSet, DofMap]:
    spaces = SpaceSet(mesh, k)
    return spaces, spaces.dofs


def expected_dims(dim: int, k: int) -> dict:
    """Closed-form local dimensions of the chosen total-degree convention."""
    pk, pk1 = dim_total_degree(dim, k), dim_total_degree(dim, k + 1)
    v = dim * (pk1 - dim_total_degree(dim - 1, k + 1) + dim_total_degree(dim - 1, k))
    sigma = (dim * dim - 1) * pk1 - dim * (dim - 1) * dim_total_degree(dim - 1, k + 1) + dim * (dim - 1) * dim_total_degree(dim - 1, k)
    sigma += dim * (dim - 1) * dim_total_degree(dim - 1, k)  # degree k+2 nt-bubbles
    return {
        "V": v,
        "Q": pk,
        "W": pk * dim * (dim - 1) // 2,
        "facet": dim_total_degree(dim - 1, k),
        "Sigma": sigma,
    }


# --------------------------------------------------------------------------
# projections


def l2_project(spaces: SpaceSet, space: str, field, t: float = 0.0, divergence_free: bool = False) -> np.ndarray:
    """Projection of ``field(x, t)`` onto one of the spaces.

    ``Q``, ``Sigma``, ``W`` and ``Vdisc`` use the element-wise L2 projection.
    ``V`` uses the commuting projection of :func:`_project_V`, which
    reproduces fields in V and maps divergence-free fields to pointwise
    divergence-free ones.  With ``divergence_free=True`` the V result is
    additionally passed through the discrete Helmholtz projection.
    """
    r = spaces.ref
    if space == "V":
        u = _project_V(spaces, field, t)
        if divergence_free:
            from .splitting import helmholtz_projection

            # boundary normal fluxes from the facet data (zero on walls) keep the projection consistent
            dirV = spaces.dofs.dirichlet["V"]
            u[dirV] = boundary_data(spaces, field, t)[0][dirV]
            u = helmholtz_projection(spaces, u)
        return u
    target = space
    if target not in ("Vdisc", "Q", "Sigma", "W"):
        raise SpaceError(f"cannot L2-project onto {space}")
    rule = gauss_box(r.dim, 2 * r.k + 6)
    X = spaces.quadrature_points(rule)
    F = np.asarray(field(X, t), dtype=float)
    B = r.values(target, rule.points)
    w = r.vol_weights(rule)
    Bf = B.reshape(B.shape[0], B.shape[1], -1)
    G = np.einsum("bqi,cqi,q->bc", Bf, Bf, w)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cannot happen with Gauss rules
        raise SpaceError("singular local mass matrix") from exc
    F = F.reshape(F.shape[0], F.shape[1], -1)
    rhs = np.einsum("eqi,bqi,q->eb", F, Bf, w)
    loc = np.linalg.solve(G, rhs.T).T
    out = np.zeros(spaces.dofs.ndofs[target])
    out[spaces.dofs.l2g[target]] = loc
    return out


def _project_V(spaces: SpaceSet, field, t: float) -> np.ndarray:
    """Commuting projection onto V.

    Facet coefficients are the normal-flux moments of the field against the
    facet Legendre basis (single-valued across elements).  Bubbles minimise
    the L2 distance subject to matching the moments against grad Q, so that
    div of the result is the Q-projection of div(field).
    """
    m, r = spaces.mesh, spaces.ref
    d, k, nf, nvf = r.dim, r.k, r.nf, r.n_vfacet
    ne = m.n_elements
    elems = np.arange(ne)
    fr = gauss_box(d - 1, 2 * k + 10)
    pw = r.facet_basis_values(fr.points) * fr.weights
    coef = np.zeros((ne, r.nV))
    for face in range(2 * d):
        X = m.to_physical(elems, face_points(d, face, fr.points))
        G = np.asarray(field(X, t), dtype=float)[..., face // 2]
        coef[:, face * nf : (face + 1) * nf] = G @ pw.T
    vr = gauss_box(d, 2 * k + 10)
    B = r.values("V", vr.points)
    F = np.asarray(field(m.to_physical(elems, vr.points), t), dtype=float)
    R = F - np.einsum("eb,bqi->eqi", coef[:, :nvf], B[:nvf])
    Bb, w = B[nvf:], vr.weights
    gQ = np.stack([_eval(_diff(r.Q, r.mono, j), r.mono, vr.points) / r.jac[j] for j in range(d)], axis=-1)
    G = np.einsum("bqi,cqi,q->bc", Bb, Bb, w)
    C = np.einsum("jqi,bqi,q->jb", gQ, Bb, w)
    nb, nq = Bb.shape[0], C.shape[0]
    K = np.block([[G, C.T], [C, np.zeros((nq, nq))]])
    rhs = np.concatenate([np.einsum("eqi,bqi,q->eb", R, Bb, w), np.einsum("eqi,jqi,q->ej", R, gQ, w)], axis=1)
    coef[:, nvf:] = (rhs @ np.linalg.pinv(K).T)[:, :nb]  # C has the constants in its kernel
    out = np.zeros(spaces.dofs.ndofs["Vdisc"])
    out[spaces.dofs.l2g["Vdisc"]] = coef
    from .linsolve import broken_to_conforming

    return broken_to_conforming(spaces, out)


def boundary_data(spaces: SpaceSet, g, t: float = 0.0):
    """Dirichlet coefficients on wall and inlet facets.

    Returns full-length (V, Vhat) vectors holding the facet-wise L2
    projections of ``g.n`` and of the tangential part of ``g`` on inlet
    facets (zero on walls); non-Dirichlet entries are zero.
    """
    m, r, dm = spaces.mesh, spaces.ref, spaces.dofs
    uV = np.zeros(dm.ndofs["V"])
    uH = np.zeros(dm.ndofs["Vhat"])
    inlet = m.facets_with_tag(meshmod.INLET)
    if g is None or inlet.size == 0:
        return uV, uH
    fr = r.face_rule
    psi = r.facet_basis_values(fr.points)  # (nf, q)
    pw = psi * fr.weights
    nf = r.nf
    for f in inlet:
        face = int(m.facet_owner_face[f])
        a = face // 2
        X = m.to_physical(int(m.facet_owner[f]), face_points(m.dim, face, fr.points))
        G = np.asarray(g(X, t), dtype=float).reshape(-1, m.dim)
        uV[f * nf : (f + 1) * nf] = pw @ G[:, a]
        for ti, ax in enumerate(tangent_axes(m.dim, a)):
            base = f * (m.dim - 1) * nf + ti * nf
            uH[base : base + nf] = pw @ G[:, ax]
    return uV, uH
