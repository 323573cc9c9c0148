"""Projected upwinding: facet projections, the jump indicator and the order ladder."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import mesh as meshmod
from .fespace import SpaceSet
from .forms import STANDARD_UPWIND, _convection

NOT_CONVECTIVE = -2  # facets outside the convective set (walls, outlets)


class HopuError(ValueError):
    pass


@dataclass(frozen=True)
class EtaThresholds:
    """eta_0 < ... < eta_k inside (0, 1); eta_{k+1} = 1 is implicit."""

    values: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise HopuError("thresholds must be a non-empty sequence")
        if np.any(np.diff(v) <= 0):
            raise HopuError(f"thresholds must be strictly increasing, got {tuple(v)}")
        if v[0] < 0 or v[-1] >= 1:
            raise HopuError("thresholds must lie in [0, 1)")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @property
    def k(self) -> int:
        return len(self.values) - 1

    def classify(self, eta):
        """Map indicator values to orders (-1 = standard upwind)."""
        t = np.asarray(self.values)
        eta = np.asarray(eta, dtype=float)
        return np.searchsorted(t, eta, side="left") - 1


@dataclass
class OrderField:
    """Per-facet projection order; -1 standard upwind, -2 not a convective facet."""

    orders: np.ndarray
    k: int
    update_cadence: int = 10
    last_refresh: int | None = None
    eta: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.update_cadence < 1:
            raise HopuError("update cadence must be >= 1")
        o = np.asarray(self.orders)
        if np.any(o > self.k) or np.any(o < NOT_CONVECTIVE):
            raise HopuError("orders must lie in {-2, -1, 0, ..., k}")

    def due(self, step: int) -> bool:
        return step % self.update_cadence == 0

    def copy(self) -> "OrderField":
        return replace(self, orders=self.orders.copy(), eta=None if self.eta is None else self.eta.copy())

    @classmethod
    def uniform(cls, spaces: SpaceSet, order: int = STANDARD_UPWIND, cadence: int = 10) -> "OrderField":
        m = spaces.mesh
        o = np.full(m.n_facets, NOT_CONVECTIVE, dtype=int)
        o[m.interior_like] = order
        return cls(o, spaces.k, cadence)

    def to_csv(self, spaces: SpaceSet, path) -> None:
        dump_order_field(self, spaces, path)


def facet_project(spaces: SpaceSet, l: int, facet: int, values: np.ndarray) -> np.ndarray:
    """L2 projection of tangential facet samples onto tangential P^l.

    ``values`` (nq, d) are given at the convection facet quadrature points
    (see ``facet_quadrature``).  ``l = k`` is the identity on the trace space.
    """
    k = spaces.k
    if not 0 <= l <= k:
        raise HopuError(f"projection order must satisfy 0 <= l <= k={k}, got {l}")
    conv = _convection(spaces)
    axis = int(spaces.mesh.facet_axis[facet])
    v = np.asarray(values, dtype=float)
    if np.max(np.abs(v[:, axis]), initial=0.0) > 1e-13 * max(1.0, np.max(np.abs(v))):
        raise HopuError("facet_project expects tangential samples (v.n = 0)")
    return conv.project_tangential(v[None], axis, np.array([l]))[0]


def facet_quadrature(spaces: SpaceSet, facet: int):
    """(points (nq, d), weights (nq,)) of the facet rule used by projections."""
    conv = _convection(spaces)
    pts = conv.facet_points(np.array([facet]))[0]
    return pts, conv.facet_weight[int(spaces.mesh.facet_axis[facet])]


def eta_from_traces(jump, average, weights, axis: int | None = None, projector=None, denom_floor: float = 0.0) -> float:
    """Indicator from sampled jump and mean traces on one facet.

    ``projector`` maps the jump to its P^l part (omit for standard upwind).
    """
    jump = np.asarray(jump, dtype=float)
    if projector is not None:
        jump = jump - projector(jump)
    num = float(np.sum(np.linalg.norm(jump, axis=-1) * weights))
    den = float(np.sum(np.linalg.norm(np.asarray(average, dtype=float), axis=-1) * weights))
    if den <= denom_floor:
        return 0.0
    return num / den


def velocity_scale(spaces: SpaceSet, u: np.ndarray) -> float:
    """Global L2 mean of |u|."""
    uq = spaces.quadrature_values("V", u)
    w = spaces.ref.vol_weights()
    vol = np.prod(np.asarray(spaces.mesh.upper) - np.asarray(spaces.mesh.lower))
    return float(np.sqrt(np.einsum("eqi,eqi,q->", uq, uq, w) / vol))


def compute_eta_all(spaces: SpaceSet, u: np.ndarray, current: OrderField | None = None, inflow=None, t: float = 0.0):
    """Indicator on every convective facet (NaN elsewhere)."""
    m = spaces.mesh
    conv = _convection(spaces)
    eta = np.full(m.n_facets, np.nan)
    scale = velocity_scale(spaces, u)
    for facets, axis, _, jump, avg in conv.facet_jumps(u, inflow, t):
        if current is None:
            orders = np.full(facets.size, STANDARD_UPWIND)
        else:
            orders = np.asarray(current.orders)[facets]
        pj = jump - conv.project_tangential(jump, axis, orders)
        w = conv.facet_weight[axis]
        num = np.einsum("fq,q->f", np.linalg.norm(pj, axis=-1), w)
        den = np.einsum("fq,q->f", np.linalg.norm(avg, axis=-1), w)
        floor = 1e-12 * m.facet_measure()[facets] * scale
        stagnant = den <= floor
        e = np.where(stagnant, 0.0, num / np.where(stagnant, 1.0, den))
        eta[facets] = e
    return eta


def compute_eta(spaces: SpaceSet, u: np.ndarray, facet: int, current_order: int = STANDARD_UPWIND, inflow=None) -> float:
    m = spaces.mesh
    if m.facet_tag[facet] not in (meshmod.INTERIOR, meshmod.PERIODIC, meshmod.INLET):
        raise HopuError(f"facet {facet} is not a convective facet")
    if current_order > spaces.k:
        raise HopuError("current order exceeds k")
    of = OrderField.uniform(spaces, current_order)
    return float(compute_eta_all(spaces, u, of, inflow)[facet])


def update_order_field(spaces: SpaceSet, u: np.ndarray, thresholds: EtaThresholds, previous: OrderField | None = None, inflow=None, step: int | None = None) -> OrderField:
    """New order field from the indicator evaluated with the previous orders."""
    if thresholds.k != spaces.k:
        raise HopuError(f"need k+1={spaces.k + 1} thresholds, got {len(thresholds.values)}")
    cadence = previous.update_cadence if previous is not None else 10
    eta = compute_eta_all(spaces, u, previous, inflow)
    orders = np.full(spaces.mesh.n_facets, NOT_CONVECTIVE, dtype=int)
    active = ~np.isnan(eta)
    orders[active] = thresholds.classify(eta[active])
    return OrderField(orders, spaces.k, cadence, step, eta)


def dump_order_field(of: OrderField, spaces: SpaceSet, path) -> None:
    m = spaces.mesh
    centers = m.facet_centers()
    axes = "xyz"[: m.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["facet_id", *[f"center_{a}" for a in axes], "mode", "l_loc"])
        for f in range(m.n_facets):
            o = int(of.orders[f])
            if o == NOT_CONVECTIVE:
                continue
            mode = "upwind" if o == STANDARD_UPWIND else "hopu"
            w.writerow([f, *[repr(float(c)) for c in centers[f]], mode, o])
