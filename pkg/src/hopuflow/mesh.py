"""Structured axis-aligned box meshes with tagged, oriented facets.

Elements are numbered lexicographically with the x index running fastest.
Local faces of an element are numbered ``2 * axis + side`` where side 0 is
the lower face (outward normal ``-e_axis``) and side 1 the upper face.

Every facet carries a global orientation ``+e_axis``.  The *owner* is the
element on the lower side, so the global normal is the owner's outward
normal and jumps are taken as ``owner - neighbor``.  Periodic facets are
stored once, owned by the last element along the axis and neighbored by
the first one.  Boundary facets are owned by their only element; for a
lower boundary facet the owner's outward normal is ``-e_axis``, which is
what :func:`facet_neighbors` reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

INTERIOR, PERIODIC, WALL, INLET, OUTLET = "interior", "periodic", "wall", "inlet", "outlet"
BOUNDARY_KINDS = (WALL, INLET, OUTLET)
FACET_TAGS = (INTERIOR, PERIODIC, WALL, INLET, OUTLET)
AXIS_NAMES = "xyz"


class MeshError(ValueError):
    """Invalid mesh configuration."""


@dataclass(frozen=True)
class Facet:
    owner: int
    neighbor: int | str
    unit_normal: np.ndarray
    measure: float
    tag: str


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    cells_per_axis: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    boundary_tags: Mapping[str, str]
    periodic_axes: tuple[int, ...]
    # facet arrays, one entry per facet
    facet_axis: np.ndarray
    facet_owner: np.ndarray
    facet_neighbor: np.ndarray  # -1 on boundary
    facet_owner_face: np.ndarray  # local face index in the owner
    facet_neighbor_face: np.ndarray  # -1 on boundary
    facet_tag: np.ndarray  # dtype object, entries of FACET_TAGS
    element_faces: np.ndarray  # (nelem, 2*dim) -> facet id
    periodic_pairs: dict = field(default_factory=dict)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def n_facets(self) -> int:
        return len(self.facet_axis)

    @property
    def h(self) -> np.ndarray:
        """Element edge lengths per axis (uniform mesh)."""
        return (self.upper - self.lower) / np.asarray(self.cells_per_axis)

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.h))

    def facet_measure(self, facet_id: int | None = None):
        h = self.h
        meas = np.array([np.prod(np.delete(h, a)) for a in range(self.dim)])
        if facet_id is None:
            return meas[self.facet_axis]
        return float(meas[self.facet_axis[facet_id]])

    def element_index(self, e: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(e, self.cells_per_axis, order="F"))

    def element_centers(self) -> np.ndarray:
        """(nelem, dim) element centers."""
        idx = np.array(np.unravel_index(np.arange(self.n_elements), self.cells_per_axis, order="F")).T
        return self.lower + (idx + 0.5) * self.h

    def to_physical(self, e, ref_points: np.ndarray) -> np.ndarray:
        """Map reference points in [-1, 1]^d of element(s) ``e`` to physical space."""
        centers = self.element_centers()[np.asarray(e)]
        return centers[..., None, :] + 0.5 * self.h * np.asarray(ref_points)

    def facet_centers(self) -> np.ndarray:
        """(nfacets, dim) facet midpoints; periodic facets report the owner side."""
        c = self.element_centers()[self.facet_owner].copy()
        side = self.facet_owner_face % 2
        rows = np.arange(self.n_facets)
        c[rows, self.facet_axis] += np.where(side == 1, 0.5, -0.5) * self.h[self.facet_axis]
        return c

    def facets_with_tag(self, *tags: str) -> np.ndarray:
        return np.flatnonzero(np.isin(self.facet_tag, tags))

    @property
    def interior_like(self) -> np.ndarray:
        """Facets of the convective set: interior, periodic and inlet."""
        return self.facets_with_tag(INTERIOR, PERIODIC, INLET)

    @property
    def facets(self) -> list[Facet]:
        out = []
        for f in range(self.n_facets):
            owner, nb, normal = facet_neighbors(self, f)
            out.append(Facet(owner, nb, normal, self.facet_measure(f), str(self.facet_tag[f])))
        return out

    def facet_sets(self) -> dict[str, set[int]]:
        """The partition into convective-interior, wall and Neumann facets."""
        return {
            "I": set(self.interior_like.tolist()),
            "W": set(self.facets_with_tag(WALL).tolist()),
            "N": set(self.facets_with_tag(OUTLET).tolist()),
        }

    def describe(self) -> dict:
        """Plain descriptor used by checkpoints and reports."""
        return {
            "dim": self.dim,
            "cells_per_axis": list(self.cells_per_axis),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "boundary_tags": dict(self.boundary_tags),
            "periodic_axes": list(self.periodic_axes),
        }


def expected_facet_count(cells: Sequence[int], periodic_axes: Sequence[int]) -> int:
    cells = list(cells)
    total = 0
    for a in range(len(cells)):
        planes = cells[a] if a in periodic_axes else cells[a] + 1
        total += planes * int(np.prod(cells)) // cells[a]
    return total


def build_box_mesh(
    dim: int,
    cells_per_axis: Sequence[int],
    extent: Sequence[Sequence[float]] | None = None,
    boundary_tags: Mapping[str, str] | str | None = None,
    periodic_axes: Sequence[int] = (),
) -> Mesh:
    """Build a uniform box mesh.

    ``extent`` is a sequence of (lower, upper) pairs per axis (default unit
    box).  ``boundary_tags`` maps face names ``"x-"``, ``"x+"``, ... to
    ``wall``, ``inlet`` or ``outlet``; a single string tags every
    non-periodic face.
    """
    if dim not in (2, 3):
        raise MeshError(f"dim must be 2 or 3, got {dim}")
    cells = tuple(int(c) for c in cells_per_axis)
    if len(cells) != dim:
        raise MeshError("cells_per_axis must have one entry per axis")
    if any(c < 1 for c in cells):
        raise MeshError(f"every axis needs at least one cell, got {cells}")
    if extent is None:
        extent = [(0.0, 1.0)] * dim
    extent = np.asarray(extent, dtype=float)
    if extent.shape != (dim, 2):
        raise MeshError("extent must be (dim, 2)")
    lower, upper = extent[:, 0].copy(), extent[:, 1].copy()
    if np.any(upper <= lower):
        raise MeshError("extent lower bound must be below upper bound on every axis")
    periodic_axes = tuple(sorted(set(int(a) for a in periodic_axes)))
    if any(a < 0 or a >= dim for a in periodic_axes):
        raise MeshError(f"periodic axis out of range: {periodic_axes}")

    faces = [f"{AXIS_NAMES[a]}{s}" for a in range(dim) for s in "-+"]
    if boundary_tags is None:
        boundary_tags = WALL
    if isinstance(boundary_tags, str):
        boundary_tags = {
            name: boundary_tags for name in faces if AXIS_NAMES.index(name[0]) not in periodic_axes
        }
    tags = dict(boundary_tags)
    for name, kind in tags.items():
        if name not in faces:
            raise MeshError(f"unknown boundary face {name!r}; expected one of {faces}")
        if AXIS_NAMES.index(name[0]) in periodic_axes:
            raise MeshError(f"face {name} lies on periodic axis and cannot carry tag {kind!r}")
        if kind not in BOUNDARY_KINDS:
            raise MeshError(f"boundary tag {kind!r} not in {BOUNDARY_KINDS}")
    for name in faces:
        if AXIS_NAMES.index(name[0]) not in periodic_axes and name not in tags:
            raise MeshError(f"non-periodic boundary face {name} needs a tag")

    nelem = int(np.prod(cells))
    element_faces = -np.ones((nelem, 2 * dim), dtype=int)
    f_axis, f_owner, f_nb, f_oface, f_nface, f_tag = [], [], [], [], [], []
    periodic_pairs = {}

    for a in range(dim):
        periodic = a in periodic_axes
        planes = cells[a] if periodic else cells[a] + 1
        others = [cells[b] for b in range(dim) if b != a]
        # Lexicographic by axis, then plane index, then transverse indices (first fastest).
        trans = list(np.ndindex(*others[::-1])) if others else [()]
        for plane in range(planes):
            for tr in trans:
                tr = tr[::-1]
                idx = list(tr)
                idx.insert(a, 0)
                fid = len(f_axis)
                lower_el = plane - 1
                upper_el = plane
                if periodic and plane == 0:
                    lower_el = cells[a] - 1
                if lower_el >= 0:
                    idx[a] = lower_el
                    owner = int(np.ravel_multi_index(idx, cells, order="F"))
                    if upper_el < cells[a]:
                        idx[a] = upper_el
                        nb = int(np.ravel_multi_index(idx, cells, order="F"))
                        tag = PERIODIC if (periodic and plane == 0) else INTERIOR
                        f_axis.append(a)
                        f_owner.append(owner)
                        f_nb.append(nb)
                        f_oface.append(2 * a + 1)
                        f_nface.append(2 * a)
                        f_tag.append(tag)
                        element_faces[owner, 2 * a + 1] = fid
                        element_faces[nb, 2 * a] = fid
                        if tag == PERIODIC:
                            periodic_pairs[fid] = (a, owner, nb)
                    else:
                        f_axis.append(a)
                        f_owner.append(owner)
                        f_nb.append(-1)
                        f_oface.append(2 * a + 1)
                        f_nface.append(-1)
                        f_tag.append(tags[f"{AXIS_NAMES[a]}+"])
                        element_faces[owner, 2 * a + 1] = fid
                else:
                    idx[a] = upper_el
                    owner = int(np.ravel_multi_index(idx, cells, order="F"))
                    f_axis.append(a)
                    f_owner.append(owner)
                    f_nb.append(-1)
                    f_oface.append(2 * a)
                    f_nface.append(-1)
                    f_tag.append(tags[f"{AXIS_NAMES[a]}-"])
                    element_faces[owner, 2 * a] = fid

    mesh = Mesh(
        dim=dim,
        cells_per_axis=cells,
        lower=lower,
        upper=upper,
        boundary_tags=tags,
        periodic_axes=periodic_axes,
        facet_axis=np.array(f_axis, dtype=int),
        facet_owner=np.array(f_owner, dtype=int),
        facet_neighbor=np.array(f_nb, dtype=int),
        facet_owner_face=np.array(f_oface, dtype=int),
        facet_neighbor_face=np.array(f_nface, dtype=int),
        facet_tag=np.array(f_tag, dtype=object),
        element_faces=element_faces,
        periodic_pairs=periodic_pairs,
    )
    for arr in (mesh.facet_axis, mesh.facet_owner, mesh.facet_neighbor, mesh.element_faces):
        arr.flags.writeable = False
    assert mesh.n_facets == expected_facet_count(cells, periodic_axes)
    return mesh


def outward_normal(dim: int, local_face: int) -> np.ndarray:
    n = np.zeros(dim)
    n[local_face // 2] = 1.0 if local_face % 2 else -1.0
    return n


def facet_neighbors(mesh: Mesh, facet_id: int):
    """(owner, neighbor element or boundary tag, owner's outward unit normal)."""
    if not 0 <= facet_id < mesh.n_facets:
        raise IndexError(f"facet id {facet_id} out of range [0, {mesh.n_facets})")
    owner = int(mesh.facet_owner[facet_id])
    nb = int(mesh.facet_neighbor[facet_id])
    neighbor = nb if nb >= 0 else str(mesh.facet_tag[facet_id])
    return owner, neighbor, outward_normal(mesh.dim, int(mesh.facet_owner_face[facet_id]))


def locate(mesh: Mesh, points: np.ndarray):
    """Element ids and reference coordinates of physical points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rel = (points - mesh.lower) / mesh.h
    idx = np.clip(np.floor(rel).astype(int), 0, np.asarray(mesh.cells_per_axis) - 1)
    elems = np.ravel_multi_index(idx.T, mesh.cells_per_axis, order="F")
    ref = 2.0 * (rel - idx) - 1.0
    return elems, ref
