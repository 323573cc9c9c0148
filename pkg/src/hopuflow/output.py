"""Run artifacts: legacy VTK snapshots, binary checkpoints and CSV tables."""

from __future__ import annotations

import csv
import itertools
from pathlib import Path

import numpy as np

from .fespace import SpaceSet
from .hopu import NOT_CONVECTIVE, OrderField

CHECKPOINT_VERSION = 1
VTK_HEADER = "# vtk DataFile Version 3.0"
_VTK_CELL = {2: 9, 3: 12}  # quad, hexahedron


class OutputError(OSError):
    pass


# --------------------------------------------------------------------------
# VTK


def _lattice(dim: int, n: int) -> np.ndarray:
    """(n+1)^dim equispaced reference points, x fastest."""
    s = np.linspace(-1.0, 1.0, n + 1)
    grids = np.meshgrid(*([s] * dim), indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=-1)


def _sub_cells(dim: int, n: int) -> np.ndarray:
    """Connectivity of the n^dim sub-cells of one lattice, VTK vertex order."""
    def idx(*ijk):
        out, stride = 0, 1
        for c in ijk:
            out += c * stride
            stride *= n + 1
        return out

    cells = []
    for c in itertools.product(range(n), repeat=dim):
        c = c[::-1]  # iterate with x fastest
        if dim == 2:
            i, j = c
            cells.append([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)])
        else:
            i, j, k = c
            quad = lambda kk: [idx(i, j, kk), idx(i + 1, j, kk), idx(i + 1, j + 1, kk), idx(i, j + 1, kk)]
            cells.append(quad(k) + quad(k + 1))
    return np.array(cells, dtype=int)


def sample_fields(spaces: SpaceSet, u: np.ndarray, p: np.ndarray | None = None, order_field: OrderField | None = None):
    """Sample velocity, pressure and divergence on a per-element lattice.

    Returns (points, cells, point_data, cell_data).
    """
    m, k, d = spaces.mesh, spaces.k, spaces.dim
    ref = _lattice(d, k)
    sub = _sub_cells(d, k)
    ne, npe = m.n_elements, ref.shape[0]
    pts = m.to_physical(np.arange(ne), ref).reshape(ne * npe, d)
    Vb = spaces.ref.values("V", ref)
    Db = spaces.ref.div_V(ref)
    uloc = spaces.local_coeffs("V", u)
    vel = np.tensordot(uloc, Vb, axes=(1, 0)).reshape(ne * npe, d)
    div = np.tensordot(uloc, Db, axes=(1, 0)).reshape(ne * npe)
    if p is None:
        pres = np.zeros(ne * npe)
    else:
        Qb = spaces.ref.values("Q", ref)
        pres = np.tensordot(spaces.local_coeffs("Q", p), Qb, axes=(1, 0)).reshape(ne * npe)
    cells = (sub[None, :, :] + npe * np.arange(ne)[:, None, None]).reshape(-1, sub.shape[1])
    order = np.full(ne, NOT_CONVECTIVE, dtype=int)
    if order_field is not None:
        fo = np.asarray(order_field.orders)[m.element_faces]
        fo = np.where(fo == NOT_CONVECTIVE, np.iinfo(int).max, fo)
        mn = fo.min(axis=1)
        order = np.where(mn == np.iinfo(int).max, NOT_CONVECTIVE, mn)
    cell_order = np.repeat(order, sub.shape[0])
    vel3 = np.zeros((vel.shape[0], 3))
    vel3[:, :d] = vel
    pts3 = np.zeros((pts.shape[0], 3))
    pts3[:, :d] = pts
    return pts3, cells, {"velocity": vel3, "pressure": pres, "divergence": div}, {"hopu_order": cell_order}


def write_vtk(spaces: SpaceSet, path, u: np.ndarray, p: np.ndarray | None = None, order_field: OrderField | None = None, title: str = "hopuflow") -> Path:
    """Legacy ASCII unstructured grid with (k+1)^d lattice points per element.

    Cell data ``hopu_order`` is the lowest projection order on the
    element's facets (-1 standard upwind, -2 no convective facet).
    """
    path = Path(path)
    pts, cells, pdata, cdata = sample_fields(spaces, u, p, order_field)
    ctype = _VTK_CELL[spaces.dim]
    lines = [VTK_HEADER, title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {pts.shape[0]} double"]
    lines += [" ".join(repr(float(c)) for c in row) for row in pts]
    nv = cells.shape[1]
    lines.append(f"CELLS {cells.shape[0]} {cells.shape[0] * (nv + 1)}")
    lines += [f"{nv} " + " ".join(str(int(c)) for c in row) for row in cells]
    lines.append(f"CELL_TYPES {cells.shape[0]}")
    lines += [str(ctype)] * cells.shape[0]
    lines.append(f"CELL_DATA {cells.shape[0]}")
    lines += ["SCALARS hopu_order int 1", "LOOKUP_TABLE default"]
    lines += [str(int(v)) for v in cdata["hopu_order"]]
    lines.append(f"POINT_DATA {pts.shape[0]}")
    lines.append("VECTORS velocity double")
    lines += [" ".join(_fmt(c) for c in row) for row in pdata["velocity"]]
    for name in ("pressure", "divergence"):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in pdata[name]]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def _fmt(v: float) -> str:
    v = float(v)
    return "0" if v == 0.0 else repr(v)


def read_vtk_points(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    i = next(n for n, line in enumerate(lines) if line.startswith("POINTS"))
    npts = int(lines[i].split()[1])
    return np.array([[float(x) for x in lines[i + 1 + j].split()] for j in range(npts)])


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, spaces: SpaceSet, u: np.ndarray, t: float, step: int, order_field: OrderField | None = None, u_prev: np.ndarray | None = None) -> Path:
    path = Path(path)
    desc = spaces.mesh.describe()
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "k": np.array(spaces.k),
        "mesh_descriptor": np.array(repr(sorted(desc.items()))),
        "u": np.asarray(u, dtype=float),
        "t": np.array(float(t)),
        "step": np.array(int(step)),
        "has_u_prev": np.array(u_prev is not None),
        "u_prev": np.asarray(u_prev if u_prev is not None else np.zeros(0), dtype=float),
        "has_order_field": np.array(order_field is not None),
    }
    if order_field is not None:
        payload["orders"] = np.asarray(order_field.orders, dtype=int)
        payload["order_cadence"] = np.array(order_field.update_cadence)
        payload["order_last_refresh"] = np.array(-1 if order_field.last_refresh is None else order_field.last_refresh)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path, spaces: SpaceSet) -> dict:
    with np.load(path, allow_pickle=False) as z:
        data = {key: z[key] for key in z.files}
    if int(data["version"]) != CHECKPOINT_VERSION:
        raise OutputError(f"checkpoint version {int(data['version'])} not supported")
    if int(data["k"]) != spaces.k:
        raise OutputError(f"checkpoint has k={int(data['k'])}, run uses k={spaces.k}")
    if str(data["mesh_descriptor"]) != repr(sorted(spaces.mesh.describe().items())):
        raise OutputError("checkpoint mesh does not match the configured mesh")
    of = None
    if bool(data["has_order_field"]):
        last = int(data["order_last_refresh"])
        of = OrderField(data["orders"].astype(int), spaces.k, int(data["order_cadence"]), None if last < 0 else last)
    return {
        "u": data["u"],
        "t": float(data["t"]),
        "step": int(data["step"]),
        "u_prev": data["u_prev"] if bool(data["has_u_prev"]) else None,
        "order_field": of,
    }


# --------------------------------------------------------------------------
# CSV


class CsvTable:
    """Append-only CSV with a fixed header; floats written with repr precision."""

    def __init__(self, path, header, append: bool = False):
        self.path = Path(path)
        self.header = list(header)
        mode = "a" if append and self.path.exists() else "w"
        self._fh = open(self.path, mode, newline="")
        self._w = csv.writer(self._fh)
        if mode == "w":
            self._w.writerow(self.header)

    def row(self, *values) -> None:
        if len(values) != len(self.header):
            raise ValueError(f"expected {len(self.header)} values, got {len(values)}")
        self._w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in values])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise OutputError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    vals = np.array([[float(x) if x not in ("", "nan") else np.nan for x in r] for r in body]) if body else np.zeros((0, len(header)))
    return header, vals
