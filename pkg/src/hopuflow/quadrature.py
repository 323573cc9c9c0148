"""Tensor-product Gauss-Legendre rules on the reference box [-1, 1]^d."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Reference points (n, d) and weights (n,) exact up to ``degree``."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)


def points_for_degree(degree: int) -> int:
    """Number of 1D Gauss points integrating polynomials of ``degree`` exactly."""
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def gauss_box(dim: int, degree: int) -> QuadRule:
    """Tensor Gauss-Legendre rule on [-1, 1]^dim.

    ``dim == 0`` yields the single point rule used for facets of 1D cells.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if dim == 0:
        return QuadRule(np.zeros((1, 0)), np.ones(1), degree)
    n = points_for_degree(degree)
    x, w = np.polynomial.legendre.leggauss(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel(order="F") for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    wts = np.prod(np.stack([g.ravel(order="F") for g in wgrids], axis=1), axis=1)
    pts.flags.writeable = False
    wts.flags.writeable = False
    return QuadRule(pts, wts, degree)
