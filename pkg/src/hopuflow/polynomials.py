"""Monomial bases of total-degree polynomials on the reference box.

Local shape functions are stored as coefficient arrays of shape
``(nbasis, *value_shape, nmono)`` against the monomials of a
:class:`Monomials` instance.  Evaluation and differentiation are plain
matrix products, which keeps every space construction a small linear
algebra problem.
"""

from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np
import scipy.linalg


class Monomials:
    """All monomials x^a in ``dim`` variables with |a| <= ``degree``."""

    def __init__(self, dim: int, degree: int):
        self.dim = dim
        self.degree = degree
        exps = [
            e
            for total in range(degree + 1)
            for e in _compositions(total, dim)
        ]
        self.exponents = np.array(exps, dtype=int).reshape(-1, dim)
        self._index = {tuple(e): i for i, e in enumerate(self.exponents)}

    def __len__(self) -> int:
        return len(self.exponents)

    def index(self, exponent) -> int:
        return self._index[tuple(exponent)]

    @property
    def total_degree(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Monomial values, shape (npoints, nmono)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.ones((points.shape[0], len(self)))
        for axis in range(self.dim):
            powers = points[:, axis : axis + 1] ** self.exponents[None, :, axis]
            out *= powers
        return out

    @cached_property
    def derivative(self) -> np.ndarray:
        """D[axis] maps coefficients c to coefficients of d/dx_axis (c @ D[axis].T)."""
        n = len(self)
        D = np.zeros((self.dim, n, n))
        for j, e in enumerate(self.exponents):
            for axis in range(self.dim):
                if e[axis] == 0:
                    continue
                f = e.copy()
                f[axis] -= 1
                D[axis, self.index(f), j] = e[axis]
        return D


def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    # Reverse-lexicographic order so that x-powers lead, matching Legendre ordering.
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def orthonormalize(coeffs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Return coefficients of an orthonormal basis for the span of ``coeffs``.

    ``coeffs`` has shape (n, m) in some ambient coordinate system whose inner
    product matrix is ``gram`` (m, m).
    """
    G = coeffs @ gram @ coeffs.T
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return scipy.linalg.solve_triangular(L, coeffs, lower=True)


def null_space(constraints: np.ndarray, n: int, rcond: float = 1e-12) -> np.ndarray:
    """Rows spanning the null space of ``constraints`` in R^n."""
    if constraints.size == 0:
        return np.eye(n)
    return scipy.linalg.null_space(constraints, rcond=rcond).T


def legendre_facet_basis(dim: int, degree: int) -> tuple[Monomials, np.ndarray]:
    """L2-orthonormal basis of P^degree on the reference facet [-1, 1]^dim.

    Ordered by total degree, so the first ``dim(P^l)`` functions span P^l.
    """
    mono = Monomials(dim, degree)
    from .quadrature import gauss_box

    rule = gauss_box(dim, 2 * degree)
    V = mono.evaluate(rule.points)
    gram = V.T @ (rule.weights[:, None] * V)
    basis = orthonormalize(np.eye(len(mono)), gram)
    return mono, basis


def dim_total_degree(dim: int, degree: int) -> int:
    if degree < 0:
        return 0
    n = 1
    for i in range(1, dim + 1):
        n = n * (degree + i) // i
    return n


def multi_indices(shape):
    return list(itertools.product(*[range(s) for s in shape]))
