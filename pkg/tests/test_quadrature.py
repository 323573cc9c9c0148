import math

import numpy as np
import pytest

from hopuflow.quadrature import gauss_box


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [0, 3, 7, 10])
def test_gauss_box_exact_for_monomials(dim, degree):
    rule = gauss_box(dim, degree)
    for e in np.ndindex(*([degree + 1] * dim)):
        if sum(e) > degree:
            continue
        exact = math.prod(0.0 if p % 2 else 2.0 / (p + 1) for p in e)
        val = float(np.sum(rule.weights * np.prod(rule.points ** np.array(e), axis=1)))
        assert abs(val - exact) <= 1e-14 * max(1.0, abs(exact))


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        gauss_box(2, -1)
