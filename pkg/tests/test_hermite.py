import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import eval_hermite, factorial

from fockmc.hermite import squared_overlap_table


def _hermite_fn(n, x):
    norm = 1.0 / np.sqrt(2.0 ** n * factorial(n) * np.sqrt(np.pi))
    return norm * eval_hermite(n, x) * np.exp(-x * x / 2.0)


def _quad_overlap(m, n):
    val, err = quad(lambda x: _hermite_fn(m, x) ** 2 * _hermite_fn(n, x) ** 2,
                    -np.inf, np.inf, limit=200)
    assert err < 1e-7
    return val


def test_ground_state_value():
    table = squared_overlap_table(0)
    assert table[0, 0] == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), rel=1e-14)


def test_symmetry_and_positivity():
    table = squared_overlap_table(12)
    assert np.allclose(table, table.T, atol=0)
    assert (table > 0).all()


@pytest.mark.parametrize("m,n", [(0, 1), (1, 1), (2, 5), (7, 7), (0, 12),
                                 (11, 12)])
def test_against_quadrature(m, n):
    table = squared_overlap_table(12)
    assert table[m, n] == pytest.approx(_quad_overlap(m, n), rel=1e-8)


def test_large_order_stability():
    # the recurrence must survive orders where naive Hermite values overflow
    table = squared_overlap_table(300)
    assert np.isfinite(table).all()
    assert (table > 0).all()
    # both rules are exact for the low-order block, so it must not move
    small = squared_overlap_table(12)
    assert np.abs(table[:13, :13] - small).max() < 1e-13


def test_diagonal_decreases():
    # higher states spread out, so the self-overlap density must shrink
    table = squared_overlap_table(40)
    d = np.diag(table)
    assert np.all(np.diff(d) < 0)
