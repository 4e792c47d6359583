import itertools
from fractions import Fraction

import pytest

from growthrate import fds
from growthrate import loopspace as ls
from growthrate.conjgrowth import FreeProduct, count_classes


def brute(g, R, box=9):
    n = len(g)
    return sum(1 for v in itertools.product(range(-box, box + 1), repeat=n)
               if sum(g[i][j] * v[i] * v[j] for i in range(n) for j in range(n)) <= R)


def test_torus_a_examples():
    assert ls.torus_a(ls.TorusModel.flat(1), 1) == 6
    assert ls.torus_a(ls.TorusModel.flat(3), 0) == 8
    assert ls.torus_a(ls.TorusModel.flat(2), 2 ** 0.25) == 36


@pytest.mark.parametrize("g,R", [
    ([[1, 0], [0, 1]], 30),
    ([[2, 1], [1, 2]], 17),
    ([[3, 1, 0], [1, 2, 1], [0, 1, 5]], 40),
    ([[Fraction(1, 2), 0], [0, Fraction(3, 2)]], 20),
])
def test_lattice_count_oracle(g, R):
    gf = [[float(v) for v in row] for row in g]
    assert ls.count_lattice_points(gf, R) == brute(g, R)


def test_block_diagonal_product():
    """Counts for a block-diagonal metric equal the convolution over the split energy."""
    g1, g2 = [[2]], [[1, 0], [0, 3]]
    g = [[2, 0, 0], [0, 1, 0], [0, 0, 3]]
    R = 25
    direct = ls.count_lattice_points(g, R)
    conv = 0
    for x in range(-4, 5):
        e = 2 * x * x
        if e <= R:
            conv += ls.count_lattice_points(g2, R - e)
    assert direct == conv == brute(g, R, box=6)
    assert ls.count_lattice_points(g1, 8) == 5


def test_torus_a_non_decreasing():
    T = ls.TorusModel(2, (("2", "1/2"), ("1/2", "1")))
    vals = [ls.torus_a(T, l / 4) for l in range(1, 60)]
    assert vals == sorted(vals)


def test_metric_validation():
    with pytest.raises(ValueError, match="positive definite"):
        ls.TorusModel(2, ((1, 2), (2, 1)))
    with pytest.raises(ValueError, match="symmetric"):
        ls.TorusModel(2, ((1, 0), (1, 1)))
    T = ls.TorusModel.from_dict({"n": 2, "g": [["1", "1/3"], ["1/3", "1"]]})
    assert ls.TorusModel.from_dict(T.to_dict()).g == T.g


@pytest.mark.parametrize("n", [1, 2])
def test_torus_gamma(n):
    lg = ls.torus_gamma(ls.TorusModel.flat(n))
    assert lg.lam_scale.value == pytest.approx(2 * n, abs=0.2)
    assert lg.length_scale.value == pytest.approx(n, abs=0.1)
    scaled = ls.torus_gamma(ls.TorusModel.flat(n).scaled(4))
    assert scaled.lam_scale.agrees_with(lg.lam_scale, 0.05)


def test_pi1_lower_bound_reindexing():
    r = ls.abelian_class_counts(2, 120)
    g1 = fds.gamma(ls.pi1_lower_bound(r, 1, 1))
    g2 = fds.gamma(ls.pi1_lower_bound(r, 2, 2))
    assert g1.agrees_with(g2, 0.05)
    assert fds.gamma(ls.pi1_lower_bound([3] * 30, 1)).value == 0
    with pytest.raises(ValueError):
        ls.pi1_lower_bound(r, 0.5)


def test_pi1_lower_bound_below_torus_gamma():
    for n in (1, 2):
        low = fds.gamma(ls.pi1_lower_bound(ls.abelian_class_counts(n, 200), 1, 1))
        assert low.value == pytest.approx(n, abs=0.1)
        assert low.value <= ls.torus_gamma(ls.TorusModel.flat(n)).lam_scale.value


def test_abelian_counts_are_l1_balls():
    for n in (1, 2, 3):
        for i in range(1, 6):
            ball = sum(1 for v in itertools.product(range(-i, i + 1), repeat=n) if sum(map(abs, v)) <= i)
            assert ls.abelian_class_counts(n, i)[-1] == ball


def test_pi1_lower_bound_triple_product():
    r = count_classes(FreeProduct.of_cyclic(2, 2, 2), 20, method="burnside")
    assert fds.gamma(ls.pi1_lower_bound(r, 1, 1)).symbol == "+inf"
