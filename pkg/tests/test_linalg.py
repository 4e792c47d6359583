from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from growthrate.linalg import QQ, Matrix, PrimeField, compose, field_from_spec, parse_rational


def test_parse_and_field_spec():
    assert parse_rational("3/6") == Fraction(1, 2)
    assert parse_rational(4) == 4
    with pytest.raises(ValueError):
        parse_rational("one half")
    assert field_from_spec("q") is QQ
    assert field_from_spec("fp:7") == PrimeField(7)
    with pytest.raises(ValueError):
        field_from_spec("fp:8")


def test_prime_field_coerce_rational():
    F = PrimeField(5)
    assert F.coerce("1/2") == 3
    with pytest.raises(ValueError):
        F.coerce("1/5")


def test_rank_small_cases():
    assert Matrix.from_dense([[1, 2], [2, 4]]).rank() == 1
    assert Matrix.identity(4).rank() == 4
    assert Matrix.zero(0, 3).rank() == 0
    # singular over GF(3) but not over Q
    M = [[1, 1], [1, 4]]
    assert Matrix.from_dense(M).rank() == 2
    assert Matrix.from_dense(M, PrimeField(3)).rank() == 1


def test_matmul_and_compose_order():
    A = Matrix.from_dense([[1, 2], [0, 1]])
    B = Matrix.from_dense([[0, 1], [1, 0]])
    assert compose([A, B]) == B @ A
    assert (A @ B).to_dense() == [[2, 1], [1, 0]]
    with pytest.raises(ValueError):
        A @ Matrix.zero(3, 1)


def test_flat_round_trip():
    M = Matrix.from_flat(2, 3, ["1/2", "0", "-3", "0", "7/3", "1"])
    again = Matrix.from_flat(2, 3, M.to_flat_strings())
    assert again == M
    with pytest.raises(ValueError):
        Matrix.from_flat(2, 2, ["1"])


def _brute_rank(rows):
    """Dense Fraction elimination used as an independent oracle."""
    A = [[Fraction(v) for v in r] for r in rows]
    rank, col = 0, 0
    ncols = len(A[0]) if A else 0
    while rank < len(A) and col < ncols:
        piv = next((i for i in range(rank, len(A)) if A[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        A[rank], A[piv] = A[piv], A[rank]
        for i in range(len(A)):
            if i != rank and A[i][col]:
                f = A[i][col] / A[rank][col]
                A[i] = [a - f * b for a, b in zip(A[i], A[rank])]
        rank += 1
        col += 1
    return rank


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(
    st.lists(st.integers(-3, 3), min_size=n, max_size=n), min_size=1, max_size=6)))
def test_rank_matches_dense_oracle(rows):
    assert Matrix.from_dense(rows).rank() == _brute_rank(rows)
