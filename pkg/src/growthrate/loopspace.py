"""Loop-space growth on flat tori and the conjugacy lower bound.

For a flat torus R^n / Z^n with metric g, each free homotopy class
``v in Z^n`` is represented by a unique geodesic of energy ``v^T g v``.
A loop of length <= lambda^2 contributes when its energy is at most
lambda^4, so with 2^n generators per class (the Morse-Bott homology of
T^n) the filtered rank is ``a(lambda) = 2^n #{v : v^T g v <= lambda^4}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import fds
from .hamiltonian import log_grid
from .linalg import format_rational, parse_rational


@dataclass(frozen=True, eq=False)
class TorusModel:
    n: int
    g: tuple   # symmetric positive definite rational Gram matrix, rows of Fractions

    def __post_init__(self):
        g = tuple(tuple(v if isinstance(v, Fraction) else parse_rational(v if isinstance(v, (int, str)) else str(v))
                        for v in row) for row in self.g)
        object.__setattr__(self, "g", g)
        if self.n < 1 or len(g) != self.n or any(len(r) != self.n for r in g):
            raise ValueError(f"metric must be {self.n}x{self.n}")
        if any(g[i][j] != g[j][i] for i in range(self.n) for j in range(i)):
            raise ValueError("metric must be symmetric")
        for m in range(1, self.n + 1):
            if _det([row[:m] for row in g[:m]]) <= 0:
                raise ValueError(f"metric not positive definite: leading minor {m} is <= 0")

    @classmethod
    def flat(cls, n: int, scale=1) -> "TorusModel":
        s = Fraction(scale)
        return cls(n, tuple(tuple(s if i == j else Fraction(0) for j in range(n)) for i in range(n)))

    def scaled(self, s) -> "TorusModel":
        s = Fraction(s)
        return TorusModel(self.n, tuple(tuple(s * v for v in row) for row in self.g))

    def as_float(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.g]

    def to_dict(self) -> dict:
        return {"n": self.n, "g": [[format_rational(v) for v in r] for r in self.g]}

    @classmethod
    def from_dict(cls, doc: dict) -> "TorusModel":
        g = doc["g"]
        n = int(doc.get("n", len(g)))
        return cls(n, tuple(tuple(r) for r in g))


def _det(rows) -> Fraction:
    """Exact determinant by fraction-valued elimination."""
    A = [list(r) for r in rows]
    n = len(A)
    det = Fraction(1)
    for i in range(n):
        p = next((r for r in range(i, n) if A[r][i] != 0), None)
        if p is None:
            return Fraction(0)
        if p != i:
            A[i], A[p] = A[p], A[i]
            det = -det
        det *= A[i][i]
        for r in range(i + 1, n):
            f = A[r][i] / A[i][i]
            for c in range(i, n):
                A[r][c] -= f * A[i][c]
    return det


def _ldl(g: Sequence[Sequence[float]]):
    """``q(v) = sum_i d_i (v_i + sum_{j>i} m_ij v_j)^2``."""
    n = len(g)
    A = np.array(g, dtype=float)
    d = np.zeros(n)
    m = np.zeros((n, n))
    for i in range(n):
        d[i] = A[i, i]
        m[i, i + 1:] = A[i, i + 1:] / A[i, i]
        A[i + 1:, i + 1:] -= np.outer(A[i, i + 1:], A[i, i + 1:]) / A[i, i]
    return d, m


def count_lattice_points(g: Sequence[Sequence[float]], R: float) -> int:
    """``#{v in Z^n : v^T g v <= R}`` by Fincke-Pohst enumeration.

    Coordinates are fixed from the last one down; the innermost two levels
    are counted in closed form over a numpy range.
    """
    if R < 0:
        return 0
    n = len(g)
    d, m = _ldl(g)
    tol = 1e-9
    v = [0] * n

    def centre(i: int) -> float:
        return -sum(m[i, j] * v[j] for j in range(i + 1, n))

    def rec(i: int, budget: float) -> int:
        c = centre(i)
        w = math.sqrt(max(budget, 0.0) / d[i])
        lo, hi = math.ceil(c - w - tol), math.floor(c + w + tol)
        if i == 0:
            return max(hi - lo + 1, 0)
        if i == 1:
            xs = np.arange(lo, hi + 1, dtype=float)
            rest = np.maximum(budget - d[1] * (xs - c) ** 2, 0.0)
            c0 = centre(0) - m[0, 1] * xs
            w0 = np.sqrt(rest / d[0])
            cnt = np.floor(c0 + w0 + tol) - np.ceil(c0 - w0 - tol) + 1
            return int(np.maximum(cnt, 0).sum())
        total = 0
        for x in range(lo, hi + 1):
            v[i] = x
            total += rec(i - 1, budget - d[i] * (x - c) ** 2)
        v[i] = 0
        return total

    return rec(n - 1, float(R))


def torus_a(T: TorusModel, lam: float) -> int:
    """Filtered rank at level lambda: ``2^n`` times lattice points of energy <= lambda^4."""
    return 2**T.n * count_lattice_points(T.as_float(), float(lam) ** 4)


@dataclass(frozen=True)
class LoopGrowth:
    lam_scale: fds.GammaEstimate      # a as a function of lambda
    length_scale: fds.GammaEstimate   # a as a function of length L = lambda^2
    expected_lam: int
    expected_length: int


def torus_gamma(T: TorusModel, lam_min: float = 5.0, lam_max: float = 50.0,
                samples: int = 40, **gamma_kw) -> LoopGrowth:
    lams = log_grid(lam_min, lam_max, samples)
    a = tuple(torus_a(T, l) for l in lams)
    on_lam = fds.gamma(fds.SampledGrowth(tuple(lams), a), **gamma_kw)
    on_len = fds.gamma(fds.SampledGrowth(tuple(l * l for l in lams), a), **gamma_kw)
    return LoopGrowth(on_lam, on_len, 2 * T.n, T.n)


def pi1_lower_bound(r: Sequence[int], C: float, P: float = 0.0) -> fds.SampledGrowth:
    """Lower-bound sample for the loop-space filtered rank from conjugacy counts.

    Conjugacy classes of word length <= c give distinct loops of length at
    most ``(C + P) c``, so ``a((C+P) c) >= r_c``.
    """
    if C < 1:
        raise ValueError("C must be >= 1")
    s = C + P
    return fds.SampledGrowth(tuple(s * c for c in range(1, len(r) + 1)), tuple(int(v) for v in r))


def abelian_class_counts(n: int, L: int) -> list[int]:
    """Classes of word length <= i in Z^n (standard generators): the L1-ball sizes."""
    # |B_1(n, i)| = sum_k 2^k C(n,k) C(i,k)
    return [sum(2**k * math.comb(n, k) * math.comb(i, k) for k in range(n + 1))
            for i in range(1, L + 1)]
