"""Finitely presented filtered directed systems and their growth rate.

A system is given by breakpoints ``x_1 < ... < x_m`` (all >= 1), the
dimensions of ``V_{x_i}`` and the transition maps ``V_{x_i} -> V_{x_{i+1}}``.
``V_x`` is right-continuous: it equals ``V_{x_i}`` on ``[x_i, x_{i+1})`` and
is the zero space below ``x_1``.
"""

from __future__ import annotations

import bisect
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .linalg import QQ, Field, Matrix, PrimeField, field_from_spec, format_rational, parse_rational

DEFAULT_FIT_WINDOW = 0.5
DEFAULT_INF_THRESHOLD = 50.0
MIN_FIT_SAMPLES = 8
# exponential tail model must beat the power model by this RSS factor
EXP_MODEL_MARGIN = 10.0


# --------------------------------------------------------------------------
# growth functions and the estimator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SampledGrowth:
    """Step-interpolated growth function ``a(x)`` known only at samples."""

    xs: tuple
    values: tuple

    def __post_init__(self):
        if len(self.xs) != len(self.values):
            raise ValueError("xs and values differ in length")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise ValueError("sample abscissae must be strictly increasing")
        if self.xs and self.xs[0] < 1:
            raise ValueError("samples must lie in [1, inf)")
        if any(int(v) != v or v < 0 for v in self.values):
            raise ValueError("growth values must be nonnegative integers")

    @classmethod
    def from_function(cls, fn, xs) -> "SampledGrowth":
        xs = tuple(xs)
        return cls(xs, tuple(int(fn(x)) for x in xs))

    def __call__(self, x) -> int:
        i = bisect.bisect_right(self.xs, x) - 1
        return 0 if i < 0 else self.values[i]

    def reindexed(self, scale_x=1, scale_a: int = 1) -> "SampledGrowth":
        """``a'(x) = A a(B x)`` presented on the grid ``x_i / B``; drops points below 1."""
        pts = [(x / scale_x, scale_a * v) for x, v in zip(self.xs, self.values)]
        pts = [(x, v) for x, v in pts if x >= 1]
        return SampledGrowth(tuple(p[0] for p in pts), tuple(p[1] for p in pts))

    def __len__(self):
        return len(self.xs)


@dataclass(frozen=True)
class GammaEstimate:
    value: float  # -inf, finite >= 0, or +inf
    slope: float
    intercept: float
    residual: float
    n_fit: int
    reason: str = "fit"

    @property
    def symbol(self) -> str:
        if self.value == -math.inf:
            return "-inf"
        if self.value == math.inf:
            return "+inf"
        return "finite"

    def agrees_with(self, other: "GammaEstimate", tol: float) -> bool:
        if self.symbol != other.symbol:
            return False
        if self.symbol != "finite":
            return True
        return abs(self.value - other.value) <= tol

    def to_dict(self) -> dict:
        def enc(v):
            if math.isinf(v):
                return "+inf" if v > 0 else "-inf"
            if math.isnan(v):
                return None
            return round(v, 12)

        return {"value": enc(self.value), "slope": enc(self.slope),
                "intercept": enc(self.intercept), "residual": enc(self.residual),
                "n_fit": self.n_fit, "reason": self.reason}


def _log(v) -> float:
    # math.log handles arbitrarily large ints exactly enough
    return math.log(v)


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rss = float(np.sum((A @ coef - y) ** 2))
    return float(coef[0]), float(coef[1]), rss


def gamma(a, fit_window: float = DEFAULT_FIT_WINDOW,
          inf_threshold: float = DEFAULT_INF_THRESHOLD,
          min_samples: int = MIN_FIT_SAMPLES) -> GammaEstimate:
    """Estimate ``limsup log a(x) / log x`` from the sampled tail.

    Least squares on the last ``fit_window`` fraction of samples in log-log
    space. The value is ``-inf`` when ``a`` vanishes on the whole window and
    ``+inf`` when the tail slope diverges: either the fitted slope exceeds
    ``inf_threshold`` or the tail is fitted markedly better by
    ``log a = alpha + beta x`` with ``beta > 0`` (exponential growth, whose
    log-log slope grows without bound).
    """
    if isinstance(a, FiniteFDS):
        a = a.growth()
    if not 0 < fit_window <= 1:
        raise ValueError("fit_window must lie in (0, 1]")
    n = len(a.xs)
    k = math.ceil(fit_window * n)
    if k < min_samples:
        raise ValueError(f"too few samples in fit window: {k} < {min_samples}")
    xs = a.xs[n - k:]
    vs = a.values[n - k:]
    pos = [(x, v) for x, v in zip(xs, vs) if v > 0]
    if not pos:
        return GammaEstimate(-math.inf, math.nan, math.nan, 0.0, k, "zero tail")
    if len(pos) < 2:
        raise ValueError("fewer than two positive samples in the fit window")
    if len(pos) == k and len(set(vs)) == 1:
        return GammaEstimate(0.0, 0.0, _log(vs[0]), 0.0, k, "constant tail")
    lx = np.array([math.log(x) for x, _ in pos], dtype=float)
    xf = np.array([float(x) for x, _ in pos], dtype=float)
    la = np.array([_log(v) for _, v in pos], dtype=float)
    slope, icpt, rss_pow = _linfit(lx, la)
    if slope > inf_threshold:
        return GammaEstimate(math.inf, slope, icpt, rss_pow, len(pos), "slope above threshold")
    beta, _, rss_exp = _linfit(xf, la)
    spread = float(la.max() - la.min())
    if (beta > 0 and slope > 0 and spread > 1.0
            and rss_exp * EXP_MODEL_MARGIN < rss_pow):
        return GammaEstimate(math.inf, slope, icpt, rss_pow, len(pos), "exponential tail")
    return GammaEstimate(max(slope, 0.0), slope, icpt, rss_pow, len(pos))


# --------------------------------------------------------------------------
# systems
# --------------------------------------------------------------------------

def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return parse_rational(x)


@dataclass(frozen=True, eq=False)
class FiniteFDS:
    breakpoints: tuple
    dims: tuple
    transitions: tuple
    field: Field = QQ
    stable_tail: bool = True

    def __post_init__(self):
        bps = tuple(_as_fraction(x) for x in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if not bps:
            raise ValueError("a system needs at least one breakpoint")
        if bps[0] < 1:
            raise ValueError("first breakpoint must be >= 1")
        if any(b <= a for a, b in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.dims) != len(bps):
            raise ValueError("need one dimension per breakpoint")
        if any(d < 0 for d in self.dims):
            raise ValueError("dimensions must be nonnegative")
        if len(self.transitions) != len(bps) - 1:
            raise ValueError("need one transition per consecutive breakpoint pair")
        for i, T in enumerate(self.transitions):
            if T.shape != (self.dims[i + 1], self.dims[i]):
                raise ValueError(
                    f"transition {i} has shape {T.shape}, expected "
                    f"{(self.dims[i + 1], self.dims[i])}")
            if T.field != self.field:
                raise ValueError(f"transition {i} is over {T.field!r}, not {self.field!r}")

    def __len__(self):
        return len(self.breakpoints)

    def step_index(self, x) -> int | None:
        """Index of the enclosing breakpoint (largest ``x_i <= x``), or None below ``x_1``."""
        i = bisect.bisect_right(self.breakpoints, _as_fraction(x)) - 1
        return None if i < 0 else i

    def dim_at(self, x) -> int:
        i = self.step_index(x)
        return 0 if i is None else self.dims[i]

    def _between(self, i: int, j: int) -> Matrix:
        out = Matrix.identity(self.dims[i], self.field)
        for t in range(i, j):
            out = self.transitions[t] @ out
        return out

    def evaluate(self, x1, x2) -> Matrix:
        """The structure map ``psi_{x1,x2}``."""
        x1, x2 = _as_fraction(x1), _as_fraction(x2)
        if x1 > x2:
            raise ValueError(f"evaluate needs x1 <= x2, got {x1} > {x2}")
        i, j = self.step_index(x1), self.step_index(x2)
        if i is None:
            return Matrix.zero(self.dim_at(x2), 0, self.field)
        if j == len(self) - 1:
            return self._to_last[i]
        return self._between(i, j)

    @cached_property
    def _to_last(self) -> tuple:
        m = len(self)
        out = [None] * m
        acc = Matrix.identity(self.dims[-1], self.field)
        out[m - 1] = acc
        for i in range(m - 2, -1, -1):
            acc = acc @ self.transitions[i]
            out[i] = acc
        return tuple(out)

    def rank_to_limit(self, x) -> int:
        """``a(x)``: rank of ``V_x -> colim V``."""
        if not self.stable_tail:
            raise ValueError("direct limit not representable: tail is not stable")
        i = self.step_index(x)
        if i is None:
            return 0
        return self._to_last[i].rank()

    def growth(self) -> SampledGrowth:
        """``a`` sampled at every breakpoint."""
        return SampledGrowth(self.breakpoints,
                             tuple(self.rank_to_limit(x) for x in self.breakpoints))

    def with_field(self, field: Field) -> "FiniteFDS":
        return FiniteFDS(self.breakpoints, self.dims,
                         tuple(T.with_field(field) for T in self.transitions),
                         field, self.stable_tail)

    # exchange format ----------------------------------------------------
    def to_dict(self, sparse: bool = False) -> dict:
        """Exchange form; ``sparse`` writes each transition as ``{"entries": [[i, j, v], ...]}``."""
        if sparse:
            trans = [{"entries": [[i, j, self.field.to_string(v)] for i, row in enumerate(T.rows)
                                  for j, v in sorted(row.items())]} for T in self.transitions]
        else:
            trans = [T.to_flat_strings() for T in self.transitions]
        return {
            "breakpoints": [format_rational(x) for x in self.breakpoints],
            "dims": list(self.dims),
            "transitions": trans,
            "tail": "stable" if self.stable_tail else "open",
            "field": self.field.name,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict, field: Field | None = None) -> "FiniteFDS":
        for key in ("breakpoints", "dims", "transitions"):
            if key not in doc:
                raise ValueError(f"FDS document missing field {key!r}")
        if field is None:
            field = field_from_spec(doc.get("field", "q"))
        dims = [int(d) for d in doc["dims"]]
        if len(doc["transitions"]) != max(len(dims) - 1, 0):
            raise ValueError("transitions: need len(dims) - 1 matrices")
        mats = []
        for i, flat in enumerate(doc["transitions"]):
            try:
                if isinstance(flat, dict):
                    mats.append(_sparse_from_entries(dims[i + 1], dims[i], flat.get("entries", []), field))
                else:
                    mats.append(Matrix.from_flat(dims[i + 1], dims[i], flat, field))
            except ValueError as exc:
                raise ValueError(f"transitions[{i}]: {exc}") from exc
        tail = doc.get("tail", "stable")
        if tail not in ("stable", "open", True, False):
            raise ValueError(f"tail: expected 'stable' or 'open', got {tail!r}")
        return cls([parse_rational(x) for x in doc["breakpoints"]], dims, mats, field,
                   tail in ("stable", True))

    @classmethod
    def from_json(cls, text: str, field: Field | None = None) -> "FiniteFDS":
        return cls.from_dict(json.loads(text), field)


def _sparse_from_entries(nrows: int, ncols: int, entries, field: Field) -> Matrix:
    rows: list[dict] = [{} for _ in range(nrows)]
    for e in entries:
        i, j, v = e
        if not (0 <= i < nrows and 0 <= j < ncols):
            raise ValueError(f"entry ({i}, {j}) outside {nrows}x{ncols}")
        v = field.coerce(v)
        if v:
            rows[i][j] = v
    return Matrix(nrows, ncols, tuple(rows), field)


def identity_system(breakpoints, dim: int, field: Field = QQ) -> FiniteFDS:
    m = len(breakpoints)
    return FiniteFDS(breakpoints, [dim] * m,
                     [Matrix.identity(dim, field) for _ in range(m - 1)], field)


def inclusion_system(breakpoints, dims, field: Field = QQ) -> FiniteFDS:
    """Nested subspaces with standard inclusions (``dims`` non-decreasing)."""
    dims = list(dims)
    return FiniteFDS(breakpoints, dims,
                     [Matrix.inclusion(dims[i + 1], dims[i], field) for i in range(len(dims) - 1)],
                     field)


def polynomial_system(degree: int, x_max: int, field: Field = QQ) -> FiniteFDS:
    """Breakpoints 1..x_max with ``V_x`` of dimension ``x**degree`` and injective maps."""
    xs = list(range(1, x_max + 1))
    return inclusion_system(xs, [x**degree for x in xs], field)


# --------------------------------------------------------------------------
# morphisms
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FDSMorphism:
    """Maps ``A_i : V_{x_i} -> V'_{step(C x_i)}``, one per source breakpoint."""

    C: Fraction
    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "C", _as_fraction(self.C))
        object.__setattr__(self, "maps", tuple(self.maps))
        if self.C < 1:
            raise ValueError("rescaling constant C must be >= 1")

    def __eq__(self, other):
        if not isinstance(other, FDSMorphism):
            return NotImplemented
        return self.C == other.C and self.maps == other.maps

    def __hash__(self):
        return hash((self.C, self.maps))

    def to_dict(self, source: FiniteFDS | None = None) -> dict:
        return {
            "C": format_rational(self.C),
            "shapes": [list(A.shape) for A in self.maps],
            "maps": [A.to_flat_strings() for A in self.maps],
        }

    @classmethod
    def from_dict(cls, doc: dict, field: Field = QQ) -> "FDSMorphism":
        maps = [Matrix.from_flat(r, c, flat, field)
                for (r, c), flat in zip(doc["shapes"], doc["maps"])]
        return cls(parse_rational(doc["C"]), maps)


@dataclass(frozen=True)
class MorphismCheck:
    ok: bool
    failing_square: int | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def _target_dim(phi: FDSMorphism, source: FiniteFDS, target: FiniteFDS, i: int) -> int:
    return target.dim_at(phi.C * source.breakpoints[i])


def check_morphism(phi: FDSMorphism, source: FiniteFDS, target: FiniteFDS) -> MorphismCheck:
    """Check every consecutive commuting square exactly.

    Raises ValueError on a dimension mismatch of any component.
    """
    if len(phi.maps) != len(source):
        raise ValueError(f"morphism has {len(phi.maps)} components, source has {len(source)} breakpoints")
    for i, A in enumerate(phi.maps):
        want = (_target_dim(phi, source, target, i), source.dims[i])
        if A.shape != want:
            raise ValueError(f"component {i} has shape {A.shape}, expected {want}")
    C = phi.C
    for i in range(len(source) - 1):
        x1, x2 = source.breakpoints[i], source.breakpoints[i + 1]
        lhs = phi.maps[i + 1] @ source.transitions[i]
        rhs = target.evaluate(C * x1, C * x2) @ phi.maps[i]
        if lhs != rhs:
            return MorphismCheck(False, i, f"square between x={x1} and x={x2} does not commute")
    return MorphismCheck(True)


def directed_morphism(F: FiniteFDS, C) -> FDSMorphism:
    """The self-morphism ``C_V`` given by ``psi_{x, C x}``."""
    C = _as_fraction(C)
    return FDSMorphism(C, [F.evaluate(x, C * x) for x in F.breakpoints])


def identity_morphism(F: FiniteFDS) -> FDSMorphism:
    return directed_morphism(F, 1)


def compose(phi: FDSMorphism, psi: FDSMorphism, F: FiniteFDS, G: FiniteFDS,
            H: FiniteFDS) -> FDSMorphism:
    """``psi o phi`` for ``phi: F -> G`` and ``psi: G -> H``; constant ``C_phi C_psi``."""
    C = phi.C * psi.C
    maps = []
    for i, x in enumerate(F.breakpoints):
        y = phi.C * x
        j = G.step_index(y)
        if j is None:
            maps.append(Matrix.zero(H.dim_at(C * x), F.dims[i], F.field))
            continue
        yj = G.breakpoints[j]
        inner = psi.maps[j] @ phi.maps[i]
        maps.append(H.evaluate(psi.C * yj, C * x) @ inner)
    return FDSMorphism(C, maps)


@dataclass(frozen=True)
class IsoCheck:
    ok: bool
    reason: str = ""

    def __bool__(self):
        return self.ok


def check_isomorphism_witness(phi: FDSMorphism, phi_prime: FDSMorphism,
                              F: FiniteFDS, Fp: FiniteFDS) -> IsoCheck:
    """True iff ``phi' o phi`` and ``phi o phi'`` are structure maps of F and F'."""
    c1 = check_morphism(phi, F, Fp)
    if not c1:
        return IsoCheck(False, f"phi is not a morphism: {c1.detail}")
    c2 = check_morphism(phi_prime, Fp, F)
    if not c2:
        return IsoCheck(False, f"phi' is not a morphism: {c2.detail}")
    back = compose(phi, phi_prime, F, Fp, F)
    if back != directed_morphism(F, back.C):
        return IsoCheck(False, "phi' o phi is not a structure map of the source")
    forth = compose(phi_prime, phi, Fp, F, Fp)
    if forth != directed_morphism(Fp, forth.C):
        return IsoCheck(False, "phi o phi' is not a structure map of the target")
    return IsoCheck(True)


@dataclass(frozen=True)
class SandwichResult:
    ok: bool
    phi: FDSMorphism | None = None
    phi_prime: FDSMorphism | None = None
    failed: str | None = None

    def __bool__(self):
        return self.ok


def sandwich_check(systems: Sequence[FiniteFDS], u1: FDSMorphism, u2: FDSMorphism,
                   u3: FDSMorphism, b1: FDSMorphism, b2: FDSMorphism) -> SandwichResult:
    """Given ``V1 -u1-> V2 -u2-> V3 -u3-> V4`` where consecutive pairs compose to
    isomorphisms (witnessed by ``b1: V3 -> V1`` and ``b2: V4 -> V2``), build
    ``phi = u2`` and ``phi' = b2 o u3 o psi3`` and verify ``V2 ~ V3``.
    """
    V1, V2, V3, V4 = systems
    for name, m, s, t in (("u1", u1, V1, V2), ("u2", u2, V2, V3), ("u3", u3, V3, V4),
                          ("b1", b1, V3, V1), ("b2", b2, V4, V2)):
        c = check_morphism(m, s, t)
        if not c:
            return SandwichResult(False, failed=f"{name} is not a morphism: {c.detail}")

    u21 = compose(u1, u2, V1, V2, V3)
    u32 = compose(u2, u3, V2, V3, V4)
    hyps = (
        ("u2.u1.b1 = psi3", compose(b1, u21, V3, V1, V3), V3),
        ("b1.u2.u1 = psi1", compose(u21, b1, V1, V3, V1), V1),
        ("u3.u2.b2 = psi4", compose(b2, u32, V4, V2, V4), V4),
        ("b2.u3.u2 = psi2", compose(u32, b2, V2, V4, V2), V2),
    )
    for label, comp, V in hyps:
        if comp != directed_morphism(V, comp.C):
            return SandwichResult(False, failed=f"hypothesis failed: {label}")

    D1C1C2 = b1.C * u1.C * u2.C
    phi = u2
    phi_prime = compose(compose(directed_morphism(V3, D1C1C2), u3, V3, V3, V4), b2, V3, V4, V2)
    iso = check_isomorphism_witness(phi, phi_prime, V2, V3)
    if not iso:
        return SandwichResult(False, phi, phi_prime, failed=iso.reason)
    return SandwichResult(True, phi, phi_prime)


@dataclass(frozen=True)
class InvarianceReport:
    isomorphic: bool
    gamma_source: GammaEstimate | None
    gamma_target: GammaEstimate | None
    equal: bool
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "isomorphic": self.isomorphic,
            "gamma_source": self.gamma_source.to_dict() if self.gamma_source else None,
            "gamma_target": self.gamma_target.to_dict() if self.gamma_target else None,
            "equal": self.equal,
            "tolerance": self.tolerance,
        }


def gamma_invariance_test(F: FiniteFDS, Fp: FiniteFDS, phi: FDSMorphism,
                          phi_prime: FDSMorphism, tol: float = 0.05,
                          **gamma_kw) -> InvarianceReport:
    iso = check_isomorphism_witness(phi, phi_prime, F, Fp)
    if not iso:
        return InvarianceReport(False, None, None, False, tol)
    g1 = gamma(F, **gamma_kw)
    g2 = gamma(Fp, **gamma_kw)
    return InvarianceReport(True, g1, g2, g1.agrees_with(g2, tol), tol)


# --------------------------------------------------------------------------
# random instances with known isomorphisms
# --------------------------------------------------------------------------

def _random_scalar(rng: random.Random, field: Field, nonzero: bool = False):
    while True:
        v = field.coerce(Fraction(rng.randint(-3, 3), rng.choice((1, 1, 2, 3))))
        if v or not nonzero:
            return v


def random_sparse_matrix(rng: random.Random, nrows: int, ncols: int,
                         field: Field = QQ, density: float = 0.3) -> Matrix:
    rows = []
    for _ in range(nrows):
        row = {}
        for j in range(ncols):
            if rng.random() < density:
                v = _random_scalar(rng, field, nonzero=True)
                row[j] = v
        rows.append(row)
    return Matrix(nrows, ncols, tuple(rows), field)


def random_invertible(rng: random.Random, n: int, field: Field = QQ) -> tuple[Matrix, Matrix]:
    """A sparse invertible matrix and its inverse (permutation x diagonal x shear)."""
    perm = list(range(n))
    rng.shuffle(perm)
    diag = [_random_scalar(rng, field, nonzero=True) for _ in range(n)]
    # M = P D S with S = I + c E_ab (a != b); M^-1 = S^-1 D^-1 P^-1
    P = Matrix(n, n, tuple({perm[i]: field.coerce(1)} for i in range(n)), field)
    Pinv = _transpose(P)
    D = Matrix(n, n, tuple({i: diag[i]} for i in range(n)), field)
    Dinv = Matrix(n, n, tuple({i: field.inv(diag[i])} for i in range(n)), field)
    S = Sinv = Matrix.identity(n, field)
    if n >= 2:
        a, b = rng.sample(range(n), 2)
        c = _random_scalar(rng, field, nonzero=True)
        S = S.replace(a, b, c)
        Sinv = Sinv.replace(a, b, -c)
    return P @ D @ S, Sinv @ Dinv @ Pinv


def _transpose(M: Matrix) -> Matrix:
    rows = [dict() for _ in range(M.ncols)]
    for i, r in enumerate(M.rows):
        for j, v in r.items():
            rows[j][i] = v
    return Matrix(M.ncols, M.nrows, tuple(rows), M.field)


def random_system(rng: random.Random, n_breakpoints: int = 18, max_dim: int = 8,
                  field: Field = QQ) -> FiniteFDS:
    """Random system with loosely polynomial dimension growth and sparse maps."""
    xs = []
    x = Fraction(1) + Fraction(rng.randint(0, 3), 4)
    for _ in range(n_breakpoints):
        xs.append(x)
        x = x * Fraction(rng.randint(5, 8), 4)
    degree = rng.choice((0, 1, 1, 2))
    dims = []
    for i in range(n_breakpoints):
        base = 1 + ((i + 1) ** degree * max_dim) // (n_breakpoints ** degree)
        dims.append(max(0, min(max_dim, base + rng.randint(-1, 1))))
    mats = []
    for i in range(n_breakpoints - 1):
        inc = Matrix.inclusion(dims[i + 1], dims[i], field) if dims[i + 1] >= dims[i] \
            else _transpose(Matrix.inclusion(dims[i], dims[i + 1], field))
        if rng.random() < 0.5:
            inc = inc @ _kill_one(rng, dims[i], field)
        noise = random_sparse_matrix(rng, dims[i + 1], dims[i], field, density=0.15)
        mats.append(_add(inc, noise) if rng.random() < 0.5 else inc)
    return FiniteFDS(xs, dims, mats, field)


def _kill_one(rng, n, field):
    if n == 0:
        return Matrix.identity(0, field)
    k = rng.randrange(n)
    return Matrix.identity(n, field).replace(k, k, 0)


def _add(A: Matrix, B: Matrix) -> Matrix:
    rows = []
    for ra, rb in zip(A.rows, B.rows):
        r = dict(ra)
        for j, v in rb.items():
            w = r.get(j, 0) + v
            if isinstance(A.field, PrimeField):
                w %= A.field.p
            if w:
                r[j] = w
            else:
                r.pop(j, None)
        rows.append(r)
    return Matrix(A.nrows, A.ncols, tuple(rows), A.field)


@dataclass(frozen=True)
class Conjugate:
    """A copy of ``F`` with a change of basis ``G_i`` at each breakpoint."""

    system: FiniteFDS
    bases: tuple      # G_i : V_{x_i} -> V'_{x_i}
    inverses: tuple


def change_of_basis(F: FiniteFDS, rng: random.Random) -> Conjugate:
    Gs, Ginvs = zip(*(random_invertible(rng, d, F.field) for d in F.dims)) if len(F) else ((), ())
    mats = [Gs[i + 1] @ F.transitions[i] @ Ginvs[i] for i in range(len(F) - 1)]
    return Conjugate(FiniteFDS(F.breakpoints, F.dims, mats, F.field, F.stable_tail),
                     tuple(Gs), tuple(Ginvs))


def rescaled(F: FiniteFDS, B) -> FiniteFDS:
    """``V'_x = V_{B x}`` on breakpoints ``x_i / B`` (all must stay >= 1)."""
    B = _as_fraction(B)
    return FiniteFDS([x / B for x in F.breakpoints], F.dims, F.transitions, F.field, F.stable_tail)


def conjugated_morphism(F: FiniteFDS, C, src_inv: Sequence[Matrix] | None,
                        tgt: Sequence[Matrix] | None, target: FiniteFDS | None = None,
                        target_scale=1) -> FDSMorphism:
    """``G'_{j} psi_{x, C x} G_i^{-1}`` between two basis-changed copies of ``F``.

    ``target`` is the copy receiving the map (defaults to a copy on F's own
    grid); ``target_scale`` is B when the target is ``rescaled(F-copy, B)``.
    """
    C = _as_fraction(C)
    B = _as_fraction(target_scale)
    target = target or F
    maps = []
    for i, x in enumerate(F.breakpoints):
        j = target.step_index(C * x)
        if j is None:
            maps.append(Matrix.zero(0, F.dims[i], F.field))
            continue
        core = F.evaluate(x, target.breakpoints[j] * B)
        if src_inv is not None:
            core = core @ src_inv[i]
        if tgt is not None:
            core = tgt[j] @ core
        maps.append(core)
    return FDSMorphism(C, maps)


@dataclass(frozen=True)
class IsoPair:
    source: FiniteFDS
    target: FiniteFDS
    phi: FDSMorphism
    phi_prime: FDSMorphism


def random_isomorphic_pair(rng: random.Random, field: Field = QQ, **kw) -> IsoPair:
    """A random system, a basis-changed and rescaled copy, and witnesses both ways."""
    F = random_system(rng, field=field, **kw)
    conj = change_of_basis(F, rng)
    B = rng.choice((1, 2, Fraction(3, 2)))
    # keep the copy's first breakpoint >= 1
    if F.breakpoints[0] / B < 1:
        B = 1
    target = rescaled(conj.system, B)
    C = rng.choice((1, 2, Fraction(5, 4)))
    # phi: V_x -> V'_{C x} = conj V_{B C x}; needs B C >= 1 which holds
    phi = conjugated_morphism(F, C, None, conj.bases, target=target, target_scale=B)
    # phi': V'_y = conj V_{B y} -> V_{C' y}; need C' >= B so psi goes forward
    Cp = B * rng.choice((1, 2))
    maps = []
    for i, y in enumerate(target.breakpoints):
        j = F.step_index(Cp * y)
        core = F.evaluate(y * B, F.breakpoints[j]) @ conj.inverses[i]
        maps.append(core)
    phi_prime = FDSMorphism(Cp, maps)
    return IsoPair(F, target, phi, phi_prime)


@dataclass(frozen=True)
class SandwichInstance:
    systems: tuple
    u1: FDSMorphism
    u2: FDSMorphism
    u3: FDSMorphism
    b1: FDSMorphism
    b2: FDSMorphism

    def check(self) -> SandwichResult:
        return sandwich_check(self.systems, self.u1, self.u2, self.u3, self.b1, self.b2)


def random_sandwich_instance(rng: random.Random, field: Field = QQ, **kw) -> SandwichInstance:
    """Four basis-changed copies of one random system chained by conjugated structure maps."""
    F = random_system(rng, field=field, **kw)
    copies = [change_of_basis(F, rng) for _ in range(4)]
    consts = [rng.choice((1, 2, Fraction(3, 2))) for _ in range(5)]

    def link(s: int, t: int, C) -> FDSMorphism:
        return conjugated_morphism(F, C, copies[s].inverses, copies[t].bases)

    return SandwichInstance(
        tuple(c.system for c in copies),
        u1=link(0, 1, consts[0]), u2=link(1, 2, consts[1]), u3=link(2, 3, consts[2]),
        b1=link(2, 0, consts[3]), b2=link(3, 1, consts[4]),
    )
