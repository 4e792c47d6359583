"""Exact sparse linear algebra over Q or GF(p).

Matrices are stored as a tuple of sparse rows (``{col: value}``) with
explicit shape, so zero-dimensional spaces and 0 x n maps are first-class.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"``, ``"p"`` or an int into a Fraction."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, str):
        try:
            return Fraction(text.strip())
        except ValueError as exc:
            raise ValueError(f"not a rational string: {text!r}") from exc
    raise TypeError(f"expected rational string, got {type(text).__name__}")


def format_rational(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


class Field:
    """Coefficient field. Subclasses only fix how scalars are normalised."""

    name = "field"

    def coerce(self, x):
        raise NotImplementedError

    def inv(self, x):
        raise NotImplementedError

    def to_string(self, x) -> str:
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.__dict__.items()))))


class RationalField(Field):
    name = "q"

    def coerce(self, x):
        return parse_rational(x) if not isinstance(x, Fraction) else x

    def inv(self, x):
        return 1 / x

    def to_string(self, x) -> str:
        return format_rational(Fraction(x))

    def __repr__(self):
        return "QQ"


class PrimeField(Field):
    def __init__(self, p: int):
        if p < 2 or any(p % d == 0 for d in range(2, int(p**0.5) + 1)):
            raise ValueError(f"{p} is not prime")
        self.p = p

    @property
    def name(self):
        return f"fp:{self.p}"

    def coerce(self, x):
        if isinstance(x, int):
            return x % self.p
        q = parse_rational(x)
        if q.denominator % self.p == 0:
            raise ValueError(f"{format_rational(q)} has no image in GF({self.p})")
        return q.numerator * pow(q.denominator, -1, self.p) % self.p

    def inv(self, x):
        return pow(x, -1, self.p)

    def to_string(self, x) -> str:
        return str(x % self.p)

    def __repr__(self):
        return f"GF({self.p})"


QQ = RationalField()


def field_from_spec(spec: str) -> Field:
    """``"q"`` -> QQ, ``"fp:P"`` -> GF(P)."""
    spec = spec.strip().lower()
    if spec in ("q", "qq", "rational"):
        return QQ
    if spec.startswith("fp:"):
        return PrimeField(int(spec[3:]))
    raise ValueError(f"unknown field {spec!r}; use 'q' or 'fp:P'")


def _reduce(field: Field, x):
    if isinstance(field, PrimeField):
        return x % field.p
    return x


@dataclass(frozen=True, eq=False)
class Matrix:
    """Immutable sparse matrix with ``nrows x ncols`` shape over ``field``."""

    nrows: int
    ncols: int
    rows: tuple  # tuple of dict[int, scalar], nonzero entries only
    field: Field = QQ

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, nrows: int, ncols: int, field: Field = QQ) -> "Matrix":
        return cls(nrows, ncols, tuple({} for _ in range(nrows)), field)

    @classmethod
    def identity(cls, n: int, field: Field = QQ) -> "Matrix":
        one = field.coerce(1)
        return cls(n, n, tuple({i: one} for i in range(n)), field)

    @classmethod
    def inclusion(cls, nrows: int, ncols: int, field: Field = QQ) -> "Matrix":
        """The standard map onto the first ``ncols`` coordinates (nrows >= ncols)."""
        one = field.coerce(1)
        rows = tuple({i: one} if i < ncols else {} for i in range(nrows))
        return cls(nrows, ncols, rows, field)

    @classmethod
    def from_dense(cls, data: Sequence[Sequence], field: Field = QQ,
                   ncols: int | None = None) -> "Matrix":
        data = [list(r) for r in data]
        if ncols is None:
            ncols = len(data[0]) if data else 0
        rows = []
        for r in data:
            if len(r) != ncols:
                raise ValueError("ragged matrix rows")
            row = {}
            for j, v in enumerate(r):
                v = field.coerce(v)
                if v:
                    row[j] = v
            rows.append(row)
        return cls(len(rows), ncols, tuple(rows), field)

    @classmethod
    def from_flat(cls, nrows: int, ncols: int, entries: Sequence,
                  field: Field = QQ) -> "Matrix":
        """Build from a row-major flat list."""
        if len(entries) != nrows * ncols:
            raise ValueError(
                f"expected {nrows * ncols} entries for {nrows}x{ncols}, got {len(entries)}")
        dense = [entries[i * ncols:(i + 1) * ncols] for i in range(nrows)]
        return cls.from_dense(dense, field, ncols=ncols)

    # conversion ---------------------------------------------------------
    def to_dense(self) -> list[list]:
        zero = self.field.coerce(0)
        return [[row.get(j, zero) for j in range(self.ncols)] for row in self.rows]

    def to_flat_strings(self) -> list[str]:
        return [self.field.to_string(v) for r in self.to_dense() for v in r]

    def with_field(self, field: Field) -> "Matrix":
        if field == self.field:
            return self
        rows = []
        for row in self.rows:
            new = {}
            for j, v in row.items():
                w = field.coerce(v if isinstance(v, Fraction) else Fraction(v))
                if w:
                    new[j] = w
            rows.append(new)
        return Matrix(self.nrows, self.ncols, tuple(rows), field)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    # arithmetic ---------------------------------------------------------
    def __matmul__(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.nrows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        field = self.field
        rows = []
        orows = other.rows
        for row in self.rows:
            acc: dict = {}
            for k, a in row.items():
                for j, b in orows[k].items():
                    acc[j] = acc.get(j, 0) + a * b
            out = {}
            for j, v in acc.items():
                v = _reduce(field, v)
                if v:
                    out[j] = v
            rows.append(out)
        return Matrix(self.nrows, other.ncols, tuple(rows), field)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.shape == other.shape and all(
            a == b for a, b in zip(self.rows, other.rows))

    def __hash__(self):
        return hash((self.shape, tuple(tuple(sorted(r.items())) for r in self.rows)))

    def replace(self, i: int, j: int, value) -> "Matrix":
        """Copy with entry (i, j) set to ``value``."""
        rows = [dict(r) for r in self.rows]
        v = self.field.coerce(value)
        if v:
            rows[i][j] = v
        else:
            rows[i].pop(j, None)
        return Matrix(self.nrows, self.ncols, tuple(rows), self.field)

    def get(self, i: int, j: int):
        return self.rows[i].get(j, self.field.coerce(0))

    def is_zero(self) -> bool:
        return not any(self.rows)

    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    # elimination --------------------------------------------------------
    def rank(self) -> int:
        """Exact rank by sparse Gaussian elimination."""
        field = self.field
        pivots: dict[int, dict] = {}  # pivot column -> normalised row
        rank = 0
        for row in self.rows:
            r = dict(row)
            while r:
                col = min(r)
                prow = pivots.get(col)
                if prow is None:
                    inv = field.inv(r[col])
                    pivots[col] = {j: _reduce(field, v * inv) for j, v in r.items()}
                    rank += 1
                    break
                f = r[col]
                for j, v in prow.items():
                    w = _reduce(field, r.get(j, 0) - f * v)
                    if w:
                        r[j] = w
                    else:
                        r.pop(j, None)
            if rank == min(self.nrows, self.ncols):
                break
        return rank

    def __repr__(self):
        return f"Matrix({self.nrows}x{self.ncols}, nnz={self.nnz()}, {self.field!r})"


def compose(maps: Iterable[Matrix]) -> Matrix:
    """Compose maps applied left to right: ``compose([A, B]) == B @ A``."""
    out = None
    for m in maps:
        out = m if out is None else m @ out
    if out is None:
        raise ValueError("nothing to compose")
    return out
