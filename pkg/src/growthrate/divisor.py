"""Normal-crossing compactification models: strata poset, wrapping numbers, d and m_A."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping

from .linalg import format_rational, parse_rational


class DivisorError(ValueError):
    """Raised for a malformed divisor model; ``problems`` lists every violation."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _key(I: Iterable[int]) -> frozenset:
    return frozenset(int(i) for i in I)


@dataclass(frozen=True, eq=False)
class DivisorModel:
    """Combinatorial data of a smooth normal-crossing compactification.

    Components are indexed ``1..k``. ``strata`` holds every ``I`` with
    ``S_I`` nonempty (including the empty set, i.e. M itself);
    ``morse[I]`` is the number of critical points of the auxiliary Morse
    function on ``S_I`` and ``M_H`` counts the fixed points in the region
    where the Hamiltonian vanishes.
    """

    n: int
    k: int
    strata: frozenset
    wrapping: tuple
    morse: Mapping
    M_H: int = 1
    epsilon: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "strata", frozenset(_key(I) for I in self.strata) | {frozenset()})
        object.__setattr__(self, "wrapping", tuple(parse_rational(w) if not isinstance(w, Fraction) else w
                                                   for w in self.wrapping))
        object.__setattr__(self, "morse", {_key(I): int(v) for I, v in dict(self.morse).items()})
        object.__setattr__(self, "epsilon", parse_rational(self.epsilon)
                           if not isinstance(self.epsilon, Fraction) else self.epsilon)

    @property
    def nonempty_strata(self) -> list[frozenset]:
        """Nonempty index sets I (``S_I`` itself nonempty), ordered by size then lexicographically."""
        return sorted((I for I in self.strata if I), key=lambda I: (len(I), sorted(I)))

    def kappa(self, i: int) -> Fraction:
        return self.wrapping[i - 1]

    @property
    def kappa_min(self) -> Fraction:
        return min(self.wrapping)

    def morse_total(self) -> int:
        """Sum of Morse counts over the nonempty strata S_I, I != {}."""
        return sum(self.morse.get(I, 0) for I in self.nonempty_strata)

    def problems(self) -> list[str]:
        out = []
        if self.n < 1:
            out.append(f"complex dimension n must be positive, got {self.n}")
        if self.k < 0:
            out.append(f"number of components k must be >= 0, got {self.k}")
        if len(self.wrapping) != self.k:
            out.append(f"expected {self.k} wrapping numbers, got {len(self.wrapping)}")
        for I in sorted(self.strata, key=lambda I: (len(I), sorted(I))):
            bad = [i for i in I if not 1 <= i <= self.k]
            if bad:
                out.append(f"stratum {sorted(I)} references unknown components {bad}")
            if len(I) > self.n:
                out.append(f"stratum {sorted(I)} has |I| = {len(I)} > n = {self.n}")
            for J in (I - {i} for i in I):
                if J not in self.strata:
                    out.append(f"not downward closed: {sorted(I)} present but {sorted(J)} missing")
        for i, w in enumerate(self.wrapping, start=1):
            if w >= 0:
                out.append(f"wrapping must be negative: kappa_{i} = {format_rational(w)}")
        for I in self.nonempty_strata:
            if I not in self.morse:
                out.append(f"no Morse count for stratum {sorted(I)}")
            elif self.morse[I] < 1:
                out.append(f"Morse count for stratum {sorted(I)} must be positive")
        if self.M_H < 0:
            out.append("M_H must be nonnegative")
        if self.epsilon <= 0:
            out.append("epsilon must be positive")
        return out

    # exchange format ----------------------------------------------------
    def to_dict(self) -> dict:
        strata = [sorted(I) for I in sorted(self.strata, key=lambda I: (len(I), sorted(I)))]
        return {
            "n": self.n,
            "k": self.k,
            "strata": strata,
            "wrapping": [format_rational(w) for w in self.wrapping],
            "morse": [[sorted(I), self.morse[I]] for I in self.nonempty_strata if I in self.morse],
            "M_H": self.M_H,
            "epsilon": format_rational(self.epsilon),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "DivisorModel":
        missing = [k for k in ("n", "k", "strata", "wrapping") if k not in doc]
        if missing:
            raise DivisorError([f"missing field {m!r}" for m in missing])
        morse_doc = doc.get("morse", [])
        if isinstance(morse_doc, dict):  # {"1,2": 4} style
            morse = {_key(s.split(",")) if s else frozenset(): v for s, v in morse_doc.items()}
        else:
            morse = {_key(I): v for I, v in morse_doc}
        try:
            return cls(n=int(doc["n"]), k=int(doc["k"]), strata=[_key(I) for I in doc["strata"]],
                       wrapping=[parse_rational(w) for w in doc["wrapping"]], morse=morse,
                       M_H=int(doc.get("M_H", 1)), epsilon=parse_rational(doc.get("epsilon", "1/2")))
        except (TypeError, ValueError) as exc:
            raise DivisorError([str(exc)]) from exc

    @classmethod
    def from_json(cls, text: str) -> "DivisorModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Validation:
    ok: bool
    diagnostics: tuple = ()

    def __bool__(self):
        return self.ok


def validate(D: DivisorModel) -> Validation:
    probs = D.problems()
    return Validation(not probs, tuple(probs))


def depth_d(D: DivisorModel) -> int:
    """``d = max{ n - dim_C S_I : S_I nonempty } = max |I|``."""
    ne = D.nonempty_strata
    if not ne:
        raise DivisorError(["divisor is empty (only the empty stratum): A would be compact"])
    return max(len(I) for I in ne)


@dataclass(frozen=True)
class CompactificationSet:
    models: tuple

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise ValueError("need at least one compactification")
        ns = {m.n for m in self.models}
        if len(ns) > 1:
            raise ValueError(f"models disagree on complex dimension: {sorted(ns)}")


def m_A(C: CompactificationSet | Iterable[DivisorModel]) -> int:
    """Minimum of d over the supplied compactifications (an upper bound for the true m_A)."""
    if not isinstance(C, CompactificationSet):
        C = CompactificationSet(tuple(C))
    return min(depth_d(D) for D in C.models)


def simplex_model(n: int, k: int, depth: int | None = None, morse_by_size=None,
                  kappa=Fraction(-1), M_H: int = 1, epsilon=Fraction(1, 2)) -> DivisorModel:
    """Model where every I with ``|I| <= depth`` is a nonempty stratum.

    ``morse_by_size`` maps ``|I|`` to the Morse count used on each stratum
    of that size (default: 1 everywhere).
    """
    depth = min(n, k) if depth is None else depth
    strata = [frozenset(c) for s in range(depth + 1) for c in combinations(range(1, k + 1), s)]
    morse_by_size = morse_by_size or {}
    morse = {I: morse_by_size.get(len(I), 1) for I in strata if I}
    return DivisorModel(n, k, strata, [kappa] * k, morse, M_H, epsilon)
