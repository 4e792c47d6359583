"""Conjugacy growth of free products of finite groups.

Elements are reduced words: tuples of letters ``(factor, element)`` with
nonidentity elements and adjacent letters from different factors. Word
length in the default generating set (every nonidentity factor element)
is the number of letters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

from . import fds

DEFAULT_WORD_CAP = 3_000_000
DEFAULT_WITNESS_CAP = 16


class GroupTableError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteGroupTable:
    size: int
    table: tuple          # table[x][y] = x * y
    identity: int
    inverse: tuple
    names: tuple | None = None

    @classmethod
    def from_table(cls, table: Sequence[Sequence[int]], names=None) -> "FiniteGroupTable":
        n = len(table)
        tab = tuple(tuple(int(v) for v in row) for row in table)
        if n == 0:
            raise GroupTableError("empty group table")
        if any(len(row) != n for row in tab):
            raise GroupTableError("table must be square")
        if any(not 0 <= v < n for row in tab for v in row):
            raise GroupTableError("table entries out of range")
        ids = [e for e in range(n) if all(tab[e][x] == x and tab[x][e] == x for x in range(n))]
        if not ids:
            raise GroupTableError("no two-sided identity")
        e = ids[0]
        inv = []
        for x in range(n):
            cands = [y for y in range(n) if tab[x][y] == e and tab[y][x] == e]
            if not cands:
                raise GroupTableError(f"element {x} has no inverse")
            inv.append(cands[0])
        for x in range(n):
            for y in range(n):
                xy = tab[x][y]
                for z in range(n):
                    if tab[xy][z] != tab[x][tab[y][z]]:
                        raise GroupTableError(f"not associative at ({x}, {y}, {z})")
        if names is not None and len(names) != n:
            raise GroupTableError("need one name per element")
        return cls(n, tab, e, tuple(inv), tuple(names) if names else None)

    @classmethod
    def cyclic(cls, n: int) -> "FiniteGroupTable":
        return cls.from_table([[(i + j) % n for j in range(n)] for i in range(n)])

    @classmethod
    def symmetric3(cls) -> "FiniteGroupTable":
        from itertools import permutations
        perms = list(permutations(range(3)))
        idx = {p: i for i, p in enumerate(perms)}
        tab = [[idx[tuple(p[q[i]] for i in range(3))] for q in perms] for p in perms]
        return cls.from_table(tab, names=["".join(map(str, p)) for p in perms])

    @classmethod
    def from_dict(cls, doc: dict) -> "FiniteGroupTable":
        if "table" not in doc:
            raise GroupTableError("group document missing 'table'")
        size = int(doc.get("size", 0)) or int(round(math.sqrt(len(doc["table"]))))
        flat = doc["table"]
        if flat and isinstance(flat[0], list):
            rows = flat
        else:
            if len(flat) != size * size:
                raise GroupTableError(f"table has {len(flat)} entries, expected {size * size}")
            rows = [flat[i * size:(i + 1) * size] for i in range(size)]
        if len(rows) != size:
            raise GroupTableError(f"table has {len(rows)} rows, size says {size}")
        return cls.from_table(rows, doc.get("names"))

    @classmethod
    def from_json(cls, text: str) -> "FiniteGroupTable":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        doc = {"size": self.size, "table": [v for row in self.table for v in row]}
        if self.names:
            doc["names"] = list(self.names)
        return doc

    def mul(self, x: int, y: int) -> int:
        return self.table[x][y]

    def nonidentity(self) -> list[int]:
        return [x for x in range(self.size) if x != self.identity]

    def order(self, x: int) -> int:
        k, y = 1, x
        while y != self.identity:
            y = self.table[y][x]
            k += 1
        return k

    def class_rep(self, x: int) -> int:
        """Smallest element conjugate to x."""
        return min(self.table[self.table[g][x]][self.inverse[g]] for g in range(self.size))

    def nontrivial_classes(self) -> int:
        return len({self.class_rep(x) for x in self.nonidentity()})


@dataclass(frozen=True, eq=False)
class FreeProduct:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("need at least one factor")

    @classmethod
    def of_cyclic(cls, *orders: int) -> "FreeProduct":
        return cls(tuple(FiniteGroupTable.cyclic(n) for n in orders))

    def letters(self) -> list[tuple[int, int]]:
        return [(f, x) for f, G in enumerate(self.factors) for x in G.nonidentity()]

    def check_letter(self, letter) -> tuple[int, int]:
        f, x = letter
        if not 0 <= f < len(self.factors):
            raise ValueError(f"invalid factor index {f}")
        if not 0 <= x < self.factors[f].size:
            raise ValueError(f"invalid element index {x} in factor {f}")
        return (int(f), int(x))

    def reduce(self, letters: Iterable) -> tuple:
        """Normal form: merge adjacent same-factor letters, drop identities."""
        out: list = []
        for letter in letters:
            f, x = self.check_letter(letter)
            G = self.factors[f]
            if x == G.identity:
                continue
            if out and out[-1][0] == f:
                y = G.mul(out[-1][1], x)
                if y == G.identity:
                    out.pop()
                else:
                    out[-1] = (f, y)
            else:
                out.append((f, x))
        return tuple(out)

    def mul(self, u: tuple, v: tuple) -> tuple:
        return self.reduce(u + v)

    def inverse(self, w: tuple) -> tuple:
        return tuple((f, self.factors[f].inverse[x]) for f, x in reversed(w))

    def conjugate(self, w: tuple, g: tuple) -> tuple:
        """``g w g^{-1}``."""
        return self.reduce(g + w + self.inverse(g))


def least_rotation(s: Sequence) -> int:
    """Booth's algorithm: start index of the lexicographically least rotation."""
    n = len(s)
    if n == 0:
        return 0
    ss = list(s) + list(s)
    f = [-1] * (2 * n)
    k = 0
    for j in range(1, 2 * n):
        sj = ss[j]
        i = f[j - k - 1]
        while i != -1 and sj != ss[k + i + 1]:
            if sj < ss[k + i + 1]:
                k = j - i - 1
            i = f[i]
        if sj != ss[k + i + 1]:
            if sj < ss[k]:
                k = j
            f[j - k] = -1
        else:
            f[j - k] = i + 1
    return k


def canonical_rotation(s: Sequence) -> tuple:
    k = least_rotation(s)
    return tuple(s[k:]) + tuple(s[:k])


def cyclically_reduce(G: FreeProduct, w: tuple) -> tuple:
    """A cyclically reduced conjugate of w (ends in different factors, or length <= 1)."""
    w = tuple(w)
    while len(w) >= 2 and w[0][0] == w[-1][0]:
        f = w[0][0]
        y = G.factors[f].mul(w[-1][1], w[0][1])
        mid = w[1:-1]
        w = mid if y == G.factors[f].identity else mid + ((f, y),)
    return w


@dataclass(frozen=True)
class CyclicWord:
    word: tuple   # cyclically reduced
    key: tuple    # canonical representative of the conjugacy class


def conjugacy_key(G: FreeProduct, w: tuple) -> CyclicWord:
    c = cyclically_reduce(G, w)
    if len(c) == 0:
        return CyclicWord(c, ())
    if len(c) == 1:
        f, x = c[0]
        return CyclicWord(c, ((f, G.factors[f].class_rep(x)),))
    return CyclicWord(c, canonical_rotation(c))


# --------------------------------------------------------------------------
# counting classes
# --------------------------------------------------------------------------

def words_by_length(G: FreeProduct, L: int, cap: int = DEFAULT_WORD_CAP):
    """Yield ``(length, word)`` for every reduced word of length <= L, shell by shell."""
    letters = G.letters()
    shell = [()]
    total = 1
    yield 0, ()
    for l in range(1, L + 1):
        nxt = [w + (a,) for w in shell for a in letters if not w or w[-1][0] != a[0]]
        total += len(nxt)
        if total > cap:
            raise ValueError(f"word enumeration exceeds cap {cap} at length {l}")
        for w in nxt:
            yield l, w
        shell = nxt


def _cayley_shells(G: FreeProduct, gens: Sequence[tuple], L: int, cap: int):
    seen = {(): 0}
    frontier = [()]
    yield 0, ()
    for l in range(1, L + 1):
        nxt = []
        for w in frontier:
            for g in gens:
                u = G.mul(w, g)
                if u not in seen:
                    seen[u] = l
                    nxt.append(u)
        if len(seen) > cap:
            raise ValueError(f"Cayley ball exceeds cap {cap} at radius {l}")
        for u in nxt:
            yield l, u
        frontier = nxt


def _adjacency_traces(G: FreeProduct, L: int) -> list[int]:
    """``trace(M^d)`` for d = 0..L, M the letter adjacency matrix (different factors)."""
    sizes = [F.size - 1 for F in G.factors]
    letters = [f for f, s in enumerate(sizes) for _ in range(s)]
    n = len(letters)
    M = [[1 if letters[i] != letters[j] else 0 for j in range(n)] for i in range(n)]
    P = [[int(i == j) for j in range(n)] for i in range(n)]
    out = [n]
    for _ in range(L):
        P = [[sum(P[i][k] * M[k][j] for k in range(n) if M[k][j]) for j in range(n)] for i in range(n)]
        out.append(sum(P[i][i] for i in range(n)))
    return out


def _totient(n: int) -> int:
    out, m, p = n, n, 2
    while p * p <= m:
        if m % p == 0:
            while m % p == 0:
                m //= p
            out -= out // p
        p += 1
    if m > 1:
        out -= out // m
    return out


def cyclic_class_counts(G: FreeProduct, L: int) -> list[int]:
    """Number of conjugacy classes whose cyclically reduced length is exactly l, l = 0..L.

    For l >= 2 these are rotation classes of cyclically reduced words, counted
    by Burnside's lemma from traces of the letter adjacency matrix.
    """
    tr = _adjacency_traces(G, L)
    out = [1]
    if L >= 1:
        out.append(sum(F.nontrivial_classes() for F in G.factors))
    for l in range(2, L + 1):
        s = sum(_totient(l // d) * tr[d] for d in range(1, l + 1) if l % d == 0)
        out.append(s // l)
    return out


def count_classes(G: FreeProduct, L: int, method: str = "enumerate",
                  generators: Sequence[tuple] | None = None,
                  cap: int = DEFAULT_WORD_CAP) -> list[int]:
    """``[r_1, ..., r_L]``: classes meeting the ball of radius i.

    ``method="enumerate"`` collects conjugacy keys of every word (or of the
    Cayley ball for custom ``generators``); ``method="burnside"`` counts
    necklaces of cyclically reduced words and only supports the default
    generating set.
    """
    if L < 1:
        raise ValueError("max length must be >= 1")
    if method == "burnside":
        if generators is not None:
            raise ValueError("burnside counting needs the default generating set")
        per = cyclic_class_counts(G, L)
        out, acc = [], per[0]
        for l in range(1, L + 1):
            acc += per[l]
            out.append(acc)
        return out
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    if generators is None:
        stream = words_by_length(G, L, cap)
    else:
        gens = [G.reduce(g) for g in generators]
        stream = _cayley_shells(G, gens, L, cap)
    keys: set = set()
    counts = [0] * (L + 1)
    for l, w in stream:
        keys.add(conjugacy_key(G, w).key)
        counts[l] = len(keys)
    for l in range(1, L + 1):
        counts[l] = max(counts[l], counts[l - 1])
    return counts[1:]


def closure_partition(G: FreeProduct, L: int, slack: int = 4,
                      cap: int = DEFAULT_WORD_CAP) -> dict[tuple, int]:
    """Label words of length <= L by conjugacy class without using keys.

    Union-find over all words of length <= L + slack, joining ``w`` and
    ``g w g^{-1}`` for every generator g whenever both fit in the budget.
    Classes whose only connecting path leaves the budget stay split, so
    this under-merges; it is meant for cross-checking at small sizes.
    """
    words = [w for _, w in words_by_length(G, L + slack, cap)]
    index = {w: i for i, w in enumerate(words)}
    parent = list(range(len(words)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    gens = [(a,) for a in G.letters()]
    for w in words:
        for g in gens:
            j = index.get(G.conjugate(w, g))
            if j is not None:
                a, b = find(index[w]), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    return {w: find(i) for i, w in enumerate(words) if len(w) <= L}


def closure_class_counts(G: FreeProduct, L: int, slack: int = 4) -> list[int]:
    """``r_1..r_L`` from :func:`closure_partition`."""
    labels = closure_partition(G, L, slack)
    return [len({c for w, c in labels.items() if len(w) <= i}) for i in range(1, L + 1)]


def gamma_cong(r: Sequence[int], **gamma_kw) -> fds.GammaEstimate:
    xs = tuple(range(1, len(r) + 1))
    return fds.gamma(fds.SampledGrowth(xs, tuple(int(v) for v in r)), **gamma_kw)


def products_of_two(G: FreeProduct) -> list[tuple]:
    """Default generators together with all their pairwise products."""
    gens = [(a,) for a in G.letters()]
    extra = {G.mul(u, v) for u in gens for v in gens}
    return gens + sorted(w for w in extra if w and w not in set(gens))


# --------------------------------------------------------------------------
# the a_I witnesses
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    I: frozenset
    letters: tuple    # as written in the generators a, b, c
    word: tuple       # reduced normal form

    @property
    def length(self) -> int:
        return len(self.letters)


def _default_abc(G: FreeProduct):
    if len(G.factors) < 3:
        raise ValueError("witnesses need three factors")
    out = []
    for f in range(3):
        non = G.factors[f].nonidentity()
        if not non:
            raise ValueError(f"factor {f} is trivial")
        out.append((f, non[0]))
    return tuple(out)


def witness_family(G: FreeProduct, k: int, I: Iterable[int], abc=None) -> Witness:
    """``a_I = bc prod_{i=1..k} a^{q(i)} (bc)^{1-q(i)}`` with ``q`` the indicator of I."""
    a, b, c = abc or _default_abc(G)
    for f, x in (a, b, c):
        if x == G.factors[f].identity:
            raise ValueError("witness letters must be nontrivial")
    I = frozenset(I)
    if any(not 1 <= i <= k for i in I):
        raise ValueError(f"I must be a subset of 1..{k}")
    letters = [b, c]
    for i in range(1, k + 1):
        letters += [a] if i in I else [b, c]
    letters = tuple(letters)
    return Witness(I, letters, G.reduce(letters))


def _rotation_classes(k: int) -> dict[frozenset, int]:
    """Label each subset of Z/k (as 1..k) by its rotation class."""
    label: dict = {}
    classes = 0
    for size in range(k + 1):
        for I in combinations(range(1, k + 1), size):
            I = frozenset(I)
            if I in label:
                continue
            for j in range(k):
                label[frozenset((i - 1 + j) % k + 1 for i in I)] = classes
            classes += 1
    return label


def necklace_count(n: int) -> int:
    """Binary necklaces of length n (Burnside)."""
    if n == 0:
        return 1
    return sum(_totient(n // d) * 2**d for d in range(1, n + 1) if n % d == 0) // n


@dataclass(frozen=True)
class LowerBoundReport:
    k: int
    subset_classes: int        # subsets of Z/k up to rotation
    witness_classes: int       # distinct conjugacy keys among the a_I
    bound: float               # 2^k / k
    lengths_ok: bool
    same_class_if_rotation: bool
    rotation_if_same_class: bool

    @property
    def ok(self) -> bool:
        return self.lengths_ok and self.witness_classes >= self.bound and self.subset_classes >= self.bound

    def to_dict(self) -> dict:
        return {"k": self.k, "subset_classes": self.subset_classes,
                "witness_classes": self.witness_classes, "bound": self.bound,
                "lengths_ok": self.lengths_ok,
                "same_class_if_rotation": self.same_class_if_rotation,
                "rotation_if_same_class": self.rotation_if_same_class, "ok": self.ok}


def verify_lower_bound(k: int, G: FreeProduct | None = None, abc=None,
                       cap: int = DEFAULT_WITNESS_CAP) -> LowerBoundReport:
    """Count conjugacy classes among the ``2^k`` witnesses ``a_I`` against ``2^k / k``.

    Also records how the witness-key partition compares with rotation
    classes of subsets of Z/k, in both directions.
    """
    if not 1 <= k <= cap:
        raise ValueError(f"k must lie in 1..{cap}")
    G = G or FreeProduct.of_cyclic(2, 2, 2)
    label = _rotation_classes(k)
    keys: dict[frozenset, tuple] = {}
    lengths_ok = True
    for I in label:
        w = witness_family(G, k, I, abc)
        lengths_ok &= 2 + k <= w.length <= 2 + 2 * k
        keys[I] = conjugacy_key(G, w.word).key
    by_class: dict[int, set] = {}
    by_key: dict[tuple, set] = {}
    for I, key in keys.items():
        by_class.setdefault(label[I], set()).add(key)
        by_key.setdefault(key, set()).add(label[I])
    return LowerBoundReport(
        k=k,
        subset_classes=len(by_class),
        witness_classes=len(by_key),
        bound=2**k / k,
        lengths_ok=lengths_ok,
        same_class_if_rotation=all(len(v) == 1 for v in by_class.values()),
        rotation_if_same_class=all(len(v) == 1 for v in by_key.values()),
    )
