"""Hamiltonians compatible with a normal-crossing compactification.

``H = sum_i nu(r_i)`` where ``r_i`` is the radial coordinate normal to the
i-th divisor. In a fiber the flow of ``lambda H`` rotates the i-th disk at
angular speed ``lambda * omega(r_i)`` with ``omega(r) = -nu'(r) / (2 r)``,
so 1-periodic orbits sit at radii where ``lambda omega(r) = 2 pi k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Iterator, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from . import fds
from .divisor import DivisorModel, depth_d

GRID_POINTS = 10_000
ROOT_RTOL = 1e-10
DEFAULT_FAMILY_CAP = 10_000_000
TWO_PI = 2.0 * math.pi


class ProfileError(ValueError):
    pass


class CensusCapError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# the radial profile nu
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NuProfile:
    """Radial profile ``nu : [0, epsilon) -> [0, inf)``.

    ``kind="cubic"``: ``nu = eps^2/4 - t^2`` on ``[0, a]``, the C^1 cubic
    Hermite segment down to 0 on ``[a, b]``, and 0 on ``[b, eps)``.
    ``kind="samples"``: monotone PCHIP interpolation of ``(t, nu)`` samples.
    ``small`` is the threshold below which ``nu > 0`` counts as small.
    """

    epsilon: float
    kind: str
    params: tuple
    small: float | None = None

    # constructors -------------------------------------------------------
    @classmethod
    def cubic(cls, epsilon: float, a: float, b: float, small: float | None = None) -> "NuProfile":
        epsilon, a, b = float(epsilon), float(a), float(b)
        if not 0 < a < b < epsilon:
            raise ProfileError(f"need 0 < a < b < epsilon, got a={a}, b={b}, epsilon={epsilon}")
        if a >= epsilon / 2:
            raise ProfileError("cap eps^2/4 - t^2 must still be positive at the glue point a")
        return cls(epsilon, "cubic", (a, b), small)

    @classmethod
    def default(cls, epsilon=0.5, kappa_min=-1.0) -> "NuProfile":
        """Cubic-glue profile whose support fits inside ``min(-kappa_min, 1)``."""
        epsilon = float(epsilon)
        b = min(0.8 * epsilon, 0.9 * min(-float(kappa_min), 1.0))
        return cls.cubic(epsilon, 0.375 * b, b)

    @classmethod
    def from_samples(cls, t: Sequence[float], nu: Sequence[float], epsilon: float,
                     small: float | None = None) -> "NuProfile":
        t = tuple(float(v) for v in t)
        nu = tuple(float(v) for v in nu)
        if len(t) != len(nu) or len(t) < 4:
            raise ProfileError("need at least 4 matching (t, nu) samples")
        if t[0] != 0.0 or any(b <= a for a, b in zip(t, t[1:])):
            raise ProfileError("sample radii must start at 0 and increase strictly")
        if t[-1] >= epsilon:
            raise ProfileError("samples must lie in [0, epsilon)")
        return cls(float(epsilon), "samples", (t, nu), small)

    @classmethod
    def from_dict(cls, doc: dict) -> "NuProfile":
        kind = doc.get("kind", "cubic")
        eps = float(Fraction(str(doc["epsilon"])))
        small = doc.get("small")
        small = None if small is None else float(small)
        if kind == "cubic":
            return cls.cubic(eps, float(Fraction(str(doc["a"]))), float(Fraction(str(doc["b"]))), small)
        if kind == "samples":
            return cls.from_samples(doc["t"], doc["nu"], eps, small)
        raise ProfileError(f"unknown profile kind {kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "epsilon": self.epsilon}
        if self.kind == "cubic":
            out["a"], out["b"] = self.params
        else:
            out["t"], out["nu"] = list(self.params[0]), list(self.params[1])
        if self.small is not None:
            out["small"] = self.small
        return out

    # evaluation ---------------------------------------------------------
    @cached_property
    def _pchip(self):
        t, nu = self.params
        return PchipInterpolator(np.array(t), np.array(nu), extrapolate=True)

    @cached_property
    def support_end(self) -> float:
        """Smallest radius beyond which nu vanishes identically."""
        if self.kind == "cubic":
            return self.params[1]
        t, nu = self.params
        last = max(i for i, v in enumerate(nu) if v > 0)
        return t[min(last + 1, len(t) - 1)]

    def _cubic_parts(self, t):
        a, b = self.params
        eps = self.epsilon
        h = b - a
        y0 = eps * eps / 4 - a * a
        m0 = -2 * a
        s = (t - a) / h
        return a, b, h, y0, m0, s

    def nu(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "samples":
            return np.where(t < self.support_end, np.maximum(self._pchip(t), 0.0), 0.0)
        a, b, h, y0, m0, s = self._cubic_parts(t)
        cap = self.epsilon**2 / 4 - t * t
        glue = y0 * (2 * s**3 - 3 * s**2 + 1) + h * m0 * (s**3 - 2 * s**2 + s)
        return np.where(t <= a, cap, np.where(t < b, glue, 0.0))

    def dnu(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "samples":
            return np.where(t < self.support_end, self._pchip.derivative()(t), 0.0)
        a, b, h, y0, m0, s = self._cubic_parts(t)
        glue = (y0 * (6 * s**2 - 6 * s) + h * m0 * (3 * s**2 - 4 * s + 1)) / h
        return np.where(t <= a, -2 * t, np.where(t < b, glue, 0.0))

    def d2nu(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "samples":
            return np.where(t < self.support_end, self._pchip.derivative(2)(t), 0.0)
        a, b, h, y0, m0, s = self._cubic_parts(t)
        glue = (y0 * (12 * s - 6) + h * m0 * (6 * s - 4)) / (h * h)
        return np.where(t <= a, -2.0 + 0 * t, np.where(t < b, glue, 0.0))

    def omega(self, r):
        """Angular speed ``-nu'(r) / (2 r)``; the r -> 0 limit is used at r = 0."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        w = -self.dnu(safe) / (2 * safe)
        if self.kind == "cubic":
            w = np.where(r <= self.params[0], 1.0, w)
        else:
            w = np.where(r > 0, w, -self.d2nu(np.zeros_like(r)) / 2)
        return w

    # derived quantities -------------------------------------------------
    @cached_property
    def grid(self) -> np.ndarray:
        end = self.support_end
        return np.linspace(end / GRID_POINTS, end, GRID_POINTS, endpoint=False)

    @cached_property
    def omega_max(self) -> float:
        return float(max(np.max(self.omega(self.grid)), float(self.omega(0.0))))

    @cached_property
    def tau(self) -> Fraction:
        """Smallest integer strictly above ``sup -4 nu'(t) / t`` (= 8 sup omega)."""
        return Fraction(math.floor(8 * self.omega_max * (1 + 1e-9)) + 1)

    @cached_property
    def small_threshold(self) -> float:
        if self.small is not None:
            return self.small
        return 0.05 * float(self.nu(0.0))

    @cached_property
    def inflection_r(self) -> float:
        """Radius where nu'' changes sign inside ``{nu > 0}``."""
        changes = self._nu2_sign_changes()
        if len(changes) != 1:
            raise ProfileError(f"nu'' changes sign {len(changes)} times in {{nu > 0}}")
        lo, hi = changes[0]
        if self.kind == "cubic" and lo <= self.params[0] <= hi:
            a = self.params[0]
            if float(self.d2nu(a + 1e-12)) > 0:
                return a
        f = lambda t: float(self.d2nu(t))
        if f(lo) * f(hi) < 0:
            return brentq(f, lo, hi, rtol=ROOT_RTOL)
        return 0.5 * (lo + hi)

    def _nu2_sign_changes(self) -> list[tuple[float, float]]:
        t = self.grid
        pos = self.nu(t) > 0
        s = np.sign(self.d2nu(t))
        t, s = t[pos & (s != 0)], s[pos & (s != 0)]
        idx = np.nonzero(s[1:] != s[:-1])[0]
        # interpolated profiles wiggle around kinks of nu''; changes closer
        # than 1% of the support form one cluster, which counts only if the
        # sign actually flips across it
        gap = 0.01 * self.support_end
        clusters: list[list[int]] = []
        for i in idx:
            if clusters and t[i] - t[clusters[-1][-1] + 1] < gap:
                clusters[-1].append(i)
            else:
                clusters.append([i])
        return [(float(t[c[0]]), float(t[c[-1] + 1])) for c in clusters
                if s[c[0]] != s[c[-1] + 1]]

    def problems(self, kappas: Sequence = ()) -> list[str]:
        """Sampled checks of the qualitative requirements on nu."""
        out = []
        eps = self.epsilon
        t = self.grid
        nu, dnu = self.nu(t), self.dnu(t)
        near0 = t[: max(3, GRID_POINTS // 200)]
        if not np.allclose(self.nu(near0), eps * eps / 4 - near0**2, rtol=1e-3, atol=1e-9):
            out.append("nu must equal eps^2/4 - t^2 near 0")
        if self.support_end >= eps:
            out.append("nu must vanish near epsilon")
        if np.any(nu < -1e-15):
            out.append("nu must be nonnegative")
        if np.any((nu > 0) & (dnu >= 0)):
            out.append("nu' must be negative wherever nu > 0")
        n_changes = len(self._nu2_sign_changes())
        if n_changes != 1:
            out.append(f"nu'' must change sign exactly once in {{nu > 0}} (found {n_changes})")
        small = (nu > 0) & (nu < self.small_threshold)
        if np.any(small):
            x_small = float(np.max(t[small]))
            if x_small >= 1:
                out.append(f"small-nu region reaches x = {x_small:.4g} >= 1")
            for i, kap in enumerate(kappas, start=1):
                if x_small >= -float(kap):
                    out.append(f"small-nu region reaches x = {x_small:.4g} >= -kappa_{i}")
        return out

    def validate(self, kappas: Sequence = ()) -> None:
        probs = self.problems(kappas)
        if probs:
            raise ProfileError("; ".join(probs))


def angular_speed(P: NuProfile, r: float) -> float:
    if not 0 < r < P.epsilon or float(P.nu(r)) <= 0:
        raise ValueError(f"r = {r} is outside the support of nu")
    return float(P.omega(r))


def axis_density(P: NuProfile, r, kappa) -> np.ndarray:
    """Action per unit lambda of one axis: ``-nu(r) - (r^2 + kappa) omega(r)``."""
    r = np.asarray(r, dtype=float)
    return -P.nu(r) - (r * r + float(kappa)) * P.omega(r)


def axis_sup(P: NuProfile, kappa) -> float:
    """Sup over the support of :func:`axis_density` (dense grid, then refined)."""
    t = P.grid
    vals = axis_density(P, t, kappa)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda r: -float(axis_density(P, r, kappa)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    # the cap limit r -> 0
    return max(best, float(axis_density(P, 0.0, kappa)))


# --------------------------------------------------------------------------
# orbits
# --------------------------------------------------------------------------

def effective_lambda(P: NuProfile, lam: float) -> float:
    """Nudge lambda off the discrete set where ``lambda omega_max`` lies in 2 pi Z."""
    lam = float(lam)
    ratio = lam * P.omega_max / TWO_PI
    if abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio):
        step = P.support_end / GRID_POINTS
        return lam * (1 + step)
    return lam


def axis_solutions(P: NuProfile, lam: float) -> list[tuple[int, float]]:
    """All ``(k, r)`` with ``lambda omega(r) = 2 pi k``, ``k >= 1``, sorted by (k, r).

    Roots are bracketed by sign changes on the grid and refined by bisection;
    tangential (even-multiplicity) roots produce no sign change and are not counted.
    """
    lam = effective_lambda(P, lam)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    t = P.grid
    w = P.omega(t)
    kmax = math.floor(lam * P.omega_max / TWO_PI)
    out = []
    for k in range(1, kmax + 1):
        g = lam * w - TWO_PI * k
        s = np.sign(g)
        for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
            f = lambda r: lam * float(P.omega(r)) - TWO_PI * k
            r = brentq(f, t[i], t[i + 1], xtol=1e-300, rtol=ROOT_RTOL, maxiter=500)
            out.append((k, r))
        for i in np.nonzero(s == 0)[0]:
            if 0 < i < len(s) - 1 and s[i - 1] * s[i + 1] < 0:
                out.append((k, float(t[i])))
    out.sort()
    return out


@dataclass(frozen=True)
class OrbitFamily:
    """An ``(S^1)^l`` torus of fixed points over stratum ``I``."""

    I: tuple
    windings: tuple
    radii: tuple

    @property
    def dimension(self) -> int:
        return len(self.I)


def action(f: OrbitFamily, P: NuProfile, D: DivisorModel, lam: float) -> float:
    """``A = -lambda sum nu(r_i) - sum (r_i^2 + kappa_i) 2 pi k_i``."""
    total = 0.0
    for i, k, r in zip(f.I, f.windings, f.radii):
        total -= lam * float(P.nu(r)) + (r * r + float(D.kappa(i))) * TWO_PI * k
    return total


def _depth_or_zero(D: DivisorModel) -> int:
    return depth_d(D) if D.nonempty_strata else 0


def bound_constant(D: DivisorModel) -> float:
    """``C = 2 pi 2^{n_W} (M_H + sum over strata of Morse counts)``."""
    return TWO_PI * 2**D.k * (D.morse_total() + D.M_H)


def action_constant(D: DivisorModel, P: NuProfile) -> float:
    """``C_H``: sup of ``-theta(X_H) - H`` over the model, i.e. the max over
    strata of the summed per-axis suprema (and 0 on the zero region)."""
    sups = {i: axis_sup(P, D.kappa(i)) for i in range(1, D.k + 1)}
    best = 0.0
    for I in D.nonempty_strata:
        best = max(best, sum(sups[i] for i in I))
    return best


@dataclass(frozen=True)
class OrbitCensus:
    lam: float
    lam_eff: float
    model: DivisorModel
    profile: NuProfile
    solutions: tuple                 # per-axis (k, r)
    family_counts: dict              # stratum -> number of families
    nondegenerate_count: int
    min_action: float | None
    max_action: float | None
    C: float
    C_H: float
    d: int
    action_filter: float | None = None

    @property
    def N(self) -> int:
        return len(self.solutions)

    @property
    def bound(self) -> float:
        return 2 * self.C * self.lam**self.d

    @property
    def bound_satisfied(self) -> bool:
        return self.nondegenerate_count <= self.bound

    @property
    def total_families(self) -> int:
        return sum(self.family_counts.values())

    def axis_actions(self, i: int) -> np.ndarray:
        if not self.solutions:
            return np.zeros(0)
        k = np.array([s[0] for s in self.solutions], dtype=float)
        r = np.array([s[1] for s in self.solutions], dtype=float)
        return -self.lam_eff * self.profile.nu(r) - (r * r + float(self.model.kappa(i))) * TWO_PI * k

    def family_actions(self, I, cap: int = DEFAULT_FAMILY_CAP) -> np.ndarray:
        """Actions of every family over stratum I (flattened Cartesian product)."""
        I = tuple(sorted(I))
        size = self.N ** len(I)
        if size > cap:
            raise CensusCapError(f"stratum {list(I)} has {size} families > cap {cap}")
        acc = np.zeros(1)
        for i in I:
            acc = (acc[:, None] + self.axis_actions(i)[None, :]).ravel()
        return acc

    def small_mask(self) -> np.ndarray:
        """Which axis solutions lie where ``0 < nu < small_threshold``."""
        r = np.array([s[1] for s in self.solutions], dtype=float)
        nu = self.profile.nu(r) if r.size else r
        return (nu > 0) & (nu < self.profile.small_threshold)

    def small_family_actions(self, I, cap: int = DEFAULT_FAMILY_CAP) -> np.ndarray:
        """Actions of families over I with every radius in the small-nu region."""
        mask = self.small_mask()
        I = tuple(sorted(I))
        size = int(mask.sum()) ** len(I)
        if size > cap:
            raise CensusCapError(f"stratum {list(I)} has {size} small families > cap {cap}")
        acc = np.zeros(1)
        for i in I:
            acc = (acc[:, None] + self.axis_actions(i)[mask][None, :]).ravel()
        return acc

    def families(self, cap: int = DEFAULT_FAMILY_CAP) -> Iterator[OrbitFamily]:
        if self.total_families > cap:
            raise CensusCapError(f"{self.total_families} families > cap {cap}")
        for I in self.model.nonempty_strata:
            idx = tuple(sorted(I))
            for combo in product(self.solutions, repeat=len(idx)):
                yield OrbitFamily(idx, tuple(c[0] for c in combo), tuple(c[1] for c in combo))

    def counts_by_depth(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for I, c in self.family_counts.items():
            out[len(I)] = out.get(len(I), 0) + c
        return out

    def to_row(self) -> dict:
        by_depth = self.counts_by_depth()
        return {
            "lambda": self.lam,
            "lambda_effective": self.lam_eff,
            "axis_solutions": self.N,
            **{f"families_depth_{l}": by_depth.get(l, 0) for l in range(1, self.d + 1)},
            "nondegenerate_count": self.nondegenerate_count,
            "min_action": self.min_action,
            "max_action": self.max_action,
            "bound": self.bound,
            "bound_satisfied": self.bound_satisfied,
        }


def census(D: DivisorModel, P: NuProfile, lam: float, action_filter: float | None = None,
           max_families: int = DEFAULT_FAMILY_CAP) -> OrbitCensus:
    """Enumerate orbit families of ``lambda H`` and the perturbed nondegenerate count.

    Counts are ``M_H + sum_I morse(I) 2^{|I|} (#families over I)``. With
    ``action_filter = c`` only families of action ``<= c lambda`` are kept.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    lam_eff = effective_lambda(P, lam)
    sols = tuple(axis_solutions(P, lam))
    N = len(sols)
    strata = D.nonempty_strata
    tmp = OrbitCensus(lam, lam_eff, D, P, sols, {}, 0, None, None, 0.0, 0.0, 0)
    counts: dict = {}
    lo = hi = None
    if action_filter is None:
        axis_lo = {i: float(np.min(a)) for i in range(1, D.k + 1) if (a := tmp.axis_actions(i)).size}
        axis_hi = {i: float(np.max(a)) for i in range(1, D.k + 1) if (a := tmp.axis_actions(i)).size}
        for I in strata:
            counts[I] = N ** len(I)
            if N:
                l, h = sum(axis_lo[i] for i in I), sum(axis_hi[i] for i in I)
                lo = l if lo is None else min(lo, l)
                hi = h if hi is None else max(hi, h)
    else:
        limit = action_filter * lam
        for I in strata:
            acts = tmp.family_actions(I, cap=max_families)
            kept = acts[acts <= limit]
            counts[I] = int(kept.size)
            if kept.size:
                lo = float(kept.min()) if lo is None else min(lo, float(kept.min()))
                hi = float(kept.max()) if hi is None else max(hi, float(kept.max()))
    count = D.M_H + sum(D.morse.get(I, 0) * 2 ** len(I) * counts[I] for I in strata)
    return OrbitCensus(lam, lam_eff, D, P, sols, counts, count, lo, hi,
                       bound_constant(D), action_constant(D, P), _depth_or_zero(D),
                       action_filter)


def _census_row(args):
    D, P, lam, c = args
    return census(D, P, lam, action_filter=c)


def sweep(D: DivisorModel, P: NuProfile, lambdas: Sequence[float],
          action_filter: float | None = None, jobs: int = 1) -> list[OrbitCensus]:
    """Censuses over a lambda grid; result order follows ``lambdas`` for any ``jobs``."""
    tasks = [(D, P, float(l), action_filter) for l in lambdas]
    if jobs <= 1:
        return [_census_row(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_census_row, tasks))


def log_grid(lo: float, hi: float, samples: int) -> list[float]:
    if not 0 < lo < hi or samples < 2:
        raise ValueError("need 0 < lambda_min < lambda_max and at least 2 samples")
    return [float(v) for v in np.geomspace(lo, hi, samples)]


@dataclass(frozen=True)
class GrowthFit:
    estimate: fds.GammaEstimate
    samples: fds.SampledGrowth
    expected: int


def growth_exponent(D: DivisorModel, P: NuProfile, lambdas: Sequence[float],
                    action_filter: float | None = None, jobs: int = 1,
                    cover_degree: int = 1, **gamma_kw) -> GrowthFit:
    """Fit the growth exponent of the census counts; expected value ``d``."""
    lambdas = [float(l) for l in lambdas]
    if min(lambdas) <= 0 or max(lambdas) / min(lambdas) < 10:
        raise ValueError("lambda grid must span at least one decade")
    rows = sweep(D, P, lambdas, action_filter, jobs)
    samples = fds.SampledGrowth(tuple(lambdas),
                                tuple(cover_scale(r.nondegenerate_count, cover_degree) for r in rows))
    return GrowthFit(fds.gamma(samples, **gamma_kw), samples, _depth_or_zero(D))


def cover_scale(census_count: int, k: int) -> int:
    """Orbit-count bound for a degree-k cover."""
    if int(k) != k or k < 1:
        raise ValueError("cover degree must be a positive integer")
    return int(k) * int(census_count)
