"""Partition-based tail bounds and the search for a good partition.

For a partition ``T = T_1 + T_2 + ...`` every part gets its own natural
psi-function, natural distance and entropy integral, and

    Y(u) = sum_m min(1, exp(-nu*_m(ln(u / Z_m)))),   Z_m = max(Theta_m, 1),

where psi_m is normalised so that ``sup_{t in T_m} ||xi(t)|| = 1``. A single
part reproduces the plain sup-tail bound; singletons give optimised Markov
bounds ``inf_p |xi(t)|_p^p / u^p``. Parts on which the field vanishes
contribute nothing.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .bounds import (THETA_PREFACTOR, SupTailResult, TailBoundCurve, field_tail_bound, sup_gls_norm,
                     tail_from_scale)
from .conjugate import _closed_end, sup_affine
from .gls import INF, natural_psi
from .metric import ValidationReport, natural_distance
from .parallel import pmap

log = logging.getLogger(__name__)

CERT_THRESHOLD = 1e-3
SINGLETON_CHUNK = 32
MAX_SEED_LEVELS = 12
_EMPTY = np.empty(0)


@dataclass(frozen=True)
class Partition:
    """Disjoint parts (tuples of point indices) covering ``range(n)``."""

    parts: tuple

    def __post_init__(self):
        canon = tuple(sorted((tuple(sorted(int(i) for i in p)) for p in self.parts),
                             key=lambda p: (p[0] if p else -1, len(p))))
        object.__setattr__(self, "parts", canon)

    def __len__(self):
        return len(self.parts)

    @property
    def size(self) -> int:
        return sum(len(p) for p in self.parts)

    @classmethod
    def whole(cls, n: int):
        return cls((tuple(range(n)),))

    @classmethod
    def singletons(cls, n: int):
        return cls(tuple((i,) for i in range(n)))

    @classmethod
    def from_labels(cls, groups, labels):
        pos = {str(lab): i for i, lab in enumerate(labels)}
        try:
            return cls(tuple(tuple(pos[str(g)] for g in grp) for grp in groups))
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r}") from None

    def labelled(self, labels) -> list:
        return [[labels[i] for i in p] for p in self.parts]

    def to_file(self, path, labels):
        with open(path, "w") as fh:
            for grp in self.labelled(labels):
                fh.write(",".join(str(g) for g in grp) + "\n")

    @classmethod
    def from_file(cls, path, labels):
        with open(path) as fh:
            groups = [[s.strip() for s in line.split(",") if s.strip()]
                      for line in fh if line.strip() and not line.lstrip().startswith("#")]
        return cls.from_labels(groups, labels)


def validate_partition(partition: Partition, n: int) -> ValidationReport:
    seen: dict = {}
    v = []
    for k, part in enumerate(partition.parts):
        if not part:
            v.append(("empty part", k))
        for i in part:
            if not 0 <= i < n:
                v.append(("out of range", i))
            elif i in seen:
                v.append(("overlap", i, seen[i], k))
            else:
                seen[i] = k
    missing = sorted(set(range(n)) - set(seen))
    if missing:
        v.append(("uncovered", missing))
    return ValidationReport(not v, v)


# per-part quantities ----------------------------------------------------

@dataclass
class PartProfile:
    points: tuple
    theta: float
    Z: float
    diameter: float
    degenerate: bool
    result: SupTailResult | None = None

    def summand(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.degenerate:
            return np.zeros_like(u)
        return tail_from_scale(self.result.psi, self.Z, u)


def part_profile(fld, part, prefactor: float = THETA_PREFACTOR, p_grid=None) -> PartProfile:
    """Natural psi, diameter, entropy integral and scale ``Z`` of one part."""
    part = tuple(int(i) for i in part)
    if fld.is_zero(part):
        return PartProfile(part, 0.0, 0.0, 0.0, True)
    res = field_tail_bound(fld.restrict(part), _EMPTY, p_grid=p_grid, prefactor=prefactor)
    return PartProfile(part, res.theta, res.Z, res.diameter, False, res)


def singleton_summands(fld, points, u) -> np.ndarray:
    """Optimised Markov bounds ``min(1, inf_p |xi(t)|_p^p / u^p)`` for many points at once.

    Agrees with ``part_profile(fld, (t,)).summand(u)``: a one-point part has
    ``Theta = 0``, ``Z = 1`` and natural psi ``p -> |xi(t)|_p``.
    """
    points = np.asarray(points, dtype=int)
    u = np.asarray(u, dtype=float)
    out = np.ones((points.size, u.size))
    if points.size == 0 or u.size == 0:
        return out
    pos = u > 0
    x = np.log(np.where(pos, u, 1.0))
    for start in range(0, points.size, SINGLETON_CHUNK):
        t = points[start:start + SINGLETON_CHUNK]
        zero = np.all(fld.moment(t[:, None], np.array([1.0, 2.0])[None, :]) == 0, axis=1)

        def nu(p, t=t):
            p = np.asarray(p, dtype=float)
            tt = t[:, None, None] if p.ndim == 1 else t.reshape((-1,) + (1,) * (p.ndim - 1))
            pp = p[None, None, :] if p.ndim == 1 else p
            with np.errstate(divide="ignore"):
                return pp * np.log(fld.moment(tt, pp))

        hi = fld.b if math.isinf(fld.b) else _closed_end(nu, fld.b, -1.0)
        xx = np.broadcast_to(x, (t.size, u.size))
        val, _ = sup_affine(nu, xx, 1.0, hi)
        with np.errstate(over="ignore"):
            s = np.clip(np.exp(-val), 0.0, 1.0)
        s = np.where(pos[None, :], s, 1.0)
        s[zero] = np.where(pos, 0.0, 1.0)
        out[start:start + t.size] = s
    return out


class PartCache:
    """Summand rows of parts on a fixed u-grid, computed once each."""

    def __init__(self, fld, u_grid, prefactor: float = THETA_PREFACTOR, p_grid=None):
        self.field = fld
        self.u = np.asarray(u_grid, dtype=float)
        self.prefactor = prefactor
        self.p_grid = p_grid
        self.rows: dict = {}
        self.profiles: dict = {}

    def add_singletons(self, points):
        todo = [int(i) for i in points if (int(i),) not in self.rows]
        if todo:
            rows = singleton_summands(self.field, todo, self.u)
            for i, r in zip(todo, rows):
                self.rows[(i,)] = r

    def ensure(self, parts):
        parts = [tuple(p) for p in parts]
        self.add_singletons([p[0] for p in parts if len(p) == 1])
        todo = list(dict.fromkeys(p for p in parts if p not in self.rows))
        profs = pmap(lambda p: part_profile(self.field, p, self.prefactor, self.p_grid), todo)
        for p, prof in zip(todo, profs):
            self.profiles[p] = prof
            self.rows[p] = prof.summand(self.u)

    def profile(self, part) -> PartProfile:
        part = tuple(part)
        if part not in self.profiles:
            self.profiles[part] = part_profile(self.field, part, self.prefactor, self.p_grid)
        return self.profiles[part]

    def matrix(self, partition: Partition) -> np.ndarray:
        self.ensure(partition.parts)
        return np.array([self.rows[p] for p in partition.parts])


@dataclass
class PartitionTail:
    curve: TailBoundCurve
    raw: np.ndarray  # unclamped sum of the (clamped) summands
    summands: np.ndarray
    partition: Partition

    @property
    def objective(self) -> float:
        return trapezoid_area(self.curve)


def trapezoid_area(curve: TailBoundCurve) -> float:
    return float(np.trapezoid(curve.values, curve.u)) if curve.u.size > 1 else 0.0


def partition_tail_y(fld, partition: Partition, u_grid, prefactor: float = THETA_PREFACTOR,
                     p_grid=None, cache: PartCache | None = None) -> PartitionTail:
    rep = validate_partition(partition, len(fld))
    if not rep:
        raise ValueError(f"invalid partition: {rep.violations[:5]}")
    u = np.asarray(u_grid, dtype=float)
    if cache is None:
        cache = PartCache(fld, u, prefactor, p_grid)
    elif not np.array_equal(cache.u, u):
        raise ValueError("cache was built for a different u-grid")
    S = cache.matrix(partition)
    raw = S.sum(axis=0)
    diag = []
    if np.all(raw >= 1):
        diag.append("series of summands is >= 1 everywhere on the grid")
    return PartitionTail(TailBoundCurve(u, np.minimum(raw, 1.0), "partition", diag), raw, S, partition)


# series truncation ------------------------------------------------------

@dataclass
class SeriesCheck:
    curve: TailBoundCurve
    N: int
    converged: bool
    rel_change: float


def series_tail_y(field_of_N, u_grid, N0: int = 64, rtol: float = 1e-8, N_max: int = 1 << 16) -> SeriesCheck:
    """Singleton-partition ``Y`` of a family of truncated fields, doubling N until stable.

    ``field_of_N(N)`` must return the field over ``N`` points whose first
    points are those of ``field_of_N(N')`` for every ``N' < N``. The sum is
    accepted once the N and 2N truncations agree within ``rtol`` pointwise.
    """
    u = np.asarray(u_grid, dtype=float)
    N = int(N0)
    prev_rows = singleton_summands(field_of_N(N), np.arange(N), u)
    prev = prev_rows.sum(axis=0)
    change = INF
    while 2 * N <= N_max:
        fld = field_of_N(2 * N)
        rows = singleton_summands(fld, np.arange(N, 2 * N), u)
        cur = prev + rows.sum(axis=0)
        live = cur < 1
        if np.any(live):
            change = float(np.max(np.abs(cur[live] - prev[live]) / cur[live]))
        else:
            change = 0.0
        N *= 2
        prev = cur
        if change <= rtol:
            return SeriesCheck(TailBoundCurve(u, np.minimum(cur, 1.0), "partition"), N, True, change)
    diag = [f"series not stable to rtol={rtol:g} by N={N} (last relative change {change:.3g})"]
    if np.all(prev >= 1):
        diag.append("series of summands is >= 1 everywhere on the grid")
    return SeriesCheck(TailBoundCurve(u, np.minimum(prev, 1.0), "partition", diag), N, False, change)


# boundedness certificate -----------------------------------------------

@dataclass
class Certificate:
    verdict: str
    y_at_max: float
    decay_exponent: float
    reason: str

    def to_dict(self):
        return {"verdict": self.verdict, "y_at_max": self.y_at_max,
                "decay_exponent": self.decay_exponent, "reason": self.reason}


def decay_exponent(u, y) -> float:
    """Slope of ``-ln Y`` against ``ln u`` over the last decade of the grid where ``Y > 0``."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size and y[-1] == 0:
        return INF
    ok = (y > 0) & (y < 1) & (u > 0)
    if ok.sum() < 2:
        return math.nan
    uu, yy = u[ok], y[ok]
    sel = uu >= uu[-1] / 10.0
    if sel.sum() < 2:
        sel = np.zeros_like(sel)
        sel[-2:] = True
    slope = np.polyfit(np.log(uu[sel]), np.log(yy[sel]), 1)[0]
    return float(-slope)


def boundedness_certificate(tail: PartitionTail, threshold: float = CERT_THRESHOLD) -> Certificate:
    """PASS when the series is finite, nonincreasing and below ``threshold`` at the largest u."""
    raw = tail.raw
    u = tail.curve.u
    if not np.all(np.isfinite(raw)):
        return Certificate("INCONCLUSIVE", INF, math.nan, "series diverges on part of the grid")
    y_max = float(min(raw[-1], 1.0))
    expo = decay_exponent(u, raw)
    if np.all(raw >= 1):
        return Certificate("INCONCLUSIVE", y_max, expo, "series is >= 1 on the whole grid")
    if np.any(np.diff(raw) > 1e-12 * np.maximum(1.0, raw[1:])):
        return Certificate("INCONCLUSIVE", y_max, expo, "series is not nonincreasing in u")
    if y_max >= threshold:
        return Certificate("INCONCLUSIVE", y_max, expo,
                           f"Y at the largest u is {y_max:.3g}, not below {threshold:g}")
    return Certificate("PASS", y_max, expo, f"Y at the largest u is {y_max:.3g} < {threshold:g}")


# search -----------------------------------------------------------------

def set_partitions(n: int):
    """All set partitions of ``range(n)`` in restricted-growth-string order."""
    if n == 0:
        yield Partition(())
        return
    a = [0] * n

    def rec(i, m):
        if i == n:
            groups: list = [[] for _ in range(m + 1)]
            for k, g in enumerate(a):
                groups[g].append(k)
            yield Partition(tuple(tuple(g) for g in groups))
            return
        for g in range(m + 2):
            a[i] = g
            yield from rec(i + 1, max(m, g))

    a[0] = 0
    yield from rec(1, 0)


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def threshold_clusterings(dist: np.ndarray, max_levels: int = MAX_SEED_LEVELS) -> list:
    """Connected components of the graph ``d(s, t) <= level`` for a spread of levels."""
    levels = np.unique(dist[dist > 0])
    if levels.size > max_levels:
        idx = np.unique(np.linspace(0, levels.size - 1, max_levels).round().astype(int))
        levels = levels[idx]
    out = []
    for lev in levels:
        _, lab = connected_components(dist <= lev, directed=False)
        groups: dict = {}
        for i, g in enumerate(lab):
            groups.setdefault(int(g), []).append(i)
        out.append(Partition(tuple(tuple(g) for g in groups.values())))
    return out


@dataclass
class SearchResult:
    partition: Partition
    curve: TailBoundCurve
    envelope: TailBoundCurve
    objective: float
    evaluations: int
    exhaustive: bool
    history: list = field(default_factory=list)


def _moves(partition: Partition, dist: np.ndarray, rng: np.random.Generator, small: bool):
    parts = [list(p) for p in partition.parts]
    m = len(parts)
    cands = []
    # merges
    if small or m <= 24:
        pairs = list(itertools.combinations(range(m), 2))
    else:
        pairs = set()
        for i in range(m):
            link = [dist[np.ix_(parts[i], parts[j])].min() if j != i else INF for j in range(m)]
            j = int(np.argmin(link))
            pairs.add((min(i, j), max(i, j)))
        pairs = sorted(pairs)
    for i, j in pairs:
        new = [p for k, p in enumerate(parts) if k not in (i, j)] + [parts[i] + parts[j]]
        cands.append(Partition(tuple(tuple(p) for p in new)))
    # splits around the farthest pair
    for i, p in enumerate(parts):
        if len(p) < 2:
            continue
        sub = dist[np.ix_(p, p)]
        a, b = np.unravel_index(int(np.argmax(sub)), sub.shape)
        left = [q for k, q in enumerate(p) if sub[k, a] <= sub[k, b]]
        right = [q for q in p if q not in left]
        if left and right:
            new = [q for k, q in enumerate(parts) if k != i] + [left, right]
            cands.append(Partition(tuple(tuple(q) for q in new)))
    # single-point moves
    if small:
        for i, p in enumerate(parts):
            for x in p:
                for j in range(m):
                    if j == i:
                        continue
                    new = [list(q) for q in parts]
                    new[i] = [q for q in new[i] if q != x]
                    new[j] = new[j] + [x]
                    cands.append(Partition(tuple(tuple(q) for q in new if q)))
    order = rng.permutation(len(cands))
    return [cands[k] for k in order]


def search_partition(fld, u_grid, budget: int = 200, seed: int = 0,
                     prefactor: float = THETA_PREFACTOR, p_grid=None) -> SearchResult:
    """Minimise ``int Y(u) du`` over partitions of the index set.

    Exhaustive when the Bell number of ``|T|`` fits in ``budget``; otherwise
    seeded (whole set, singletons, threshold clusterings of the natural
    distance) and improved by merge/split/move steps while the budget lasts.
    The envelope is the pointwise minimum of every evaluated ``Y``.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    u = np.asarray(u_grid, dtype=float)
    n = len(fld)
    cache = PartCache(fld, u, prefactor, p_grid)
    cache.add_singletons(range(n))
    seen: dict = {}
    history = []
    envelope = np.ones_like(u)

    def evaluate(part: Partition):
        nonlocal envelope
        if part in seen:
            return seen[part]
        tail = partition_tail_y(fld, part, u, cache=cache)
        seen[part] = tail
        envelope = np.minimum(envelope, tail.curve.values)
        history.append((len(part), tail.objective))
        return tail

    exhaustive = bell_number(n) <= budget
    if exhaustive:
        for part in set_partitions(n):
            evaluate(part)
    else:
        seeds = [Partition.whole(n), Partition.singletons(n)]
        if not fld.is_zero():
            psi = natural_psi(fld)
            s = sup_gls_norm(fld, psi, p_grid=p_grid)
            if math.isfinite(s) and s > 0:
                dist = natural_distance(fld, psi.scaled(s) if abs(s - 1) > 1e-12 else psi, p_grid).dist
            else:
                dist = np.zeros((n, n))
        else:
            dist = np.zeros((n, n))
        seeds += threshold_clusterings(dist)
        for part in seeds:
            if len(seen) >= budget:
                break
            evaluate(part)
        rng = np.random.default_rng(seed)
        current = min(seen, key=lambda p: (seen[p].objective, len(p)))
        small = n <= 24
        while len(seen) < budget:
            best_obj = seen[current].objective
            improved = None
            for cand in _moves(current, dist, rng, small):
                if len(seen) >= budget:
                    break
                if cand in seen:
                    continue
                obj = evaluate(cand).objective
                if obj < best_obj:
                    best_obj, improved = obj, cand
            if improved is None:
                break
            current = improved
    best = min(seen, key=lambda p: (seen[p].objective, len(p)))
    tail = seen[best]
    return SearchResult(best, tail.curve, TailBoundCurve(u, envelope, "partition"), tail.objective,
                        len(seen), exhaustive, history)
