"""Finite semi-metric index spaces, covering numbers and metric entropy.

Covering numbers count closed balls centred at points of the space. They
are exact (branch and bound on bitmasks) for spaces of at most
``EXACT_LIMIT`` points and a greedy upper bound above that.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .gls import PsiFunction

EXACT_LIMIT = 64
NODE_LIMIT = 500_000
MAX_LEVELS = 512
TRIANGLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteIndexSpace:
    labels: tuple
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if d.shape[0] != len(self.labels):
            raise ValueError(f"{d.shape[0]}x{d.shape[0]} matrix for {len(self.labels)} labels")
        if d.shape[0] == 0:
            raise ValueError("space needs at least one point")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dist", d)

    def __len__(self):
        return len(self.labels)

    def subspace(self, points) -> "FiniteIndexSpace":
        idx = np.asarray(points, dtype=int)
        return FiniteIndexSpace(tuple(self.labels[i] for i in idx), self.dist[np.ix_(idx, idx)])

    def index(self, label) -> int:
        return self.labels.index(label)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.labels)
            for row in self.dist:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        labels = tuple(s.strip() for s in rows[0])
        dist = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        return cls(labels, dist)


def harmonic_space(N: int) -> FiniteIndexSpace:
    """``{1, ..., N, inf}`` with ``d(i, j) = |1/i - 1/j|`` and ``d(i, inf) = 1/i``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    x = np.concatenate((1.0 / np.arange(1, N + 1), [0.0]))
    labels = tuple(str(i) for i in range(1, N + 1)) + ("inf",)
    return FiniteIndexSpace(labels, np.abs(x[:, None] - x[None, :]))


@dataclass
class ValidationReport:
    valid: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.valid


def validate_semi_metric(space: FiniteIndexSpace, tol: float = TRIANGLE_TOL) -> ValidationReport:
    d = space.dist
    v = []
    n = len(space)
    for i in np.flatnonzero(np.abs(np.diag(d)) > tol):
        v.append(("diagonal", space.labels[i], space.labels[i], float(d[i, i])))
    for i, j in zip(*np.nonzero(d < -tol)):
        v.append(("negative", space.labels[i], space.labels[j], float(d[i, j])))
    for i, j in zip(*np.nonzero(np.triu(np.abs(d - d.T) > tol))):
        v.append(("asymmetric", space.labels[i], space.labels[j], float(d[i, j] - d[j, i])))
    # d[i,k] > d[i,j] + d[j,k]
    for j in range(n):
        bad = d > d[:, j][:, None] + d[j, :][None, :] + tol
        for i, k in zip(*np.nonzero(bad)):
            v.append(("triangle", space.labels[i], space.labels[k], space.labels[j]))
    return ValidationReport(not v, v)


def diameter(space: FiniteIndexSpace) -> float:
    return float(space.dist.max())


# covering ---------------------------------------------------------------

def _greedy_count(cov: np.ndarray) -> int:
    unc = np.ones(cov.shape[0], dtype=bool)
    cov_i = cov.astype(np.int32)
    count = 0
    while unc.any():
        gains = cov_i @ unc
        j = int(np.argmax(gains))
        unc &= ~cov[j]
        count += 1
    return count


class _Abort(Exception):
    pass


def _exact_count(cov: np.ndarray, upper: int) -> int:
    """Minimum number of rows of ``cov`` whose union is everything."""
    n = cov.shape[0]
    masks = []
    for row in cov:
        m = 0
        for j in np.flatnonzero(row):
            m |= 1 << int(j)
        masks.append(m)
    # drop balls contained in another ball
    uniq = sorted(set(masks), key=lambda m: -m.bit_count())
    kept = []
    for m in uniq:
        if not any((m | k) == k for k in kept):
            kept.append(m)
    masks = kept
    full = (1 << n) - 1
    holders = [[m for m in masks if (m >> e) & 1] for e in range(n)]
    best = upper
    nodes = 0

    def rec(covered, depth):
        nonlocal best, nodes
        nodes += 1
        if nodes > NODE_LIMIT:
            raise _Abort
        if covered == full:
            best = min(best, depth)
            return
        unc = full & ~covered
        cnt = unc.bit_count()
        biggest = max((m & unc).bit_count() for m in masks)
        if depth + -(-cnt // biggest) >= best:
            return
        pick, opts = None, None
        rest = unc
        while rest:
            low = rest & -rest
            e = low.bit_length() - 1
            rest ^= low
            if opts is None or len(holders[e]) < len(opts):
                pick, opts = e, holders[e]
                if len(opts) == 1:
                    break
        for m in sorted(opts, key=lambda m: -(m & unc).bit_count()):
            rec(covered | m, depth + 1)

    rec(0, 0)
    return best


class CoverResult(NamedTuple):
    count: int
    exact: bool


def covering_number(space: FiniteIndexSpace, eps: float, exact: bool | None = None) -> CoverResult:
    """Minimal number of closed ``eps``-balls centred in the space covering it."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    cov = space.dist <= eps
    greedy = _greedy_count(cov)
    if exact is None:
        exact = len(space) <= EXACT_LIMIT
    if not exact or greedy == 1:
        return CoverResult(greedy, greedy == 1)
    try:
        return CoverResult(_exact_count(cov, greedy), True)
    except _Abort:
        return CoverResult(greedy, False)


class EntropyValue(NamedTuple):
    H: float
    exact: bool


def metric_entropy(space: FiniteIndexSpace, eps: float) -> EntropyValue:
    """``H(eps) = ln N(eps)``."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    c = covering_number(space, eps)
    return EntropyValue(math.log(c.count), c.exact)


@dataclass
class EntropyProfile:
    """Right-continuous step function ``eps -> N(eps)``.

    ``N(eps) = counts[k]`` on ``[levels[k], levels[k+1])`` and 1 from
    ``levels[-1]`` (the diameter) on. When only some distance levels are
    evaluated, each step uses its left-endpoint value, an upper bound.
    """

    levels: np.ndarray
    counts: np.ndarray
    exact: np.ndarray

    @property
    def diameter(self) -> float:
        return float(self.levels[-1])

    def count(self, eps):
        eps = np.asarray(eps, dtype=float)
        k = np.searchsorted(self.levels, eps, side="right") - 1
        out = np.where(k >= len(self.counts), 1, self.counts[np.clip(k, 0, len(self.counts) - 1)])
        return out

    def entropy(self, eps):
        return np.log(self.count(eps))

    def steps(self, delta: float):
        """``(width, count)`` pairs of the steps inside ``[0, delta]``."""
        lo = self.levels[:-1]
        hi = self.levels[1:]
        w = np.clip(np.minimum(hi, delta) - lo, 0.0, None)
        return w, self.counts[: len(w)]

    def rows(self):
        for e, c, x in zip(self.levels[:-1], self.counts, self.exact):
            yield float(e), math.log(int(c)), bool(x)
        yield float(self.levels[-1]), 0.0, True


def _pick_levels(values: np.ndarray, k: int) -> np.ndarray:
    if values.size <= k:
        return values
    idx = np.unique(np.linspace(0, values.size - 1, k // 2).round().astype(int))
    pos = np.searchsorted(values, np.geomspace(values[0], values[-1], k // 2))
    idx = np.unique(np.concatenate((idx, np.clip(pos, 0, values.size - 1), [0, values.size - 1])))
    return values[idx]


def entropy_profile(space: FiniteIndexSpace, max_levels: int = MAX_LEVELS) -> EntropyProfile:
    d = space.dist
    D = diameter(space)
    if D == 0:
        return EntropyProfile(np.array([0.0]), np.array([], dtype=int), np.array([], dtype=bool))
    pos = np.unique(d[d > 0])
    chosen = _pick_levels(pos, max_levels)
    subsampled = chosen.size < pos.size
    levels = np.concatenate(([0.0], chosen[chosen < D], [D]))
    counts, flags = [], []
    use_exact = len(space) <= EXACT_LIMIT
    prev = None
    for eps in levels[:-1]:
        cov = d <= eps
        greedy = _greedy_count(cov)
        if prev is not None:
            greedy = min(greedy, prev)
        c, ok = greedy, False
        if use_exact and greedy > 1:
            try:
                c, ok = _exact_count(cov, greedy + 1), True
            except _Abort:
                pass
        elif greedy == 1:
            ok = True
        counts.append(c)
        flags.append(ok and not subsampled)
        prev = c
    return EntropyProfile(levels, np.array(counts, dtype=int), np.array(flags, dtype=bool))


def natural_distance(field, psi: PsiFunction, p_grid=None, chunk: int = 64) -> FiniteIndexSpace:
    """``d(t, s) = sup_p |xi(t) - xi(s)|_p / psi(p)`` on a p-grid."""
    p = psi.grid() if p_grid is None else np.asarray(p_grid, dtype=float)
    ps = psi(p)
    p, ps = p[np.isfinite(ps)], ps[np.isfinite(ps)]
    n = len(field)
    dist = np.zeros((n, n))
    s = np.arange(n)[None, :, None]
    for start in range(0, n, chunk):
        t = np.arange(start, min(n, start + chunk))[:, None, None]
        pm = np.broadcast_to(field.pair_moment(t, s, p[None, None, :]), (t.shape[0], n, p.size))
        dist[start:start + t.shape[0]] = np.max(pm / ps, axis=-1)
    dist = np.maximum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return FiniteIndexSpace(tuple(field.labels), dist)
