"""Seeded Monte Carlo path generation and bound-dominance checks.

Replicas are generated in fixed-size blocks; block ``j`` draws from
``SeedSequence(seed, spawn_key=(j,))``. The output is therefore the same
for any number of worker threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import TailBoundCurve
from .parallel import pmap

BLOCK = 4096


def _block_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))


def _blocks(count: int):
    return [(j, min(BLOCK, count - j * BLOCK)) for j in range(-(-count // BLOCK))]


def _run_blocks(fn, count, threads):
    return pmap(lambda jk: fn(*jk), _blocks(count), threads)


def sample_paths(model, count: int, seed: int, threads: int | None = None) -> np.ndarray:
    """``count x |T|`` matrix of sampled paths."""
    if count < 1:
        raise ValueError("count must be >= 1")
    parts = _run_blocks(lambda j, k: model.sample_chunk(_block_rng(seed, j), k), count, threads)
    return np.concatenate(parts, axis=0)


def sample_sup(model, count: int, seed: int, threads: int | None = None) -> np.ndarray:
    """``max_t |xi(t)|`` per path; same draws as :func:`sample_paths`."""
    if count < 1:
        raise ValueError("count must be >= 1")
    parts = _run_blocks(lambda j, k: np.abs(model.sample_chunk(_block_rng(seed, j), k)).max(axis=1),
                        count, threads)
    return np.concatenate(parts)


def empirical_sup_tail(data, u_grid) -> TailBoundCurve:
    """Fraction of paths with ``max_t |xi(t)| > u``; accepts paths or per-path sups."""
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        raise ValueError("no paths")
    sups = np.abs(arr).max(axis=1) if arr.ndim == 2 else np.abs(arr)
    srt = np.sort(sups)
    u = np.asarray(u_grid, dtype=float)
    frac = 1.0 - np.searchsorted(srt, u, side="right") / srt.size
    return TailBoundCurve(u, frac, "empirical", samples=srt.size)


def dkw_band(n: int, alpha: float) -> float:
    """Half-width ``sqrt(ln(2/alpha) / (2n))`` of the DKW confidence band."""
    if n < 1 or not 0 < alpha < 1:
        raise ValueError("need n >= 1 and 0 < alpha < 1")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


@dataclass
class DominanceReport:
    """Per-u comparison of an empirical tail with a bound.

    At each u with ``bound < 1`` the point is *verified* when
    ``empirical + band <= bound``, *violated* when ``empirical - band > bound``
    (the bound is below the lower DKW limit of the true tail) and undecided
    otherwise. The default verdict is PASS iff nothing is violated; with
    ``strict`` every checked point must be verified.
    """

    u: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    band: float
    alpha: float
    n: int
    provenance: str = ""
    strict: bool = False

    @property
    def active(self):
        return self.bound < 1

    @property
    def upper(self):
        return np.minimum(1.0, self.empirical + self.band)

    @property
    def lower(self):
        return np.maximum(0.0, self.empirical - self.band)

    @property
    def verified(self):
        return self.active & (self.upper <= self.bound)

    @property
    def violated(self):
        bad = self.lower > self.bound
        if self.strict:
            bad = bad | (self.active & ~self.verified)
        return self.active & bad

    @property
    def violations(self) -> list:
        return [(float(u), float(e), float(b)) for u, e, b, v in
                zip(self.u, self.empirical, self.bound, self.violated) if v]

    @property
    def passed(self) -> bool:
        return not np.any(self.violated)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "strict": self.strict,
            "alpha": self.alpha,
            "n": self.n,
            "band": self.band,
            "bound_provenance": self.provenance,
            "checked_points": int(np.sum(self.active)),
            "verified_points": int(np.sum(self.verified)),
            "violations": [{"u": u, "empirical": e, "bound": b} for u, e, b in self.violations],
        }


def dominance_report(empirical: TailBoundCurve, bound: TailBoundCurve, alpha: float = 0.01,
                     n: int | None = None, strict: bool = False) -> DominanceReport:
    """Check an empirical sup-tail against a bound with a DKW band at level alpha."""
    if empirical.u.shape != bound.u.shape or not np.array_equal(empirical.u, bound.u):
        raise ValueError("empirical and bound curves must share the u-grid")
    n = n if n is not None else empirical.samples
    if n is None:
        raise ValueError("sample size unknown")
    return DominanceReport(bound.u, empirical.values, bound.values, dkw_band(n, alpha), alpha, n,
                           bound.provenance, strict)
