"""Entropy integral, sup-tail bound and modulus-of-continuity bound.

``Theta(delta) = prefactor * int_0^delta exp(v_*(ln 2 + H(eps))) d eps``.
H is a step function of eps, so the integral is a finite sum of step widths
times the integrand value on each step.

The sup-tail bound is ``exp(-nu*(ln(u / Z)))`` with ``Z = max(Theta(D), s)``
where ``s = sup_t ||xi(t)||`` is the anchor. Without the anchor a one-point
space would have ``Z = 0`` and a bound of zero.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .conjugate import co_transform, nu_star
from .gls import INF, PsiFunction, natural_psi
from .metric import EntropyProfile, FiniteIndexSpace, entropy_profile, natural_distance

log = logging.getLogger(__name__)

THETA_PREFACTOR = 9.0
PROVENANCES = ("entropy", "partition", "exact", "empirical")


@dataclass
class TailBoundCurve:
    """Upper bound (or empirical value) of ``P(sup |xi| > u)`` on a u-grid."""

    u: np.ndarray
    values: np.ndarray
    provenance: str
    diagnostics: list = field(default_factory=list)
    samples: int | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        v = np.clip(np.asarray(self.values, dtype=float), 0.0, 1.0)
        if self.u.shape != v.shape:
            raise ValueError("u-grid and values differ in shape")
        if np.any(np.diff(self.u) <= 0):
            raise ValueError("u-grid must be increasing")
        self.values = np.minimum.accumulate(v) if v.size else v

    def at(self, u):
        return np.interp(u, self.u, self.values)

    def scaled(self, factor: float, provenance: str | None = None) -> "TailBoundCurve":
        return TailBoundCurve(self.u, self.values * factor, provenance or self.provenance,
                              list(self.diagnostics))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "bound", "provenance"])
            for u, v in zip(self.u, self.values):
                w.writerow([repr(float(u)), repr(float(v)), self.provenance])


def integrand_levels(psi: PsiFunction, counts) -> np.ndarray:
    """``exp(v_*(ln 2 + ln N))`` for covering counts ``N``."""
    counts = np.asarray(counts, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(co_transform(psi, math.log(2.0) + np.log(counts)))


def entropy_integral(space: FiniteIndexSpace, psi: PsiFunction, delta: float,
                     prefactor: float = THETA_PREFACTOR, profile: EntropyProfile | None = None) -> float:
    if delta < 0:
        raise ValueError("delta must be >= 0")
    prof = entropy_profile(space) if profile is None else profile
    delta = min(delta, prof.diameter)
    if delta == 0 or prof.diameter == 0:
        return 0.0
    widths, counts = prof.steps(delta)
    use = widths > 0
    if not np.any(use):
        return 0.0
    uniq, inv = np.unique(counts[use], return_inverse=True)
    weights = integrand_levels(psi, uniq)[inv]
    if np.any(~np.isfinite(weights)):
        log.info("entropy integrand infinite on a step of positive width")
        return INF
    return float(prefactor * np.sum(widths[use] * weights))


def modulus_bound(space, psi, delta, prefactor: float = THETA_PREFACTOR, profile=None):
    """Bound on the probabilistic modulus of continuity at ``delta``; equals Theta(delta)."""
    deltas = np.atleast_1d(np.asarray(delta, dtype=float))
    prof = entropy_profile(space) if profile is None else profile
    out = np.array([entropy_integral(space, psi, d, prefactor, prof) for d in deltas])
    return float(out[0]) if np.ndim(delta) == 0 else out


def tail_from_scale(psi: PsiFunction, Z: float, u) -> np.ndarray:
    """``min(1, exp(-nu*(ln(u/Z))))``; 1 for ``u <= 0`` or infinite ``Z``."""
    u = np.asarray(u, dtype=float)
    if not math.isfinite(Z):
        return np.ones_like(u)
    if Z == 0:
        return np.where(u > 0, 0.0, 1.0)
    pos = u > 0
    x = np.log(np.where(pos, u, Z) / Z)
    with np.errstate(over="ignore"):
        out = np.exp(-np.asarray(nu_star(psi, x), dtype=float))
    return np.where(pos, np.clip(out, 0.0, 1.0), 1.0)


@dataclass
class SupTailResult:
    curve: TailBoundCurve
    theta: float
    Z: float
    diameter: float
    anchor: float
    space: FiniteIndexSpace | None = None
    psi: PsiFunction | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.theta)

    @property
    def norm_bound(self) -> float:
        """Bound on the GLS norm of ``sup_t |xi(t)|``."""
        return self.Z

    def summary(self) -> dict:
        return {"theta": self.theta, "diameter": self.diameter, "Z": self.Z,
                "anchor": self.anchor, "finite": self.finite}


def sup_tail_bound(space: FiniteIndexSpace, psi: PsiFunction, u_grid, anchor: float = 1.0,
                   prefactor: float = THETA_PREFACTOR, profile=None) -> SupTailResult:
    """Tail bound for ``sup_t |xi(t)|`` given the natural distance space.

    The field is assumed normalised, ``sup_t ||xi(t)|| <= anchor`` (1 by
    default).
    """
    prof = entropy_profile(space) if profile is None else profile
    D = prof.diameter
    theta = entropy_integral(space, psi, D, prefactor, prof)
    u = np.asarray(u_grid, dtype=float)
    if not math.isfinite(theta):
        curve = TailBoundCurve(u, np.ones_like(u), "entropy", ["entropy integral diverges"])
        return SupTailResult(curve, theta, INF, D, anchor, space, psi)
    Z = max(theta, anchor)
    curve = TailBoundCurve(u, tail_from_scale(psi, Z, u), "entropy")
    return SupTailResult(curve, theta, Z, D, anchor, space, psi)


def sup_gls_norm(field, psi: PsiFunction, points=None, p_grid=None) -> float:
    """``sup_t ||xi(t)||`` against psi on a p-grid."""
    p = psi.grid() if p_grid is None else np.asarray(p_grid, dtype=float)
    ps = psi(p)
    p, ps = p[np.isfinite(ps)], ps[np.isfinite(ps)]
    idx = np.arange(len(field)) if points is None else np.asarray(points, dtype=int)
    m = np.broadcast_to(field.moment(idx[:, None], p[None, :]), (idx.size, p.size))
    return float(np.max(m / ps))


def field_tail_bound(field, u_grid, psi: PsiFunction | None = None, p_grid=None,
                     prefactor: float = THETA_PREFACTOR) -> SupTailResult:
    """Sup-tail bound for a field, normalising psi so that ``sup_t ||xi(t)|| = 1``.

    ``psi`` defaults to the field's natural psi-function.
    """
    if psi is None:
        psi = natural_psi(field)
    s = sup_gls_norm(field, psi, p_grid=p_grid)
    if s <= 0:
        u = np.asarray(u_grid, dtype=float)
        curve = TailBoundCurve(u, np.where(u > 0, 0.0, 1.0), "entropy", ["field is identically zero"])
        return SupTailResult(curve, 0.0, 0.0, 0.0, 0.0, None, psi)
    if not math.isfinite(s):
        u = np.asarray(u_grid, dtype=float)
        curve = TailBoundCurve(u, np.ones_like(u), "entropy", ["field not in the GLS space of psi"])
        return SupTailResult(curve, INF, INF, INF, s, None, psi)
    if abs(s - 1.0) > 1e-12:
        psi = psi.scaled(s)
    space = natural_distance(field, psi, p_grid)
    res = sup_tail_bound(space, psi, u_grid, anchor=1.0, prefactor=prefactor)
    psi1 = float(psi(1.0))
    if psi1 < 1 and res.diameter > 0:
        # Theta scales with psi while the GLS norm of the sup does not
        res.curve.diagnostics.append(f"psi(1) = {psi1:.3g} < 1: the entropy integral scales with psi, "
                                     "so the bound is unverified at this field scale")
    return res
