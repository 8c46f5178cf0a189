"""Continuity certificates from a tail bound.

Given a bound ``R(u) >= P(sup_t |xi(t)| > u)``, the function

    tau(p) = [p int_0^inf u^(p-1) min(1, R(u)) du]^(1/p)

is a psi-function dominating every ``|xi(t)|_p``. Its natural distance
``rho(t, s) = ||xi(t) - xi(s)||_tau`` and the entropy integral over
``(T, rho)`` bound the modulus of continuity.

The integral is evaluated segment by segment with ``R`` interpolated as a
power law between grid points (exact for power tails). Below the first grid
point R is 1. Beyond the last one, R is extended by a power law whose
exponent is fitted on the last decade of the grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exprel

from .bounds import THETA_PREFACTOR, TailBoundCurve, entropy_integral
from .gls import INF, MIN_TABLE_NODES, PsiFunction, default_p_grid
from .metric import FiniteIndexSpace, entropy_profile, natural_distance, validate_semi_metric

log = logging.getLogger(__name__)

CONTINUITY_THRESHOLD = 1e-2


@dataclass
class TauFunction:
    p: np.ndarray
    values: np.ndarray  # inf where the integral diverges
    b_tau: float
    tail_exponent: float
    diagnostics: list = field(default_factory=list)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def usable(self) -> bool:
        return self.b_tau > 1 and int(self.finite.sum()) >= MIN_TABLE_NODES

    @property
    def psi(self) -> PsiFunction:
        if not self.usable:
            raise ValueError(f"tau is finite on too few p > 1 (b_tau = {self.b_tau})")
        ok = self.finite
        return PsiFunction.tabulated(self.p[ok], self.values[ok], name="tau")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        ok = self.finite
        out = np.exp(np.interp(p, self.p[ok], np.log(self.values[ok])))
        return np.where((p < self.p[0]) | (p > self.b_tau), INF, out)


def _tail_fit(u: np.ndarray, r: np.ndarray) -> float:
    """Power-law decay exponent of ``r`` over the last decade of the grid."""
    pos = r > 0
    if pos.sum() < 2:
        return INF
    uu, rr = u[pos], r[pos]
    sel = uu >= uu[-1] / 10.0
    if sel.sum() < 2:
        sel[-2:] = True
    return float(-np.polyfit(np.log(uu[sel]), np.log(rr[sel]), 1)[0])


def _segment_integrals(u1, u2, r1, r2, p):
    """``int_{u1}^{u2} p u^(p-1) R(u) du`` with R a power law through the end values.

    A segment ending at zero uses the left value throughout (upper bound).
    """
    L = np.log(u2 / u1)
    out = np.zeros(np.broadcast_shapes(np.shape(u1), np.shape(p)))
    step = (r1 > 0) & (r2 == 0)
    pw = (r1 > 0) & (r2 > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = np.where(pw, -np.log(np.where(pw, r2 / np.where(r1 > 0, r1, 1.0), 1.0)) / L, 0.0)
        base = r1 * np.exp(p * np.log(u1))
        powlaw = base * p * L * exprel((p - a) * L)
        steps = r1 * (np.exp(p * np.log(u2)) - np.exp(p * np.log(u1)))
    out = np.where(pw, powlaw, out)
    out = np.where(step, steps, out)
    return out


def tau_from_tail(R, p_grid=None) -> TauFunction:
    """``tau(p)`` from a tail curve (``TailBoundCurve`` or ``(u, values)``)."""
    if isinstance(R, TailBoundCurve):
        u, v = R.u, R.values
    else:
        u, v = (np.asarray(a, dtype=float) for a in R)
    v = np.clip(v, 0.0, 1.0)
    if np.any(np.diff(v) > 0):
        raise ValueError("R must be nonincreasing")
    keep = u > 0
    u, v = u[keep], v[keep]
    if u.size < 2:
        raise ValueError("need at least two positive grid points")
    p = default_p_grid(INF) if p_grid is None else np.asarray(p_grid, dtype=float)
    if np.any(p < 1):
        raise ValueError("p-grid must lie in [1, inf)")
    diag = []
    P = p[:, None]
    # [0, u_0]: R = 1
    total = np.exp(p * math.log(u[0]))
    total = total + _segment_integrals(u[:-1][None, :], u[1:][None, :], v[:-1][None, :],
                                       v[1:][None, :], P).sum(axis=1)
    expo = INF
    if v[-1] > 0:
        expo = _tail_fit(u, v)
        if expo <= 0:
            diag.append(f"fitted tail exponent {expo:.3g} <= 0 with nonvanishing tail")
            return TauFunction(p, np.full(p.shape, INF), -INF, expo, diag)
        with np.errstate(divide="ignore", over="ignore"):
            tail = np.where(p < expo, p * v[-1] * np.exp(p * math.log(u[-1])) / (expo - p), INF)
        total = total + tail
    with np.errstate(divide="ignore"):
        tau = np.where(np.isfinite(total), np.exp(np.log(total) / p), INF)
    finite = np.isfinite(tau)
    b_tau = float(p[finite].max()) if finite.any() else -INF
    if math.isfinite(expo):
        diag.append(f"tail extrapolated with exponent {expo:.6g}")
    return TauFunction(p, tau, b_tau, expo, diag)


def rho_distance(fld, tau: TauFunction) -> FiniteIndexSpace:
    """``rho(t, s) = sup_p |xi(t) - xi(s)|_p / tau(p)`` over the finite grid nodes."""
    if not tau.b_tau > 1:
        raise ValueError(f"tau must be finite for some p > 1 (b_tau = {tau.b_tau})")
    ok = tau.finite
    psi = tau.psi
    return natural_distance(fld, psi, p_grid=tau.p[ok])


@dataclass
class ModulusResult:
    delta: np.ndarray
    bound: np.ndarray
    verdict: str
    reason: str
    space: FiniteIndexSpace | None = None

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reason": self.reason,
                "delta_min": float(self.delta.min()) if self.delta.size else None,
                "bound_at_delta_min": float(self.bound[np.argmin(self.delta)]) if self.delta.size else None}


def continuity_modulus(fld, tau: TauFunction, delta_grid, threshold: float = CONTINUITY_THRESHOLD,
                       prefactor: float = THETA_PREFACTOR, space: FiniteIndexSpace | None = None) -> ModulusResult:
    """``omega(delta) <= Theta(T, rho, delta)`` on a delta-grid, with a certificate.

    PASS when the bound is finite, nondecreasing in delta and below
    ``threshold`` at the smallest positive delta; FAIL when the entropy
    integral diverges; INCONCLUSIVE otherwise.
    """
    delta = np.asarray(delta_grid, dtype=float)
    if np.any(delta < 0):
        raise ValueError("delta must be >= 0")
    sp = rho_distance(fld, tau) if space is None else space
    rep = validate_semi_metric(sp, tol=1e-7)
    if not rep:
        raise ValueError(f"rho is not a semi-distance: {rep.violations[:3]}")
    prof = entropy_profile(sp)
    psi = tau.psi
    bound = np.array([entropy_integral(sp, psi, d, prefactor, prof) for d in delta])
    if not np.all(np.isfinite(bound)):
        return ModulusResult(delta, bound, "FAIL", "entropy integral diverges", sp)
    order = np.argsort(delta)
    b_sorted = bound[order]
    if np.any(np.diff(b_sorted) < -1e-12 * np.maximum(1.0, b_sorted[1:])):
        return ModulusResult(delta, bound, "INCONCLUSIVE", "bound is not monotone in delta", sp)
    pos = delta > 0
    if not pos.any():
        return ModulusResult(delta, bound, "INCONCLUSIVE", "no positive delta on the grid", sp)
    small = float(bound[pos][np.argmin(delta[pos])])
    if small < threshold:
        return ModulusResult(delta, bound, "PASS",
                             f"bound at smallest delta is {small:.3g} < {threshold:g}", sp)
    return ModulusResult(delta, bound, "INCONCLUSIVE",
                         f"bound at smallest delta is {small:.3g}, not below {threshold:g}", sp)
