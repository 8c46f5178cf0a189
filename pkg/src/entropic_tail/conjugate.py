"""Young-Fenchel (Legendre) transforms used by the entropy bounds.

* ``legendre(f, x) = sup_y (x*y - f(y))``
* ``co_transform(psi, x) = inf_{y in (1/b, 1)} (x*y + ln psi(1/y))``
* ``nu_star(psi, x)``: the Legendre transform of ``p -> p ln psi(p)`` on ``[1, b)``
* ``orlicz_from_psi(psi)``: the exponential Young function generated by psi

All optimisations use the same routine: a coarse scan over a fixed seed grid
followed by golden-section refinement around the best node. Open endpoints
are handled through the continuous extension of the objective; where that
extension is infinite the endpoint is pulled inwards by ``BOUNDARY_INSET``.
Everything broadcasts over ``x``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gls import INF, PsiFunction, YoungFunction, gls_norm, lp_norm, luxemburg_norm

log = logging.getLogger(__name__)

SEED_NODES = 512
REFINE_WIDTH = 1e-10
BOUNDARY_INSET = 1e-9
# effective right end of [lo, inf) domains
UNBOUNDED_CAP = 1e12
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScalarFunctionOnInterval:
    """A real function on ``[lo, hi]`` (``hi`` may be ``inf``)."""

    func: Callable
    lo: float
    hi: float
    name: str = "f"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("degenerate interval")

    def __call__(self, y):
        return self.func(y)

    @classmethod
    def tabulated(cls, y, values, name: str = "tabulated"):
        y = np.asarray(y, dtype=float)
        v = np.asarray(values, dtype=float)
        if y.size < 16:
            raise ValueError("tabulated function needs >= 16 nodes")
        if np.any(np.diff(y) <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("nodes must increase strictly and values be finite")
        return cls(lambda t: np.interp(t, y, v), float(y[0]), float(y[-1]), name)


def seed_grid(lo: float, hi: float, count: int = SEED_NODES) -> np.ndarray:
    """Scan nodes: uniform plus geometric clusters at both ends."""
    if math.isinf(hi):
        g = lo + np.geomspace(BOUNDARY_INSET, UNBOUNDED_CAP, count - 1)
        return np.concatenate(([lo], g))
    w = hi - lo
    m = count // 3
    rel = np.geomspace(1e-9, 1.0, m)
    g = np.concatenate((np.linspace(lo, hi, count - 2 * m), lo + w * rel, hi - w * rel))
    g = np.clip(g, lo, hi)
    return np.unique(g)


def _obj(fn, x, p):
    with np.errstate(invalid="ignore", over="ignore"):
        v = x * p - fn(p)
    return np.where(np.isnan(v), -INF, v)


def sup_affine(fn: Callable, x, lo: float, hi: float, grid=None):
    """``sup_{p in [lo, hi]} (x*p - fn(p))`` for every entry of ``x``.

    ``fn`` must broadcast: it is called with ``p`` of shape ``(K,)`` and of
    shape ``x.shape + (1,)``. Returns ``(value, argmax)``; a supremum that
    keeps growing at the cap of an unbounded domain is reported as ``inf``.
    """
    x = np.asarray(x, dtype=float)
    g = seed_grid(lo, hi) if grid is None else np.asarray(grid, dtype=float)
    vals = _obj(fn, x[..., None], g)
    vals = np.broadcast_to(vals, np.broadcast_shapes(vals.shape, x.shape + (g.size,)))
    k = np.argmax(vals, axis=-1)
    best = np.take_along_axis(vals, k[..., None], axis=-1)[..., 0].copy()
    arg = g[k].copy()
    a = g[np.maximum(k - 1, 0)]
    c = g[np.minimum(k + 1, g.size - 1)]
    p1 = c - _GOLD * (c - a)
    p2 = a + _GOLD * (c - a)
    f1 = _obj(fn, x[..., None], p1[..., None])[..., 0]
    f2 = _obj(fn, x[..., None], p2[..., None])[..., 0]
    for _ in range(300):
        width = c - a
        if np.all(width <= np.maximum(REFINE_WIDTH, 8e-16 * np.abs(c))):
            break
        left = f1 < f2
        a = np.where(left, p1, a)
        c = np.where(left, c, p2)
        newp = np.where(left, a + _GOLD * (c - a), c - _GOLD * (c - a))
        fnew = _obj(fn, x[..., None], newp[..., None])[..., 0]
        p1, p2, f1, f2 = (np.where(left, p2, newp), np.where(left, newp, p1),
                          np.where(left, f2, fnew), np.where(left, fnew, f1))
    for pc, fc in ((p1, f1), (p2, f2)):
        better = fc > best
        best = np.where(better, fc, best)
        arg = np.where(better, pc, arg)
    if math.isinf(hi):
        runaway = k == g.size - 1
        if np.any(runaway):
            log.debug("supremum unbounded on [%g, inf) for %d argument(s)", lo, int(runaway.sum()))
            best = np.where(runaway, INF, best)
            arg = np.where(runaway, INF, arg)
    return best, arg


def _closed_end(fn: Callable, end: float, inward: float) -> float:
    """``end`` if ``fn`` extends finitely there, else ``end`` moved inwards."""
    if math.isinf(end):
        return end
    with np.errstate(all="ignore"):
        v = np.asarray(fn(np.array([end])), dtype=float)
    if np.all(np.isfinite(v)):
        return end
    return end + inward * BOUNDARY_INSET


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def legendre(f, x, lo: float | None = None, hi: float | None = None):
    """Classical conjugate ``sup_{y in dom f} (x*y - f(y))``."""
    if isinstance(f, ScalarFunctionOnInterval):
        lo = f.lo if lo is None else lo
        hi = f.hi if hi is None else hi
    if lo is None or hi is None:
        raise ValueError("domain bounds required for a bare callable")
    lo_c = _closed_end(f, lo, +1.0)
    hi_c = _closed_end(f, hi, -1.0)
    val, _ = sup_affine(f, x, lo_c, hi_c)
    return _scalar(val)


def nu_function(psi: PsiFunction) -> Callable:
    """``p -> p ln psi(p)`` using the continuous extension of psi."""
    def nu(p):
        return p * psi.log(p, extended=True)
    return nu


def _nu_domain(psi: PsiFunction):
    nu = nu_function(psi)
    lo = psi.p_min
    hi = psi.p_max
    if not psi.is_tabulated:
        hi = _closed_end(nu, hi, -1.0)
    return nu, lo, hi


def nu_star(psi: PsiFunction, x):
    """Legendre transform of ``nu_psi(p) = p ln psi(p)`` over ``[1, b)``."""
    nu, lo, hi = _nu_domain(psi)
    val, _ = sup_affine(nu, x, lo, hi)
    return _scalar(val)


def nu_star_argmax(psi: PsiFunction, x):
    nu, lo, hi = _nu_domain(psi)
    return sup_affine(nu, x, lo, hi)


def co_transform(psi: PsiFunction, x):
    """``v_*(x) = inf_{y in (1/b, 1)} (x*y + v(y))`` with ``v(y) = ln psi(1/y)``.

    The infimum runs over the closure of the interval through the continuous
    extension of ``v``.
    """
    def v(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            p = np.where(y > 0, 1.0 / np.where(y > 0, y, 1.0), INF)
        return psi.log(p, extended=True)

    y_hi = 1.0 / psi.p_min
    if psi.is_tabulated:
        y_lo = 1.0 / psi.p_max
    else:
        y_lo = 0.0 if math.isinf(psi.b) else 1.0 / psi.b
        y_lo = _closed_end(v, y_lo, +1.0)
    x = np.asarray(x, dtype=float)
    val, _ = sup_affine(v, -x, y_lo, y_hi)
    return _scalar(-val)


def is_nu_convex(psi: PsiFunction, tol: float = 1e-7, nodes: int = 257) -> bool:
    """Discrete second-difference test of convexity of ``p ln psi(p)``."""
    nu, lo, hi = _nu_domain(psi)
    if math.isinf(hi):
        hi = lo + 1e3
    p = np.linspace(lo, hi, nodes)
    v = nu(p)
    if not np.all(np.isfinite(v)):
        return False
    d2 = v[2:] - 2 * v[1:-1] + v[:-2]
    return bool(np.all(d2 >= -tol * np.maximum(1.0, np.abs(v[1:-1]))))


def orlicz_from_psi(psi: PsiFunction) -> YoungFunction:
    """Exponential Young function ``N_psi`` equivalent to the GLS norm.

    ``N(u) = exp(nu*(ln|u|))`` for ``|u| >= e`` and ``C u^2`` below, with
    ``C e^2 = exp(nu*(1))``. The exponent sign is positive so that N grows.
    """
    if not is_nu_convex(psi):
        raise ValueError("nu_psi(p) = p ln psi(p) is not convex; N_psi is undefined")
    edge = math.exp(nu_star(psi, 1.0))
    coef = edge / math.e ** 2

    def n_psi(u):
        u = np.asarray(u, dtype=float)
        out = coef * u * u
        big = u >= math.e
        if np.any(big):
            with np.errstate(over="ignore"):
                out = np.where(big, np.exp(nu_star(psi, np.log(np.where(big, u, math.e)))), out)
        return out

    return YoungFunction(n_psi, name=f"N[{psi.name}]")


def norm_equivalence(data, psi: PsiFunction, p_grid=None) -> dict:
    """Both norms of a variable and their ratio; no constant is asserted."""
    g = gls_norm(lambda p: lp_norm(data, p), psi, p_grid).value
    o = luxemburg_norm(data, orlicz_from_psi(psi))
    ratio = o / g if g > 0 and math.isfinite(g) else math.nan
    return {"gls": g, "orlicz": o, "ratio": ratio}
