"""Grand Lebesgue Space primitives.

Lebesgue-Riesz moments ``|eta|_p``, the GLS norm ``sup_p |eta|_p / psi(p)``,
natural psi-functions of a random field and Luxemburg (Orlicz) norms.

Random quantities are given in one of three forms:

* a 1-d array of samples (empirical measure),
* a callable ``h`` on ``(0, 1)``; the variable is ``h(U)`` with ``U`` uniform,
* a :class:`PiecewiseVariable`, a finite mixture of rescaled callables used
  for variables living on tiny sub-intervals of ``(0, 1)``.

Infinite values are represented by ``math.inf``; it is never produced by
float overflow, only assigned deliberately.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate

log = logging.getLogger(__name__)

INF = math.inf
MIN_TABLE_NODES = 16
DEFAULT_GRID_NODES = 64
# cap of the default p-grid when b is infinite
DEFAULT_P_CAP = 64.0
QUAD_CEILING = 1e300


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed without evidence of divergence."""


class NoGLSHomeError(ValueError):
    """No p > 1 with finite moments."""


def default_p_grid(b: float, count: int = DEFAULT_GRID_NODES, p_cap: float = DEFAULT_P_CAP):
    """Log-spaced nodes on ``[1, b - eps_b]`` with ``eps_b = min(0.01, (b-1)/100)``."""
    if b <= 1:
        raise ValueError("b must exceed 1")
    if math.isinf(b):
        hi = p_cap
    else:
        hi = b - min(0.01, (b - 1.0) / 100.0)
    return np.geomspace(1.0, hi, count)


@dataclass(frozen=True, eq=False)
class PsiFunction:
    """Generating function ``psi(p)`` on ``[1, b)``.

    Either ``func`` (closed form, vectorised) or ``nodes``/``values``
    (tabulated, ``p ln psi(p)`` interpolated linearly in ``p``, which keeps
    that function convex when its node values are) is set. Queries
    at ``p >= b`` return ``inf``; tabulated functions also return ``inf``
    above their last node.
    """

    b: float
    func: Callable | None = None
    nodes: np.ndarray | None = None
    values: np.ndarray | None = None
    name: str = "psi"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.b > 1:
            raise ValueError(f"psi upper index b must exceed 1, got {self.b}")
        if (self.func is None) == (self.nodes is None):
            raise ValueError("give exactly one of func or nodes/values")
        if self.nodes is not None:
            p = np.asarray(self.nodes, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if p.ndim != 1 or p.shape != v.shape:
                raise ValueError("nodes and values must be 1-d of equal length")
            if p.size < MIN_TABLE_NODES:
                raise ValueError(f"tabulated psi needs >= {MIN_TABLE_NODES} nodes, got {p.size}")
            if np.any(np.diff(p) <= 0):
                raise ValueError("tabulated nodes must be strictly increasing")
            if p[0] < 1 or p[-1] > self.b:
                raise ValueError("tabulated nodes must lie in [1, b]")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValueError("tabulated psi values must be finite and positive")
            object.__setattr__(self, "nodes", p)
            object.__setattr__(self, "values", v)
            object.__setattr__(self, "_nuv", p * np.log(v))

    # constructors ---------------------------------------------------------
    @classmethod
    def sqrt_p(cls):
        return cls(b=INF, func=np.sqrt, name="sqrt_p", params={"kind": "sqrt_p"})

    @classmethod
    def const(cls, b: float, value: float = 1.0):
        def f(p):
            return np.full(np.shape(p), float(value))

        return cls(b=b, func=f, name=f"const({value:g}) on [1,{b:g})",
                   params={"kind": "const", "b": b, "value": value})

    @classmethod
    def beta_b(cls, beta: float, b: float):
        """The family ``(b - p)^(-beta)`` on ``[1, b)``."""
        if beta <= 0 or not math.isfinite(b):
            raise ValueError("beta_b needs beta > 0 and finite b")

        def f(p):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.power(b - np.asarray(p, dtype=float), -beta)

        return cls(b=b, func=f, name=f"(b-p)^-{beta:g}, b={b:g}",
                   params={"kind": "beta_b", "beta": beta, "b": b})

    @classmethod
    def tabulated(cls, nodes, values, b: float | None = None, name: str = "tabulated"):
        nodes = np.asarray(nodes, dtype=float)
        if b is None:
            b = INF
        return cls(b=b, nodes=nodes, values=np.asarray(values, dtype=float), name=name,
                   params={"kind": "tabulated"})

    @classmethod
    def closed(cls, func: Callable, b: float, name: str = "closed"):
        return cls(b=b, func=func, name=name, params={"kind": "closed"})

    # evaluation -----------------------------------------------------------
    @property
    def is_tabulated(self) -> bool:
        return self.nodes is not None

    @property
    def p_max(self) -> float:
        """Right end of the closed domain used by optimisers."""
        return float(self.nodes[-1]) if self.is_tabulated else self.b

    @property
    def p_min(self) -> float:
        return float(self.nodes[0]) if self.is_tabulated else 1.0

    def raw(self, p):
        """psi without the formal ``+inf`` cut at ``b`` (continuous extension)."""
        p = np.asarray(p, dtype=float)
        if self.is_tabulated:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.exp(np.interp(p, self.nodes, self._nuv) / p)
            return np.where((p < self.nodes[0]) | (p > self.nodes[-1]), INF, out)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(self.func(p), dtype=float)
        return np.where(np.isnan(out), INF, out)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        out = self.raw(p)
        if not self.is_tabulated:
            out = np.where(p >= self.b, INF, out)
        return out

    def log(self, p, extended: bool = False):
        vals = self.raw(p) if extended else self(p)
        with np.errstate(divide="ignore"):
            return np.log(vals)

    def scaled(self, c: float) -> "PsiFunction":
        """``c * psi``; used to enforce ``sup_t ||xi(t)|| = 1``."""
        if c <= 0:
            raise ValueError("scale must be positive")
        if self.is_tabulated:
            return PsiFunction(b=self.b, nodes=self.nodes, values=self.values * c,
                               name=f"{c:g}*{self.name}", params={"kind": "tabulated"})
        base = self.func
        return PsiFunction(b=self.b, func=lambda p: c * np.asarray(base(p), dtype=float),
                           name=f"{c:g}*{self.name}", params=dict(self.params, scale=c))

    def grid(self, count: int = DEFAULT_GRID_NODES) -> np.ndarray:
        if self.is_tabulated:
            return self.nodes.copy()
        return default_p_grid(self.b, count)

    def tabulate(self, p_grid=None, name: str | None = None) -> "PsiFunction":
        p = self.grid() if p_grid is None else np.asarray(p_grid, dtype=float)
        v = self(p)
        keep = np.isfinite(v)
        return PsiFunction.tabulated(p[keep], v[keep], b=self.b, name=name or self.name)

    # serialisation --------------------------------------------------------
    def to_csv(self, path, p_grid=None):
        p = self.grid() if p_grid is None else np.asarray(p_grid, dtype=float)
        v = self(p)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "psi"])
            for pi, vi in zip(p, v):
                w.writerow([repr(float(pi)), repr(float(vi))])

    @classmethod
    def from_csv(cls, path, b: float | None = None):
        rows = []
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = [h.strip() for h in next(r)]
            if header[:2] != ["p", "psi"]:
                raise ValueError(f"{path}: expected header 'p,psi', got {header}")
            for row in r:
                if row:
                    rows.append((float(row[0]), float(row[1])))
        arr = np.array(rows, dtype=float)
        finite = np.isfinite(arr[:, 1])
        return cls.tabulated(arr[finite, 0], arr[finite, 1], b=b, name=str(path))


def psi_from_spec(spec: dict) -> PsiFunction:
    """Build a psi-function from a config mapping with a ``kind`` key."""
    kind = spec.get("kind")
    if kind == "sqrt_p":
        return PsiFunction.sqrt_p()
    if kind == "const":
        return PsiFunction.const(float(spec.get("b", INF)), float(spec.get("value", 1.0)))
    if kind == "beta_b":
        return PsiFunction.beta_b(float(spec["beta"]), float(spec["b"]))
    if kind == "tabulated":
        b = spec.get("b")
        path = spec.get("path", spec.get("csv"))
        if path is None:
            raise ValueError("tabulated psi needs a CSV path")
        return PsiFunction.from_csv(path, b=None if b is None else float(b))
    raise ValueError(f"unknown psi kind {kind!r}")


# random quantities --------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseVariable:
    """Variable equal to ``f_i(V)`` on a piece of probability ``w_i``.

    Within each piece ``V`` is uniform on ``(0, 1)``; the leftover mass
    ``1 - sum(w_i)`` carries the value 0.
    """

    pieces: tuple

    def __post_init__(self):
        total = sum(w for w, _ in self.pieces)
        if any(w < 0 for w, _ in self.pieces) or total > 1 + 1e-12:
            raise ValueError("piece weights must be nonnegative with sum <= 1")

    @property
    def zero_mass(self) -> float:
        return max(0.0, 1.0 - sum(w for w, _ in self.pieces))


def _probe_divergence(h, side: str) -> bool:
    """Whether ``h`` has a non-integrable singularity at 0 or 1."""
    def piece(d1, d2):
        if side == "left":
            return integrate.quad(h, d2, d1, limit=200)[0]
        return integrate.quad(h, 1 - d1, 1 - d2, limit=200)[0]

    inc1 = piece(1e-3, 1e-6)
    inc2 = piece(1e-6, 1e-9) if side == "left" else piece(1e-6, 1e-12)
    return inc1 > 0 and inc2 >= 0.9 * inc1


def integrate_unit(h: Callable, ceiling: float = QUAD_CEILING) -> float:
    """``int_0^1 h(x) dx`` for nonnegative ``h``; ``inf`` on detected divergence."""
    res = integrate.quad(h, 0.0, 1.0, limit=400, epsabs=0.0, epsrel=1e-12, full_output=1)
    val = res[0]
    if len(res) == 3 and math.isfinite(val) and val <= ceiling:
        return float(val)
    if not math.isfinite(val) or val > ceiling:
        return INF
    for side in ("left", "right"):
        if _probe_divergence(h, side):
            log.info("integral diverges at the %s endpoint", side)
            return INF
    # warnings on a convergent integrand: accept if the error estimate is small
    if res[1] <= 1e-8 * max(abs(val), 1e-300):
        return float(val)
    # retry with x = s^4 near each endpoint, which smooths algebraic singularities
    c = 0.5 ** 0.25
    left = integrate.quad(lambda s: 4 * s ** 3 * h(s ** 4), 0.0, c, limit=400, epsabs=0.0,
                          epsrel=1e-12, full_output=1)
    right = integrate.quad(lambda s: 4 * s ** 3 * h(1 - s ** 4), 0.0, c, limit=400, epsabs=0.0,
                           epsrel=1e-12, full_output=1)
    val2, err2 = left[0] + right[0], left[1] + right[1]
    if math.isfinite(val2) and err2 <= 1e-8 * max(abs(val2), 1e-300):
        return float(val2)
    raise QuadratureError(f"quadrature did not converge: {res[3]!r} (value {val}, err {res[1]})")


def expectation(data, h: Callable) -> float:
    """``E h(|eta|)`` for samples, a callable on (0,1), or a piecewise variable."""
    if isinstance(data, PiecewiseVariable):
        total = 0.0
        for w, f in data.pieces:
            if w == 0:
                continue
            val = integrate_unit(lambda x, f=f: h(np.abs(f(x))))
            if math.isinf(val):
                return INF
            total += w * val
        z = data.zero_mass
        if z > 0:
            total += z * float(h(0.0))
        return total
    if callable(data):
        return integrate_unit(lambda x: h(np.abs(data(x))))
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        raise ValueError("empty sample")
    return float(np.mean(h(np.abs(arr))))


def lp_norm(data, p):
    """Lebesgue-Riesz norm ``(E|eta|^p)^(1/p)``.

    ``p`` may be a scalar or array (samples only for arrays). Divergent
    quadratures give ``inf``.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 1):
        raise ValueError("p must be >= 1")
    if isinstance(data, (PiecewiseVariable,)) or callable(data):
        if p_arr.ndim:
            return np.array([lp_norm(data, float(q)) for q in p_arr.ravel()]).reshape(p_arr.shape)
        q = float(p_arr)
        m = expectation(data, lambda v: np.power(v, q))
        return INF if math.isinf(m) else m ** (1.0 / q)
    x = np.abs(np.asarray(data, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    top = x.max()
    if top == 0:
        return np.zeros_like(p_arr) if p_arr.ndim else 0.0
    scaled = x / top
    out = top * np.mean(scaled[:, None] ** p_arr.ravel()[None, :], axis=0) ** (1.0 / p_arr.ravel())
    return out.reshape(p_arr.shape) if p_arr.ndim else float(out[0])


def sample_moments(samples) -> Callable:
    """Empirical moment oracle ``p -> |eta|_p`` (no bias correction)."""
    samples = np.asarray(samples, dtype=float)
    return lambda p: lp_norm(samples, p)


class GridSup(NamedTuple):
    value: float
    p: float


def gls_norm(moments: Callable, psi: PsiFunction, p_grid=None) -> GridSup:
    """``sup_p |eta|_p / psi(p)`` over a p-grid, with the maximising p.

    ``moments`` maps an array of p to ``|eta|_p``. Nodes where psi is
    infinite do not count.
    """
    p = psi.grid() if p_grid is None else np.asarray(p_grid, dtype=float)
    ps = psi(p)
    use = np.isfinite(ps)
    if not np.any(use):
        raise ValueError("psi is infinite on the whole p-grid")
    p, ps = p[use], ps[use]
    m = np.asarray(moments(p), dtype=float)
    if np.all(np.isinf(m)):
        log.info("all moments infinite on the grid; GLS norm is +inf")
        return GridSup(INF, float(p[0]))
    if np.any(np.isinf(m)):
        k = int(np.argmax(np.isinf(m)))
        return GridSup(INF, float(p[k]))
    ratio = m / ps
    k = int(np.argmax(ratio))
    return GridSup(float(ratio[k]), float(p[k]))


def natural_psi(field, p_grid=None, points: Sequence[int] | None = None) -> PsiFunction:
    """Natural psi-function ``p -> sup_{t} |xi(t)|_p`` of a field.

    With ``p_grid`` the result is tabulated on the grid nodes where it is
    finite; without, it is evaluated exactly from the field's moment oracle.
    """
    idx = np.arange(len(field)) if points is None else np.asarray(points, dtype=int)
    if idx.size == 0:
        raise ValueError("empty set of points")
    b = field.b

    def sup_moment(p):
        p = np.asarray(p, dtype=float)
        t = idx.reshape((-1,) + (1,) * p.ndim)
        return np.max(field.moment(t, p[None, ...]), axis=0)

    probe = default_p_grid(b, 16) if p_grid is None else np.asarray(p_grid, dtype=float)
    vals = sup_moment(probe)
    finite = np.isfinite(vals)
    if not np.any(finite & (probe > 1)):
        raise NoGLSHomeError("field has no GLS home: no p > 1 with finite moments")
    if np.all(vals[finite] == 0):
        raise ValueError("field is identically zero on these points; psi would vanish")
    if p_grid is None:
        return PsiFunction.closed(sup_moment, b=b, name=f"natural psi of {field.name}")
    return PsiFunction.tabulated(probe[finite], vals[finite], b=b,
                                 name=f"natural psi of {field.name}")


# Young functions and Luxemburg norms ---------------------------------------

@dataclass(frozen=True)
class YoungFunction:
    """Even, convex, increasing ``Phi`` with ``Phi(0) = 0``."""

    func: Callable
    name: str = "Phi"

    def __call__(self, u):
        with np.errstate(over="ignore"):
            return self.func(np.abs(np.asarray(u, dtype=float)))

    @classmethod
    def power(cls, p: float):
        return cls(lambda u: np.power(u, p), name=f"u^{p:g}")

    @classmethod
    def subgaussian(cls):
        return cls(lambda u: np.expm1(u * u / 2.0), name="exp(u^2/2)-1")

    @classmethod
    def quartic_over_log(cls):
        """``e^2 u^2`` for ``|u| <= e``, ``u^4 / ln|u|`` beyond."""
        e = math.e

        def f(u):
            u = np.asarray(u, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                big = u ** 4 / np.log(np.maximum(u, e))
            return np.where(u <= e, e * e * u * u, big)

        return cls(f, name="u^4/ln u")


def _is_doubling(phi: YoungFunction, bound: float = 1e3) -> bool:
    """Numerical check of the Delta_2 condition ``Phi(2u) <= K Phi(u)`` for large u."""
    u = np.geomspace(1.0, 1e60, 400)
    with np.errstate(all="ignore"):
        r = phi(2 * u) / phi(u)
    return bool(np.all(np.isfinite(r)) and np.all(r <= bound))


def luxemburg_norm(data, phi: YoungFunction, rtol: float = 1e-8, kmax: float = 1e300) -> float:
    """``inf{k > 0 : E Phi(|eta|/k) <= 1}`` by bisection on ``log k``."""
    if not np.isfinite(phi(1.0)) or phi(0.0) != 0:
        raise ValueError("Phi must be finite with Phi(0) = 0")

    def excess(k):
        return expectation(data, lambda v: phi(v / k))

    if isinstance(data, PiecewiseVariable) or callable(data):
        k0 = lp_norm(data, 1.0)
    else:
        arr = np.abs(np.asarray(data, dtype=float))
        if arr.size == 0:
            raise ValueError("empty sample")
        k0 = float(arr.mean())
    if k0 == 0:
        return 0.0
    if not math.isfinite(k0):
        return INF
    hi = k0
    doubling = _is_doubling(phi)
    while not excess(hi) <= 1:
        if doubling and math.isinf(excess(hi)):
            # Phi(2u) <= K Phi(u): E Phi(|eta|/k) is infinite for every k
            return INF
        hi *= 4.0
        if hi > kmax:
            log.info("E Phi(|eta|/k) > 1 for every k tried; norm is +inf")
            return INF
    lo = hi
    while excess(lo) <= 1:
        lo /= 4.0
        if lo < 1e-300:
            return 0.0
    while hi / lo - 1 > rtol:
        mid = math.sqrt(lo * hi)
        if excess(mid) <= 1:
            hi = mid
        else:
            lo = mid
    return hi
