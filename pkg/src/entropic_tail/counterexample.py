"""The disjoint-bump counterexample process ``g_n`` over ``{1, 2, ..., inf}``.

With ``c_n = n^beta`` and ``Delta_n = C(beta) n^(-4 beta - 1)`` (normalised
to sum to 1), the intervals ``(a_{n+1}, a_n)``, ``a_n = sum_{m >= n} Delta_m``,
tile ``(0, 1)`` and

    g_n(x) = c_n f((x - a_{n+1}) / Delta_n)  on  (a_{n+1}, a_n),   g_inf = 0.

The functions are disjoint, so ``sup_n g_n = sum_n g_n`` and
``|g_n|_p^p = C(beta) n^(p beta - 4 beta - 1) nu(p)^p`` with ``nu(p) = |f|_p``.
Indices start at n = 1 (``c_1 = 1``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .bounds import TailBoundCurve
from .fields import FieldModel
from .gls import INF, PiecewiseVariable, lp_norm
from .metric import harmonic_space

# working moment range of the construction
P_WORK = 4.0


def zeta_tail(s: float, n0: int = 1) -> float:
    """``sum_{n >= n0} n^(-s)`` for ``s > 1``: direct sum plus Euler-Maclaurin remainder."""
    if s <= 1:
        raise ValueError("series diverges for s <= 1")
    m = max(int(n0), 16 + int(math.ceil(s)))
    head = 0.0
    if m > n0:
        n = np.arange(int(n0), m, dtype=float)
        head = float(np.sum(n[::-1] ** -s))
    M = float(m)
    tail = (M ** (1 - s) / (s - 1) + 0.5 * M ** -s
            + s * M ** (-s - 1) / 12.0
            - s * (s + 1) * (s + 2) * M ** (-s - 3) / 720.0
            + s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * M ** (-s - 5) / 30240.0)
    return head + tail


@dataclass(frozen=True)
class BaseFunction:
    """The bump shape ``f`` on (0, 1) with its moment curve and survival law."""

    name: str
    func: Callable
    nu: Callable  # p -> |f|_p
    survival: Callable | None  # v -> P(f(U) > v)
    p_limit: float  # f in L_p for p < p_limit

    def survival_numeric(self, v, nodes: int = 1 << 20):
        x = (np.arange(nodes) + 0.5) / nodes
        fx = np.sort(self.func(x))
        v = np.asarray(v, dtype=float)
        return 1.0 - np.searchsorted(fx, v, side="right") / nodes

    def sf(self, v):
        if self.survival is not None:
            return self.survival(v)
        return self.survival_numeric(v)


def power_base(alpha: float = 0.125) -> BaseFunction:
    """``f(x) = x^(-alpha)``: ``nu(p) = (1/(1 - alpha p))^(1/p)``, ``P(f > v) = min(1, v^(-1/alpha))``."""
    def f(x):
        return np.power(x, -alpha)

    def nu(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.power(1.0 / (1.0 - alpha * p), 1.0 / p)
        return np.where(alpha * p < 1, out, INF)

    def sf(v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(v <= 1, 1.0, np.power(np.where(v > 0, v, 1.0), -1.0 / alpha))

    return BaseFunction(f"x^-{alpha:g}", f, nu, sf, 1.0 / alpha)


def sqrt_log_base() -> BaseFunction:
    """``f(x) = sqrt|ln x|``: ``|f|_p^p = Gamma(p/2 + 1)``, ``P(f > v) = exp(-v^2)``."""
    def f(x):
        return np.sqrt(np.abs(np.log(x)))

    def nu(p):
        p = np.asarray(p, dtype=float)
        return np.exp(gammaln(p / 2 + 1) / p)

    def sf(v):
        v = np.asarray(v, dtype=float)
        return np.where(v <= 0, 1.0, np.exp(-v * v))

    return BaseFunction("sqrt|ln x|", f, nu, sf, INF)


def custom_base(func: Callable, name: str = "custom") -> BaseFunction:
    """Arbitrary bump shape; moments by quadrature, survival by level-set measure."""
    def nu(p):
        p = np.asarray(p, dtype=float)
        return np.array([lp_norm(func, float(q)) for q in p.ravel()]).reshape(p.shape)

    return BaseFunction(name, func, nu, None, INF)


BASES = {"power": power_base, "sqrt_log": sqrt_log_base}


@dataclass(frozen=True, eq=False)
class CounterexampleModel:
    beta: float
    N: int
    base: BaseFunction
    C: float
    a: np.ndarray  # a[k] = a_{k+1}, k = 0..N (a[0] = 1)

    @property
    def s(self) -> float:
        return 4 * self.beta + 1

    def c(self, n):
        return np.power(np.asarray(n, dtype=float), self.beta)

    def delta(self, n):
        return self.C * np.power(np.asarray(n, dtype=float), -self.s)

    def a_n(self, n: int) -> float:
        """``a_n`` for any n >= 1 (beyond the table via the series tail)."""
        if 1 <= n <= self.N + 1:
            return float(self.a[n - 1])
        return self.C * zeta_tail(self.s, n)

    def g(self, n: int, x):
        """``g_n(x)``; zero off its support interval."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.a_n(n + 1), self.a_n(n)
        inside = (x > lo) & (x < hi)
        t = np.where(inside, (x - lo) / float(self.delta(n)), 0.5)
        return np.where(inside, float(self.c(n)) * self.base.func(t), 0.0)

    def g_sum(self, x):
        """``g(x) = sum_n g_n(x)`` over the truncated range n <= N."""
        x = np.asarray(x, dtype=float)
        n = self.active_index(x)
        out = np.zeros_like(x)
        ok = n <= self.N
        if np.any(ok):
            nn = n[ok]
            lo = self.a[nn]
            t = (x[ok] - lo) / self.delta(nn)
            out[ok] = self.c(nn) * self.base.func(t)
        return out

    def active_index(self, x):
        """The n whose support contains x; ``N + 1`` when below ``a_{N+1}``."""
        x = np.asarray(x, dtype=float)
        return np.searchsorted(-self.a, -x, side="right")

    def nu(self, p):
        return self.base.nu(p)

    def field(self, signed: bool = False) -> "CounterexampleField":
        return CounterexampleField(self, signed)

    def space(self):
        return harmonic_space(self.N)

    def piece(self, n: int, sign: float = 1.0):
        cn = float(self.c(n))
        f = self.base.func
        return (float(self.delta(n)), lambda v: sign * cn * f(v))

    def difference_variable(self, n, m) -> PiecewiseVariable:
        """``g_n - g_m`` (either index may be ``inf``) as a piecewise variable."""
        pieces = []
        if n != m:
            if n != INF:
                pieces.append(self.piece(int(n), 1.0))
            if m != INF:
                pieces.append(self.piece(int(m), -1.0))
        return PiecewiseVariable(tuple(pieces))

    def tail_sup_variable(self, n: int) -> PiecewiseVariable:
        """``sup_{k >= n} |g_k|`` over the truncated range."""
        return PiecewiseVariable(tuple(self.piece(k) for k in range(n, self.N + 1)))


def build_model(beta: float = 1.0, N: int = 256, base: BaseFunction | str = "power") -> CounterexampleModel:
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if N < 2:
        raise ValueError("N must be >= 2")
    if isinstance(base, str):
        base = BASES[base]()
    nu_work = base.nu(np.array([1.0, P_WORK]))
    if not np.all(np.isfinite(nu_work)):
        raise ValueError(f"base function {base.name} has divergent moments on [1, {P_WORK}]")
    s = 4 * beta + 1
    C = 1.0 / zeta_tail(s, 1)
    n = np.arange(1, N + 1, dtype=float)
    deltas = C * n ** -s
    a = np.empty(N + 1)
    a[N] = C * zeta_tail(s, N + 1)
    # a_n = a_{n+1} + Delta_n, accumulated from the small end
    a[:N] = a[N] + np.cumsum(deltas[::-1])[::-1]
    return CounterexampleModel(beta, int(N), base, C, a)


def exact_moment(model: CounterexampleModel, n, p):
    """``|g_n|_p^p = C(beta) n^(p beta - 4 beta - 1) nu(p)^p``."""
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    return model.C * np.power(n, p * model.beta - model.s) * np.power(model.nu(p), p)


class CounterexampleField(FieldModel):
    """The process ``t -> g_t`` on ``{1..N, inf}``, optionally Rademacher-signed."""

    def __init__(self, model: CounterexampleModel, signed: bool = False):
        self.model = model
        self.signed = signed
        self.labels = tuple(str(i) for i in range(1, model.N + 1)) + ("inf",)
        self.b = P_WORK
        self.name = f"counterexample(beta={model.beta:g}, N={model.N}{', signed' if signed else ''})"

    def _pth(self, t, p):
        t = np.asarray(t)
        n = np.where(t >= self.model.N, 1, t + 1)
        val = exact_moment(self.model, n, p)
        return np.where(t >= self.model.N, 0.0, val)

    def moment(self, t, p):
        p = np.asarray(p, dtype=float)
        return np.power(self._pth(t, p), 1.0 / p)

    def pair_moment(self, t, s, p):
        # disjoint supports: |g_n - g_m|_p^p = |g_n|_p^p + |g_m|_p^p
        p = np.asarray(p, dtype=float)
        t, s = np.asarray(t), np.asarray(s)
        tot = self._pth(t, p) + self._pth(s, p)
        return np.where(t == s, 0.0, np.power(tot, 1.0 / p))

    def sample_chunk(self, rng, count):
        m = self.model
        x = rng.random(count)
        n = m.active_index(x)
        paths = np.zeros((count, m.N + 1))
        ok = np.flatnonzero(n <= m.N)
        nn = n[ok]
        vals = m.c(nn) * m.base.func((x[ok] - m.a[nn]) / m.delta(nn))
        if self.signed:
            signs = 2.0 * rng.integers(0, 2, size=(count, m.N)) - 1.0
            vals = vals * signs[ok, nn - 1]
        paths[ok, nn - 1] = vals
        return paths


def symmetrize(model: CounterexampleModel) -> CounterexampleField:
    """Rademacher-signed version ``eps_n g_n``; signs are drawn per sampled path."""
    return model.field(signed=True)


@dataclass
class SupMomentCurve:
    p: np.ndarray
    norm: np.ndarray  # |sup_n g_n|_p
    compensated: np.ndarray  # (4 - p)^(1/4) |sup_n g_n|_p
    C2: float
    N_used: int


def sup_pth_moment(model: CounterexampleModel, p: float, N: int) -> float:
    """``sum_n |g_n|_p^p`` over all n >= 1, as partial sum to N plus series remainder."""
    e = model.s - p * model.beta
    n = np.arange(1, N + 1, dtype=float)
    head = float(np.sum((n ** -e)[::-1]))
    return model.C * float(model.nu(p)) ** p * (head + zeta_tail(e, N + 1))


def sup_moment_curve(model: CounterexampleModel, p_grid, rtol: float = 1e-6,
                     N0: int = 16, N_max: int = 1 << 22) -> SupMomentCurve:
    """``p -> |sup_n g_n|_p`` on ``[1, 4)`` with the truncation level fixed by doubling N."""
    p = np.asarray(p_grid, dtype=float)
    if np.any(p < 1) or np.any(p >= P_WORK):
        raise ValueError("p-grid must lie in [1, 4)")
    N = N0
    prev = np.array([sup_pth_moment(model, q, N) for q in p])
    while True:
        N *= 2
        cur = np.array([sup_pth_moment(model, q, N) for q in p])
        if np.max(np.abs(cur - prev) / cur) < rtol or N >= N_max:
            break
        prev = cur
    norm = cur ** (1.0 / p)
    comp = (P_WORK - p) ** 0.25 * norm
    C2 = (model.C * float(model.nu(P_WORK)) ** P_WORK / model.beta) ** 0.25
    return SupMomentCurve(p, norm, comp, C2, N)


def exact_tail(model: CounterexampleModel, u_grid, truncated: bool = True) -> TailBoundCurve:
    """Exact law ``P(sup_n |g_n| > u) = sum_n Delta_n P(f(U) > u / c_n)``.

    With ``truncated`` only n <= N contribute (the field that is sampled).
    """
    u = np.asarray(u_grid, dtype=float)
    n = np.arange(1, model.N + 1, dtype=float)
    d = model.delta(n)
    cn = model.c(n)
    out = np.array([float(np.sum((d * model.base.sf(uu / cn))[::-1])) for uu in u])
    if not truncated:
        if model.base.survival is None or not model.base.name.startswith("x^-"):
            raise ValueError("untruncated law needs the power base")
        extra = []
        for uu in u:
            # n >= u^(1/beta) has P(f > u/c_n) = 1
            nu_ = max(model.N + 1, int(math.ceil(max(uu, 0.0) ** (1.0 / model.beta))))
            k = np.arange(model.N + 1, nu_, dtype=float)
            part = float(np.sum(model.delta(k) * model.base.sf(uu / model.c(k)))) if k.size else 0.0
            extra.append(part + model.a_n(nu_))
        out = out + np.array(extra)
    return TailBoundCurve(u, out, "empirical", ["exact law of the counterexample"])


def tail_shape_ratio(curve: TailBoundCurve) -> np.ndarray:
    """``u^4 P(sup > u) / ln u`` on the part of the grid with ``u > e``."""
    u = curve.u
    keep = u > math.e
    return u[keep], u[keep] ** 4 * curve.values[keep] / np.log(u[keep])


def fit_quartic_log_constant(curve: TailBoundCurve) -> float:
    """Smallest C with ``curve(u) <= C ln u / u^4`` on the grid points ``u > e``."""
    _, r = tail_shape_ratio(curve)
    return float(np.max(r))


def quartic_log_bound(u, C1: float) -> TailBoundCurve:
    """The curve ``min(1, C1 ln u / u^4)`` (1 for ``u <= e``)."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(u > math.e, C1 * np.log(np.maximum(u, math.e)) / u ** 4, 1.0)
    return TailBoundCurve(u, v, "exact")


def markov_series_check(model: CounterexampleModel, eps: float):
    """``(sum_n P(g_n > eps), sum_n |g_n|_1 / eps)`` over all n."""
    exact = exact_tail(model, [eps], truncated=False).values[0]
    # sum_n P(g_n > eps) equals P(sup > eps) for disjoint nonnegative g_n
    markov = model.C * float(model.nu(1.0)) * zeta_tail(3 * model.beta + 1, 1) / eps
    return float(exact), float(markov)
