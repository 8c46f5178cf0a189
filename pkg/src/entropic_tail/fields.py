"""Random fields over finite index sets.

A field exposes a path sampler and two moment oracles,
``moment(t, p) = |xi(t)|_p`` and ``pair_moment(t, s, p) = |xi(t) - xi(s)|_p``.
Both broadcast over integer index arrays and p arrays.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .gls import INF


class NotPSDError(ValueError):
    pass


def gaussian_abs_moment(p):
    """``|N(0,1)|_p = sqrt(2) (Gamma((p+1)/2) / sqrt(pi))^(1/p)``."""
    p = np.asarray(p, dtype=float)
    return math.sqrt(2.0) * np.exp((gammaln((p + 1) / 2.0) - 0.5 * math.log(math.pi)) / p)


class FieldModel:
    """Base class; subclasses set ``name``, ``labels``, ``b``."""

    name = "field"
    labels: tuple = ()
    b = INF

    def __len__(self):
        return len(self.labels)

    def moment(self, t, p):
        raise NotImplementedError

    def pair_moment(self, t, s, p):
        raise NotImplementedError

    def sample_chunk(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def moment_matrix(self, p):
        """``|xi(t)|_p`` as an array of shape ``(|T|, len(p))``."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        t = np.arange(len(self))[:, None]
        return np.broadcast_to(self.moment(t, p[None, :]), (len(self), p.size))

    def pair_moment_tensor(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        n = len(self)
        t = np.arange(n)[:, None, None]
        s = np.arange(n)[None, :, None]
        return np.broadcast_to(self.pair_moment(t, s, p[None, None, :]), (n, n, p.size))

    def restrict(self, points) -> "FieldModel":
        return SubField(self, points)

    def is_zero(self, points=None) -> bool:
        idx = np.arange(len(self)) if points is None else np.asarray(points, dtype=int)
        return bool(np.all(self.moment(idx[:, None], np.array([1.0, 2.0])[None, :]) == 0))


class SubField(FieldModel):
    def __init__(self, parent: FieldModel, points):
        self.parent = parent
        self.idx = np.asarray(points, dtype=int)
        self.labels = tuple(parent.labels[i] for i in self.idx)
        self.b = parent.b
        self.name = f"{parent.name}[{len(self.idx)} pts]"

    def moment(self, t, p):
        return self.parent.moment(self.idx[np.asarray(t)], p)

    def pair_moment(self, t, s, p):
        return self.parent.pair_moment(self.idx[np.asarray(t)], self.idx[np.asarray(s)], p)

    def sample_chunk(self, rng, count):
        return self.parent.sample_chunk(rng, count)[:, self.idx]

    def restrict(self, points):
        return SubField(self.parent, self.idx[np.asarray(points, dtype=int)])


def factor_covariance(cov, clamp: float = 1e-12) -> np.ndarray:
    """Square-root factor ``L`` with ``L @ L.T == cov`` via eigendecomposition.

    Eigenvalues in ``[-clamp * scale, 0)`` are zeroed; anything more negative
    is rejected.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise NotPSDError("covariance is not symmetric")
    w, v = np.linalg.eigh(cov)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w.min() < -clamp * scale:
        raise NotPSDError(f"covariance not positive semi-definite: smallest eigenvalue {w.min():.3e}")
    w = np.where(w < clamp * scale, np.maximum(w, 0.0), w)
    return v * np.sqrt(w)


class GaussianField(FieldModel):
    """Centred Gaussian field with a given covariance matrix."""

    def __init__(self, cov, labels=None, name="gaussian"):
        self.cov = np.asarray(cov, dtype=float)
        n = self.cov.shape[0]
        self.labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(n))
        self.name = name
        self.b = INF
        self.factor = factor_covariance(self.cov)
        self.sd = np.sqrt(np.clip(np.diag(self.cov), 0.0, None))
        var = np.diag(self.cov)
        self.pair_sd = np.sqrt(np.clip(var[:, None] + var[None, :] - 2 * self.cov, 0.0, None))

    def moment(self, t, p):
        return self.sd[np.asarray(t)] * gaussian_abs_moment(p)

    def pair_moment(self, t, s, p):
        return self.pair_sd[np.asarray(t), np.asarray(s)] * gaussian_abs_moment(p)

    def sample_chunk(self, rng, count):
        z = rng.standard_normal((count, self.factor.shape[1]))
        return z @ self.factor.T


def gaussian_circle(n_points: int = 32, length_scale: float = 0.5, sigma: float = 1.0) -> GaussianField:
    """Equally spaced points on the unit circle, squared-exponential covariance in chord distance."""
    ang = 2 * np.pi * np.arange(n_points) / n_points
    xy = np.column_stack((np.cos(ang), np.sin(ang)))
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
    cov = sigma ** 2 * np.exp(-d2 / (2 * length_scale ** 2))
    return GaussianField(cov, labels=[f"c{k}" for k in range(n_points)],
                         name=f"gaussian_circle(n={n_points}, l={length_scale:g})")


class ConstantField(FieldModel):
    """Deterministic field ``xi(t) = c_t``.

    ``b`` caps the moment range used downstream (all moments are finite).
    """

    def __init__(self, values, labels=None, b: float = INF):
        self.values = np.asarray(values, dtype=float)
        self.labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(self.values.size))
        self.name = "constant"
        self.b = b

    def moment(self, t, p):
        t = np.asarray(t)
        return np.abs(self.values[t]) + 0.0 * np.asarray(p, dtype=float)

    def pair_moment(self, t, s, p):
        return np.abs(self.values[np.asarray(t)] - self.values[np.asarray(s)]) + 0.0 * np.asarray(p, dtype=float)

    def sample_chunk(self, rng, count):
        return np.tile(self.values, (count, 1))


class ScaledField(FieldModel):
    """``K * xi(t)`` for a fixed positive K."""

    def __init__(self, base: FieldModel, factor: float):
        if factor <= 0:
            raise ValueError("factor must be positive")
        self.base = base
        self.factor = float(factor)
        self.labels = base.labels
        self.b = base.b
        self.name = f"{factor:g}*{base.name}"

    def moment(self, t, p):
        return self.factor * self.base.moment(t, p)

    def pair_moment(self, t, s, p):
        return self.factor * self.base.pair_moment(t, s, p)

    def sample_chunk(self, rng, count):
        return self.factor * self.base.sample_chunk(rng, count)
