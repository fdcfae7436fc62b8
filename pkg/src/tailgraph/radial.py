"""Radial coordinate systems ``x -> (r(x), theta(x))`` homogeneous w.r.t. a decay.

Every system satisfies ``r(scale(lam, x)) = lam * r(x)`` and
``theta(scale(lam, x)) = theta(x)``, where ``scale(lam, x) = (lam * |x|) sign(x)``
uses the star operation of the system's decay.  Charts are orthant-wise: the
sign vector is carried next to ``theta`` and the radial part acts on ``|x|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .decay import DecayTransform, DomainError, exponential, identity


@dataclass(frozen=True)
class RadialCoords:
    """Result of :func:`to_radial`.

    ``chart`` is only meaningful for the sup-norm system, where it records the
    coordinate attaining the maximum; ``signs`` is the sign vector of ``x``.
    """

    r: np.ndarray
    theta: np.ndarray
    chart: np.ndarray | None
    signs: np.ndarray


class RadialSystem:
    """Base class; subclasses implement the chart on the nonnegative orthant."""

    name = "base"
    signed = True

    def __init__(self, dim: int, decay: DecayTransform | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.decay = decay if decay is not None else identity()

    # -- chart on |x| ------------------------------------------------------
    def _r(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _theta(self, a: np.ndarray, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _inverse(self, r, theta, chart) -> np.ndarray:
        raise NotImplementedError

    def _chart(self, a: np.ndarray):
        return None

    def jacobian(self, r, theta, chart=None) -> np.ndarray:
        """``|det D phi^-1|`` at ``(r, theta)``; finite differences unless overridden."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        theta = np.atleast_2d(np.asarray(theta, dtype=float)).reshape(r.shape[0], self.dim - 1)
        out = np.empty(r.shape[0])
        ch = None if chart is None else np.broadcast_to(np.asarray(chart), r.shape)
        for n in range(r.shape[0]):
            z = np.concatenate([[r[n]], theta[n]])
            J = np.empty((self.dim, self.dim))
            for k in range(self.dim):
                h = 1e-6 * max(abs(z[k]), 1.0)
                zp, zm = z.copy(), z.copy()
                zp[k] += h
                zm[k] -= h
                c = None if ch is None else ch[n:n + 1]
                J[:, k] = (self._inverse(zp[:1], zp[None, 1:], c)[0]
                           - self._inverse(zm[:1], zm[None, 1:], c)[0]) / (2 * h)
            out[n] = abs(np.linalg.det(J))
        return out

    # -- public API --------------------------------------------------------
    def _prepare(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected points of dimension {self.dim}, got {x.shape[-1]}")
        signs = np.sign(x)
        if not self.signed and np.any(signs < 0):
            raise DomainError(f"system '{self.name}' is defined on the nonnegative orthant only")
        a = np.abs(x)
        if np.any(np.all(a == 0, axis=-1)):
            raise DomainError("radial coordinates are undefined at the origin")
        return a, signs

    def r(self, x) -> np.ndarray:
        a, _ = self._prepare(x)
        return self._r(a)

    def theta(self, x) -> np.ndarray:
        a, _ = self._prepare(x)
        return self._theta(a, self._r(a))

    def chart(self, x):
        a, _ = self._prepare(x)
        return self._chart(a)

    def inverse(self, r, theta, chart=None, signs=None) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        scalar = r.ndim == 0
        r1 = np.atleast_1d(r)
        th = theta.reshape(r1.shape[0], self.dim - 1)
        ch = None if chart is None else np.broadcast_to(np.asarray(chart), r1.shape)
        out = self._inverse(r1, th, ch)
        if signs is not None:
            out = out * np.where(np.asarray(signs) == 0, 1.0, np.asarray(signs))
        return out[0] if scalar else out

    def forward_jacobian(self, x) -> np.ndarray:
        """``|det D phi|`` at ``x``, the reciprocal of :meth:`jacobian`."""
        c = to_radial(x, self)
        return 1.0 / self.jacobian(c.r, c.theta, c.chart)

    def scale(self, lam, x) -> np.ndarray:
        """``(lam * |x|) sign(x)`` with the system's star operation; zeros stay zero."""
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        T = self.decay
        with np.errstate(divide="ignore"):
            out = np.asarray(T.T_inv(np.asarray(T.T(lam)) * np.asarray(T.T(a))), dtype=float)
        return np.where(x == 0, 0.0, out * np.sign(x))

    def sample_points(self, rng: np.random.Generator, n: int, signed: bool = False) -> np.ndarray:
        a = np.abs(rng.standard_normal((n, self.dim))) + 1e-3
        a = a / self._r(a)[:, None] * rng.uniform(1.0, 3.0, size=(n, 1))
        if signed and self.signed:
            a = a * rng.choice([-1.0, 1.0], size=a.shape)
        return a

    def random_theta(self, rng: np.random.Generator, n: int):
        """Uniform random angular points (and charts where relevant)."""
        pts = self.sample_points(rng, n)
        c = to_radial(pts, self)
        return c.theta, c.chart

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, decay={self.decay.name!r})"


class L1Simplex(RadialSystem):
    """``r = ||x||_1``, ``theta = |x|_{1:d-1} / r``; last coordinate ``1 - sum(theta)``."""

    name = "l1-simplex"

    def _r(self, a):
        return a.sum(axis=-1)

    def _theta(self, a, r):
        return a[..., :-1] / r[..., None]

    def _inverse(self, r, theta, chart):
        if np.any(theta < -1e-15) or np.any(theta.sum(axis=-1) > 1 + 1e-12):
            raise DomainError("theta outside the unit simplex")
        last = np.clip(1.0 - theta.sum(axis=-1), 0.0, None)
        return r[:, None] * np.concatenate([theta, last[:, None]], axis=-1)

    def jacobian(self, r, theta, chart=None):
        return np.atleast_1d(np.asarray(r, dtype=float)) ** (self.dim - 1)

    def random_theta(self, rng, n):
        w = rng.dirichlet(np.ones(self.dim), size=n)
        return w[:, :-1], None


class Sphere(RadialSystem):
    """Euclidean pseudo-polar chart: ``r = ||x||_2``, ``theta = |x|_{1:d-1} / r``."""

    name = "sphere"

    def _r(self, a):
        return np.sqrt((a * a).sum(axis=-1))

    def _theta(self, a, r):
        return a[..., :-1] / r[..., None]

    def _last(self, theta):
        s = 1.0 - (theta * theta).sum(axis=-1)
        if np.any(s < -1e-12) or np.any(theta < -1e-15):
            raise DomainError("theta outside the positive unit sphere chart")
        return np.sqrt(np.clip(s, 0.0, None))

    def _inverse(self, r, theta, chart):
        return r[:, None] * np.concatenate([theta, self._last(theta)[:, None]], axis=-1)

    def jacobian(self, r, theta, chart=None):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        theta = np.asarray(theta, dtype=float).reshape(r.shape[0], self.dim - 1)
        return r ** (self.dim - 1) / self._last(theta)


class LInf(RadialSystem):
    """Sup-norm chart with face bookkeeping.

    ``r = max |x_j|`` and ``chart`` is the (lowest) index attaining it.  The
    angle drops that coordinate and stores ``T(|x_j|) / T(r)`` for the others,
    which is ``|x_j| / r`` under power-law decay.
    """

    name = "linf"

    def _r(self, a):
        return a.max(axis=-1)

    def _chart(self, a):
        return np.argmax(a, axis=-1)

    def _theta(self, a, r):
        m = np.argmax(a, axis=-1)
        T = self.decay
        a2 = np.atleast_2d(a)
        ratio = np.asarray(T.T(a2)) / np.asarray(T.T(np.atleast_1d(r)))[:, None]
        keep = np.ones_like(a2, dtype=bool)
        keep[np.arange(a2.shape[0]), np.atleast_1d(m)] = False
        out = ratio[keep].reshape(a2.shape[0], self.dim - 1)
        return out if a.ndim > 1 else out[0]

    def _inverse(self, r, theta, chart):
        if chart is None:
            chart = np.full(r.shape, self.dim - 1)
        chart = np.asarray(chart, dtype=int)
        if np.any(theta < 0) or np.any(theta > 1 + 1e-12):
            raise DomainError("theta outside the sup-norm face [0, 1]^(d-1)")
        T = self.decay
        vals = np.asarray(T.T_inv(theta * np.asarray(T.T(r))[:, None]), dtype=float)
        out = np.empty((r.shape[0], self.dim))
        for n in range(r.shape[0]):
            out[n] = np.insert(vals[n], chart[n], r[n])
        return out

    def jacobian(self, r, theta, chart=None):
        if self.decay.name == "id":
            return np.atleast_1d(np.asarray(r, dtype=float)) ** (self.dim - 1)
        return super().jacobian(r, theta, chart)

    def sample_points(self, rng, n, signed=False):
        if self.decay.name == "id":
            return super().sample_points(rng, n, signed)
        e0 = self.decay.e0
        a = e0 + rng.uniform(0.0, 3.0, size=(n, self.dim))
        if signed:
            a = a * rng.choice([-1.0, 1.0], size=a.shape)
        return a


class LogPseudoPolar(RadialSystem):
    """Pseudo-polar chart under exponential decay (``star`` is addition).

    ``r = log(sum exp(x))``, ``theta = x_{1:d-1} - r``.
    """

    name = "log-pseudo-polar"
    signed = False

    def __init__(self, dim: int, decay: DecayTransform | None = None):
        super().__init__(dim, decay if decay is not None else exponential())
        if self.decay.name != "exp":
            raise ValueError("log-pseudo-polar coordinates require exponential decay")

    def _r(self, a):
        m = a.max(axis=-1)
        return m + np.log(np.exp(a - m[..., None]).sum(axis=-1))

    def _theta(self, a, r):
        return a[..., :-1] - r[..., None]

    def _inverse(self, r, theta, chart):
        s = np.exp(theta).sum(axis=-1)
        if np.any(s >= 1.0):
            raise DomainError("theta outside the log-simplex")
        last = r + np.log1p(-s)
        return np.concatenate([theta + r[:, None], last[:, None]], axis=-1)

    def jacobian(self, r, theta, chart=None):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        theta = np.asarray(theta, dtype=float).reshape(r.shape[0], self.dim - 1)
        return 1.0 / (1.0 - np.exp(theta).sum(axis=-1))

    def scale(self, lam, x):
        return np.asarray(x, dtype=float) + np.asarray(lam, dtype=float)

    def sample_points(self, rng, n, signed=False):
        return rng.uniform(0.0, 3.0, size=(n, self.dim))


_SYSTEMS: dict[str, type[RadialSystem]] = {
    "linf": LInf,
    "l1-simplex": L1Simplex,
    "l1": L1Simplex,
    "sphere": Sphere,
    "log-pseudo-polar": LogPseudoPolar,
}


def make_system(name: str, dim: int, decay: DecayTransform | None = None) -> RadialSystem:
    try:
        cls = _SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown radial system {name!r}") from None
    return cls(dim, decay)


def to_radial(x, sys: RadialSystem) -> RadialCoords:
    a, signs = sys._prepare(x)
    r = sys._r(a)
    return RadialCoords(r=r, theta=sys._theta(a, r), chart=sys._chart(a), signs=signs)


def from_radial(r, theta, sys: RadialSystem, chart=None, signs=None) -> np.ndarray:
    return sys.inverse(r, theta, chart=chart, signs=signs)


@dataclass
class HomogeneityReport:
    max_residual: float
    n_points: int
    zero_points: np.ndarray
    lambdas: tuple

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "n_points": self.n_points,
            "n_zero_points": int(len(self.zero_points)),
            "lambdas": list(self.lambdas),
        }


def check_homogeneity(
    f: Callable,
    order: float,
    sys: RadialSystem,
    n_points: int = 1000,
    lambdas=(1.5, 2.0, 5.0, 10.0),
    seed: int = 0,
    signed: bool = False,
    points: np.ndarray | None = None,
) -> HomogeneityReport:
    """Largest relative residual ``|f(scale(lam, x)) - T(lam)^order f(x)| / f(x)``.

    ``f`` must be vectorized over rows.  Points where ``f(x) = 0`` are returned
    in :attr:`HomogeneityReport.zero_points` and excluded from the maximum.
    """
    rng = np.random.default_rng(seed)
    x = sys.sample_points(rng, n_points, signed=signed) if points is None else np.asarray(points)
    fx = np.asarray(f(x), dtype=float)
    zero = fx == 0
    worst = 0.0
    for lam in lambdas:
        fl = np.asarray(f(sys.scale(lam, x)), dtype=float)
        factor = float(sys.decay.T(lam)) ** order
        res = np.abs(fl[~zero] - factor * fx[~zero]) / np.abs(fx[~zero])
        if res.size:
            worst = max(worst, float(np.max(res)))
    return HomogeneityReport(worst, int(x.shape[0]), x[zero], tuple(lambdas))
