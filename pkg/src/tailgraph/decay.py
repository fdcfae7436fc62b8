"""Decay transforms and the generalized scaling operation.

A decay transform is an increasing diffeomorphism ``T: E -> [1, inf)`` with
``E = [e0, e1)`` and ``T(e0) = 1``.  It induces the commutative, associative
operation ``x * y = T^-1(T(x) T(y))`` on ``E``; power-law decay corresponds
to ``T = id`` (multiplication), exponential decay to ``T = exp`` (addition).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class DecayTransform:
    """An increasing diffeomorphism ``T`` from ``[e0, e1)`` onto ``[1, inf)``.

    Instances are immutable; prefer the named constructors (:func:`identity`,
    :func:`exponential`, :func:`power_exp`, :func:`log_decay`,
    :func:`finite_endpoint`) or :func:`custom`, which validates the callables.
    """

    e0: float
    e1: float
    T: Callable
    T_inv: Callable
    T_prime: Callable
    name: str = "custom"
    parameters: dict = field(default_factory=dict)
    # optional log T and its inverse: keep star accurate near e0 and past exp overflow
    log_T: Callable | None = None
    log_T_inv: Callable | None = None

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.e0) & (x < self.e1)

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(self.contains(x)):
            raise DomainError(
                f"value(s) outside E=[{self.e0}, {self.e1}) for decay '{self.name}'"
            )
        return x

    def star(self, x, y):
        """Return ``T_inv(T(x) T(y))`` elementwise (numpy broadcasting)."""
        x = self.check(x)
        y = self.check(y)
        with np.errstate(over="ignore"):
            if self.log_T is not None:
                out = np.asarray(self.log_T_inv(np.asarray(self.log_T(x)) + np.asarray(self.log_T(y))),
                                 dtype=float)
            else:
                prod = np.asarray(self.T(x), dtype=float) * np.asarray(self.T(y), dtype=float)
                if not np.all(np.isfinite(prod)):
                    raise OverflowError(f"T(x)T(y) overflows for decay '{self.name}'")
                out = np.asarray(self.T_inv(prod), dtype=float)
        if not np.all(np.isfinite(out)):
            raise OverflowError(f"T_inv(T(x)T(y)) overflows for decay '{self.name}'")
        return out[()] if out.ndim == 0 else out

    def star_vec(self, x: float, y):
        """Scalar-vector operation ``x * y := (x 1) * y``, componentwise."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.atleast_1d(self.star(np.full_like(y, float(x)), y))

    def to_dict(self) -> dict:
        if self.name == "custom":
            raise ValueError("custom decay transforms are not serializable")
        return {"name": self.name, "parameters": dict(self.parameters)}

    def grid(self, n: int = 200) -> np.ndarray:
        """Sample points of ``E`` used for validation, clipped where T overflows."""
        if math.isfinite(self.e1):
            return self.e0 + (self.e1 - self.e0) * (1.0 - np.geomspace(1.0, 1e-6, n))
        step = max(abs(self.e0), 1.0)
        pts = self.e0 + step * np.concatenate([[0.0], np.geomspace(1e-4, 1e3, n - 1)])
        with np.errstate(over="ignore"):
            tv = np.asarray(self.T(pts), dtype=float)
        keep = np.isfinite(tv) & (tv < 1e300)
        return pts[keep]

    def validate(self, rtol_inverse: float = 1e-10, rtol_derivative: float = 1e-6) -> None:
        """Check ``T(e0) = 1``, monotonicity, invertibility and the derivative on a grid."""
        if float(self.T(self.e0)) != 1.0:
            raise DomainError(f"T(e0) = {float(self.T(self.e0))!r}, expected exactly 1")
        x = self.grid()
        tx = np.asarray(self.T(x), dtype=float)
        if not np.all(np.diff(tx) > 0):
            raise DomainError("T is not strictly increasing on the validation grid")
        back = np.asarray(self.T_inv(tx), dtype=float)
        scale = np.maximum(np.abs(x), 1.0)
        if np.max(np.abs(back - x) / scale) > rtol_inverse:
            raise DomainError("T_inv(T(x)) != x on the validation grid")
        # away from the endpoints; the step follows the natural scale T/T'
        margin = 1e-3 * (max(abs(self.e0), 1.0) if not math.isfinite(self.e1) else self.e1 - self.e0)
        xi = x[(x > self.e0 + margin) & (x < self.e1 - margin)]
        tp = np.asarray(self.T_prime(xi), dtype=float)
        if np.any(tp <= 0):
            raise DomainError("T_prime must be positive")
        h = 1e-4 * np.minimum(np.maximum(np.abs(xi), 1e-3), np.asarray(self.T(xi)) / tp)
        ok = (h > 0) & (xi - h >= self.e0) & (xi + h < self.e1)
        xi, h, tp = xi[ok], h[ok], tp[ok]
        fd = (np.asarray(self.T(xi + h)) - np.asarray(self.T(xi - h))) / (2 * h)
        if np.max(np.abs(fd - tp) / np.abs(tp)) > rtol_derivative:
            raise DomainError("T_prime disagrees with finite differences of T")


def identity() -> DecayTransform:
    """Power-law decay: ``T(x) = x`` on ``[1, inf)``; the operation is multiplication."""
    return DecayTransform(
        1.0, math.inf,
        lambda x: np.asarray(x, dtype=float),
        lambda y: np.asarray(y, dtype=float),
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        name="id",
    )


def exponential() -> DecayTransform:
    """``T = exp`` on ``[0, inf)``; the operation is addition."""
    return DecayTransform(0.0, math.inf, np.exp, np.log, np.exp, name="exp",
                          log_T=lambda x: np.asarray(x, dtype=float),
                          log_T_inv=lambda s: np.asarray(s, dtype=float))


def power_exp(p: float) -> DecayTransform:
    """``T(x) = exp(x**p)`` on ``[0, inf)``; ``x * y`` is the p-norm of ``(x, y)``."""
    if p <= 0:
        raise ValueError("p must be positive")
    p = float(p)

    def T(x):
        return np.exp(np.asarray(x, dtype=float) ** p)

    def T_inv(y):
        return np.log(np.asarray(y, dtype=float)) ** (1.0 / p)

    def T_prime(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return p * x ** (p - 1.0) * np.exp(x**p)

    return DecayTransform(0.0, math.inf, T, T_inv, T_prime, name="power-exp",
                          parameters={"p": p},
                          log_T=lambda x: np.asarray(x, dtype=float) ** p,
                          log_T_inv=lambda s: np.asarray(s, dtype=float) ** (1.0 / p))


def _exp_inf(y):
    # T_inv overflows to inf beyond y ~ 709; callers filter non-finite points
    with np.errstate(over="ignore"):
        return np.exp(np.asarray(y, dtype=float))


def log_decay() -> DecayTransform:
    """``T(x) = log x`` on ``[e, inf)`` so that ``T(e0) = 1``."""
    return DecayTransform(
        math.e, math.inf,
        lambda x: np.log(np.asarray(x, dtype=float)),
        _exp_inf,
        lambda x: 1.0 / np.asarray(x, dtype=float),
        name="log",
    )


def finite_endpoint(e1: float) -> DecayTransform:
    """``T(x) = (1 - x/e1)^-1`` on ``[0, e1)``; ``x * y = x + y - xy/e1``."""
    if not (e1 > 0 and math.isfinite(e1)):
        raise ValueError("e1 must be positive and finite")
    e1 = float(e1)

    def T(x):
        return 1.0 / (1.0 - np.asarray(x, dtype=float) / e1)

    def T_inv(y):
        return e1 * (1.0 - 1.0 / np.asarray(y, dtype=float))

    def T_prime(x):
        return 1.0 / (e1 * (1.0 - np.asarray(x, dtype=float) / e1) ** 2)

    return DecayTransform(0.0, e1, T, T_inv, T_prime, name="finite-endpoint",
                          parameters={"e1": e1})


def custom(e0, e1, T, T_inv, T_prime) -> DecayTransform:
    """Build a user transform; raises :class:`DomainError` if it fails validation."""
    tr = DecayTransform(float(e0), float(e1), T, T_inv, T_prime, name="custom")
    tr.validate()
    return tr


_NAMED = {
    "id": lambda **kw: identity(),
    "exp": lambda **kw: exponential(),
    "power-exp": lambda p: power_exp(p),
    "log": lambda **kw: log_decay(),
    "finite-endpoint": lambda e1: finite_endpoint(e1),
}

_ALIASES = {"identity": "id", "exp-sq": "power-exp:2", "gaussian": "power-exp:2"}


def from_dict(d: dict) -> DecayTransform:
    try:
        factory = _NAMED[d["name"]]
    except KeyError:
        raise ValueError(f"unknown decay transform {d.get('name')!r}") from None
    return factory(**d.get("parameters", {}))


def from_string(spec: str) -> DecayTransform:
    """Parse CLI names: ``id``, ``exp``, ``exp-sq``, ``power-exp:P``, ``log``,
    ``finite-endpoint:E1``."""
    spec = _ALIASES.get(spec, spec)
    name, _, arg = spec.partition(":")
    if name == "power-exp":
        return power_exp(float(arg or 1.0))
    if name == "finite-endpoint":
        return finite_endpoint(float(arg or 1.0))
    return from_dict({"name": name})
