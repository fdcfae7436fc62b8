"""Built-in univariate and bivariate test densities addressable by name.

Each fixture bundles a decay transform with a density ``f`` and a survival
function ``F_bar``.  Survival functions are written to avoid cancellation far
in the tail, which is where the probes evaluate them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from . import decay as dec


@dataclass(frozen=True)
class Fixture:
    name: str
    decay: dec.DecayTransform
    f: Callable
    F_bar: Callable
    index: float
    dim: int = 1
    notes: str = ""
    extra: dict = field(default_factory=dict)


def _gauss_f(x):
    return stats.norm.pdf(x)


def _gauss_sf(x):
    return stats.norm.sf(x)


def gaussian() -> Fixture:
    """Standard normal under ``T(x) = exp(x^2)``; the survival index is -1/2."""
    return Fixture("gaussian", dec.power_exp(2.0), _gauss_f, _gauss_sf, -0.5,
                   notes="phi/T' has index -3/2, Phi_bar has index -1/2")


def _logcauchy_f(x):
    x = np.asarray(x, dtype=float)
    lx = np.log(x)
    return 1.0 / (np.pi * x * (1.0 + lx * lx))


def _logcauchy_sf(x):
    x = np.asarray(x, dtype=float)
    lx = np.log(x)
    with np.errstate(divide="ignore"):
        upper = np.arctan(1.0 / lx) / np.pi
    return np.where(lx > 0, upper, 0.5 - np.arctan(lx) / np.pi)


def log_cauchy() -> Fixture:
    """Log-Cauchy (``log X`` standard Cauchy) under log decay; survival index -1."""
    return Fixture("log-cauchy", dec.log_decay(), _logcauchy_f, _logcauchy_sf, -1.0)


def _ex1_sf(x):
    x = np.asarray(x, dtype=float)
    si_x, _ = special.sici(x)
    si_1, _ = special.sici(1.0)
    return x ** -2.0 * np.exp(-(si_x - si_1))


def _ex1_f(x):
    x = np.asarray(x, dtype=float)
    return (np.sin(x) + 2.0) * _ex1_sf(x) / x


def example1() -> Fixture:
    """Survival ``exp(-int_1^x (sin y + 2)/y dy)`` on ``[1, inf)``.

    The distribution is regularly varying with index -2 but ``x f(x) / F_bar(x)``
    oscillates as ``sin x + 2``, so the density is not.
    """
    return Fixture("example1", dec.identity(), _ex1_f, _ex1_sf, -2.0)


def example2_density(x, y):
    """``6/5 x^-2`` if ``y < 1/x``, else ``6/5 x^-2 y``, on ``[1, inf) x (0, 1]``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (x >= 1) & (y > 0) & (y <= 1)
    val = np.where(y < 1.0 / x, 1.2 * x ** -2.0, 1.2 * x ** -2.0 * y)
    return np.where(inside, val, 0.0)


def example2_sf(x, y=1.0):
    """``Pr(X > x, Y <= y)`` in closed form.

    The second argument is a distribution function rather than a survival
    function because the angular limit ``H(y) = y^2`` is a cdf.
    """
    x = np.maximum(np.asarray(x, dtype=float), 1.0)
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        s0 = np.maximum(x, 1.0 / y)
        low = np.where(x < s0, 1.2 * y * (1.0 / x - 1.0 / s0), 0.0)
        high = 1.2 * (0.5 * s0 ** -2.0 + 0.5 * y * y / s0 - s0 ** -3.0 / 6.0)
    return np.where(y > 0, low + np.where(np.isfinite(s0), high, 0.0), 0.0)


def example2_marginal_sf(x):
    return example2_sf(x, 1.0)


def example2() -> Fixture:
    return Fixture("example2", dec.identity(), example2_density, example2_sf, -1.0, dim=2,
                   extra={"marginal_sf": example2_marginal_sf})


def pareto(alpha: float = 1.0) -> Fixture:
    a = float(alpha)
    return Fixture(
        "pareto", dec.identity(),
        lambda x: a * np.asarray(x, dtype=float) ** (-a - 1.0),
        lambda x: np.asarray(x, dtype=float) ** (-a),
        -a, extra={"alpha": a},
    )


FIXTURES: dict[str, Callable[[], Fixture]] = {
    "gaussian": gaussian,
    "log-cauchy": log_cauchy,
    "example1": example1,
    "example2": example2,
    "pareto": pareto,
}


def get(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
