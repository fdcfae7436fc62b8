"""Censoring to the unit-Pareto tail scale and finite-threshold diagnostics.

Censored values live on ``F = (-inf, -1] u {0} u [1, inf)``: tail values keep
their sign and magnitude, everything with ``|y| < 1`` becomes 0, and the
all-zero vector is the atom of the mixed base measure (Lebesgue on each
exceedance pattern plus Dirac masses at 0).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, InsufficientDataError


# ---------------------------------------------------------------------------
# Censored points and samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CensoredPoint:
    values: tuple
    is_atom: bool

    def __post_init__(self):
        a = np.abs(np.asarray(self.values, dtype=float))
        if np.any((a > 0) & (a < 1)):
            raise DomainError("censored entries must be 0 or have |value| >= 1")
        if self.is_atom != bool(np.all(a == 0)):
            raise DomainError("is_atom must be true exactly for the all-zero point")

    @property
    def pattern(self) -> tuple:
        return tuple(i for i, v in enumerate(self.values) if v != 0)


def censor(X) -> np.ndarray:
    """Row-wise censoring: ``|x| < 1`` becomes 0, ``|x| >= 1`` is kept."""
    X = np.asarray(X, dtype=float)
    return np.where(np.abs(X) >= 1.0, X, 0.0)


def censor_point(x) -> CensoredPoint:
    y = censor(np.atleast_1d(x))
    return CensoredPoint(tuple(float(v) for v in y), bool(np.all(y == 0)))


@dataclass
class CensoredSample:
    """Censored rows (atoms included) with the exceedance probability estimate."""

    values: np.ndarray
    p_hat: float
    threshold: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = censor(self.values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def atom_mask(self) -> np.ndarray:
        return ~np.any(self.values != 0, axis=1)

    @property
    def points(self) -> list:
        return [CensoredPoint(tuple(r), bool(np.all(r == 0))) for r in self.values]

    def exceedances(self) -> np.ndarray:
        return self.values[~self.atom_mask]

    def restrict(self, S: Sequence[int]) -> "CensoredSample":
        sub = self.values[:, list(S)]
        frac = float(np.mean(np.any(sub != 0, axis=1))) if self.n else 0.0
        return CensoredSample(sub, frac, {"parent": self.threshold, "subset": list(S)})


# ---------------------------------------------------------------------------
# Marginal transform
# ---------------------------------------------------------------------------

@dataclass
class TransformResult:
    Z: np.ndarray
    p_hat: float
    thresholds: list
    tail_fraction: float

    def censored(self) -> CensoredSample:
        return CensoredSample(censor(self.Z), self.p_hat,
                              {"tail_fraction": self.tail_fraction, "margins": self.thresholds})

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "tail_fraction": self.tail_fraction, "thresholds": self.thresholds}


def _tail_block(vals: np.ndarray) -> np.ndarray:
    """Unit-Pareto values ``(k + 1) / (k + 1 - i)`` from ascending (average) ranks ``i``."""
    k = vals.size
    r = stats.rankdata(vals, method="average")
    return (k + 1.0) / (k + 1.0 - r)


def _body_block(vals: np.ndarray) -> np.ndarray:
    """Linear in the empirical cdf, into ``(0, 1)``."""
    return stats.rankdata(vals, method="average") / (vals.size + 1.0)


def transform_to_pareto(
    X,
    tail_fraction: float = 0.05,
    min_n: int = 50,
    min_exceedances: int = 5,
    tails: str = "both",
) -> TransformResult:
    """Map each margin and sign part to unit Pareto beyond an empirical threshold.

    Per margin, the ``floor(tail_fraction * n)`` largest positive values (and,
    with ``tails="both"``, the as many most negative values) receive
    ``+-(k + 1)/(k + 1 - i)`` by ascending rank ``i`` in their block; values
    tied with the first one outside the block are left out of it.  Other
    values are sent sign-preservingly into ``(-1, 1)``, linear in the
    empirical cdf of their sign block; zeros stay 0.  Selecting tails by count
    makes ``censor(transform(censor(transform(X))))`` equal the single pass.
    ``p_hat`` is the fraction of rows with some ``|Z_i| >= 1``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if n < min_n:
        raise InsufficientDataError(f"need at least {min_n} observations, got {n}")
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    if tails not in ("both", "upper"):
        raise ValueError("tails must be 'both' or 'upper'")
    k = int(math.floor(tail_fraction * n))
    Z = np.zeros_like(X)
    info = []
    for j in range(d):
        x = X[:, j]
        _, counts = np.unique(x, return_counts=True)
        if counts.max() > 0.2 * n:
            warnings.warn(f"margin {j}: more than 20% tied values", RuntimeWarning, stacklevel=2)
        row = {"margin": j}
        used = np.zeros(n, dtype=bool)
        for sgn, name in ((1.0, "upper"), (-1.0, "lower")):
            if name == "lower" and tails == "upper":
                row[name] = None
                continue
            cand = np.where(sgn * x > 0)[0]
            kk = min(k, cand.size)
            if kk == 0:
                row[name] = {"threshold": None, "n_tail": 0}
                continue
            # stable order: value, then row index
            order = cand[np.lexsort((cand, -sgn * x[cand]))]
            tail = order[:kk]
            below = sgn * x[order[kk]] if kk < cand.size else 0.0
            # a tie group straddling the cut stays out of the tail
            tail = tail[sgn * x[tail] > below]
            if tail.size == 0:
                row[name] = {"threshold": None, "n_tail": 0}
                continue
            Z[tail, j] = sgn * _tail_block(sgn * x[tail])
            used[tail] = True
            row[name] = {"threshold": float(sgn * 0.5 * ((sgn * x[tail]).min() + below)),
                         "n_tail": int(tail.size)}
        for sgn in (1.0, -1.0):
            body = np.where(~used & (sgn * x > 0))[0]
            if body.size:
                Z[body, j] = sgn * _body_block(sgn * x[body])
        n_exc = int(np.sum(np.abs(Z[:, j]) >= 1))
        if n_exc < min_exceedances:
            raise InsufficientDataError(f"margin {j}: only {n_exc} exceedances")
        info.append(row)
    p_hat = float(np.mean(np.any(np.abs(Z) >= 1.0, axis=1)))
    return TransformResult(Z, p_hat, info, float(tail_fraction))


# ---------------------------------------------------------------------------
# Finite-threshold laws
# ---------------------------------------------------------------------------

def censored_sequence_law(
    sampler: Callable,
    t: float,
    D: Sequence[int],
    A: Sequence[int],
    x,
    n: int,
    seed: int,
    p: float = 1.0,
) -> tuple[float, float]:
    """Estimate ``p Pr(s X_A >= t |x|, |X_{D - A}| < t) / Pr(||X|| >= t)``.

    ``x`` lists signed values for ``A`` (a subset of ``D``) with ``|x| >= 1``.
    Returns the estimate and its binomial standard error.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    A, D = list(A), list(D)
    if not set(A) <= set(D):
        raise DomainError("A must be a subset of D")
    if np.any(np.abs(x) < 1):
        raise DomainError("|x| >= 1 required on A")
    X = np.asarray(sampler(n, np.random.default_rng(seed)), dtype=float)
    exc = np.max(np.abs(X), axis=1) >= t
    N = int(exc.sum())
    if N == 0:
        raise InsufficientDataError(f"no exceedances of t={t:g}")
    Xe = X[exc]
    s = np.sign(x)
    hit = np.all(s * Xe[:, A] >= t * np.abs(x), axis=1)
    rest = [j for j in D if j not in A]
    if rest:
        hit &= np.all(np.abs(Xe[:, rest]) < t, axis=1)
    q = hit.mean()
    return float(p * q), float(p * math.sqrt(q * (1 - q) / N))


def mu0_density(fn_by_pattern: Mapping, point) -> float:
    """Evaluate a density w.r.t. the censored base measure at a censored point.

    ``fn_by_pattern`` maps exceedance patterns (sorted index tuples) to
    callables of the nonzero coordinates; the empty tuple maps to the atom
    mass (a number or a zero-argument callable).
    """
    if not isinstance(point, CensoredPoint):
        point = censor_point(point)
    A = point.pattern
    if A not in fn_by_pattern:
        raise KeyError(f"no component density registered for pattern {A}")
    fn = fn_by_pattern[A]
    if not A:
        return float(fn() if callable(fn) else fn)
    return float(fn(np.array([point.values[i] for i in A])))


# ---------------------------------------------------------------------------
# Asymptotic conditional independence residual
# ---------------------------------------------------------------------------

def _fd_edges(v: np.ndarray, max_bins: int = 12) -> np.ndarray | None:
    """Freedman-Diaconis edges on ``log |v|`` (nonzero values); ``None`` if degenerate."""
    lv = np.log(np.abs(v))
    if lv.size < 2:
        return None
    q75, q25 = np.percentile(lv, [75, 25])
    width = 2.0 * (q75 - q25) * lv.size ** (-1.0 / 3.0)
    if width <= 0:
        return None
    nb = int(min(max_bins, max(1, math.ceil((lv.max() - lv.min()) / width))))
    return np.linspace(lv.min(), lv.max() + 1e-12, nb + 1)


def _discretize(col: np.ndarray, edges_pos, edges_neg):
    """Bin 0 is the atom; positive bins 1..; negative bins after them."""
    out = np.zeros(col.size, dtype=int)
    vol, rep = [1.0], [0.0]
    off = 1
    for edges, sgn in ((edges_pos, 1.0), (edges_neg, -1.0)):
        if edges is None:
            continue
        m = sgn * col > 0
        idx = np.clip(np.searchsorted(edges, np.log(sgn * col[m]), side="right") - 1, 0, len(edges) - 2)
        out[m] = off + idx
        lo, hi = np.exp(edges[:-1]), np.exp(edges[1:])
        vol.extend(hi - lo)
        rep.extend(sgn * np.sqrt(lo * hi))
        off += len(edges) - 1
    return out, np.array(vol), np.array(rep)


def default_test_functions() -> list:
    """Joint-exceedance box and a smooth bump, both in the coordinates ``(y_i, y_j)``."""
    def box(a, b, c):
        return ((a != 0) & (b != 0)).astype(float)

    def bump(a, b, c):
        with np.errstate(divide="ignore"):
            la = np.where(a != 0, np.log(np.abs(np.where(a != 0, a, 1.0))), np.inf)
            lb = np.where(b != 0, np.log(np.abs(np.where(b != 0, b, 1.0))), np.inf)
        return np.exp(-0.5 * (la * la + lb * lb))
    return [box, bump]


def _residual(Y: np.ndarray, i: int, j: int, rest: list, g_list, binning) -> np.ndarray:
    ai, vi, ri = _discretize(Y[:, i], *binning[i])
    aj, vj, rj = _discretize(Y[:, j], *binning[j])
    cols = [_discretize(Y[:, c], *binning[c]) for c in rest]
    n = Y.shape[0]
    if cols:
        c_idx = np.ravel_multi_index([c[0] for c in cols], [len(c[1]) for c in cols])
        c_vol = np.prod(np.array(np.meshgrid(*[c[1] for c in cols], indexing="ij")).reshape(len(cols), -1), axis=0)
        c_rep = np.array(np.meshgrid(*[c[2] for c in cols], indexing="ij")).reshape(len(cols), -1).T
    else:
        c_idx = np.zeros(n, dtype=int)
        c_vol = np.ones(1)
        c_rep = np.zeros((1, 0))
    na, nb, nc = len(vi), len(vj), len(c_vol)
    P = np.zeros((na, nb, nc))
    np.add.at(P, (ai, aj, c_idx), 1.0 / n)
    Pc = P.sum(axis=(0, 1))
    Pac = P.sum(axis=1)
    Pbc = P.sum(axis=0)
    diff = (P * Pc[None, None, :] - Pac[:, None, :] * Pbc[None, :, :]) / c_vol[None, None, :]
    A, B, C = np.meshgrid(ri, rj, np.arange(nc), indexing="ij")
    out = []
    for g in g_list:
        gv = np.asarray(g(A, B, c_rep[C] if c_rep.shape[1] else C), dtype=float)
        out.append(float(np.sum(gv * diff)))
    return np.array(out)


@dataclass
class ACIRow:
    t: float
    residuals: np.ndarray
    sigma: np.ndarray
    n_exceed: int
    degenerate: bool


def aci_residual(
    sampler_t: Callable,
    i: int,
    j: int,
    t_grid: Sequence[float],
    test_functions=None,
    n: int = 20000,
    seed: int = 0,
    n_boot: int = 50,
) -> list:
    """Plug-in estimate of ``int g (f_ijC f_C - f_iC f_jC) dmu0`` along thresholds.

    ``sampler_t(t, n, rng)`` must return censored rows on the Pareto scale at
    threshold ``t``.  Densities are histograms: the atom is its own cell and
    nonzero values use Freedman-Diaconis bins on ``log |y|``.  ``sigma`` is
    the bootstrap standard deviation.  Rows flag degenerate binning.
    """
    g_list = default_test_functions() if test_functions is None else list(test_functions)
    seqs = np.random.SeedSequence(seed).spawn(len(t_grid))
    out = []
    for t, sq in zip(t_grid, seqs):
        rng = np.random.default_rng(sq)
        Y = censor(np.asarray(sampler_t(t, n, rng), dtype=float))
        d = Y.shape[1]
        rest = [c for c in range(d) if c not in (i, j)]
        binning, degenerate = [], False
        for c in range(d):
            pos = Y[Y[:, c] > 0, c]
            neg = Y[Y[:, c] < 0, c]
            ep = _fd_edges(pos) if pos.size else None
            en = _fd_edges(neg) if neg.size else None
            if pos.size >= 2 and ep is None:
                degenerate = True
            binning.append((ep, en))
        res = _residual(Y, i, j, rest, g_list, binning)
        boot = np.array([_residual(Y[rng.integers(0, n, n)], i, j, rest, g_list, binning)
                         for _ in range(n_boot)])
        out.append(ACIRow(float(t), res, boot.std(axis=0, ddof=1), int(np.sum(np.any(Y != 0, axis=1))),
                          degenerate))
    return out
