"""Multivariate normal lower-orthant probabilities ``Pr(Z <= b)``, ``Z ~ N(0, S)``.

One and two dimensions are evaluated in closed form (the bivariate case
through Owen's T function).  Higher dimensions use Genz's separation of
variables with randomly scrambled Sobol points; the error is the standard
error across independent scrambles.  Scrambles are seeded deterministically
so repeated calls return identical values, which keeps likelihood surfaces
smooth for optimizers.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import special
from scipy.stats import qmc

N_SCRAMBLES = 8
LOG2_POINTS = 10
MAX_LOG2 = 16


@lru_cache(maxsize=32)
def _sobol(dim: int, n_scrambles: int, log2_points: int, seed: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed).spawn(n_scrambles)
    pts = [qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(s)).random_base2(log2_points)
           for s in ss]
    return np.stack(pts)


def _bvn(h: np.ndarray, k: np.ndarray, rho: float) -> np.ndarray:
    """``Pr(Z1 <= h, Z2 <= k)`` for standard margins with correlation ``rho``."""
    h = np.where(h == 0, 1e-15, h)
    k = np.where(k == 0, 1e-15, k)
    out = np.empty(np.broadcast(h, k).shape)
    h, k = np.broadcast_arrays(h, k)
    fin_h, fin_k = np.isfinite(h), np.isfinite(k)
    both = fin_h & fin_k
    s = np.sqrt(1.0 - rho * rho)
    hb, kb = h[both], k[both]
    if s == 0.0:
        val = special.ndtr(np.minimum(hb, kb)) if rho > 0 else np.clip(
            special.ndtr(hb) + special.ndtr(kb) - 1.0, 0.0, None)
    else:
        # tiny bounds send the Owen's T argument to +-inf, which it handles
        with np.errstate(over="ignore", divide="ignore"):
            a_h = (kb - rho * hb) / (hb * s)
            a_k = (hb - rho * kb) / (kb * s)
        corr = np.where((hb * kb < 0) | ((hb * kb == 0) & (hb + kb < 0)), 0.5, 0.0)
        val = (0.5 * (special.ndtr(hb) + special.ndtr(kb)) - special.owens_t(hb, a_h)
               - special.owens_t(kb, a_k) - corr)
    out[both] = np.clip(val, 0.0, 1.0)
    # infinite bounds reduce to a margin or a constant
    only_k = ~fin_h & fin_k
    out[only_k] = np.where(h[only_k] > 0, special.ndtr(k[only_k]), 0.0)
    only_h = fin_h & ~fin_k
    out[only_h] = np.where(k[only_h] > 0, special.ndtr(h[only_h]), 0.0)
    none = ~fin_h & ~fin_k
    out[none] = np.where((h[none] > 0) & (k[none] > 0), 1.0, 0.0)
    return out


def _genz(b: np.ndarray, L: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Separation-of-variables estimate for rows of ``b`` with Cholesky factor ``L``."""
    m = L.shape[0]
    diag = np.diag(L)
    R = b.shape[0]
    n_s, n_p, _ = pts.shape
    means = np.empty((n_s, R))
    for s in range(n_s):
        w = pts[s]
        e = special.ndtr(b[:, 0] / diag[0])[:, None] * np.ones((1, n_p))
        f = e.copy()
        ys = np.empty((R, n_p, m - 1))
        for i in range(1, m):
            u = np.clip(w[None, :, i - 1] * e, 1e-300, 1.0 - 1e-16)
            ys[:, :, i - 1] = special.ndtri(u)
            shift = ys[:, :, :i] @ L[i, :i]
            e = special.ndtr((b[:, i, None] - shift) / diag[i])
            f = f * e
        means[s] = f.mean(axis=1)
    est = means.mean(axis=0)
    err = means.std(axis=0, ddof=1) / np.sqrt(n_s)
    return est, err


def mvn_cdf(b, cov, seed: int = 0, n_scrambles: int = N_SCRAMBLES,
            log2_points: int = LOG2_POINTS, rel_tol: float | None = None,
            max_log2: int = MAX_LOG2) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Pr(Z <= b), error)`` for each row of ``b`` with a shared covariance.

    ``b`` may be a vector (one query) or an ``(n, m)`` array.  Closed-form
    dimensions report zero error.  With ``rel_tol``, rows whose error exceeds
    ``rel_tol`` times the value are recomputed with four times as many
    points, up to ``2**max_log2`` per scramble.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    b2 = np.atleast_2d(b)
    m = cov.shape[0]
    if b2.shape[1] != m:
        raise ValueError("bound and covariance dimensions differ")
    sd = np.sqrt(np.diag(cov))
    z = b2 / sd
    if m == 1:
        p, e = special.ndtr(z[:, 0]), np.zeros(b2.shape[0])
    elif m == 2:
        rho = float(cov[0, 1] / (sd[0] * sd[1]))
        p, e = _bvn(z[:, 0], z[:, 1], rho), np.zeros(b2.shape[0])
    else:
        corr = cov / np.outer(sd, sd)
        L = np.linalg.cholesky(corr)
        zc = np.where(np.isinf(z), np.sign(z) * 40.0, z)
        p, e = _genz_rows(zc, L, _sobol(m - 1, n_scrambles, log2_points, seed))
        k = log2_points
        while rel_tol is not None and k < max_log2:
            bad = np.flatnonzero(e > rel_tol * p)
            if bad.size == 0:
                break
            k = min(k + 2, max_log2)
            p[bad], e[bad] = _genz_rows(zc[bad], L, _sobol(m - 1, n_scrambles, k, seed))
    return (p[0], e[0]) if single else (p, e)


def _genz_rows(zc: np.ndarray, L: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.empty(zc.shape[0])
    e = np.empty(zc.shape[0])
    # rows are chunked to bound memory (rows x points x dims)
    step = max(1, int(2**21 // (pts.shape[1] * L.shape[0])))
    for lo in range(0, zc.shape[0], step):
        p[lo:lo + step], e[lo:lo + step] = _genz(zc[lo:lo + step], L, pts)
    return p, e
