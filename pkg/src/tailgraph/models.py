"""Homogeneous limit densities on the sup-norm cone ``{||x||_inf >= 1}``.

Every model exposes an unnormalized homogeneous ``kernel`` of order
``-alpha - d`` (defined off the cone as well) and the normalized ``density``
on the cone.  ``censored_density(x_A, A)`` integrates the density over
``|x_j| < 1`` for ``j`` outside ``A``; ``marginal(A)`` returns the law of
``Y_A | ||Y_A|| >= 1``.  Index sets are 0-based and sorted.
"""

from __future__ import annotations

import math
import warnings
from functools import cached_property
from itertools import product
from typing import Sequence

import numpy as np
from scipy import integrate, special
from scipy.stats import qmc

from .errors import DomainError, IntegrationError
from .mvn import mvn_cdf

REL_TOL = 1e-4
_SOBOL_HALF_CELL = 2.0 ** -31


def _as_rows(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != d:
        raise DomainError(f"expected {d} coordinates, got {x2.shape[1]}")
    return x2, single


def _index_set(A, d: int) -> tuple[int, ...]:
    A = tuple(sorted({int(a) for a in A}))
    if not A:
        raise DomainError("index set must be nonempty")
    if A[0] < 0 or A[-1] >= d:
        raise DomainError(f"index set {A} out of range for dimension {d}")
    return A


def _gauss_legendre(m: int, n: int, lo: float) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes and weights on ``(lo, 1)^m``."""
    z, w = np.polynomial.legendre.leggauss(n)
    z = lo + (1.0 - lo) * (z + 1.0) / 2.0
    w = w * (1.0 - lo) / 2.0
    nodes = np.array(list(product(z, repeat=m)))
    weights = np.prod(np.array(list(product(w, repeat=m))), axis=1)
    return nodes, weights


class TailModel:
    """Base class.  Subclasses set ``dim``, ``alpha``, ``family``, ``signed``."""

    family = "base"
    signed = False

    dim: int
    alpha: float

    # -- to be provided ---------------------------------------------------
    def kernel(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def normalizer(self) -> float:
        raise NotImplementedError

    @property
    def normalizer_error(self) -> float:
        return 0.0

    def marginal(self, A) -> "TailModel":
        raise NotImplementedError

    def sample(self, n: int, seed=None) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> dict:
        return {}

    # -- shared behaviour -------------------------------------------------
    def on_cone(self, x) -> np.ndarray:
        x2, _ = _as_rows(x, self.dim)
        ok = np.max(np.abs(x2), axis=1) >= 1.0
        if not self.signed:
            ok &= np.all(x2 >= 0, axis=1)
        return ok

    def density(self, x) -> np.ndarray:
        """Normalized density; raises :class:`DomainError` off the cone."""
        x2, single = _as_rows(x, self.dim)
        if np.any(np.max(np.abs(x2), axis=1) < 1.0):
            raise DomainError("density evaluated off the cone ||x||_inf >= 1")
        val = np.asarray(self.kernel(x2), dtype=float) / self.normalizer
        if not self.signed:
            val = np.where(np.all(x2 >= 0, axis=1), val, 0.0)
        return val[0] if single else val

    def log_density(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density(x))

    def exceedance_probability(self, A) -> float:
        """``Pr(||Y_A||_inf >= 1)`` under this model."""
        A = _index_set(A, self.dim)
        if len(A) == self.dim:
            return 1.0
        return self._exceedance_probability(A)

    def _exceedance_probability(self, A) -> float:
        # sum of censored masses over patterns meeting A, by QMC
        total = 0.0
        for B in _nonempty_subsets(self.dim):
            if set(B) & set(A):
                total += pattern_mass(self, B)[0]
        return total

    def censored_density(self, x_A, A, return_error: bool = False):
        """Density of ``(Y_A, |Y_{A^c}| < 1)``; ``x_A`` lists coordinates of sorted ``A``."""
        A = _index_set(A, self.dim)
        xa, single = _as_rows(x_A, len(A))
        if np.any(np.abs(xa) < 1.0):
            raise DomainError("censored coordinates must satisfy |x| >= 1")
        if len(A) == self.dim:
            val, err = np.asarray(self.density(xa), dtype=float), np.zeros(xa.shape[0])
        else:
            val, err = self._censored(xa, A)
        if np.any(err > REL_TOL * np.maximum(val, 1e-300) + 1e-300):
            bad = int(np.argmax(err / np.maximum(val, 1e-300)))
            raise IntegrationError(
                f"censored integral error {err[bad]:.3g} exceeds {REL_TOL:g} of value {val[bad]:.3g}")
        if single:
            val, err = val[0], err[0]
        return (val, err) if return_error else val

    def _censored(self, xa: np.ndarray, A, error: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Generic censored integral of the normalized kernel over ``|x_B| < 1``.

        Tensor Gauss-Legendre (64 nodes per axis, error against 32 nodes) for
        up to two censored coordinates; eight scrambled Sobol sets of 2^13
        points beyond, with the spread across scrambles as error.
        """
        B = [j for j in range(self.dim) if j not in A]
        m = len(B)
        lo = -1.0 if self.signed else 0.0
        R = xa.shape[0]

        def integrate_rule(nodes, weights):
            out = np.empty(R)
            step = max(1, 2**20 // nodes.shape[0])
            for s0 in range(0, R, step):
                rows = xa[s0:s0 + step]
                pts = np.empty((rows.shape[0], nodes.shape[0], self.dim))
                pts[:, :, list(A)] = rows[:, None, :]
                pts[:, :, B] = nodes[None, :, :]
                k = np.asarray(self.kernel(pts.reshape(-1, self.dim)), dtype=float)
                out[s0:s0 + step] = k.reshape(rows.shape[0], -1) @ weights
            return out / self.normalizer

        if m <= 2:
            val = integrate_rule(*_gauss_legendre(m, 64, lo))
            err = np.abs(val - integrate_rule(*_gauss_legendre(m, 32, lo))) if error else np.zeros(R)
            return val, err
        vol = (1.0 - lo) ** m
        means = []
        for s in range(8):
            u = qmc.Sobol(m, scramble=True, seed=np.random.default_rng([m, s])).random_base2(13)
            means.append(integrate_rule(lo + (1.0 - lo) * u, np.full(u.shape[0], vol / u.shape[0])))
        means = np.array(means)
        return means.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(8)

    def to_dict(self) -> dict:
        return {"family": self.family, "d": self.dim, "alpha": self.alpha,
                "parameters": self.parameters()}

    def __repr__(self):
        return f"{type(self).__name__}(d={self.dim}, alpha={self.alpha})"


def _nonempty_subsets(d: int):
    for mask in range(1, 2**d):
        yield tuple(i for i in range(d) if mask >> i & 1)


# ---------------------------------------------------------------------------
# Hüsler-Reiss
# ---------------------------------------------------------------------------

def _sigma_k(Gamma: np.ndarray, k: int) -> np.ndarray:
    idx = [j for j in range(Gamma.shape[0]) if j != k]
    g = Gamma[np.ix_(idx, [k])]
    return 0.5 * (g + g.T - Gamma[np.ix_(idx, idx)])


def validate_variogram(Gamma) -> np.ndarray:
    G = np.asarray(Gamma, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DomainError("Gamma must be a square matrix")
    if not np.allclose(G, G.T, rtol=0, atol=1e-12):
        raise DomainError("Gamma must be symmetric")
    if np.any(np.diag(G) != 0):
        raise DomainError("Gamma must have a zero diagonal")
    d = G.shape[0]
    off = G[~np.eye(d, dtype=bool)]
    if np.any(off <= 0):
        raise DomainError("off-diagonal entries of Gamma must be positive")
    for k in range(d if d > 1 else 0):
        if d > 1 and np.min(np.linalg.eigvalsh(_sigma_k(G, k))) <= 0:
            raise DomainError(f"Sigma_theta({k}) is not positive definite; Gamma is not a variogram")
    return 0.5 * (G + G.T)


class HuslerReissPareto(TailModel):
    """Hüsler-Reiss limit with unit Pareto margins (``alpha = 1``).

    The kernel is the exponent-measure density
    ``lambda(y) = y_k^-2 prod_{j != k} y_j^-1 phi(log(y_j/y_k) + Gamma_jk/2; Sigma(k))``,
    the same for every anchor ``k``.  It is the density of ``Y | Y_k >= 1`` on
    ``C_k`` (see :meth:`density_anchor`); on the sup-norm cone it is divided
    by the extremal coefficient ``Theta = Lambda(||y|| >= 1)``.
    """

    family = "hr"
    signed = False

    def __init__(self, Gamma):
        self.Gamma = validate_variogram(Gamma)
        self.dim = self.Gamma.shape[0]
        self.alpha = 1.0
        self._sig = [_sigma_k(self.Gamma, k) for k in range(self.dim)] if self.dim > 1 else []
        self._chol = [np.linalg.cholesky(S) for S in self._sig]

    def parameters(self) -> dict:
        return {"Gamma": self.Gamma.tolist()}

    def sigma(self, k: int) -> np.ndarray:
        return self._sig[k]

    def _log_kernel(self, y: np.ndarray, k: np.ndarray | None = None) -> np.ndarray:
        d = self.dim
        with np.errstate(divide="ignore"):
            ly = np.log(y)
        if d == 1:
            return -2.0 * ly[:, 0]
        if k is None:
            k = np.argmax(y, axis=1)
        out = np.full(y.shape[0], -np.inf)
        pos = np.all(y > 0, axis=1)
        for kk in np.unique(k):
            rows = np.where((k == kk) & pos)[0]
            if rows.size == 0:
                continue
            idx = [j for j in range(d) if j != kk]
            z = ly[np.ix_(rows, idx)] - ly[rows, kk][:, None] + 0.5 * self.Gamma[idx, kk]
            L = self._chol[kk]
            sol = np.linalg.solve(L, z.T)
            logphi = (-0.5 * np.sum(sol * sol, axis=0) - np.sum(np.log(np.diag(L)))
                      - 0.5 * (d - 1) * math.log(2 * math.pi))
            out[rows] = -2.0 * ly[rows, kk] - np.sum(ly[np.ix_(rows, idx)], axis=1) + logphi
        return out

    def kernel(self, x) -> np.ndarray:
        x2, single = _as_rows(x, self.dim)
        v = np.exp(self._log_kernel(x2))
        return v[0] if single else v

    def density_anchor(self, y, k: int) -> np.ndarray:
        """Density of ``Y | Y_k >= 1`` on ``C_k``, written with anchor ``k``."""
        y2, single = _as_rows(y, self.dim)
        if np.any(y2[:, k] < 1) or np.any(y2 < 0):
            raise DomainError(f"point outside C_{k}")
        v = np.exp(self._log_kernel(y2, np.full(y2.shape[0], k)))
        return v[0] if single else v

    @cached_property
    def _theta(self) -> tuple[float, float]:
        d = self.dim
        if d == 1:
            return 1.0, 0.0
        total, err = 0.0, 0.0
        for k in range(d):
            idx = [j for j in range(d) if j != k]
            p, e = mvn_cdf(0.5 * self.Gamma[idx, k], self._sig[k], rel_tol=0.1 * REL_TOL)
            total += float(p)
            err += float(e)
        return total, err

    @property
    def extremal_coefficient(self) -> float:
        return self._theta[0]

    @property
    def normalizer(self) -> float:
        return self._theta[0]

    @property
    def normalizer_error(self) -> float:
        return self._theta[1]

    def marginal(self, A) -> "HuslerReissPareto":
        A = _index_set(A, self.dim)
        return self if len(A) == self.dim else HuslerReissPareto(self.Gamma[np.ix_(A, A)])

    def _exceedance_probability(self, A) -> float:
        return self.marginal(A).extremal_coefficient / self.extremal_coefficient

    def log_censored_density(self, xa: np.ndarray, A,
                             rel_tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Log censored density on the cone and its relative error (from the orthant term).

        ``rel_tol`` refines orthant probabilities that miss it; the default
        keeps a fixed point set, which keeps likelihood surfaces smooth.
        """
        A = list(A)
        d = self.dim
        B = [j for j in range(d) if j not in A]
        out = np.full(xa.shape[0], -np.inf)
        err = np.zeros(xa.shape[0])
        pos = np.all(xa > 0, axis=1)
        with np.errstate(divide="ignore"):
            lx = np.log(np.where(xa > 0, xa, 1.0))
        anchor = np.argmax(xa, axis=1)
        logtheta = math.log(self.normalizer)
        for a in np.unique(anchor):
            rows = np.where((anchor == a) & pos)[0]
            if rows.size == 0:
                continue
            k = A[a]
            others = [j for j in range(d) if j != k]
            S = self._sig[k]
            obs = [others.index(j) for j in A if j != k]
            cen = [others.index(j) for j in B]
            lk = lx[rows, a]
            gam = self.Gamma[others, k]
            logpdf = np.zeros(rows.size)
            jac = -2.0 * lk
            cond_shift = np.zeros((rows.size, len(cen)))
            Sc = S[np.ix_(cen, cen)]
            if obs:
                a_obs = [A.index(others[o]) for o in obs]
                z = lx[np.ix_(rows, a_obs)] - lk[:, None] + 0.5 * gam[obs]
                Soo = S[np.ix_(obs, obs)]
                L = np.linalg.cholesky(Soo)
                sol = np.linalg.solve(L, z.T)
                logpdf = (-0.5 * np.sum(sol * sol, axis=0) - np.sum(np.log(np.diag(L)))
                          - 0.5 * len(obs) * math.log(2 * math.pi))
                jac = jac - np.sum(lx[np.ix_(rows, a_obs)], axis=1)
                if cen:
                    Sco = S[np.ix_(cen, obs)]
                    coef = np.linalg.solve(Soo, Sco.T).T
                    cond_shift = z @ coef.T
                    Sc = Sc - coef @ Sco.T
            if cen:
                b = -lk[:, None] + 0.5 * gam[cen] - cond_shift
                p, e = mvn_cdf(b, Sc, rel_tol=rel_tol)
                with np.errstate(divide="ignore", invalid="ignore"):
                    logp = np.log(p)
                    err[rows] = np.where(p > 0, e / p, 0.0)
            else:
                logp = np.zeros(rows.size)
            out[rows] = jac + logpdf + logp - logtheta
        return out, err

    def _censored(self, xa, A):
        lv, rel = self.log_censored_density(xa, A, rel_tol=0.5 * REL_TOL)
        v = np.exp(lv)
        return v, v * rel

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Composition over anchors: ``Y_k ~ Pareto(1)``, log-normal rest, thinned by
        ``1 / #{j : Y_j >= 1}`` so that the mixture is the cone law."""
        rng = np.random.default_rng(seed)
        d = self.dim
        if d == 1:
            return (1.0 / rng.uniform(size=n))[:, None]
        out = []
        have = 0
        batch = max(64, int(1.3 * n * d / max(self.extremal_coefficient, 1e-12)))
        while have < n:
            k = rng.integers(0, d, size=batch)
            Y = np.empty((batch, d))
            R = 1.0 / rng.uniform(size=batch)
            for kk in range(d):
                rows = np.where(k == kk)[0]
                idx = [j for j in range(d) if j != kk]
                W = rng.standard_normal((rows.size, d - 1)) @ self._chol[kk].T
                Y[np.ix_(rows, idx)] = R[rows, None] * np.exp(W - 0.5 * self.Gamma[idx, kk])
                Y[rows, kk] = R[rows]
            cnt = np.sum(Y >= 1.0, axis=1)
            keep = rng.uniform(size=batch) < 1.0 / cnt
            out.append(Y[keep])
            have += int(keep.sum())
        return np.concatenate(out)[:n]


# ---------------------------------------------------------------------------
# Student limit
# ---------------------------------------------------------------------------

def _face_points(d: int, u: np.ndarray, face: int, sign: float) -> np.ndarray:
    """Points on the face ``x_face = sign`` from coordinates ``u`` in ``[-1, 1]^(d-1)``."""
    pts = np.insert(u, face, sign, axis=1) if d > 1 else np.full((u.shape[0], 1), sign)
    return pts


def angular_integral(kernel, d: int, signed: bool, n_log2: int = 14, seed: int = 0,
                     n_gl: int = 200) -> tuple[float, float]:
    """``sum over faces of int kernel`` on the unit sup-norm sphere.

    Faces are ``{x_i = +-1, |x_j| <= 1}`` (only ``+1`` and ``[0, 1]`` when
    unsigned).  Gauss-Legendre (with an error estimate from half the nodes)
    for ``d <= 2``, scrambled Sobol beyond.
    """
    signs = (1.0, -1.0) if signed else (1.0,)
    lo = -1.0 if signed else 0.0
    if d == 1:
        return float(sum(kernel(np.array([[s]]))[0] for s in signs)), 0.0
    total, err = 0.0, 0.0
    if d == 2:
        for n in (n_gl, n_gl // 2):
            z, w = np.polynomial.legendre.leggauss(n)
            if signed:
                z = np.concatenate([(z - 1) / 2, (z + 1) / 2])
                w = np.concatenate([w / 2, w / 2])
            else:
                z, w = (z + 1) / 2, w / 2
            acc = 0.0
            for face in range(2):
                for s in signs:
                    acc += float(np.dot(w, kernel(_face_points(2, z[:, None], face, s))))
            if n == n_gl:
                total = acc
            else:
                err = abs(total - acc)
        return total, err
    vol = (1.0 - lo) ** (d - 1)
    means = []
    for s_idx in range(8):
        u = qmc.Sobol(d - 1, scramble=True,
                      seed=np.random.default_rng([seed, s_idx])).random_base2(n_log2)
        u = lo + (1.0 - lo) * u
        acc = 0.0
        for face in range(d):
            for s in signs:
                acc += float(np.mean(kernel(_face_points(d, u, face, s)))) * vol
        means.append(acc)
    return float(np.mean(means)), float(np.std(means, ddof=1) / math.sqrt(len(means)))


class StudentLimit(TailModel):
    """``v(x) = (x^T Q x)^{-(nu + d)/2}`` on the signed sup-norm cone; ``alpha = nu``."""

    family = "student"
    signed = True

    def __init__(self, Q, nu: float):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-12):
            raise DomainError("Q must be a symmetric matrix")
        if np.min(np.linalg.eigvalsh(Q)) <= 0:
            raise DomainError("Q must be positive definite")
        if nu <= 0:
            raise DomainError("nu must be positive")
        self.Q = 0.5 * (Q + Q.T)
        self.nu = float(nu)
        self.dim = Q.shape[0]
        self.alpha = self.nu

    def parameters(self) -> dict:
        return {"Q": self.Q.tolist(), "nu": self.nu}

    def kernel(self, x) -> np.ndarray:
        x2, single = _as_rows(x, self.dim)
        q = np.sum((x2 @ self.Q) * x2, axis=1)
        with np.errstate(divide="ignore"):
            v = q ** (-(self.nu + self.dim) / 2.0)
        return v[0] if single else v

    @cached_property
    def _norm(self) -> tuple[float, float]:
        if self.dim == 1:
            return 2.0 / self.nu * self.Q[0, 0] ** (-(self.nu + 1) / 2.0), 0.0
        val, err = angular_integral(self.kernel, self.dim, True)
        return val / self.nu, err / self.nu

    @property
    def normalizer(self) -> float:
        return self._norm[0]

    @property
    def normalizer_error(self) -> float:
        return self._norm[1]

    @property
    def log_norm_const(self) -> float:
        return math.log(self.normalizer)

    def marginal(self, A) -> "StudentLimit":
        A = _index_set(A, self.dim)
        if len(A) == self.dim:
            return self
        cov = np.linalg.inv(self.Q)
        return StudentLimit(np.linalg.inv(cov[np.ix_(A, A)]), self.nu)

    def marginal_constant(self, A) -> float:
        """``kappa`` with ``int v dx_B = kappa v_A(x_A)`` for the marginal kernel ``v_A``."""
        A = _index_set(A, self.dim)
        B = [j for j in range(self.dim) if j not in A]
        m = len(B)
        if m == 0:
            return 1.0
        QBB = self.Q[np.ix_(B, B)]
        d = self.dim
        return float(np.linalg.det(QBB) ** -0.5 * math.pi ** (m / 2)
                     * math.exp(special.gammaln((self.nu + len(A)) / 2) - special.gammaln((self.nu + d) / 2)))

    def _exceedance_probability(self, A) -> float:
        return self.marginal_constant(A) * self.marginal(A).normalizer / self.normalizer

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Rejection from a Pareto(nu) sup-norm radius times a uniform face point."""
        rng = np.random.default_rng(seed)
        d = self.dim
        bound = np.min(np.linalg.eigvalsh(self.Q)) ** (-(self.nu + d) / 2.0)
        out, have, tried = [], 0, 0
        while have < n:
            m = max(256, 2 * (n - have))
            face = rng.integers(0, d, size=m)
            sign = rng.choice([-1.0, 1.0], size=m)
            X = rng.uniform(-1.0, 1.0, size=(m, d))
            X[np.arange(m), face] = sign
            acc = rng.uniform(size=m) * bound < self.kernel(X)
            tried += m
            R = rng.uniform(size=int(acc.sum())) ** (-1.0 / self.nu)
            out.append(X[acc] * R[:, None])
            have += int(acc.sum())
            if tried > 200 * n and have < 0.01 * tried:
                warnings.warn("Student limit sampler acceptance below 1%", RuntimeWarning, stacklevel=2)
        return np.concatenate(out)[:n]

    def finite_ratio(self, t: float, x) -> np.ndarray:
        """``f_X(t x) / f_X(t 1)`` for the Student law with dispersion ``Q^-1``.

        Converges monotonically to ``v(x) / v(1)`` as ``t`` grows.
        """
        x2, single = _as_rows(x, self.dim)
        one = np.ones((1, self.dim))
        qx = np.einsum("ni,ij,nj->n", x2, self.Q, x2)
        q1 = float(self.Q.sum())
        ex = -(self.nu + self.dim) / 2.0
        r = ((1 + t * t * qx / self.nu) / (1 + t * t * q1 / self.nu)) ** ex
        return r[0] if single else r

    def limit_ratio(self, x) -> np.ndarray:
        return self.kernel(x) / float(self.kernel(np.ones(self.dim)))


def student_tail_limit(Q, nu: float) -> StudentLimit:
    """Limit of ``X / t | ||X|| >= t`` for ``X`` multivariate Student with dispersion ``Q^-1``."""
    m = StudentLimit(Q, nu)
    _ = m.normalizer
    return m


def sample_student(Q, nu: float, n: int, seed=None) -> np.ndarray:
    """Finite multivariate Student draws with dispersion ``Q^-1`` (matching :class:`StudentLimit`)."""
    rng = np.random.default_rng(seed)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    L = np.linalg.cholesky(np.linalg.inv(Q))
    Z = rng.standard_normal((n, Q.shape[0])) @ L.T
    W = rng.chisquare(nu, size=n) / nu
    return Z / np.sqrt(W)[:, None]


# ---------------------------------------------------------------------------
# Fixed fixtures
# ---------------------------------------------------------------------------

class BivariateSumModel(TailModel):
    """``(4/3)(x + y)^-3`` on ``{||(x, y)||_inf >= 1, x, y >= 0}``."""

    family = "bivariate-sum"
    signed = False
    dim = 2
    alpha = 1.0

    def kernel(self, x) -> np.ndarray:
        x2, single = _as_rows(x, 2)
        with np.errstate(divide="ignore"):
            v = (x2[:, 0] + x2[:, 1]) ** -3.0
        return v[0] if single else v

    @property
    def normalizer(self) -> float:
        return 0.75

    def _censored(self, xa, A):
        x = xa[:, 0]
        v = np.where(x > 0, (2.0 / 3.0) * (x ** -2.0 - (x + 1.0) ** -2.0), 0.0)
        return v, np.zeros_like(v)

    def marginal(self, A) -> TailModel:
        A = _index_set(A, 2)
        return self if len(A) == 2 else ParetoTail(1.0)

    def _exceedance_probability(self, A) -> float:
        return 2.0 / 3.0

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Exact: Pareto(1) sup-norm radius, a fair face, the angle by inverse cdf."""
        rng = np.random.default_rng(seed)
        R = 1.0 / rng.uniform(size=n)
        F = rng.uniform(size=n)
        theta = (1.0 - 0.75 * F) ** -0.5 - 1.0
        face = rng.integers(0, 2, size=n)
        X = np.empty((n, 2))
        X[:, 0] = np.where(face == 0, 1.0, theta)
        X[:, 1] = np.where(face == 0, theta, 1.0)
        return X * R[:, None]


class ParetoTail(TailModel):
    """Univariate ``alpha x^{-alpha-1}`` on ``[1, inf)``."""

    family = "pareto"
    signed = False
    dim = 1

    def __init__(self, alpha: float = 1.0):
        if alpha <= 0:
            raise DomainError("alpha must be positive")
        self.alpha = float(alpha)

    def parameters(self) -> dict:
        return {"alpha": self.alpha}

    def kernel(self, x) -> np.ndarray:
        x2, single = _as_rows(x, 1)
        with np.errstate(divide="ignore"):
            v = self.alpha * np.abs(x2[:, 0]) ** (-self.alpha - 1.0)
        return v[0] if single else v

    @property
    def normalizer(self) -> float:
        return 1.0

    def marginal(self, A) -> "ParetoTail":
        _index_set(A, 1)
        return self

    def sample(self, n: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return (rng.uniform(size=n) ** (-1.0 / self.alpha))[:, None]


# ---------------------------------------------------------------------------
# Generic numerics
# ---------------------------------------------------------------------------

def normalizing_constant(model: TailModel, n_log2: int = 14, seed: int = 0) -> tuple[float, float]:
    """``int kernel`` over the sup-norm cone by radial decomposition.

    Homogeneity makes the radial integral ``int_1^inf r^{-alpha-1} dr = 1/alpha``
    exact; the angular part is integrated over the faces of the unit sup-norm
    sphere.  Returns the value and an error estimate.
    """
    val, err = angular_integral(model.kernel, model.dim, model.signed, n_log2=n_log2, seed=seed)
    return val / model.alpha, err / model.alpha


def pattern_mass(model: TailModel, A, n_log2: int = 13, n_scrambles: int = 8,
                 seed: int = 0) -> tuple[float, float]:
    """``int_{|x_A| >= 1} censored_density(x_A, A) dx_A`` by randomized QMC.

    Substitutes ``x_j = s_j u_j^{-g}`` with ``u`` uniform on ``(0, 1]`` and
    ``g = (|A| + 1) / alpha``, which keeps the integrand bounded along the
    diagonal where a homogeneous density decays slowest.  Signs ``s`` are
    enumerated for signed models.
    """
    A = _index_set(A, model.dim)
    m = len(A)
    B = [j for j in range(model.dim) if j not in A]
    # generic models: censored coordinates become extra QMC dimensions
    joint = bool(B) and type(model)._censored is TailModel._censored
    g = (m + 1.0) / model.alpha
    lo = -1.0 if model.signed else 0.0
    sign_sets = list(product((1.0, -1.0), repeat=m)) if model.signed else [(1.0,) * m]
    dim = m + len(B) if joint else m
    means = []
    for s_idx in range(n_scrambles):
        w = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng([seed, s_idx, m])).random_base2(n_log2)
        # scrambled points sit on the left edges of a 2^-30 grid; centre them
        w = w + _SOBOL_HALF_CELL
        u = 1.0 - w[:, :m]
        jac = np.prod(g * u ** (-g - 1.0), axis=1)
        acc = 0.0
        for sg in sign_sets:
            xa = np.asarray(sg) * u ** -g
            if joint:
                pts = np.empty((u.shape[0], model.dim))
                pts[:, list(A)] = xa
                pts[:, B] = lo + (1.0 - lo) * w[:, m:]
                v = np.asarray(model.kernel(pts)) / model.normalizer * (1.0 - lo) ** len(B)
            else:
                v = _censored_nocheck(model, xa, A)
            acc += float(np.mean(v * jac))
        means.append(acc)
    return float(np.mean(means)), float(np.std(means, ddof=1) / math.sqrt(n_scrambles))


def _censored_nocheck(model: TailModel, x, A) -> np.ndarray:
    if len(A) == model.dim:
        return np.asarray(model.density(x), dtype=float)
    return model._censored(x, A)[0]


def total_mass(model: TailModel, **kw) -> tuple[float, float]:
    """Sum of pattern masses over all nonempty ``A``; equals 1 for a normalized model."""
    tot, var = 0.0, 0.0
    for A in _nonempty_subsets(model.dim):
        v, e = pattern_mass(model, A, **kw)
        tot += v
        var += e * e
    return tot, math.sqrt(var)


def model_from_dict(d: dict) -> TailModel:
    fam = d["family"]
    par = d.get("parameters", {})
    if fam == "hr":
        return HuslerReissPareto(np.asarray(par["Gamma"]))
    if fam == "student":
        return StudentLimit(np.asarray(par["Q"]), par["nu"])
    if fam == "bivariate-sum":
        return BivariateSumModel()
    if fam == "pareto":
        return ParetoTail(par.get("alpha", d.get("alpha", 1.0)))
    raise ValueError(f"unknown model family {fam!r}")
