"""Censored likelihood fitting, tests on exceedance indicators and graph selection.

The fitting strategy has three steps: transform margins to unit Pareto and
censor, select a decomposable graph by testing conditional independence of
the binary exceedance indicators, and fit each clique by censored maximum
likelihood before assembling the factorized model.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .censor import CensoredSample, censor, transform_to_pareto
from .errors import DomainError, FitError, InsufficientDataError
from .graph import DecomposableGraph, FactorizedTailModel, assemble, decomposable_check, min_fill_triangulate
from .models import (BivariateSumModel, HuslerReissPareto, ParetoTail, TailModel, _censored_nocheck,
                     validate_variogram)

log = logging.getLogger(__name__)

FAMILIES = ("hr", "bivariate-sum", "pareto")
GTOL = 1e-8
# convergence is declared on the recomputed mean-NLL gradient
GTOL_CHECK = 1e-6
MAX_ITER = 500
N_RESTARTS = 5
PENALTY = 1e10


# ---------------------------------------------------------------------------
# Censored likelihood
# ---------------------------------------------------------------------------

def _group_patterns(Y: np.ndarray) -> list:
    """``[(A, rows)]`` for each exceedance pattern present in ``Y`` (atoms dropped)."""
    nz = Y != 0
    keys, inv = np.unique(nz, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    out = []
    for g, key in enumerate(keys):
        A = tuple(int(i) for i in np.flatnonzero(key))
        if A:
            out.append((A, np.flatnonzero(inv == g)))
    return out


def censored_log_likelihood(model: TailModel, Y, groups=None) -> float:
    """Sum of log censored densities of the nonzero rows of ``Y``."""
    Y = np.asarray(Y, dtype=float)
    groups = _group_patterns(Y) if groups is None else groups
    total = 0.0
    for A, rows in groups:
        xa = Y[np.ix_(rows, A)]
        if len(A) == model.dim:
            with np.errstate(divide="ignore"):
                lv = np.log(np.asarray(model.density(xa), dtype=float))
        elif isinstance(model, HuslerReissPareto):
            lv = model.log_censored_density(xa, A)[0]
        else:
            with np.errstate(divide="ignore"):
                lv = np.log(np.asarray(_censored_nocheck(model, xa, A), dtype=float))
        total += float(np.sum(lv))
    return total


def _offdiag(d: int) -> list:
    return list(combinations(range(d), 2))


def _gamma_from(vals: np.ndarray, d: int, fixed: Mapping) -> np.ndarray:
    G = np.zeros((d, d))
    free = [e for e in _offdiag(d) if e not in fixed]
    for (a, b), v in zip(free, vals):
        G[a, b] = G[b, a] = v
    for (a, b), v in fixed.items():
        G[a, b] = G[b, a] = v
    return G


@dataclass
class FitResult:
    clique: tuple
    family: str
    parameters: np.ndarray
    log_likelihood: float
    n_used: int
    converged: bool
    standard_errors: np.ndarray
    model: TailModel = field(repr=False, default=None)
    grad_norm: float = 0.0
    boundary: bool = False
    labels: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("model")
        d["clique"] = list(self.clique)
        d["parameters"] = [float(v) for v in self.parameters]
        d["standard_errors"] = [float(v) for v in self.standard_errors]
        d["model"] = self.model.to_dict() if self.model is not None else None
        return d


def _central_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _hessian(f, x: np.ndarray, rel: float = 1e-4) -> np.ndarray:
    k = x.size
    H = np.empty((k, k))
    h = rel * np.maximum(np.abs(x), 1e-2)
    f0 = f(x)
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            if i == j:
                v = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
            else:
                v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return H


def _as_censored(sample) -> np.ndarray:
    if isinstance(sample, CensoredSample):
        return sample.values
    return censor(np.atleast_2d(np.asarray(sample, dtype=float)))


def fit_clique(
    censored_sample,
    family: str = "hr",
    init=None,
    seed: int = 0,
    clique: Sequence[int] | None = None,
    fixed: Mapping | None = None,
    n_restarts: int = N_RESTARTS,
    min_points: int = 30,
) -> FitResult:
    """Censored maximum likelihood for one clique.

    The sample must already be restricted to the clique; atom rows are
    ignored because the clique density conditions on ``||Y_S|| >= 1``.
    For ``"hr"`` the free parameters are the off-diagonal variogram entries,
    optimized on the log scale by BFGS with central-difference gradients from
    ``init`` (default all ones) and ``n_restarts - 1`` jittered starts.
    ``fixed`` maps local index pairs ``(a, b)``, ``a < b``, to values held
    constant (used to tie a clique to its separator).  Standard errors come
    from the numerical observed information in the natural parameters.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    Y = _as_censored(censored_sample)
    d = Y.shape[1]
    clique = tuple(range(d)) if clique is None else tuple(clique)
    Y = Y[np.any(Y != 0, axis=1)]
    n = Y.shape[0]
    if n < min_points:
        raise InsufficientDataError(f"clique {clique}: {n} exceedances, need {min_points}")
    groups = _group_patterns(Y)

    if family == "bivariate-sum" and d != 2:
        raise DomainError("the bivariate-sum family is two-dimensional")
    if family == "pareto" or d == 1:
        if d != 1:
            raise DomainError("the pareto family is univariate")
        if family == "hr":
            model = HuslerReissPareto(np.zeros((1, 1)))
            ll = censored_log_likelihood(model, Y, groups)
            return FitResult(clique, family, np.zeros(0), ll, n, True, np.zeros(0), model)
        x = np.abs(Y[:, 0])
        a = n / np.sum(np.log(x))
        model = ParetoTail(a)
        ll = censored_log_likelihood(model, Y, groups)
        return FitResult(clique, family, np.array([a]), ll, n, True, np.array([a / math.sqrt(n)]),
                         model, labels=["alpha"], boundary=bool(a > 1e3))

    if family == "bivariate-sum":
        model = BivariateSumModel()
        ll = censored_log_likelihood(model, Y, groups)
        return FitResult(clique, family, np.zeros(0), ll, n, True, np.zeros(0), model)

    fixed = {} if fixed is None else {tuple(sorted(k)): float(v) for k, v in fixed.items()}
    free = [e for e in _offdiag(d) if e not in fixed]
    labels = [f"Gamma[{clique[a]},{clique[b]}]" for a, b in free]

    def nll_natural(g):
        if np.any(g <= 0):
            return PENALTY
        try:
            model = HuslerReissPareto(_gamma_from(g, d, fixed))
        except (DomainError, np.linalg.LinAlgError):
            return PENALTY
        ll = censored_log_likelihood(model, Y, groups)
        return -ll / n if np.isfinite(ll) else PENALTY

    def obj(z):
        return nll_natural(np.exp(z))

    if not free:
        model = HuslerReissPareto(_gamma_from(np.zeros(0), d, fixed))
        ll = censored_log_likelihood(model, Y, groups)
        return FitResult(clique, family, np.zeros(0), ll, n, True, np.zeros(0), model)

    z0 = np.log(np.full(len(free), 1.0) if init is None else np.asarray(init, dtype=float))
    rng = np.random.default_rng(seed)
    starts = [z0] + [z0 + rng.normal(0.0, 0.5, size=z0.size) for _ in range(n_restarts - 1)]
    best = None
    for z in starts:
        if obj(z) >= PENALTY:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(obj, z, jac=lambda v: _central_grad(obj, v), method="BFGS",
                                    options={"gtol": GTOL, "maxiter": MAX_ITER})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= PENALTY:
        raise FitError(f"clique {clique}: no start gave a finite likelihood")
    g_hat = np.exp(best.x)
    gnorm = float(np.linalg.norm(_central_grad(obj, best.x)))
    converged = gnorm < GTOL_CHECK
    H = _hessian(lambda g: n * nll_natural(g), g_hat)
    try:
        cov = np.linalg.inv(H)
        se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    except np.linalg.LinAlgError:
        se = np.full(len(free), np.nan)
    model = HuslerReissPareto(_gamma_from(g_hat, d, fixed))
    boundary = bool(np.any(g_hat < 1e-6) or np.any(g_hat > 1e3))
    if not converged:
        log.warning("clique %s: gradient norm %.3g after restarts", clique, gnorm)
    return FitResult(clique, family, g_hat, -best.fun * n, n, converged, se, model, gnorm, boundary,
                     labels, str(best.message))


def estimate_pS(censored_sample: CensoredSample, S: Sequence[int]) -> float:
    """``p_hat`` times the fraction of exceedance rows with a nonzero entry in ``S``."""
    Y = censored_sample.values
    exc = np.any(Y != 0, axis=1)
    if not np.any(exc):
        warnings.warn("no exceedances in the sample", RuntimeWarning, stacklevel=2)
        return 0.0
    frac = float(np.mean(np.any(Y[exc][:, list(S)] != 0, axis=1)))
    if frac == 0.0:
        warnings.warn(f"no exceedances in {tuple(S)}; small-sample estimate", RuntimeWarning, stacklevel=2)
    return censored_sample.p_hat * frac


# ---------------------------------------------------------------------------
# Conditional independence
# ---------------------------------------------------------------------------

@dataclass
class CITestResult:
    pair: tuple
    conditioning: tuple
    statistic: float | None
    p_value: float | None
    method: str
    strata_counts: list
    inconclusive: bool = False
    pooling: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _pool_strata(keys: list, counts: dict, min_cell: int) -> list:
    """Merge strata with fewer than ``min_cell`` rows into their neighbour.

    Strata are ordered by number of conditioning exceedances, then by key;
    a small stratum is merged into the next one (the previous one at the end).
    Returns a list of groups of keys.
    """
    order = sorted(keys, key=lambda k: (sum(k), k))
    groups = [[k] for k in order]
    i = 0
    while len(groups) > 1 and i < len(groups):
        tot = sum(counts[k] for k in groups[i])
        if tot >= min_cell:
            i += 1
            continue
        j = i + 1 if i + 1 < len(groups) else i - 1
        lo, hi = min(i, j), max(i, j)
        groups[lo] = groups[lo] + groups[hi]
        del groups[hi]
        i = lo
    return groups


def binary_ci_test(sample, i: int, j: int, cond: Sequence[int] = (), t: float = 1.0,
                   min_cell: int = 5) -> CITestResult:
    """Mantel-Haenszel chi-square test of ``B_i`` independent of ``B_j`` given ``B_cond``.

    ``B = 1{|X| >= t}`` row-wise.  Strata with fewer than ``min_cell`` rows are
    pooled with the adjacent stratum (see :func:`_pool_strata`).  If no
    stratum has a nondegenerate table the result is inconclusive with no
    p-value.
    """
    X = np.asarray(sample, dtype=float)
    cond = tuple(sorted(int(c) for c in cond))
    if i == j or i in cond or j in cond:
        raise DomainError("pair and conditioning set must be disjoint")
    B = np.abs(X) >= t
    bi, bj = B[:, i], B[:, j]
    if cond:
        keys_arr = B[:, list(cond)]
        uniq = [tuple(int(v) for v in k) for k in np.unique(keys_arr, axis=0)]
    else:
        keys_arr = np.zeros((X.shape[0], 0), dtype=bool)
        uniq = [()]
    masks = {k: np.all(keys_arr == np.array(k, dtype=bool), axis=1) if cond else np.ones(X.shape[0], bool)
             for k in uniq}
    counts = {k: int(m.sum()) for k, m in masks.items()}
    groups = _pool_strata(uniq, counts, min_cell)
    num, var = 0.0, 0.0
    tables = []
    for g in groups:
        m = np.zeros(X.shape[0], dtype=bool)
        for k in g:
            m |= masks[k]
        a = int(np.sum(bi[m] & bj[m]))
        b = int(np.sum(bi[m] & ~bj[m]))
        c = int(np.sum(~bi[m] & bj[m]))
        dd = int(np.sum(~bi[m] & ~bj[m]))
        nk = a + b + c + dd
        tables.append({"strata": [list(k) for k in g], "table": [[a, b], [c, dd]]})
        if nk < 2:
            continue
        r1, c1 = a + b, a + c
        num += a - r1 * c1 / nk
        var += r1 * (nk - r1) * c1 * (nk - c1) / (nk * nk * (nk - 1.0))
    pooling = [[list(k) for k in g] for g in groups if len(g) > 1]
    if var <= 0:
        return CITestResult((i, j), cond, None, None, "binary-chisq", tables, True, pooling)
    stat = num * num / var
    return CITestResult((i, j), cond, float(stat), float(stats.chi2.sf(stat, 1)), "binary-chisq",
                        tables, False, pooling)


def hr_ci_statistic(Gamma, i: int, j: int, k: int) -> float:
    """``Gamma_ij - Gamma_ik - Gamma_jk``; zero is the conditional-independence constraint.

    Descriptive only: no null distribution is attached.
    """
    if len({i, j, k}) < 3:
        raise DomainError("i, j, k must be distinct")
    G = validate_variogram(Gamma)
    return float(G[i, j] - G[i, k] - G[j, k])


def _association(B: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.corrcoef(B.T.astype(float))
    return np.nan_to_num(np.abs(c))


def select_graph(sample, t: float = 1.0, level: float = 0.05, max_cond: int = 2, min_cell: int = 5,
                 return_tests: bool = False):
    """Prune the complete graph by binary CI tests, then triangulate by minimum fill.

    Each pair is tested given the other vertices; with more than ``max_cond``
    of them, the ``max_cond`` most associated with the pair (largest
    ``|corr(B_k, B_i)| + |corr(B_k, B_j)|``, ties by index) are used.
    Inconclusive tests keep the edge.
    """
    X = np.asarray(sample, dtype=float)
    d = X.shape[1]
    assoc = _association(np.abs(X) >= t)
    edges, tests = [], []
    for i, j in combinations(range(d), 2):
        rest = [k for k in range(d) if k not in (i, j)]
        if len(rest) > max_cond:
            rest = sorted(sorted(rest, key=lambda k: (-(assoc[k, i] + assoc[k, j]), k))[:max_cond])
        res = binary_ci_test(X, i, j, rest, t, min_cell)
        tests.append(res)
        if res.inconclusive or res.p_value < level:
            edges.append((i, j))
    graph = decomposable_check(d, min_fill_triangulate(d, edges))
    return (graph, tests) if return_tests else graph


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "tail_fraction": 0.05,
    "family": "hr",
    "level": 0.05,
    "max_cond": 2,
    "min_cell": 5,
    "seed": 0,
    "tails": "upper",
    "min_points": 30,
    "graph": None,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _clique_family(family: str, m: int) -> str:
    if m == 1:
        return "pareto" if family == "pareto" else "hr"
    return family


def fit_pipeline(raw, config: Mapping | None = None) -> tuple[FactorizedTailModel, dict]:
    """Transform and censor, select the graph, fit cliques and assemble.

    Cliques are fitted in junction-tree order; each child's variogram entries
    on its separator are fixed to the parent's fitted values so separator
    models agree by construction.  ``config["graph"]``, an edge list, skips
    selection and fits that graph.
    """
    cfg = dict(DEFAULT_CONFIG)
    cfg.update(config or {})
    X = np.asarray(raw, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    report: dict = {"config": cfg}
    try:
        tr = transform_to_pareto(X, cfg["tail_fraction"], tails=cfg["tails"])
        cs = tr.censored()
        report["transform"] = tr.to_dict()
    except Exception as exc:  # noqa: BLE001
        raise StageError("transform", exc) from exc
    try:
        if cfg.get("graph") is not None:
            graph, tests = decomposable_check(X.shape[1], [tuple(e) for e in cfg["graph"]]), []
        else:
            graph, tests = select_graph(tr.Z, 1.0, cfg["level"], cfg["max_cond"], cfg["min_cell"],
                                        return_tests=True)
        report["graph"] = graph.to_dict()
        report["ci_tests"] = [r.to_dict() for r in tests]
    except Exception as exc:  # noqa: BLE001
        raise StageError("select-graph", exc) from exc
    fits: dict = {}
    try:
        for idx, C in enumerate(graph.cliques):
            fam = _clique_family(cfg["family"], len(C))
            fixed = {}
            if idx > 0 and graph.separators[idx - 1] and fam == "hr":
                D = graph.separators[idx - 1]
                P = graph.cliques[graph.parents[idx]]
                GP = fits[P].model.Gamma
                for a, b in combinations(D, 2):
                    fixed[(C.index(a), C.index(b))] = float(GP[P.index(a), P.index(b)])
            sub = cs.restrict(C)
            fits[C] = fit_clique(sub, fam, seed=cfg["seed"] + idx, clique=C, fixed=fixed,
                                 min_points=cfg["min_points"])
        report["fits"] = [fits[C].to_dict() for C in graph.cliques]
        report["p_S_estimates"] = [{"set": list(S), "value": estimate_pS(cs, S)}
                                   for S in list(graph.cliques) + [D for D in graph.separators if D]]
    except Exception as exc:  # noqa: BLE001
        raise StageError("fit", exc) from exc
    try:
        model = assemble(graph, {C: f.model for C, f in fits.items()}, tr.p_hat)
        ll = model.log_density(cs.values)
        report["log_likelihood"] = float(np.sum(ll))
        report["n_params"] = int(sum(f.parameters.size for f in fits.values()))
    except Exception as exc:  # noqa: BLE001
        raise StageError("assemble", exc) from exc
    return model, report
