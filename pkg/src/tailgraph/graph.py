"""Decomposable graphs and clique-factorized censored tail densities.

Vertices are 0-based.  For a censored point ``y`` with exceedance pattern
``A = {i : y_i != 0}`` the factorized density is

    prod_{C : C & A} f_C(y_{C & A}) / prod_{D : D & A} f_D(y_{D & A})
        * prod_C q_C / prod_D q_D,

with ``q_S = p_S`` when ``S`` meets ``A`` and ``1 - p_S`` otherwise, where
``C`` runs over cliques and ``D`` over separators (with multiplicity) of a
junction tree, and ``f_S`` is the censored density of the ``S``-marginal
conditioned on ``||Y_S|| >= 1``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import AssemblyError, DomainError, NotDecomposable
from .models import _SOBOL_HALF_CELL, ParetoTail, TailModel, _nonempty_subsets, angular_integral, model_from_dict
from .radial import RadialSystem, to_radial


# ---------------------------------------------------------------------------
# Decomposable graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecomposableGraph:
    n_vertices: int
    edges: frozenset
    cliques: tuple
    separators: tuple
    elimination_order: tuple
    parents: tuple  # parent clique index per clique (None for component roots)

    def neighbours(self, v: int) -> set:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def to_dict(self) -> dict:
        return {"n": self.n_vertices, "edges": sorted(list(e) for e in self.edges),
                "cliques": [list(c) for c in self.cliques],
                "separators": [list(s) for s in self.separators]}

    @classmethod
    def from_dict(cls, d: dict) -> "DecomposableGraph":
        return decomposable_check(d["n"], [tuple(e) for e in d["edges"]])


def _normalize_edges(n: int, edges) -> frozenset:
    out = set()
    for e in edges:
        a, b = (int(v) for v in e)
        if a == b:
            raise ValueError(f"self-loop at vertex {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"edge {e} out of range for {n} vertices")
        out.add((min(a, b), max(a, b)))
    return frozenset(out)


def _adjacency(n: int, edges) -> list[set]:
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def mcs_order(n: int, adj: list[set]) -> list[int]:
    """Maximum-cardinality search; ties go to the lowest vertex index."""
    weight = [0] * n
    done = [False] * n
    order = []
    for _ in range(n):
        v = max((u for u in range(n) if not done[u]), key=lambda u: (weight[u], -u))
        order.append(v)
        done[v] = True
        for w in adj[v]:
            if not done[w]:
                weight[w] += 1
    return order


def _chordless_cycle(n: int, adj: list[set]) -> tuple:
    """Find a chordless cycle of length >= 4 (the graph must not be chordal)."""
    best = None
    for v in range(n):
        nb = sorted(adj[v])
        for a, b in combinations(nb, 2):
            if b in adj[a]:
                continue
            blocked = (adj[v] | {v}) - {a, b}
            prev = {a: None}
            q = deque([a])
            while q and b not in prev:
                x = q.popleft()
                for y in sorted(adj[x]):
                    if y not in prev and y not in blocked:
                        prev[y] = x
                        q.append(y)
            if b not in prev:
                continue
            path = []
            x = b
            while x is not None:
                path.append(x)
                x = prev[x]
            cyc = [v] + path[::-1]
            if best is None or len(cyc) < len(best):
                best = cyc
        if best is not None and len(best) == 4:
            break
    return _canonical_cycle(best)


def _canonical_cycle(cyc) -> tuple:
    i = cyc.index(min(cyc))
    rot = cyc[i:] + cyc[:i]
    if len(rot) > 2 and rot[-1] < rot[1]:
        rot = [rot[0]] + rot[1:][::-1]
    return tuple(rot)


def decomposable_check(n: int, edges) -> DecomposableGraph:
    """Cliques, separators and a perfect elimination order, or :class:`NotDecomposable`.

    Cliques are listed in maximum-cardinality-search order, which satisfies
    the running intersection property.  The separator of clique ``j >= 1`` is
    its intersection with the union of earlier cliques (possibly empty, when
    a new connected component starts), so there is one fewer separator than
    cliques.
    """
    edges = _normalize_edges(n, edges)
    adj = _adjacency(n, edges)
    order = mcs_order(n, adj)
    pos = {v: i for i, v in enumerate(order)}
    peo = order[::-1]
    for v in peo:
        later = [w for w in adj[v] if pos[w] < pos[v]]
        for a, b in combinations(later, 2):
            if b not in adj[a]:
                raise NotDecomposable(_chordless_cycle(n, adj))
    cand = []
    for v in order:
        K = frozenset([w for w in adj[v] if pos[w] < pos[v]] + [v])
        cand.append(K)
    maximal = [K for i, K in enumerate(cand) if not any(K < L for L in cand)]
    seen, cliques = set(), []
    for K in maximal:
        if K not in seen:
            seen.add(K)
            cliques.append(tuple(sorted(K)))
    seps, parents = [], [None]
    union: set = set(cliques[0]) if cliques else set()
    for j in range(1, len(cliques)):
        S = tuple(sorted(set(cliques[j]) & union))
        seps.append(S)
        parent = None
        if S:
            parent = next(i for i in range(j) if set(S) <= set(cliques[i]))
        parents.append(parent)
        union |= set(cliques[j])
    return DecomposableGraph(n, edges, tuple(cliques), tuple(seps), tuple(peo), tuple(parents))


def complete_graph(n: int) -> DecomposableGraph:
    return decomposable_check(n, combinations(range(n), 2))


def chain_graph(n: int) -> DecomposableGraph:
    return decomposable_check(n, [(i, i + 1) for i in range(n - 1)])


def min_fill_triangulate(n: int, edges) -> frozenset:
    """Add fill-in edges by minimum-fill elimination (lowest index on ties)."""
    edges = set(_normalize_edges(n, edges))
    adj = _adjacency(n, edges)
    work = [set(s) for s in adj]
    remaining = set(range(n))
    while remaining:
        def fill(v):
            nb = [u for u in work[v] if u in remaining]
            return sum(1 for a, b in combinations(nb, 2) if b not in work[a])
        v = min(remaining, key=lambda u: (fill(u), u))
        nb = sorted(u for u in work[v] if u in remaining)
        for a, b in combinations(nb, 2):
            if b not in work[a]:
                work[a].add(b)
                work[b].add(a)
                edges.add((a, b))
        remaining.remove(v)
    return frozenset(edges)


# ---------------------------------------------------------------------------
# Factorized model
# ---------------------------------------------------------------------------

def _sub(S: Sequence[int], within: Sequence[int]) -> tuple[int, ...]:
    """Positions of the vertices ``S`` inside the sorted tuple ``within``."""
    return tuple(within.index(v) for v in S)


@dataclass
class FactorizedTailModel:
    graph: DecomposableGraph
    clique_models: dict
    separator_models: dict
    p_S: dict
    p: float
    alpha: float
    weights: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.graph.n_vertices

    # -- pieces -----------------------------------------------------------
    def _model(self, S):
        return self.clique_models[S] if S in self.clique_models else self.separator_models[S]

    def marginal_censored_density(self, S, y_S) -> np.ndarray:
        """``p_S f_S(y_{S & A})`` if ``S`` meets the pattern, else ``1 - p_S``.

        ``y_S`` holds the censored coordinates of ``S`` (zeros for censored
        margins), row-wise.
        """
        S = tuple(S)
        y = np.atleast_2d(np.asarray(y_S, dtype=float))
        out = np.empty(y.shape[0])
        pats = y != 0
        model = self._model(S)
        keys = {tuple(r) for r in pats}
        for key in keys:
            rows = np.all(pats == np.array(key), axis=1)
            A = tuple(i for i, k in enumerate(key) if k)
            if not A:
                out[rows] = 1.0 - self.p_S[S]
            else:
                out[rows] = self.p_S[S] * np.asarray(model.censored_density(y[np.ix_(rows, A)], A))
        return out

    def atom_mass(self) -> float:
        num = math.prod(1.0 - self.p_S[C] for C in self.graph.cliques)
        den = math.prod(1.0 - self.p_S[D] for D in self.graph.separators if D)
        return num / den

    def log_density(self, y) -> np.ndarray:
        """Log of the factorized censored density (per row)."""
        y2 = _check_censored(y, self.dim)
        out = np.zeros(y2.shape[0])
        atom = ~np.any(y2 != 0, axis=1)
        with np.errstate(divide="ignore"):
            for C in self.graph.cliques:
                out += np.log(self.marginal_censored_density(C, y2[:, list(C)]))
            for D in self.graph.separators:
                if D:
                    out -= np.log(self.marginal_censored_density(D, y2[:, list(D)]))
        out[atom] = math.log(self.atom_mass())
        return out

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "cliques": [{"vertices": list(C), "model": self.clique_models[C].to_dict()}
                        for C in self.graph.cliques],
            "p": self.p,
            "p_S": [{"set": list(S), "value": v} for S, v in sorted(self.p_S.items())],
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactorizedTailModel":
        graph = DecomposableGraph.from_dict(d["graph"])
        cms = {tuple(c["vertices"]): model_from_dict(c["model"]) for c in d["cliques"]}
        seps = {}
        for j, C in enumerate(graph.cliques):
            D = graph.separators[j - 1] if j > 0 else ()
            if D:
                P = graph.cliques[graph.parents[j]]
                seps.setdefault(D, _separator_model(cms[P], P, D))
        p_S = {tuple(e["set"]): float(e["value"]) for e in d["p_S"]}
        return cls(graph, cms, seps, p_S, float(d["p"]), float(d["alpha"]))


def _check_censored(y, d: int) -> np.ndarray:
    y2 = np.atleast_2d(np.asarray(y, dtype=float))
    if y2.shape[1] != d:
        raise DomainError(f"expected {d} coordinates, got {y2.shape[1]}")
    a = np.abs(y2)
    if np.any((a > 0) & (a < 1)):
        raise DomainError("malformed censored point: entries must be 0 or have |y| >= 1")
    return y2


def factorized_censored_density(model: FactorizedTailModel, y) -> np.ndarray:
    """Evaluate the factorized density at censored points (the atom for ``y = 0``)."""
    y = np.asarray(y, dtype=float)
    v = np.exp(model.log_density(y))
    return v[0] if y.ndim == 1 else v


def _separator_model(C_model: TailModel, C, D) -> TailModel:
    return C_model.marginal(_sub(D, C))


def _probe_points(m: int, n: int = 8) -> np.ndarray:
    rng = np.random.default_rng(12345)
    pts = 1.0 + rng.exponential(2.0, size=(n, m))
    pts[:, 0] = np.maximum(pts[:, 0], 1.0)
    return pts


def assemble(
    graph: DecomposableGraph,
    clique_models: Mapping,
    p: float,
    p_of: Sequence[int] | None = None,
    tol: float = 1e-6,
) -> FactorizedTailModel:
    """Combine clique models into a factorized model with exceedance weights.

    ``p_S`` are proportional to ``Pr(||Y_S|| >= 1)`` propagated through the
    junction tree (``p_D = p_C Pr_C(||Y_D|| >= 1)`` and
    ``p_C' = p_D / Pr_C'(||Y_D|| >= 1)``); roots of separate components are
    scaled so that single-margin exceedance rates agree.  The common scale is
    set so that ``p`` is the probability of a nonzero censored vector, or
    ``p_S`` for ``S = p_of`` when given.

    Separator models are marginals of the parent clique; each child's
    marginal must agree with them on probe points, otherwise
    :class:`AssemblyError` names the offending pair.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    cms = {}
    for C in graph.cliques:
        m = clique_models.get(C)
        if m is None and len(C) == 1:
            m = ParetoTail(1.0)
        if m is None:
            raise AssemblyError(f"no model supplied for clique {C}")
        if m.dim != len(C):
            raise AssemblyError(f"model for clique {C} has dimension {m.dim}")
        cms[C] = m
    alphas = {round(m.alpha, 12) for m in cms.values()}
    if len(alphas) > 1:
        raise AssemblyError(f"clique models disagree on alpha: {sorted(alphas)}")
    alpha = alphas.pop()
    seps, w = {}, {}
    for j, C in enumerate(graph.cliques):
        parent = graph.parents[j]
        if j == 0 or not graph.separators[j - 1]:
            mC = cms[C]
            w[C] = 1.0 / np.mean([mC.exceedance_probability((i,)) for i in range(len(C))])
            continue
        D = graph.separators[j - 1]
        P = graph.cliques[parent]
        mD = _separator_model(cms[P], P, D)
        child = _separator_model(cms[C], C, D)
        pts = _probe_points(len(D))
        a = np.asarray(mD.density(pts))
        b = np.asarray(child.density(pts))
        if np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)) > tol:
            raise AssemblyError(f"cliques {P} and {C} disagree on separator {D}")
        seps.setdefault(D, mD)
        w[D] = w[P] * cms[P].exceedance_probability(_sub(D, P))
        w[C] = w[D] / cms[C].exceedance_probability(_sub(D, C))
    sep_list = [D for D in graph.separators if D]

    def atom(s):
        num = math.prod(1.0 - s * w[C] for C in graph.cliques)
        den = math.prod(1.0 - s * w[D] for D in sep_list)
        return num / den

    s_max = 1.0 / max(w.values())
    if p_of is not None:
        key = tuple(sorted(p_of))
        if key not in w:
            raise AssemblyError(f"p_of={key} is not a clique or separator")
        s = p / w[key]
        if s >= s_max:
            raise AssemblyError(f"p={p} for {key} forces some p_S >= 1")
    else:
        if 1.0 - atom(s_max * (1 - 1e-12)) < p:
            raise AssemblyError(f"p={p} is not attainable with these clique models")
        s = optimize.brentq(lambda s: 1.0 - atom(s) - p, 0.0, s_max * (1 - 1e-12), xtol=1e-15, rtol=1e-14)
    p_S = {S: s * v for S, v in w.items()}
    p_tot = 1.0 - atom(s)
    return FactorizedTailModel(graph, cms, seps, p_S, float(p_tot), float(alpha), dict(w))


def pattern_masses(model: FactorizedTailModel, n_log2: int = 13, n_scrambles: int = 8,
                   seed: int = 0) -> tuple[float, float]:
    """Sum over exceedance patterns of the integrated factorized density, plus the atom.

    Each pattern is integrated by randomized QMC with ``y = u^{-g}``; signs
    are not enumerated (clique models here live on the positive orthant).
    """
    from scipy.stats import qmc
    d = model.dim
    total, var = model.atom_mass(), 0.0
    for A in _nonempty_subsets(d):
        m = len(A)
        g = (m + 1.0) / model.alpha
        means = []
        for s in range(n_scrambles):
            w = qmc.Sobol(m, scramble=True, seed=np.random.default_rng([seed, s, m])).random_base2(n_log2)
            u = 1.0 - (w + _SOBOL_HALF_CELL)
            jac = np.prod(g * u ** (-g - 1.0), axis=1)
            y = np.zeros((u.shape[0], d))
            y[:, list(A)] = u ** -g
            means.append(float(np.mean(np.exp(model.log_density(y)) * jac)))
        total += float(np.mean(means))
        var += float(np.var(means, ddof=1) / n_scrambles)
    return total, math.sqrt(var)


# ---------------------------------------------------------------------------
# Angular factorization
# ---------------------------------------------------------------------------

def _kernel_ratio(model: FactorizedTailModel, y: np.ndarray) -> np.ndarray:
    """``prod_C kernel_C(y_C) / prod_D kernel_D(y_D)``, homogeneous of order ``-alpha - d``."""
    out = np.ones(y.shape[0])
    for C in model.graph.cliques:
        m = model.clique_models[C]
        out *= np.asarray(m.kernel(y[:, list(C)])) / m.normalizer
    for D in model.graph.separators:
        if D:
            m = model.separator_models[D]
            out /= np.asarray(m.kernel(y[:, list(D)])) / m.normalizer
    return out


def angular_constant(model: FactorizedTailModel, sys: RadialSystem, n_log2: int = 14,
                     seed: int = 0) -> tuple[float, float]:
    """``1 / int_Omega jac * K`` for the kernel ratio ``K`` under power-law decay.

    Homogeneity gives ``int_Omega K jac dtheta = int_faces K(s) r(s)^alpha ds``
    over the faces of the unit sup-norm sphere, for any radial system.
    """
    if sys.decay.name != "id":
        raise ValueError("angular factorization requires power-law decay")
    alpha = model.alpha

    def f(s):
        return _kernel_ratio(model, s) * np.asarray(sys.r(s)) ** alpha

    val, err = angular_integral(f, model.dim, False, n_log2=n_log2, seed=seed)
    return 1.0 / val, err / val**2


def angular_factorized_density(model: FactorizedTailModel, theta, sys: RadialSystem,
                               chart=None, k: float | None = None) -> np.ndarray:
    """Angular density of the uncensored factorized model at ``theta``.

    ``h(theta) = k |det D phi^-1(1, theta)| prod_C f_C(y_C) / prod_D f_D(y_D)``
    with ``y = phi^-1(1, theta)``; each clique factor equals
    ``r(y_C)^{-alpha-1} h_C J_C`` up to its constant.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim <= 1
    th = theta.reshape(-1, model.dim - 1)
    y = sys.inverse(np.ones(th.shape[0]), th, chart=chart)
    if np.any(y <= 0) and chart is None and sys.name == "linf":
        raise DomainError("linf angles need a chart")
    if k is None:
        k = angular_constant(model, sys)[0]
    h = k * sys.jacobian(np.ones(th.shape[0]), th, chart) * _kernel_ratio(model, y)
    return h[0] if single else h


def angular_density(model: TailModel, sys: RadialSystem, k: float | None = None) -> Callable:
    """Angular density ``theta -> h(theta)`` of a single homogeneous model on the positive orthant."""
    if sys.decay.name != "id":
        raise ValueError("angular densities require power-law decay")
    if k is None:
        val, _ = angular_integral(lambda s: np.asarray(model.kernel(s)) * np.asarray(sys.r(s)) ** model.alpha,
                                  model.dim, False)
        k = 1.0 / val

    def h(theta, chart=None):
        th = np.atleast_2d(np.asarray(theta, dtype=float)).reshape(-1, model.dim - 1)
        y = sys.inverse(np.ones(th.shape[0]), th, chart=chart)
        v = k * sys.jacobian(np.ones(th.shape[0]), th, chart) * np.asarray(model.kernel(y))
        return v[0] if np.ndim(theta) <= 1 and th.shape[0] == 1 else v

    h.k = k
    return h


@dataclass
class ConsistencyResult:
    max_residual: float
    max_relative: float
    k: float
    theta_grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray


def _l1_integral(h_At: Callable, alpha: float, d_t: int, th: np.ndarray) -> float:
    # reduced Atilde coordinates of ((1 - w) theta_full, w) drop the last entry w
    full = np.append(th, 1.0 - th.sum())

    def g(w):
        return (1.0 - w) ** (alpha + d_t - 2.0) * float(np.atleast_1d(h_At(((1.0 - w) * full)[None, :]))[0])
    val, _ = integrate.quad(g, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=200)
    return val


def consistency_residual(
    h_A: Callable,
    h_Atilde: Callable,
    alpha: float,
    sys_pair: tuple[RadialSystem, RadialSystem],
    theta_grid=None,
    k: float | None = None,
    n_grid: int = 50,
) -> ConsistencyResult:
    """Check that ``h_A`` is the ``A``-margin of ``h_Atilde`` (``Atilde = A + {i}``).

    The added coordinate ``i`` is the last one of ``Atilde``.  For L1
    simplex systems the reduced form
    ``k int_0^1 (1 - w)^{alpha + |Atilde| - 2} h_Atilde((1 - w) theta, w) dw``
    is used; otherwise the integral over ``z = y_i / r(y_A)`` in ``(0, inf)``
    with the Jacobian ratio.  ``k`` defaults to the value normalizing the
    right-hand side over the grid in the least-squares sense.
    """
    sA, sT = sys_pair
    dA = sA.dim
    if theta_grid is None:
        if dA != 2:
            raise ValueError("default grid only for two-dimensional A")
        theta_grid = np.linspace(0.01, 0.99, n_grid)[:, None]
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float)).reshape(-1, dA - 1)
    lhs = np.array([float(np.atleast_1d(h_A(t[None, :]))[0]) for t in grid])

    def integral(th):
        if sA.name == sT.name == "l1-simplex":
            return _l1_integral(h_Atilde, alpha, sT.dim, th)
        yA = sA.inverse(np.ones(1), th[None, :])[0]
        JA = float(sA.forward_jacobian(yA[None, :])[0])

        def g(z):
            y = np.append(yA, z)[None, :]
            c = to_radial(y, sT)
            return (float(c.r[0]) ** (-alpha - 1.0) * float(np.atleast_1d(h_Atilde(c.theta, c.chart))[0])
                    * float(sT.forward_jacobian(y)[0]) / JA)
        return integrate.quad(g, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)[0]

    rhs = np.array([integral(th) for th in grid])
    if k is None and dA == 2 and sA.name == "l1-simplex":
        # h_A is a density on [0, 1]; k normalizes the right-hand side there
        tot = integrate.quad(lambda t: integral(np.array([t])), 0.0, 1.0, epsabs=0.0, epsrel=1e-9, limit=200)[0]
        k = 1.0 / tot
    if k is None:
        k = float(np.dot(lhs, rhs) / np.dot(rhs, rhs))
    res = np.abs(lhs - k * rhs)
    return ConsistencyResult(float(res.max()), float(np.max(res / np.abs(lhs))), k, grid, lhs, k * rhs)
