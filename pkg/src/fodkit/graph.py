"""Weighted undirected graph measures following Brain Connectivity Toolbox conventions.

Weights are used as given (no normalisation). Path-based measures use
connection length ``1 / w``. Density and degree ignore weights.
Betweenness counts each unordered node pair once, so the middle node of a
three-node path scores 1.
"""
from __future__ import annotations

import heapq
from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from .types import ConnMatrix

_TIE_RTOL = 1e-12


def connection_lengths(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    with np.errstate(divide="ignore"):
        L = np.where(W > 0, 1.0 / np.where(W > 0, W, 1.0), np.inf)
    np.fill_diagonal(L, np.inf)
    return L


def _adjacency_lists(L: np.ndarray) -> List[List[Tuple[int, float]]]:
    return [[(int(j), float(L[i, j])) for j in np.flatnonzero(np.isfinite(L[i]))]
            for i in range(len(L))]


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _TIE_RTOL * max(abs(a), abs(b))


def _single_source(adj, s: int):
    """Dijkstra from ``s`` recording shortest-path counts and predecessors."""
    n = len(adj)
    dist = [np.inf] * n
    seen = {s: 0.0}
    sigma = [0.0] * n
    sigma[s] = 1.0
    preds: List[List[int]] = [[] for _ in range(n)]
    order = []
    heap = [(0.0, s, s)]
    done = [False] * n
    while heap:
        d, pred, v = heapq.heappop(heap)
        if done[v]:
            continue
        if v != s:
            sigma[v] += sigma[pred]
        done[v] = True
        dist[v] = d
        order.append(v)
        for w, lw in adj[v]:
            vw = d + lw
            if done[w]:
                continue
            if w not in seen or (vw < seen[w] and not _close(vw, seen[w])):
                seen[w] = vw
                heapq.heappush(heap, (vw, v, w))
                sigma[w] = 0.0
                preds[w] = [v]
            elif _close(vw, seen[w]):
                sigma[w] += sigma[v]
                preds[w].append(v)
    return np.array(dist), sigma, preds, order


def shortest_paths_and_betweenness(W: np.ndarray):
    """All-pairs shortest lengths and Brandes betweenness (unordered pairs).

    Returns
    -------
    D : ndarray, shape (n, n)
        Shortest path lengths, ``inf`` where unreachable, 0 on the diagonal.
    bc : ndarray, shape (n,)
        Number of shortest paths through each node, summed over unordered
        source-target pairs with fractional credit for ties.
    """
    L = connection_lengths(W)
    adj = _adjacency_lists(L)
    n = len(L)
    D = np.full((n, n), np.inf)
    bc = np.zeros(n)
    for s in range(n):
        dist, sigma, preds, order = _single_source(adj, s)
        D[s] = dist
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
    np.fill_diagonal(D, 0.0)
    return D, bc / 2.0


def floyd_warshall(W: np.ndarray) -> np.ndarray:
    """All-pairs shortest lengths (``1 / w`` per edge) by vectorised Floyd-Warshall."""
    D = connection_lengths(W)
    np.fill_diagonal(D, 0.0)
    for k in range(len(D)):
        np.minimum(D, D[:, k, None] + D[None, k, :], out=D)
    return D


def inverse_distance(D: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        E = np.where(np.isfinite(D) & (D > 0), 1.0 / np.where(D > 0, D, 1.0), 0.0)
    np.fill_diagonal(E, 0.0)
    return E


def global_efficiency(W: np.ndarray, D: np.ndarray = None) -> float:
    """Mean inverse shortest path length; unreachable pairs contribute 0."""
    n = len(W)
    if n < 2:
        return 0.0
    if D is None:
        D, _ = shortest_paths_and_betweenness(W)
    return float(inverse_distance(D).sum() / (n * (n - 1)))


def local_efficiency(W: np.ndarray) -> np.ndarray:
    """Weighted local efficiency per node (BCT ``efficiency_wei(local=True)``).

    For node ``u`` with ``k`` neighbours ``N``::

        E_u = sum_{j != h in N} (w_uj * w_uh / d_jh)^(1/3) / (k (k - 1))

    where ``d_jh`` is the shortest path length within the subgraph induced
    by ``N`` (``u`` removed).
    """
    W = np.asarray(W, dtype=np.float64)
    n = len(W)
    E = np.zeros(n)
    for u in range(n):
        nb = np.flatnonzero(W[u] > 0)
        k = len(nb)
        if k < 2:
            continue
        sub = W[np.ix_(nb, nb)]
        e = inverse_distance(floyd_warshall(sub))
        wu = W[u, nb]
        numer = np.sum(np.cbrt(np.outer(wu, wu) * e))
        E[u] = numer / (k * (k - 1))
    return E


def _triangle_sums(W: np.ndarray) -> np.ndarray:
    ws = np.cbrt(np.asarray(W, dtype=np.float64))
    return np.diag(ws @ ws @ ws)


def clustering_coefficient(W: np.ndarray) -> np.ndarray:
    """Weighted clustering per node from cube-rooted triangle weights."""
    k = np.sum(W > 0, axis=1).astype(np.float64)
    cyc = _triangle_sums(W)
    denom = k * (k - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, cyc / np.where(denom > 0, denom, 1.0), 0.0)


def transitivity(W: np.ndarray) -> float:
    k = np.sum(W > 0, axis=1).astype(np.float64)
    denom = np.sum(k * (k - 1))
    return float(np.sum(_triangle_sums(W)) / denom) if denom > 0 else 0.0


def density(W: np.ndarray) -> float:
    n = len(W)
    if n < 2:
        return 0.0
    edges = np.count_nonzero(np.triu(W, 1))
    return float(edges / (n * (n - 1) / 2))


def degree(W: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(W) > 0, axis=1)


def strength(W: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(W, dtype=np.float64), axis=1)


def assortativity(W: np.ndarray, weighted: bool = False) -> float:
    """Pearson correlation of endpoint degrees (or strengths) over edges."""
    W = np.asarray(W, dtype=np.float64)
    deg = strength(W) if weighted else degree(W).astype(np.float64)
    i, j = np.nonzero(np.triu(W, 1))
    K = len(i)
    if K == 0:
        return float("nan")
    di, dj = deg[i], deg[j]
    mean_term = (np.sum(0.5 * (di + dj)) / K) ** 2
    num = np.sum(di * dj) / K - mean_term
    den = np.sum(0.5 * (di * di + dj * dj)) / K - mean_term
    if abs(den) <= 1e-12 * max(1.0, abs(np.sum(0.5 * (di * di + dj * dj)) / K)):
        return float("nan")
    return float(num / den)


def is_connected(W: np.ndarray) -> bool:
    n = len(W)
    if n == 0:
        return True
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in np.flatnonzero(W[v] > 0):
            if int(w) not in seen:
                seen.add(int(w))
                stack.append(int(w))
    return len(seen) == n


# ---------------------------------------------------------------------------
# community structure


def modularity(W: np.ndarray, communities, gamma: float = 1.0) -> float:
    """Newman modularity ``Q`` of a partition of a weighted undirected graph."""
    W = np.asarray(W, dtype=np.float64)
    c = np.asarray(communities)
    k = W.sum(axis=1)
    m2 = k.sum()
    if m2 == 0:
        return 0.0
    same = c[:, None] == c[None, :]
    return float(np.sum((W - gamma * np.outer(k, k) / m2) * same) / m2)


def _local_moving(G: np.ndarray, rng, gamma: float) -> np.ndarray:
    n = len(G)
    k = G.sum(axis=1)
    m2 = k.sum()
    comm = np.arange(n)
    tot = k.copy()
    improved = True
    while improved:
        improved = False
        for i in rng.permutation(n):
            a = comm[i]
            links = np.bincount(comm, weights=G[i], minlength=n)
            links[a] -= G[i, i]
            tot[a] -= k[i]
            gain = links - gamma * k[i] * tot / m2
            candidates = np.unique(comm[G[i] > 0])
            best, best_gain = a, gain[a]
            for c in candidates:
                if gain[c] > best_gain + 1e-12:
                    best, best_gain = c, gain[c]
            comm[i] = best
            tot[best] += k[i]
            if best != a:
                improved = True
    _, comm = np.unique(comm, return_inverse=True)
    return comm


def louvain(W: np.ndarray, seed: int = 0, gamma: float = 1.0) -> Tuple[np.ndarray, float]:
    """One Louvain run; returns ``(community index per node, Q)``."""
    W = np.asarray(W, dtype=np.float64)
    n = len(W)
    if n == 0 or W.sum() == 0:
        return np.arange(n), 0.0
    rng = np.random.default_rng(seed)
    membership = np.arange(n)
    G = W.copy()
    while True:
        comm = _local_moving(G, rng, gamma)
        n_comm = comm.max() + 1
        if n_comm == len(G):
            break
        membership = comm[membership]
        H = np.zeros((len(G), n_comm))
        H[np.arange(len(G)), comm] = 1.0
        G = H.T @ G @ H
    return membership, modularity(W, membership, gamma)


def best_louvain(W: np.ndarray, seed: int = 0, restarts: int = 10, gamma: float = 1.0):
    """Best of ``restarts`` Louvain runs seeded ``seed .. seed+restarts-1``.

    Returns ``(communities, Q, winning_seed)``; ties go to the lowest seed.
    """
    best = None
    for s in range(seed, seed + restarts):
        comm, q = louvain(W, s, gamma)
        if best is None or q > best[1]:
            best = (comm, q, s)
    return best


# ---------------------------------------------------------------------------
# summary


@dataclass
class GraphMetrics:
    global_efficiency: float
    transitivity: float
    density: float
    assortativity: float
    mean_betweenness: float
    modularity: float
    mean_strength: float
    mean_degree: float
    mean_clustering: float
    mean_local_efficiency: float
    disconnected: bool = False
    n_communities: int = 0
    louvain_seed: int = 0
    betweenness_normalized: bool = False
    weighted_assortativity: bool = False

    METRIC_NAMES = ("global_efficiency", "transitivity", "density", "assortativity",
                    "mean_betweenness", "modularity", "mean_strength", "mean_degree",
                    "mean_clustering", "mean_local_efficiency")

    def to_dict(self):
        return asdict(self)

    def values(self):
        return {name: getattr(self, name) for name in self.METRIC_NAMES}


def graph_metrics(m, seed: int = 0, restarts: int = 10, normalized_betweenness: bool = False,
                  weighted_assortativity: bool = False) -> GraphMetrics:
    W = m.weights if isinstance(m, ConnMatrix) else np.asarray(m, dtype=np.float64)
    n = len(W)
    D, bc = shortest_paths_and_betweenness(W)
    if normalized_betweenness and n > 2:
        bc = bc / ((n - 1) * (n - 2) / 2.0)
    comm, q, won = best_louvain(W, seed, restarts)
    return GraphMetrics(
        global_efficiency=global_efficiency(W, D),
        transitivity=transitivity(W),
        density=density(W),
        assortativity=assortativity(W, weighted_assortativity),
        mean_betweenness=float(np.mean(bc)) if n else 0.0,
        modularity=q,
        mean_strength=float(np.mean(strength(W))) if n else 0.0,
        mean_degree=float(np.mean(degree(W))) if n else 0.0,
        mean_clustering=float(np.mean(clustering_coefficient(W))) if n else 0.0,
        mean_local_efficiency=float(np.mean(local_efficiency(W))) if n else 0.0,
        disconnected=not is_connected(W),
        n_communities=int(comm.max() + 1) if n else 0,
        louvain_seed=int(won),
        betweenness_normalized=bool(normalized_betweenness),
        weighted_assortativity=bool(weighted_assortativity),
    )
