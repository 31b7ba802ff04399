"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical code: transition matrices
are rebuilt from raw edge lists, visiting probabilities come from explicit
enumeration of walk prefixes, and stationary distributions from a dense
eigen-solver.
"""
from __future__ import annotations

import itertools

import numpy as np


def dense_transition(n: int, edges) -> np.ndarray:
    """Row-normalized adjacency from ``(src_index, dst_index, w)`` triples."""
    A = np.zeros((n, n))
    for u, v, w in edges:
        A[u, v] += w
    return A / A.sum(axis=1, keepdims=True)


def layer_matrix(layer) -> np.ndarray:
    idx = {u: j for j, u in enumerate(layer.nodes)}
    return dense_transition(layer.n, [(idx[u], idx[v], w) for u, v, w in layer.edges()])


def enumerate_visit_probs(P: np.ndarray, alpha: np.ndarray, cap: int) -> np.ndarray:
    """``out[u, b]`` = Pr(u among the first ``b`` nodes), by listing every walk prefix."""
    n = len(alpha)
    out = np.zeros((n, cap + 1))
    if cap == 0:
        return out

    def grow(last, seen, prob, depth):
        for u in seen:
            out[u, depth] += prob
        if depth == cap:
            return
        for v in np.flatnonzero(P[last] > 0):
            grow(v, seen | {v}, prob * P[last, v], depth + 1)

    for s in np.flatnonzero(alpha > 0):
        grow(s, frozenset([s]), alpha[s], 1)
    return out


def eigen_stationary(P: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(P.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def brute_reward(dense_probs, sigma, k) -> float:
    """Coverage reward from per-layer ``(N, cap+1)`` dense probability arrays."""
    miss = np.ones(len(sigma))
    for P, ki in zip(dense_probs, k):
        miss *= 1.0 - P[:, ki]
    return float(np.dot(sigma, 1.0 - miss))


def brute_opt(dense_probs, sigma, B: int, caps) -> float:
    best = 0.0
    for k in itertools.product(*[range(c + 1) for c in caps]):
        if sum(k) <= B:
            best = max(best, brute_reward(dense_probs, sigma, k))
    return best


def oracle_dense_tables(net, caps=None):
    """Enumeration-oracle tables of a whole network, expanded to all nodes."""
    caps = net.caps if caps is None else caps
    out = []
    for i, (layer, c) in enumerate(zip(net.layers, caps)):
        local = enumerate_visit_probs(layer_matrix(layer), layer.alpha, c)
        full = np.zeros((net.N, c + 1))
        full[net.layer_globals(i)] = local
        out.append(full)
    return out


def monte_carlo_coverage(net, k, trials: int, seed: int) -> tuple[float, float]:
    """Mean and stderr of the distinct-weight sum of independent walks."""
    rng = np.random.default_rng(seed)
    mats = [layer_matrix(layer) for layer in net.layers]
    totals = np.zeros(trials)
    for t in range(trials):
        seen = set()
        for i, (layer, ki) in enumerate(zip(net.layers, k)):
            if not ki:
                continue
            x = rng.choice(layer.n, p=layer.alpha)
            seen.add(net.layer_globals(i)[x])
            for _ in range(ki - 1):
                x = rng.choice(layer.n, p=mats[i][x])
                seen.add(net.layer_globals(i)[x])
        totals[t] = sum(net.weights[g] for g in seen)
    return float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(trials))
