"""Visiting probabilities of random walks via absorbing Markov chains.

``P[i][u, b]`` is the probability that the walker on layer ``i`` visits node
``u`` within its first ``b`` steps (the starting node counts as step 1).
For a target ``u`` we make ``u`` absorbing and push the starting distribution
through the modified chain; the mass sitting on ``u`` after ``b - 1``
transitions is the visiting probability.
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import NodeNotInLayer
from .network import Layer, LayeredNetwork, network_hash, transition_matrix

log = logging.getLogger(__name__)

CACHE_VERSION = 1
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class VisitProbTable:
    """Dense per-layer visiting probabilities.

    ``probs[i]`` has shape ``(len(layer_nodes[i]), caps[i] + 1)`` and
    ``layer_nodes[i]`` holds the global node indices of its rows.  Nodes not
    listed for a layer have probability zero there.
    """

    layer_nodes: tuple[np.ndarray, ...]
    probs: tuple[np.ndarray, ...]
    n_nodes: int
    max_drift: float = 0.0

    @property
    def m(self) -> int:
        return len(self.probs)

    @property
    def caps(self) -> tuple[int, ...]:
        return tuple(p.shape[1] - 1 for p in self.probs)

    @property
    def overlapping(self) -> bool:
        seen = np.zeros(self.n_nodes, dtype=bool)
        for g in self.layer_nodes:
            if seen[g].any():
                return True
            seen[g] = True
        return False

    def dense(self, i: int) -> np.ndarray:
        """Layer ``i`` expanded to all ``n_nodes`` rows."""
        out = np.zeros((self.n_nodes, self.probs[i].shape[1]))
        out[self.layer_nodes[i]] = self.probs[i]
        return out

    @classmethod
    def from_dense(cls, probs: Sequence[np.ndarray]) -> "VisitProbTable":
        """Table in which every layer may reach every node (online placeholders)."""
        probs = tuple(np.asarray(p, dtype=float) for p in probs)
        n = probs[0].shape[0]
        return cls(tuple(np.arange(n) for _ in probs), probs, n)


@dataclass(frozen=True, eq=False)
class MarginalGainTable:
    """Per-node gains ``node[i][:, b] = P(b) - P(b-1)`` and layer-level
    gains ``layer[i][b] = sum_u sigma_u * node[i][u, b]`` (column 0 is 0)."""

    node: tuple[np.ndarray, ...]
    layer: tuple[np.ndarray, ...]
    overlapping: bool

    @property
    def caps(self) -> tuple[int, ...]:
        return tuple(len(g) - 1 for g in self.layer)


def _absorbing_iterate(P: sparse.csr_matrix, alpha: np.ndarray, targets: np.ndarray, cap: int):
    """Visiting probabilities for a batch of targets; returns (values, drift)."""
    t = len(targets)
    out = np.zeros((t, cap + 1))
    if cap == 0 or t == 0:
        return out, 0.0
    rows = np.arange(t)
    X = np.tile(alpha, (t, 1))
    out[:, 1] = X[rows, targets]
    target_rows = P[targets].toarray()
    PT = P.T.tocsr()
    drift = 0.0
    for b in range(2, cap + 1):
        held = X[rows, targets].copy()
        X = (PT @ X.T).T
        # absorbing rows: mass on the target stays put
        X -= held[:, None] * target_rows
        X[rows, targets] += held
        lo, hi = X.min(), X.max()
        if lo < 0 or hi > 1:
            drift = max(drift, -lo, hi - 1)
            np.clip(X, 0.0, 1.0, out=X)
        out[:, b] = X[rows, targets]
    return out, float(drift)


def visit_probabilities(layer: Layer, matrix, target: str, cap: int) -> np.ndarray:
    """``[P(0), ..., P(cap)]`` for one target node of ``layer``."""
    if target not in layer:
        raise NodeNotInLayer(f"{target!r} is not a node of layer {layer.name}")
    if cap < 0:
        raise ValueError("cap must be non-negative")
    P = sparse.csr_matrix(matrix)
    vals, _ = _absorbing_iterate(P, layer.alpha, np.array([layer.local_index(target)]), cap)
    return vals[0]


def layer_visit_table(layer: Layer, cap: int, matrix=None, workers: int = 1) -> tuple[np.ndarray, float]:
    """All targets of one layer at once, shape ``(n, cap + 1)``."""
    P = sparse.csr_matrix(matrix if matrix is not None else transition_matrix(layer, as_sparse=True))
    chunks = [np.arange(s, min(s + _CHUNK, layer.n)) for s in range(0, layer.n, _CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _absorbing_iterate(P, layer.alpha, c, cap), chunks))
    else:
        parts = [_absorbing_iterate(P, layer.alpha, c, cap) for c in chunks]
    table = np.vstack([p[0] for p in parts])
    return table, max(p[1] for p in parts)


def build_table(network: LayeredNetwork, caps: Sequence[int] | None = None, workers: int = 1) -> VisitProbTable:
    """Visiting probabilities for every (layer, node, budget <= cap)."""
    caps = network.caps if caps is None else tuple(int(c) for c in caps)
    if len(caps) != network.m:
        raise ValueError(f"expected {network.m} caps, got {len(caps)}")
    probs, drift = [], 0.0
    for layer, cap in zip(network.layers, caps):
        tab, d = layer_visit_table(layer, cap, workers=workers)
        probs.append(tab)
        drift = max(drift, d)
    return VisitProbTable(tuple(network.layer_globals(i) for i in range(network.m)),
                          tuple(probs), network.N, drift)


def marginal_gains(table: VisitProbTable, weights: np.ndarray) -> MarginalGainTable:
    weights = np.asarray(weights, dtype=float)
    node, layer = [], []
    for nodes, P in zip(table.layer_nodes, table.probs):
        g = np.zeros_like(P)
        g[:, 1:] = np.diff(P, axis=1)
        node.append(g)
        layer.append(weights[nodes] @ g)
    return MarginalGainTable(tuple(node), tuple(layer), table.overlapping)


class WalkSampler:
    """Vectorized sampler for weighted random walks on one layer.

    Row ``x`` of the transition matrix is encoded as cumulative values in
    ``(x, x + 1]``, so one ``searchsorted`` moves a whole batch of walkers.
    """

    def __init__(self, layer: Layer, matrix=None):
        P = sparse.csr_matrix(matrix if matrix is not None else transition_matrix(layer, as_sparse=True))
        P.sort_indices()
        self.n = layer.n
        self.indices = P.indices.copy()
        rows = np.repeat(np.arange(self.n), np.diff(P.indptr))
        cum = np.empty(len(P.data))
        for x in range(self.n):
            s, e = P.indptr[x], P.indptr[x + 1]
            cum[s:e] = np.cumsum(P.data[s:e])
            cum[e - 1] = 1.0
        self.cum = rows + cum
        self.start_cum = np.cumsum(layer.alpha)
        # close the distribution at the last node with positive mass so that
        # zero-mass nodes are never drawn
        self.start_cum[np.flatnonzero(layer.alpha > 0)[-1]:] = 1.0

    def start(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        return np.searchsorted(self.start_cum, u, side="right")

    def step(self, pos, rng: np.random.Generator):
        u = rng.random(np.shape(pos))
        return self.indices[np.searchsorted(self.cum, pos + u, side="right")]

    def walk(self, steps: int, rng: np.random.Generator) -> list[int]:
        """One trajectory of ``steps`` visited local nodes."""
        if steps <= 0:
            return []
        x = int(self.start(rng))
        path = [x]
        if steps > 1:
            us = rng.random(steps - 1)
            for u in us:
                x = int(self.indices[np.searchsorted(self.cum, x + u, side="right")])
                path.append(x)
        return path


def monte_carlo_visit_prob(layer: Layer, target: str, budget: int, trials: int, seed: int = 0,
                           matrix=None) -> tuple[float, float]:
    """Fraction of simulated ``budget``-step walks that visit ``target``.

    Returns ``(estimate, standard_error)``; deterministic given ``seed``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if target not in layer:
        raise NodeNotInLayer(f"{target!r} is not a node of layer {layer.name}")
    if budget <= 0:
        return 0.0, 0.0
    t = layer.local_index(target)
    sampler = WalkSampler(layer, matrix)
    rng = np.random.default_rng(seed)
    pos = sampler.start(rng, trials)
    hit = pos == t
    for _ in range(budget - 1):
        pos = sampler.step(pos, rng)
        hit |= pos == t
    p = hit.mean()
    return float(p), float(np.sqrt(p * (1 - p) / trials))


# ---------------------------------------------------------------- caching

def cache_key(network: LayeredNetwork, caps: Sequence[int]) -> str:
    h = hashlib.sha256(network_hash(network).encode())
    h.update(repr(tuple(int(c) for c in caps)).encode())
    return h.hexdigest()[:32]


def save_table(table: VisitProbTable, path, key: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    arrays = {"version": np.array(CACHE_VERSION), "key": np.array(key),
              "n_nodes": np.array(table.n_nodes), "max_drift": np.array(table.max_drift)}
    for i, (nodes, P) in enumerate(zip(table.layer_nodes, table.probs)):
        arrays[f"nodes{i}"] = nodes
        arrays[f"probs{i}"] = P
    np.savez(tmp, m=np.array(table.m), **arrays)
    tmp.replace(path)


def load_table(path, key: str) -> VisitProbTable:
    """Load a cached table; raises ``ValueError`` on version or key mismatch."""
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != CACHE_VERSION:
            raise ValueError(f"cache version {int(z['version'])} != {CACHE_VERSION}")
        if str(z["key"]) != key:
            raise ValueError("cache key mismatch")
        m = int(z["m"])
        nodes = tuple(z[f"nodes{i}"] for i in range(m))
        probs = tuple(z[f"probs{i}"] for i in range(m))
        return VisitProbTable(nodes, probs, int(z["n_nodes"]), float(z["max_drift"]))


def cached_table(network: LayeredNetwork, caps: Sequence[int], cache_dir, workers: int = 1):
    """Return ``(table, hit)``, computing and storing the table on a miss.

    Unreadable or stale cache files are recomputed with a warning.
    """
    key = cache_key(network, caps)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"visitprob-{key}.npz"
    if path.exists():
        try:
            table = load_table(path, key)
            log.info("visit-probability cache hit: %s", path)
            return table, True
        except Exception as exc:  # corrupt or foreign file
            log.warning("ignoring unusable cache file %s (%s); recomputing", path, exc)
    table = build_table(network, caps, workers=workers)
    save_table(table, path, key)
    return table, False
