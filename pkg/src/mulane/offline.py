"""Offline budget-allocation solvers.

All solvers take a :class:`~mulane.visitprob.VisitProbTable`, node weights,
a total budget ``B`` and per-layer caps ``c`` (``c_i`` may not exceed the
table's cap for layer ``i``), and return a :class:`SolverResult`.

Tie-breaking is shared by every greedy step: among candidates listed in
(layer, increment) order, the first one whose value is within ``TIE`` of the
maximum wins.  This is order-independent, so the lazy and eager evaluation
paths pick identical candidates.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import EnumerationTooLarge, OverlapError
from .reward import IncrementalEvaluator, check_allocation, layer_rewards, reward_overlapping
from .visitprob import MarginalGainTable, VisitProbTable

TIE = 1e-12
# numerical head-room when trusting stale (upper-bound) gains in lazy mode
LAZY_SLACK = 1e-9
MAX_ENUMERATION = 10**7


@dataclass(frozen=True)
class ApproxConstants:
    """Approximation ratios of the greedy solvers.

    ``eta`` solves ``exp(eta) = 2 - eta``; BEG guarantees ``1 - exp(-eta)``
    (about 0.357), MG under stationary starts and BEGE guarantee ``1 - 1/e``.
    """

    eta: float
    ratio_beg: float
    ratio_mg: float

    @staticmethod
    @lru_cache(maxsize=None)
    def compute(tol: float = 1e-14) -> "ApproxConstants":
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if math.exp(mid) + mid - 2.0 > 0:
                hi = mid
            else:
                lo = mid
        eta = 0.5 * (lo + hi)
        return ApproxConstants(eta, 1.0 - math.exp(-eta), 1.0 - 1.0 / math.e)


@dataclass
class SolverResult:
    allocation: tuple[int, ...]
    reward: float
    algo: str
    seconds: float = 0.0
    evaluations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def millis(self) -> float:
        return 1000.0 * self.seconds

    def to_json(self) -> dict:
        return {"allocation": list(self.allocation), "reward": self.reward,
                "algo": self.algo, "millis": self.millis}


def _caps(table: VisitProbTable, c) -> np.ndarray:
    caps = np.asarray(table.caps if c is None else c, dtype=np.int64)
    if caps.shape != (table.m,):
        raise ValueError(f"expected {table.m} caps, got {caps.shape}")
    if np.any(caps < 0) or np.any(caps > np.asarray(table.caps)):
        raise ValueError(f"caps {caps.tolist()} not covered by table caps {list(table.caps)}")
    return caps


def _first_near_max(values: Sequence[np.ndarray]) -> tuple[int, int] | None:
    """Index ``(layer, position)`` chosen by the shared tie rule."""
    best = -np.inf
    for v in values:
        if v.size:
            best = max(best, float(v.max()))
    if best == -np.inf:
        return None
    for i, v in enumerate(values):
        if v.size:
            hit = np.flatnonzero(v >= best - TIE)
            if hit.size:
                return i, int(hit[0])
    return None


def _greedy_extend(ev: IncrementalEvaluator, budget: int, caps: np.ndarray, *,
                   variant: str = "alg9", lazy: bool = False) -> int:
    """Budget-effective greedy from ``ev``'s allocation; mutates ``ev``.

    Candidates are kept per layer as increments ``b`` relative to the current
    ``k_i``.  ``variant="alg9"`` shrinks only the chosen layer's increments,
    ``variant="alg1"`` shrinks every layer's increments by the chosen amount.
    Candidates with ``b`` above the remaining budget are dropped before each
    selection.  Removing an unaffordable winner and re-selecting, as the
    textbook loop does, ends at the same affordable candidate, since the
    remaining budget never grows back.

    With ``lazy=True`` (alg9 only) gains of layers other than the one just
    extended are reused as upper bounds and only recomputed when they could
    still win.  Returns the number of gain evaluations.
    """
    if variant not in ("alg9", "alg1"):
        raise ValueError(f"unknown BEG variant {variant!r}")
    if lazy and variant == "alg1":
        raise ValueError("lazy evaluation is only defined for the alg9 variant")
    m = len(caps)
    rel = [np.arange(1, caps[i] - ev.k[i] + 1, dtype=np.int64) for i in range(m)]
    cache = [np.zeros(0) for _ in range(m)]
    valid = [False] * m   # cache aligned with rel and an upper bound on the gains
    fresh = [False] * m   # cache computed at the current allocation
    K = int(budget)
    evals = 0

    def refresh(i):
        nonlocal evals
        cache[i] = ev._gains(i, rel[i])
        evals += rel[i].size
        valid[i] = fresh[i] = True

    while K > 0:
        for i in range(m):
            if rel[i].size and rel[i][-1] > K:
                keep = rel[i] <= K
                rel[i] = rel[i][keep]
                if valid[i]:
                    cache[i] = cache[i][keep]
        if not any(r.size for r in rel):
            break
        if lazy:
            for i in range(m):
                if not valid[i]:
                    refresh(i)
            while True:
                top = max((float(cache[i].max()) for i in range(m) if fresh[i] and rel[i].size),
                          default=-np.inf)
                stale = [i for i in range(m) if not fresh[i] and rel[i].size
                         and float(cache[i].max()) >= top - TIE - LAZY_SLACK]
                if not stale:
                    break
                for i in stale:
                    refresh(i)
            values = [cache[i] if fresh[i] else cache[i][:0] for i in range(m)]
        else:
            for i in range(m):
                refresh(i)
            values = cache
        i, pos = _first_near_max(values)
        b = int(rel[i][pos])
        ev.apply(i, b)
        K -= b
        for j in (range(m) if variant == "alg1" else (i,)):
            rel[j] = rel[j][rel[j] > b] - b
            valid[j] = False
        fresh = [False] * m
    return evals


def beg(table: VisitProbTable, sigma, B: int, c=None, *, variant: str = "alg9",
        lazy: bool = False) -> SolverResult:
    """Budget effective greedy followed by the best single-layer saturation.

    Saturating layer ``i`` means allocating ``min(c_i, B)`` to it alone.
    """
    t0 = time.perf_counter()
    caps = _caps(table, c)
    ev = IncrementalEvaluator(table, sigma)
    evals = _greedy_extend(ev, B, caps, variant=variant, lazy=lazy)
    k, best = ev.k.copy(), ev.reward
    for i in range(table.m):
        s = np.zeros(table.m, dtype=np.int64)
        s[i] = min(int(caps[i]), int(B))
        r = reward_overlapping(table, sigma, s)
        evals += 1
        if r > best + TIE:
            k, best = s, r
    return SolverResult(tuple(int(x) for x in k), float(best), "beg",
                        time.perf_counter() - t0, evals, {"variant": variant, "lazy": lazy})


def count_partial_solutions(caps: Sequence[int], B: int, max_layers: int = 3) -> int:
    """Number of allocations with at most ``max_layers`` positive entries."""
    # ways[j, s]: allocations so far with j positive layers and total s
    ways = np.zeros((max_layers + 1, B + 1), dtype=object)
    ways[0, 0] = 1
    for c in caps:
        nxt = ways.copy()
        for a in range(1, min(int(c), B) + 1):
            nxt[1:, a:] += ways[:-1, :B + 1 - a]
        ways = nxt
    return int(ways.sum())


def _partial_solutions(caps: Sequence[int], B: int, max_layers: int = 3):
    m = len(caps)
    yield np.zeros(m, dtype=np.int64)
    for size in range(1, min(max_layers, m) + 1):
        for layers in itertools.combinations(range(m), size):
            ranges = [range(1, min(int(caps[i]), B) + 1) for i in layers]
            for amounts in itertools.product(*ranges):
                if sum(amounts) <= B:
                    k = np.zeros(m, dtype=np.int64)
                    k[list(layers)] = amounts
                    yield k


def bege(table: VisitProbTable, sigma, B: int, c=None, *, max_partials: int = MAX_ENUMERATION,
         lazy: bool = False) -> SolverResult:
    """Greedy completion of every partial allocation touching at most three layers."""
    t0 = time.perf_counter()
    caps = _caps(table, c)
    count = count_partial_solutions(caps, B)
    if count > max_partials:
        raise EnumerationTooLarge(f"{count} partial solutions exceed the limit {max_partials}")
    best_k, best, evals = np.zeros(table.m, dtype=np.int64), 0.0, 0
    base = IncrementalEvaluator(table, sigma)
    for start in _partial_solutions(caps, B):
        ev = base.copy()
        for i in np.flatnonzero(start):
            ev.apply(int(i), int(start[i]))
        evals += _greedy_extend(ev, B - int(start.sum()), caps, lazy=lazy) + 1
        if ev.reward > best + TIE:
            best_k, best = ev.k.copy(), ev.reward
    return SolverResult(tuple(int(x) for x in best_k), float(best), "bege",
                        time.perf_counter() - t0, evals, {"partials": count})


def mg(table: VisitProbTable, sigma, B: int, c=None) -> SolverResult:
    """Myopic greedy: ``B`` unit steps, each to the layer with the best gain."""
    t0 = time.perf_counter()
    caps = _caps(table, c)
    ev = IncrementalEvaluator(table, sigma)
    evals = 0
    one = np.ones(1, dtype=np.int64)
    for _ in range(int(B)):
        values = []
        for i in range(table.m):
            if ev.k[i] + 1 <= caps[i]:
                values.append(ev.per_unit_gains(i, one))
                evals += 1
            else:
                values.append(np.zeros(0))
        pick = _first_near_max(values)
        if pick is None:
            break
        ev.apply(pick[0], 1)
    return SolverResult(tuple(int(x) for x in ev.k), float(ev.reward), "mg",
                        time.perf_counter() - t0, evals)


def mg_nonoverlapping(marginals: MarginalGainTable, B: int, c=None) -> SolverResult:
    """Unit-step greedy on layer-level marginal gains using a priority queue.

    Optimal for disjoint layers whose gains are non-increasing in the budget
    (stationary starts).
    """
    t0 = time.perf_counter()
    if marginals.overlapping:
        raise OverlapError("mg_nonoverlapping needs disjoint layers")
    m = len(marginals.layer)
    caps = np.asarray(marginals.caps if c is None else c, dtype=np.int64)
    if np.any(caps > np.asarray(marginals.caps)):
        raise ValueError("caps exceed the marginal-gain table")
    k = np.zeros(m, dtype=np.int64)
    heap = [(-float(marginals.layer[i][1]), i) for i in range(m) if caps[i] >= 1]
    heapq.heapify(heap)
    reward, evals = 0.0, 0
    for _ in range(int(B)):
        if not heap:
            break
        neg, i = heapq.heappop(heap)
        k[i] += 1
        reward -= neg
        evals += 1
        if k[i] < caps[i]:
            heapq.heappush(heap, (-float(marginals.layer[i][k[i] + 1]), i))
    return SolverResult(tuple(int(x) for x in k), float(reward), "mg-no",
                        time.perf_counter() - t0, evals)


def dp_allocate(curves: Sequence[np.ndarray], B: int) -> tuple[np.ndarray, float]:
    """Maximize ``sum_i curves[i][k_i]`` subject to ``sum k <= B``.

    ``curves[i][j]`` is the value of giving ``j`` units to layer ``i`` (its
    length fixes the cap).  Curves need not be monotone or concave.
    """
    m, B = len(curves), int(B)
    V = np.zeros((m + 1, B + 1))
    choice = np.zeros((m + 1, B + 1), dtype=np.int64)
    bs = np.arange(B + 1)
    for i, curve in enumerate(curves):
        curve = np.asarray(curve, dtype=float)[:B + 1]
        js = np.arange(len(curve))
        # vals[b, j] = V[i, b - j] + curve[j], -inf where j > b
        idx = bs[:, None] - js[None, :]
        vals = np.where(idx >= 0, V[i, np.maximum(idx, 0)] + curve[None, :], -np.inf)
        best = vals.max(axis=1)
        j = np.argmax(vals >= (best - TIE)[:, None], axis=1)
        choice[i + 1] = j
        V[i + 1] = vals[bs, j]
    k = np.zeros(m, dtype=np.int64)
    b = B
    for i in range(m, 0, -1):
        k[i - 1] = choice[i, b]
        b -= k[i - 1]
    return k, float(V[m, B])


def dp_nonoverlapping(table: VisitProbTable, sigma, B: int, c=None) -> SolverResult:
    """Exact optimum for disjoint layers and arbitrary starting distributions."""
    t0 = time.perf_counter()
    if table.overlapping:
        raise OverlapError("dp_nonoverlapping needs disjoint layers")
    caps = _caps(table, c)
    curves = [layer_rewards(table, sigma, i)[:caps[i] + 1] for i in range(table.m)]
    k, value = dp_allocate(curves, B)
    return SolverResult(tuple(int(x) for x in k), value, "dp", time.perf_counter() - t0,
                        int(B) * int(sum(len(cv) for cv in curves)))


def opt_enumerate(table: VisitProbTable, sigma, B: int, c=None, *,
                  max_count: int = MAX_ENUMERATION) -> SolverResult:
    """Exact optimum by enumerating every allocation with ``sum k <= B``."""
    t0 = time.perf_counter()
    caps = _caps(table, c)
    size = math.prod(int(x) + 1 for x in caps)
    if size > max_count:
        raise EnumerationTooLarge(f"{size} allocations exceed the limit {max_count}")
    sigma = np.asarray(sigma, dtype=float)
    m, B = table.m, int(B)
    best = [-np.inf, None]
    count = [0]
    k = np.zeros(m, dtype=np.int64)

    def visit(i, p, left):
        nodes, P = table.layer_nodes[i], table.probs[i]
        jmax = min(int(caps[i]), left)
        if i == m - 1:
            base = float(sigma @ (1.0 - p))
            vals = base + (sigma[nodes] * p[nodes]) @ P[:, :jmax + 1]
            count[0] += jmax + 1
            j = int(np.argmax(vals))
            # first index reaching the running best by more than TIE
            if vals[j] > best[0] + TIE:
                k[i] = j
                best[0], best[1] = float(vals[j]), k.copy()
            return
        for j in range(jmax + 1):
            q = p.copy()
            if j:
                q[nodes] *= 1.0 - P[:, j]
            k[i] = j
            visit(i + 1, q, left - j)
        k[i] = 0

    visit(0, np.ones(table.n_nodes), B)
    alloc = best[1] if best[1] is not None else np.zeros(m, dtype=np.int64)
    return SolverResult(tuple(int(x) for x in alloc), float(best[0]), "opt",
                        time.perf_counter() - t0, count[0])


def proportional_allocation(shares, B: int, caps) -> np.ndarray:
    """Split ``min(B, sum caps)`` units in proportion to ``shares``.

    Floors of the exact quotas are handed out first, then remaining units go
    one at a time to layers in order of decreasing fractional remainder (ties
    to the lower index), skipping layers already at their cap and cycling
    until everything is placed.
    """
    shares = np.asarray(shares, dtype=float)
    caps = np.asarray(caps, dtype=np.int64)
    total = int(min(int(B), int(caps.sum())))
    if shares.sum() <= 0:
        shares = np.ones_like(shares)
    quotas = total * shares / shares.sum()
    k = np.minimum(np.floor(quotas + 1e-12).astype(np.int64), caps)
    rem = quotas - np.floor(quotas + 1e-12)
    order = sorted(range(len(k)), key=lambda i: (-rem[i], i))
    left = total - int(k.sum())
    while left > 0:
        for i in order:
            if left and k[i] < caps[i]:
                k[i] += 1
                left -= 1
    return k


def baseline_prop(network, table: VisitProbTable, sigma, B: int, mode: str = "size", c=None) -> SolverResult:
    """PROP-S (shares = layer sizes) or PROP-W (shares = single-layer reward at ``B // m``)."""
    t0 = time.perf_counter()
    caps = _caps(table, c)
    if mode == "size":
        shares = [layer.n for layer in network.layers] if network is not None else \
            [len(x) for x in table.layer_nodes]
    elif mode == "weight":
        per = int(B) // table.m
        shares = [layer_rewards(table, sigma, i)[min(per, int(caps[i]))] for i in range(table.m)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    k = proportional_allocation(shares, B, caps)
    r = reward_overlapping(table, sigma, check_allocation(k, table.caps, B))
    return SolverResult(tuple(int(x) for x in k), r, f"prop-{mode[0]}", time.perf_counter() - t0, 1)


SOLVERS = {
    "beg": beg,
    "bege": bege,
    "mg": mg,
    "dp": dp_nonoverlapping,
    "opt": opt_enumerate,
}
