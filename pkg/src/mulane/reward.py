"""Expected reward of a budget allocation and its marginal gains.

For an allocation ``k`` the expected total weight of distinct visited nodes is

    r(k) = sum_u sigma_u * (1 - prod_i (1 - P[i][u, k_i]))

and separates into ``sum_i sum_u sigma_u P[i][u, k_i]`` when no two layers
share a node.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import CapExceeded, InfeasibleAllocation, OverlapError
from .visitprob import VisitProbTable

GUARD = 1e-12


def check_allocation(k, caps: Sequence[int], budget: int | None = None) -> np.ndarray:
    """Validate ``k`` against per-layer caps and (optionally) the total budget."""
    k = np.asarray(k)
    if k.shape != (len(caps),):
        raise InfeasibleAllocation(f"allocation has shape {k.shape}, expected ({len(caps)},)")
    if not np.issubdtype(k.dtype, np.integer):
        if not np.all(np.equal(np.mod(k, 1), 0)):
            raise InfeasibleAllocation("allocation must be integral")
        k = k.astype(np.int64)
    if np.any(k < 0) or np.any(k > np.asarray(caps)):
        raise InfeasibleAllocation(f"allocation {k.tolist()} violates caps {list(caps)}")
    if budget is not None and k.sum() > budget:
        raise InfeasibleAllocation(f"allocation {k.tolist()} exceeds budget {budget}")
    return k.astype(np.int64)


def survival(table: VisitProbTable, k) -> np.ndarray:
    """Per-node probability that no walker visits it under allocation ``k``."""
    p = np.ones(table.n_nodes)
    for nodes, P, ki in zip(table.layer_nodes, table.probs, k):
        if ki:
            p[nodes] *= 1.0 - P[:, ki]
    return p


def reward_overlapping(table: VisitProbTable, sigma, k, budget: int | None = None) -> float:
    k = check_allocation(k, table.caps, budget)
    return float(np.asarray(sigma, dtype=float) @ (1.0 - survival(table, k)))


def reward_nonoverlapping(table: VisitProbTable, sigma, k, budget: int | None = None) -> float:
    if table.overlapping:
        raise OverlapError("layers share nodes; use reward_overlapping")
    k = check_allocation(k, table.caps, budget)
    sigma = np.asarray(sigma, dtype=float)
    return float(sum(sigma[nodes] @ P[:, ki] for nodes, P, ki in zip(table.layer_nodes, table.probs, k)))


def layer_rewards(table: VisitProbTable, sigma, i: int) -> np.ndarray:
    """``r(j * chi_i)`` for ``j = 0..c_i`` (single-layer reward curve)."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma[table.layer_nodes[i]] @ table.probs[i]


class IncrementalEvaluator:
    """Reward bookkeeping that extends an allocation one layer at a time.

    Keeps the survival product ``p_u = prod_i (1 - P[i][u, k_i])`` so a
    per-unit marginal gain costs one pass over the layer's nodes.  The product
    is stored as the product of its non-zero factors ``nz`` and the number of
    exactly-zero factors ``zc``, so layers that surely visit a node can be
    divided out without a 0/0.  Queries never mutate state; only
    :meth:`apply` does.
    """

    def __init__(self, table: VisitProbTable, sigma, k=None):
        self.table = table
        self.sigma = np.asarray(sigma, dtype=float)
        self.caps = np.asarray(table.caps, dtype=np.int64)
        self.k = np.zeros(table.m, dtype=np.int64) if k is None else check_allocation(k, table.caps).copy()
        self._sig = [self.sigma[nodes] for nodes in table.layer_nodes]
        rows = []
        for nodes in table.layer_nodes:
            r = np.full(table.n_nodes, -1, dtype=np.int64)
            r[nodes] = np.arange(len(nodes))
            rows.append(r)
        self._row = rows
        self.nz, self.zc = self._rebuild(np.arange(table.n_nodes), -1)
        self.reward = self.recompute()

    @property
    def p(self) -> np.ndarray:
        return np.where(self.zc > 0, 0.0, self.nz)

    def copy(self) -> "IncrementalEvaluator":
        new = object.__new__(IncrementalEvaluator)
        new.__dict__.update(self.__dict__)
        new.k = self.k.copy()
        new.nz = self.nz.copy()
        new.zc = self.zc.copy()
        return new

    def _rebuild(self, nodes: np.ndarray, skip: int):
        """``(nz, zc)`` of ``nodes`` from the table, leaving out layer ``skip``."""
        nz = np.ones(len(nodes))
        zc = np.zeros(len(nodes), dtype=np.int64)
        for j, (P, kj) in enumerate(zip(self.table.probs, self.k)):
            if j == skip or kj == 0:
                continue
            r = self._row[j][nodes]
            hit = r >= 0
            f = 1.0 - P[r[hit], kj]
            zero = f == 0.0
            zc[hit] += zero
            nz[hit] *= np.where(zero, 1.0, f)
        return nz, zc

    def _others_parts(self, i: int):
        """``(nz, zc)`` of layer ``i``'s nodes with layer ``i`` itself left out."""
        nodes = self.table.layer_nodes[i]
        f = 1.0 - self.table.probs[i][:, self.k[i]]
        zc = self.zc[nodes]
        nz = self.nz[nodes]
        if f.min() >= GUARD:
            return nz / f, zc
        zero = f == 0.0
        zc = zc - zero
        nz = nz / np.where(zero, 1.0, f)
        tiny = ~zero & (f < GUARD)
        if tiny.any():
            # dividing by ~0 loses all precision: rebuild the product directly
            nz[tiny], zc[tiny] = self._rebuild(nodes[tiny], i)
        return nz, zc

    def _others(self, i: int) -> np.ndarray:
        nz, zc = self._others_parts(i)
        return nz * (zc == 0)

    def per_unit_gains(self, i: int, bs) -> np.ndarray:
        """Vector of ``(r(k + b chi_i) - r(k)) / b`` for each ``b`` in ``bs``."""
        bs = np.asarray(bs, dtype=np.int64)
        if bs.size == 0:
            return np.zeros(0)
        if bs.min() < 1:
            raise ValueError("budget increments must be >= 1")
        if self.k[i] + bs.max() > self.caps[i]:
            raise CapExceeded(f"layer {i}: {self.k[i]} + {bs.max()} exceeds cap {self.caps[i]}")
        return self._gains(i, bs)

    def _gains(self, i: int, bs: np.ndarray) -> np.ndarray:
        """Unchecked :meth:`per_unit_gains` for solver inner loops."""
        if not bs.size:
            return np.zeros(0)
        P = self.table.probs[i]
        ki = self.k[i]
        w = self._sig[i] * self._others(i)
        return (w @ P[:, ki + bs[0]:ki + bs[-1] + 1] - w @ P[:, ki])[bs - bs[0]] / bs

    def per_unit_marginal_gain(self, i: int, b: int) -> float:
        return float(self.per_unit_gains(i, [b])[0])

    def apply(self, i: int, b: int) -> "IncrementalEvaluator":
        """Allocate ``b`` more budget units to layer ``i`` (in place)."""
        if b < 0:
            raise ValueError("b must be non-negative")
        if self.k[i] + b > self.caps[i]:
            raise CapExceeded(f"layer {i}: {self.k[i]} + {b} exceeds cap {self.caps[i]}")
        if b == 0:
            return self
        nodes = self.table.layer_nodes[i]
        old = self.p[nodes]
        nz, zc = self._others_parts(i)
        f = 1.0 - self.table.probs[i][:, self.k[i] + b]
        zero = f == 0.0
        self.zc[nodes] = zc + zero
        self.nz[nodes] = nz * np.where(zero, 1.0, f)
        self.reward += float(self._sig[i] @ (old - self.p[nodes]))
        self.k[i] += b
        return self

    def recompute(self) -> float:
        """From-scratch reward for the current allocation."""
        return float(self.sigma @ (1.0 - survival(self.table, self.k)))
