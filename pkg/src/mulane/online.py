"""Online exploration: the stochastic environment, bandit policies and regret.

Policies never see true node ids.  The environment reports every visited
node through an opaque observation id; a policy hands out one of its ``N``
placeholder slots the first time an id shows up.  Before that moment every
free slot of a layer has received exactly the same (all-zero) feedback, so it
does not matter which free slot a node lands in.

Base arms of the MAX family are triples ``(i, slot, b)``.  Every arm of
layer ``i`` with ``b <= k_i`` is updated each round, so the play count of
``(i, slot, b)`` depends on ``(i, b)`` only and is stored that way.
"""
from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, InfeasibleAllocation, InvalidGamma, OverlapError
from .network import LayeredNetwork
from .offline import (MAX_ENUMERATION, ApproxConstants, beg, bege, dp_allocate,
                      opt_enumerate)
from .reward import reward_overlapping
from .visitprob import VisitProbTable, WalkSampler, build_table

log = logging.getLogger(__name__)

ALGORITHMS = ("cucb-max", "cucb-mg", "cucb-max-r", "emp", "eps-greedy", "ts")
WEIGHT_MODELS = ("fixed", "bernoulli")


@dataclass
class Trajectory:
    layer: int
    nodes: list


def sample_trajectories(network: LayeredNetwork, allocation, rng: np.random.Generator,
                        samplers: Sequence[WalkSampler] | None = None) -> list[Trajectory]:
    """One independent walk of ``k_i`` steps per layer, labels as node ids."""
    k = np.asarray(allocation, dtype=np.int64)
    if k.shape != (network.m,) or np.any(k < 0):
        raise InfeasibleAllocation(f"bad allocation {k.tolist()}")
    samplers = samplers or [WalkSampler(layer) for layer in network.layers]
    out = []
    for i, (layer, ki) in enumerate(zip(network.layers, k)):
        path = samplers[i].walk(int(ki), rng)
        out.append(Trajectory(i, [layer.nodes[x] for x in path]))
    return out


# ---------------------------------------------------------------- environment

@dataclass
class Observation:
    paths: list            # per layer: observation ids in step order
    visited: np.ndarray    # distinct observation ids in first-encounter order
    weights: np.ndarray    # weight draw for each entry of ``visited``
    realized: float        # sum of the drawn weights


class Environment:
    """Plays allocations on a fixed network.

    ``weight_model="bernoulli"`` draws each visited node's weight as
    ``Bernoulli(sigma_v)`` once per round; ``"fixed"`` reports ``sigma_v``.
    With ``hide_ids`` observation ids are a random relabelling of the global
    indices (``relabel_seed``), otherwise they are the indices themselves.
    """

    def __init__(self, network: LayeredNetwork, table: VisitProbTable | None = None, *,
                 weight_model: str = "fixed", hide_ids: bool = False, relabel_seed: int = 0,
                 layer_rngs: Sequence[np.random.Generator] | None = None,
                 weight_rng: np.random.Generator | None = None):
        if weight_model not in WEIGHT_MODELS:
            raise ConfigError(f"unknown weight model {weight_model!r}")
        self.network = network
        self.table = table if table is not None else build_table(network)
        self.sigma = network.weights
        self.weight_model = weight_model
        self.samplers = [WalkSampler(layer) for layer in network.layers]
        self.globals = [network.layer_globals(i) for i in range(network.m)]
        self.obs_id = (np.random.default_rng(relabel_seed).permutation(network.N)
                       if hide_ids else np.arange(network.N))
        self.layer_rngs = list(layer_rngs) if layer_rngs is not None else \
            [np.random.default_rng(i) for i in range(network.m)]
        self.weight_rng = weight_rng or np.random.default_rng(network.m)
        self._reward_cache: dict = {}

    @property
    def m(self) -> int:
        return self.network.m

    @property
    def N(self) -> int:
        return self.network.N

    def play(self, k) -> Observation:
        paths, order = [], []
        seen = np.zeros(self.N, dtype=bool)
        for i, ki in enumerate(k):
            g = self.globals[i][self.samplers[i].walk(int(ki), self.layer_rngs[i])] if ki else \
                np.zeros(0, dtype=np.int64)
            paths.append(self.obs_id[g])
            for x in g:
                if not seen[x]:
                    seen[x] = True
                    order.append(x)
        order = np.asarray(order, dtype=np.int64)
        w = self.sigma[order]
        if self.weight_model == "bernoulli":
            w = (self.weight_rng.random(len(order)) < w).astype(float)
        return Observation(paths, self.obs_id[order], w, float(w.sum()))

    def expected_reward(self, k) -> float:
        key = tuple(int(x) for x in k)
        r = self._reward_cache.get(key)
        if r is None:
            r = self._reward_cache[key] = reward_overlapping(self.table, self.sigma, key)
        return r


# ---------------------------------------------------------------- states

def _check_gamma(gamma: float) -> float:
    if not (isinstance(gamma, (int, float)) and 0.0 < gamma <= 1.0):
        raise InvalidGamma(f"gamma must lie in (0, 1], got {gamma!r}")
    return float(gamma)


def confidence_radius(t: float, T, gamma: float = 1.0) -> np.ndarray:
    """``gamma * sqrt(3 ln t / (2 T))``, infinite where ``T == 0``."""
    T = np.asarray(T, dtype=float)
    out = np.full(T.shape, np.inf)
    played = T > 0
    out[played] = gamma * np.sqrt(1.5 * math.log(t) / T[played])
    return out


def _running_mean(mu: np.ndarray, Y, T: np.ndarray) -> None:
    """In-place ``mu += (Y - mu) / T``; the first sample replaces ``mu`` exactly."""
    mu += (Y - mu) / T
    first = T == 1
    if first.any():
        mu[..., first] = np.broadcast_to(Y, mu.shape)[..., first]


class _Slots:
    """Placeholder slots handed out on first sight of an observation id."""

    def __init__(self, N: int):
        self.of = np.full(N, -1, dtype=np.int64)
        self.ids = np.full(N, -1, dtype=np.int64)
        self.used = 0

    def assign(self, obs_ids) -> np.ndarray:
        for x in obs_ids:
            if self.of[x] < 0:
                self.of[x] = self.used
                self.ids[self.used] = x
                self.used += 1
        return self.of[obs_ids]


@dataclass
class BanditState:
    """Statistics of the arms ``(i, slot, b)`` plus optimistic node weights.

    ``mu[i]`` has shape ``(N, c_i + 1)`` (column 0 unused) and ``T[i]`` has
    shape ``(c_i + 1,)``; see the module docstring for why counts are shared
    by all slots of a layer.  ``sigma_bar`` stays 1 for unrevealed slots.
    """

    caps: tuple
    N: int
    gamma: float = 1.0
    random_weights: bool = False
    t: int = 0
    mu: list = field(default_factory=list)
    T: list = field(default_factory=list)
    hits: list = field(default_factory=list)
    sigma_bar: np.ndarray = None
    revealed: np.ndarray = None
    wsum: np.ndarray = None
    wcount: np.ndarray = None
    slots: _Slots = None
    rng: np.random.Generator = None
    last_ucb: list = None

    @classmethod
    def new(cls, caps, N, gamma=1.0, random_weights=False, rng=None) -> "BanditState":
        s = cls(tuple(int(c) for c in caps), int(N), _check_gamma(gamma), random_weights)
        s.mu = [np.zeros((N, c + 1)) for c in s.caps]
        s.T = [np.zeros(c + 1, dtype=np.int64) for c in s.caps]
        s.hits = [np.zeros((N, c + 1), dtype=np.int64) for c in s.caps]
        s.sigma_bar = np.ones(N)
        s.revealed = np.zeros(N, dtype=bool)
        s.wsum = np.zeros(N)
        s.wcount = np.zeros(N, dtype=np.int64)
        s.slots = _Slots(N)
        s.rng = rng if rng is not None else np.random.default_rng(0)
        return s

    @property
    def m(self) -> int:
        return len(self.caps)

    def counts(self, i: int) -> np.ndarray:
        """Per-arm play counts of layer ``i``, shape ``(N, c_i + 1)``."""
        return np.broadcast_to(self.T[i], self.mu[i].shape)

    def ucb(self, i: int, radius: bool = True) -> np.ndarray:
        """Monotonized optimistic estimates of layer ``i`` (column 0 is 0)."""
        mu = self.mu[i]
        out = np.zeros_like(mu)
        if mu.shape[1] > 1:
            tilde = mu[:, 1:]
            if radius:
                rho = confidence_radius(max(self.t, 1), self.T[i][1:].astype(float), self.gamma)
                tilde = np.minimum(tilde + rho, 1.0)
            np.maximum.accumulate(tilde, axis=1, out=out[:, 1:])
        return out

    def update(self, k, obs: Observation) -> None:
        """Feedback for all arms with ``b <= k_i`` and the visited nodes' weights."""
        slots = self.slots.assign(obs.visited)
        if self.random_weights:
            self.wsum[slots] += obs.weights
            self.wcount[slots] += 1
        else:
            new = ~self.revealed[slots]
            self.sigma_bar[slots[new]] = obs.weights[new]
            self.revealed[slots[new]] = True
        for i, ki in enumerate(k):
            ki = int(ki)
            if not ki:
                continue
            path = self.slots.of[obs.paths[i]]
            first = np.full(self.N, ki + 1, dtype=np.int64)
            np.minimum.at(first, path, np.arange(1, ki + 1))
            Y = first[:, None] <= np.arange(1, ki + 1)[None, :]
            self.T[i][1:ki + 1] += 1
            self.hits[i][:, 1:ki + 1] += Y
            _running_mean(self.mu[i][:, 1:ki + 1], Y, self.T[i][1:ki + 1])

    def weight_ucb(self, t: int | None = None) -> np.ndarray:
        """``min(mean + gamma * sqrt(3 ln t / (2 T')), 1)``, 1 for unseen slots."""
        t = self.t if t is None else t
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = np.where(self.wcount > 0, self.wsum / np.maximum(self.wcount, 1), 0.0)
        rho = confidence_radius(max(t, 1), self.wcount.astype(float), self.gamma)
        return np.minimum(mean + rho, 1.0)


@dataclass
class MarginalArmState:
    """Arms ``(i, b)`` estimating layer-level marginal gains.

    ``mu[i][b]`` starts at 1 and ``T[i][b]`` at 0 (index 0 unused).
    """

    caps: tuple
    gamma: float = 1.0
    t: int = 0
    mu: list = field(default_factory=list)
    T: list = field(default_factory=list)
    succ: list = field(default_factory=list)
    slots: _Slots = None
    rng: np.random.Generator = None
    last_ucb: list = None

    @classmethod
    def new(cls, caps, N, gamma=1.0, rng=None) -> "MarginalArmState":
        s = cls(tuple(int(c) for c in caps), _check_gamma(gamma))
        s.mu = [np.ones(c + 1) for c in s.caps]
        s.T = [np.zeros(c + 1, dtype=np.int64) for c in s.caps]
        s.succ = [np.zeros(c + 1, dtype=np.int64) for c in s.caps]
        s.slots = _Slots(int(N))
        s.rng = rng if rng is not None else np.random.default_rng(0)
        return s

    @property
    def m(self) -> int:
        return len(self.caps)

    def ucb(self, i: int, radius: bool = True) -> np.ndarray:
        mu = self.mu[i].copy()
        mu[0] = 0.0
        if radius:
            rho = confidence_radius(max(self.t, 1), self.T[i][1:].astype(float), self.gamma)
            mu[1:] = np.minimum(mu[1:] + rho, 1.0)
        return mu

    @staticmethod
    def feedback(path_ids: np.ndarray, weight_of: dict) -> np.ndarray:
        """``Y_b``: weight of the node first reached at step ``b``, else 0."""
        seen, Y = set(), np.zeros(len(path_ids))
        for b, x in enumerate(path_ids.tolist()):
            if x not in seen:
                seen.add(x)
                Y[b] = weight_of[x]
        return Y

    def update(self, k, obs: Observation, bernoulli_rng: np.random.Generator | None = None) -> None:
        self.slots.assign(obs.visited)
        weight_of = dict(zip(obs.visited.tolist(), obs.weights.tolist()))
        for i, ki in enumerate(k):
            ki = int(ki)
            if not ki:
                continue
            Y = self.feedback(obs.paths[i], weight_of)
            if bernoulli_rng is not None:
                # Beta posteriors need binary feedback: replace Y by Bernoulli(Y)
                Y = (bernoulli_rng.random(ki) < Y).astype(float)
                self.succ[i][1:ki + 1] += Y.astype(np.int64)
            self.T[i][1:ki + 1] += 1
            _running_mean(self.mu[i][1:ki + 1], Y, self.T[i][1:ki + 1])


def shrink_radius(state, gamma: float):
    """Scale every later confidence radius by ``gamma`` in ``(0, 1]``."""
    state.gamma = _check_gamma(gamma)
    return state


# ---------------------------------------------------------------- rounds

def _caps_for(state, c) -> np.ndarray:
    caps = np.asarray(state.caps if c is None else c, dtype=np.int64)
    if np.any(caps > np.asarray(state.caps)):
        raise ConfigError("caps exceed the state's arm range")
    return caps


def _max_oracle(ucb: list, sigma_bar: np.ndarray, B: int, caps, oracle: str) -> tuple:
    table = VisitProbTable.from_dense(ucb)
    if oracle == "beg":
        res = beg(table, sigma_bar, B, caps)
    elif oracle == "bege":
        res = bege(table, sigma_bar, B, caps)
    elif oracle == "opt":
        res = opt_enumerate(table, sigma_bar, B, caps)
    else:
        raise ConfigError(f"unknown oracle {oracle!r}")
    return res.allocation


def _dp_oracle(gains: list, B: int, caps) -> tuple:
    curves = [np.concatenate(([0.0], np.cumsum(g[1:ci + 1]))) for g, ci in zip(gains, caps)]
    k, _ = dp_allocate(curves, B)
    return tuple(int(x) for x in k)


def _max_round(state: BanditState, env: Environment, B, c, oracle, *, radius=True,
               sigma_bar=None, sampled=None):
    state.t += 1
    caps = _caps_for(state, c)
    ucb = sampled if sampled is not None else [state.ucb(i, radius) for i in range(state.m)]
    state.last_ucb = ucb
    k = _max_oracle(ucb, state.sigma_bar if sigma_bar is None else sigma_bar, B, caps, oracle)
    obs = env.play(k)
    state.update(k, obs)
    return k, obs


def cucb_max_round(state: BanditState, env: Environment, B: int, c=None, oracle: str = "beg"):
    """One round of CUCB-MAX; returns ``(allocation, observation)``."""
    return _max_round(state, env, B, c, oracle)


def cucb_max_r_round(state: BanditState, env: Environment, B: int, c=None, oracle: str = "beg"):
    """CUCB-MAX with optimistic (UCB) node weights instead of revealed ones."""
    if not state.random_weights:
        raise ConfigError("cucb-max-r needs a state created with random_weights=True")
    return _max_round(state, env, B, c, oracle, sigma_bar=state.weight_ucb(state.t + 1))


def _mg_round(state: MarginalArmState, env: Environment, B, c, *, radius=True, sampled=None,
              bernoulli_rng=None):
    if env.network.overlapping:
        raise OverlapError("marginal-gain arms need disjoint layers")
    state.t += 1
    caps = _caps_for(state, c)
    gains = sampled if sampled is not None else [state.ucb(i, radius) for i in range(state.m)]
    state.last_ucb = gains
    k = _dp_oracle(gains, B, caps)
    obs = env.play(k)
    state.update(k, obs, bernoulli_rng)
    return k, obs


def cucb_mg_round(state: MarginalArmState, env: Environment, B: int, c=None):
    """One round of CUCB-MG (exact DP oracle on optimistic marginal gains)."""
    return _mg_round(state, env, B, c)


def _dump_round(state, env: Environment, B, c):
    """Give ``min(B, c_i)`` to one uniformly chosen layer, then learn as usual."""
    state.t += 1
    caps = _caps_for(state, c)
    i = int(state.rng.integers(state.m))
    k = [0] * state.m
    k[i] = int(min(B, caps[i]))
    k = tuple(k)
    obs = env.play(k)
    state.update(k, obs)
    return k, obs


def _thompson_samples(state) -> list:
    out = []
    for i in range(state.m):
        if isinstance(state, BanditState):
            a = 1 + state.hits[i][:, 1:]
            b = 1 + state.T[i][1:] - state.hits[i][:, 1:]
            draw = state.rng.beta(a, b)
            s = np.zeros_like(state.mu[i])
            np.maximum.accumulate(draw, axis=1, out=s[:, 1:])
        else:
            a = 1 + state.succ[i][1:]
            b = 1 + state.T[i][1:] - state.succ[i][1:]
            s = np.zeros(len(state.mu[i]))
            s[1:] = state.rng.beta(a, b)
        out.append(s)
    return out


def baseline_round(kind: str, state, env: Environment, B: int, c=None, params: dict | None = None):
    """EMP, epsilon-greedy or Thompson sampling on either arm family.

    A :class:`BanditState` uses visiting-probability arms and the BEG oracle;
    a :class:`MarginalArmState` uses marginal-gain arms and the DP oracle.
    """
    params = params or {}
    mg_family = isinstance(state, MarginalArmState)
    oracle = params.get("oracle", "beg")
    if kind == "eps_greedy":
        eps = float(params.get("epsilon", 0.1))
        if not 0.0 <= eps <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if state.rng.random() < eps:
            return _dump_round(state, env, B, c)
        kind = "emp"
    if kind == "emp":
        if mg_family:
            return _mg_round(state, env, B, c, radius=False)
        return _max_round(state, env, B, c, oracle, radius=False)
    if kind == "thompson":
        samples = _thompson_samples(state)
        if mg_family:
            return _mg_round(state, env, B, c, sampled=samples, bernoulli_rng=state.rng)
        return _max_round(state, env, B, c, oracle, sampled=samples)
    raise ConfigError(f"unknown baseline {kind!r}")


# ---------------------------------------------------------------- experiments

@dataclass
class SimulationConfig:
    """Settings of one regret experiment (every run shares them)."""

    algo: str = "cucb-max"
    budget: int = 3
    rounds: int = 1000
    runs: int = 1
    seed: int = 0
    gamma: float = 1.0
    caps: tuple | None = None
    epsilon: float = 0.1
    oracle: str = "beg"
    weight_model: str = "fixed"
    hide_ids: bool = False
    family: str = "auto"
    workers: int = 1

    def validate(self, network: LayeredNetwork) -> "SimulationConfig":
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; choose from {', '.join(ALGORITHMS)}")
        if self.budget < 0 or self.rounds < 1 or self.runs < 1 or self.workers < 1:
            raise ConfigError("budget >= 0, rounds >= 1, runs >= 1 and workers >= 1 required")
        _check_gamma(self.gamma)
        if self.family not in ("auto", "max", "mg"):
            raise ConfigError(f"unknown arm family {self.family!r}")
        if self.oracle not in ("beg", "bege", "opt"):
            raise ConfigError(f"unknown oracle {self.oracle!r}")
        if self.weight_model not in WEIGHT_MODELS:
            raise ConfigError(f"unknown weight model {self.weight_model!r}")
        if self.caps is not None and len(self.caps) != network.m:
            raise ConfigError(f"expected {network.m} caps")
        if self.uses_mg(network) and network.overlapping:
            raise OverlapError(f"{self.algo} with marginal-gain arms needs disjoint layers")
        return self

    def uses_mg(self, network: LayeredNetwork) -> bool:
        if self.algo == "cucb-mg":
            return True
        if self.algo in ("emp", "eps-greedy", "ts"):
            return self.family == "mg" or (self.family == "auto" and not network.overlapping)
        return False

    def resolved_caps(self, network: LayeredNetwork) -> tuple:
        if self.caps is None:
            return tuple(int(self.budget) for _ in range(network.m))
        return tuple(int(x) for x in self.caps)


@dataclass
class RegretTrace:
    """Per-round record of one run.

    ``gap[t] = r(k*) - r(k_t)`` and ``approx_gap[t] = xi * beta * r(k*) - r(k_t)``
    use expected rewards from the true table and may be negative.
    """

    allocations: np.ndarray
    rewards: np.ndarray
    realized: np.ndarray
    reference: float
    xi: float
    beta: float = 1.0

    @property
    def gap(self) -> np.ndarray:
        return self.reference - self.rewards

    @property
    def regret(self) -> np.ndarray:
        return np.cumsum(self.gap)

    @property
    def approx_regret(self) -> np.ndarray:
        return np.cumsum(self.xi * self.beta * self.reference - self.rewards)


@dataclass
class ExperimentResult:
    config: SimulationConfig
    reference_allocation: tuple
    reference: float
    traces: list
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray

    def csv_text(self) -> str:
        lines = ["round,mean_regret,ci_low,ci_high"]
        for t, (a, lo, hi) in enumerate(zip(self.mean, self.ci_low, self.ci_high), start=1):
            lines.append(f"{t},{a:.12g},{lo:.12g},{hi:.12g}")
        return "\n".join(lines) + "\n"

    def trace_lines(self):
        for run, tr in enumerate(self.traces):
            cum, approx = tr.regret, tr.approx_regret
            for t in range(len(tr.rewards)):
                yield json.dumps({"run": run, "round": t + 1,
                                  "allocation": tr.allocations[t].tolist(),
                                  "reward": float(tr.rewards[t]), "realized": float(tr.realized[t]),
                                  "regret": float(cum[t]), "approx_regret": float(approx[t])},
                                 sort_keys=True)


def mean_ci(samples: np.ndarray, level: float = 0.95):
    """Row-wise mean and Student-t interval over the runs axis (axis 0)."""
    samples = np.asarray(samples, dtype=float)
    R = samples.shape[0]
    mean = samples.mean(axis=0)
    if R < 2:
        return mean, mean.copy(), mean.copy()
    half = stats.t.ppf(0.5 + level / 2, R - 1) * samples.std(axis=0, ddof=1) / math.sqrt(R)
    return mean, mean - half, mean + half


def reference_solution(table: VisitProbTable, sigma, B: int, caps) -> tuple[tuple, float]:
    """Exact optimum when enumerable, else BEGE, else BEG (with a warning)."""
    try:
        res = opt_enumerate(table, sigma, B, caps)
    except Exception:
        try:
            res = bege(table, sigma, B, caps, max_partials=MAX_ENUMERATION)
            log.warning("reference allocation from BEGE (optimum not enumerable)")
        except Exception:
            res = beg(table, sigma, B, caps)
            log.warning("reference allocation from BEG (optimum not enumerable)")
    return res.allocation, res.reward


def oracle_ratio(config: SimulationConfig, network: LayeredNetwork) -> float:
    if config.uses_mg(network):
        return 1.0
    return {"beg": ApproxConstants.compute().ratio_beg,
            "bege": ApproxConstants.compute().ratio_mg, "opt": 1.0}[config.oracle]


def _streams(seed: int, run: int, m: int):
    env_seq, weight_seq, policy_seq = np.random.SeedSequence([seed, run]).spawn(3)
    layers = [np.random.default_rng(s) for s in env_seq.spawn(m)]
    return layers, np.random.default_rng(weight_seq), np.random.default_rng(policy_seq)


def simulate_run(network: LayeredNetwork, table: VisitProbTable, config: SimulationConfig,
                 run: int, reference: float | None = None) -> RegretTrace:
    """One seeded run; depends on ``(config, run)`` only."""
    caps = config.resolved_caps(network)
    if reference is None:
        reference = reference_solution(table, network.weights, config.budget, caps)[1]
    layer_rngs, weight_rng, policy_rng = _streams(config.seed, run, network.m)
    env = Environment(network, table, weight_model=config.weight_model, hide_ids=config.hide_ids,
                      relabel_seed=config.seed, layer_rngs=layer_rngs, weight_rng=weight_rng)
    B, T = int(config.budget), int(config.rounds)
    if config.uses_mg(network):
        state = MarginalArmState.new(caps, network.N, config.gamma, policy_rng)
    else:
        state = BanditState.new(caps, network.N, config.gamma,
                                random_weights=config.algo == "cucb-max-r", rng=policy_rng)
    params = {"epsilon": config.epsilon, "oracle": config.oracle}
    allocs = np.zeros((T, network.m), dtype=np.int64)
    rewards, realized = np.zeros(T), np.zeros(T)
    for t in range(T):
        if config.algo == "cucb-max":
            k, obs = cucb_max_round(state, env, B, caps, config.oracle)
        elif config.algo == "cucb-max-r":
            k, obs = cucb_max_r_round(state, env, B, caps, config.oracle)
        elif config.algo == "cucb-mg":
            k, obs = cucb_mg_round(state, env, B, caps)
        else:
            kind = {"emp": "emp", "eps-greedy": "eps_greedy", "ts": "thompson"}[config.algo]
            k, obs = baseline_round(kind, state, env, B, caps, params)
        allocs[t] = k
        rewards[t] = env.expected_reward(k)
        realized[t] = obs.realized
    return RegretTrace(allocs, rewards, realized, float(reference), oracle_ratio(config, network))


def _run_task(args):
    return simulate_run(*args)


def run_experiment(network: LayeredNetwork, config: SimulationConfig, *,
                   table: VisitProbTable | None = None) -> ExperimentResult:
    """``config.runs`` independent runs, aggregated into mean regret and a 95% CI.

    Runs are distributed over ``config.workers`` processes; results are
    collected in run order, so the output does not depend on the worker count.
    """
    config.validate(network)
    caps = config.resolved_caps(network)
    if table is None or any(tc < c for tc, c in zip(table.caps, caps)):
        table = build_table(network, caps)
    ref_k, ref = reference_solution(table, network.weights, config.budget, caps)
    tasks = [(network, table, config, run, ref) for run in range(config.runs)]
    if config.workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(min(config.workers, config.runs)) as pool:
            traces = list(pool.map(_run_task, tasks))
    else:
        traces = [_run_task(a) for a in tasks]
    mean, lo, hi = mean_ci(np.stack([tr.regret for tr in traces]))
    return ExperimentResult(config, tuple(ref_k), float(ref), traces, mean, lo, hi)


def atomic_write(path, text: str) -> None:
    """Write ``text`` (UTF-8, LF) to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_outputs(result: ExperimentResult, out_dir, verbose: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    written = [out_dir / "regret.csv"]
    atomic_write(written[0], result.csv_text())
    if verbose:
        written.append(out_dir / "trace.jsonl")
        atomic_write(written[1], "\n".join(result.trace_lines()) + "\n")
    return written


def config_dict(config: SimulationConfig) -> dict:
    d = asdict(config)
    if d["caps"] is not None:
        d["caps"] = list(d["caps"])
    return d
