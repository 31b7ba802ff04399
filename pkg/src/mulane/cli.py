"""Command-line front end: ``precompute``, ``solve`` and ``simulate``.

Every option may also come from a JSON config (``--config``); flags given on
the command line win.  Exit codes: 0 ok, 1 usage, 2 domain error, 3 I/O.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import offline
from .errors import ConfigError, MulaneError
from .network import (LayeredNetwork, build_network, expand_multi_walker, load_network,
                      random3_weights)
from .online import SimulationConfig, atomic_write, run_experiment, write_outputs
from .visitprob import build_table, cached_table, marginal_gains

log = logging.getLogger("mulane")

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 1, 2, 3
SOLVE_ALGOS = ("beg", "bege", "mg", "mg-no", "dp", "opt", "prop-s", "prop-w")


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """All settings one command may need; see ``mulane <command> --help``."""

    network: str | None = None
    algo: str | None = None
    budget: int = 10
    caps: object = None
    alpha: str | None = None
    weights: str | None = None
    weight_seed: int = 0
    walkers: list | None = None
    seed: int = 0
    rounds: int = 1000
    runs: int = 1
    gamma: float = 1.0
    epsilon: float = 0.1
    oracle: str = "beg"
    weight_model: str = "fixed"
    hide_ids: bool = False
    family: str = "auto"
    workers: int = 1
    beg_variant: str = "alg9"
    lazy: bool = False
    sweep: str | None = None
    cache: str | None = None
    out: str | None = None
    verbose: bool = False

    @classmethod
    def from_json(cls, doc) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**doc)

    def merged(self, overrides: dict) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def resolve_caps(self, m: int, budget: int | None = None, manifest=None) -> tuple:
        """Caps from the config: a list, ``"equal-to-B"``, or ``None`` meaning
        the manifest's caps when any is positive and ``"equal-to-B"`` otherwise."""
        budget = self.budget if budget is None else budget
        if self.caps is None and manifest is not None and any(manifest):
            return tuple(int(c) for c in manifest)
        if self.caps in (None, "equal-to-B"):
            return tuple(int(budget) for _ in range(m))
        caps = self.caps
        if isinstance(caps, str):
            caps = [int(x) for x in caps.split(",") if x.strip()]
        if len(caps) == 1:
            caps = list(caps) * m
        if len(caps) != m or any(int(c) < 0 for c in caps):
            raise ConfigError(f"caps must be 'equal-to-B' or {m} non-negative integers")
        return tuple(int(c) for c in caps)


# ---------------------------------------------------------------- helpers

def _network(cfg: ExperimentConfig) -> LayeredNetwork:
    if not cfg.network:
        raise UsageError("a network manifest is required (--network or config 'network')")
    if not Path(cfg.network).exists():
        raise FileNotFoundError(f"network manifest not found: {cfg.network}")
    net = load_network(cfg.network)
    if cfg.walkers:
        net = expand_multi_walker(net, [int(w) for w in cfg.walkers])
    if cfg.alpha:
        net = net.with_alpha(cfg.alpha)
    if cfg.weights == "random3":
        net = build_network(net.layers, random3_weights(net.node_universe, cfg.weight_seed))
    elif cfg.weights not in (None, "manifest"):
        raise ConfigError(f"unknown weights override {cfg.weights!r}")
    return net


def _table(net: LayeredNetwork, caps, cfg: ExperimentConfig):
    if cfg.cache:
        table, _ = cached_table(net, caps, cfg.cache, workers=cfg.workers)
        return table
    return build_table(net, caps, workers=cfg.workers)


def _parse_sweep(text: str) -> range:
    try:
        parts = [int(x) for x in text.split(":")]
        lo, hi, step = parts if len(parts) == 3 else (*parts, 1)
    except ValueError:
        raise UsageError(f"--sweep expects B1:B2[:step], got {text!r}") from None
    if step <= 0 or lo < 0 or hi < lo:
        raise UsageError(f"bad sweep range {text!r}")
    return range(lo, hi + 1, step)


def _run_solver(algo: str, net, table, B: int, caps, cfg: ExperimentConfig) -> offline.SolverResult:
    sigma = net.weights
    if algo == "beg":
        return offline.beg(table, sigma, B, caps, variant=cfg.beg_variant, lazy=cfg.lazy)
    if algo == "bege":
        return offline.bege(table, sigma, B, caps, lazy=cfg.lazy)
    if algo == "mg":
        return offline.mg(table, sigma, B, caps)
    if algo == "mg-no":
        res = offline.mg_nonoverlapping(marginal_gains(table, sigma), B, caps)
        return res
    if algo == "dp":
        return offline.dp_nonoverlapping(table, sigma, B, caps)
    if algo == "opt":
        return offline.opt_enumerate(table, sigma, B, caps)
    if algo in ("prop-s", "prop-w"):
        return offline.baseline_prop(net, table, sigma, B, "size" if algo == "prop-s" else "weight", caps)
    raise UsageError(f"unknown algorithm {algo!r}; choose from {', '.join(SOLVE_ALGOS)}")


# ---------------------------------------------------------------- commands

def cmd_precompute(cfg: ExperimentConfig) -> int:
    net = _network(cfg)
    caps = cfg.resolve_caps(net.m, manifest=net.caps)
    if not cfg.cache:
        raise UsageError("precompute needs --cache DIR")
    t0 = time.perf_counter()
    table, hit = cached_table(net, caps, cfg.cache, workers=cfg.workers)
    seconds = time.perf_counter() - t0
    log.info("cache %s", "hit" if hit else "miss")
    stats = {"cache_hit": hit, "max_drift": table.max_drift, "seconds": seconds,
             "layers": [{"name": layer.name, "n": layer.n, "cap": int(c)}
                        for layer, c in zip(net.layers, caps)]}
    text = json.dumps(stats, indent=2, sort_keys=True) + "\n"
    out = Path(cfg.out) if cfg.out else Path(cfg.cache) / "stats.json"
    atomic_write(out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig) -> int:
    algos = [a.strip() for a in (cfg.algo or "beg").split(",") if a.strip()]
    for a in algos:
        if a not in SOLVE_ALGOS:
            raise UsageError(f"unknown algorithm {a!r}; choose from {', '.join(SOLVE_ALGOS)}")
    net = _network(cfg)
    if cfg.sweep:
        budgets = _parse_sweep(cfg.sweep)
        top = budgets[-1]
        max_caps = cfg.resolve_caps(net.m, top, net.caps)
        table = _table(net, max_caps, cfg)
        lines = ["B,algo,reward,millis"]
        for B in budgets:
            caps = cfg.resolve_caps(net.m, B, net.caps)
            for a in algos:
                res = _run_solver(a, net, table, B, caps, cfg)
                lines.append(f"{B},{res.algo},{res.reward:.12g},{res.millis:.3f}")
        text = "\n".join(lines) + "\n"
        if cfg.out:
            atomic_write(cfg.out, text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if len(algos) != 1:
        raise UsageError("several algorithms need --sweep")
    caps = cfg.resolve_caps(net.m, manifest=net.caps)
    table = _table(net, caps, cfg)
    res = _run_solver(algos[0], net, table, cfg.budget, caps, cfg)
    text = json.dumps(res.to_json(), sort_keys=True) + "\n"
    if cfg.out:
        atomic_write(cfg.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig) -> int:
    net = _network(cfg)
    caps = cfg.resolve_caps(net.m, manifest=net.caps)
    sim = SimulationConfig(algo=cfg.algo or "cucb-max", budget=cfg.budget, rounds=cfg.rounds,
                           runs=cfg.runs, seed=cfg.seed, gamma=cfg.gamma, caps=caps,
                           epsilon=cfg.epsilon, oracle=cfg.oracle, weight_model=cfg.weight_model,
                           hide_ids=cfg.hide_ids, family=cfg.family, workers=cfg.workers)
    sim.validate(net)
    table = _table(net, caps, cfg)
    result = run_experiment(net, sim, table=table)
    out_dir = Path(cfg.out or ".")
    paths = write_outputs(result, out_dir, cfg.verbose)
    summary = {"algo": sim.algo, "reference": result.reference,
               "reference_allocation": list(result.reference_allocation),
               "final_mean_regret": float(result.mean[-1]), "files": [str(p) for p in paths]}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS = {"precompute": cmd_precompute, "solve": cmd_solve, "simulate": cmd_simulate}


# ---------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _caps_arg(text: str):
    if text == "equal-to-B":
        return text
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("caps must be 'equal-to-B' or comma-separated integers") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig keys; flags override it")
    p.add_argument("--network", help="path to the network manifest.json")
    p.add_argument("--budget", type=int, help="total budget B (default 10)")
    p.add_argument("--caps", type=_caps_arg,
                   help="per-layer caps as 'c1,c2,...' or 'equal-to-B' "
                        "(default: the manifest's caps, or equal-to-B when they are all 0)")
    p.add_argument("--alpha", help="override every layer's start: 'fixed-node', 'fixed-node:<id>' or 'stationary'")
    p.add_argument("--weights", choices=["manifest", "random3"],
                   help="node weights: from the manifest, or uniform over {0, 0.5, 1} (needs --weight-seed)")
    p.add_argument("--weight-seed", type=int, help="seed for --weights random3 (default 0)")
    p.add_argument("--walkers", type=lambda s: [int(x) for x in s.split(",")],
                   help="walkers per layer, e.g. '2,1' (duplicates layers)")
    p.add_argument("--cache", help="directory for cached visiting-probability tables")
    p.add_argument("--workers", type=int, help="parallel workers (default 1)")
    p.add_argument("--out", help="output file (precompute/solve) or directory (simulate)")
    p.add_argument("-q", "--quiet", action="store_true", help="only log errors")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mulane", description="Budget allocation for multi-layered network exploration.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("precompute", help="compute and cache visiting probabilities")
    _common(p)

    p = sub.add_parser("solve", help="run an offline solver")
    _common(p)
    p.add_argument("--algo", help=f"one of {', '.join(SOLVE_ALGOS)}; comma list allowed with --sweep")
    p.add_argument("--sweep", help="budgets B1:B2[:step]; writes CSV B,algo,reward,millis")
    p.add_argument("--beg-variant", choices=["alg9", "alg1"],
                   help="alg9 (default) shrinks only the chosen layer's candidates; alg1 shrinks all")
    p.add_argument("--lazy", action="store_true", default=None, help="lazy gain evaluation in BEG/BEGE")

    p = sub.add_parser("simulate", help="run an online algorithm and write regret.csv")
    _common(p)
    p.add_argument("--algo", choices=["cucb-max", "cucb-mg", "cucb-max-r", "emp", "eps-greedy", "ts"])
    p.add_argument("--rounds", type=int, help="rounds T per run (default 1000)")
    p.add_argument("--runs", type=int, help="independent runs R (default 1)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--gamma", type=float, help="confidence radius scale in (0, 1] (default 1)")
    p.add_argument("--epsilon", type=float, help="exploration rate of eps-greedy (default 0.1)")
    p.add_argument("--oracle", choices=["beg", "bege", "opt"], help="offline oracle of the MAX family")
    p.add_argument("--weight-model", choices=["fixed", "bernoulli"],
                   help="node weights seen on a visit: fixed, or Bernoulli draws with mean sigma")
    p.add_argument("--hide-ids", action="store_true", default=None,
                   help="relabel node ids before the policy sees them")
    p.add_argument("--family", choices=["auto", "max", "mg"],
                   help="arm family of emp/eps-greedy/ts (auto: mg when layers are disjoint)")
    p.add_argument("--verbose", action="store_true", default=None, help="also write trace.jsonl")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig()
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        base = ExperimentConfig.from_json(doc)
    overrides = {f.name: getattr(args, f.name, None) for f in dataclasses.fields(ExperimentConfig)}
    return base.merged(overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config_from_args(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mulane: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MulaneError as exc:
        print(f"mulane: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"mulane: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
