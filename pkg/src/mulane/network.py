"""Multi-layered network data model.

A :class:`LayeredNetwork` is a list of weighted digraph layers over a shared
universe of node labels, plus an importance weight in ``[0, 1]`` for every
node.  Each layer carries its own starting distribution and budget cap.

Labels are strings.  Ordering everywhere (node universe, local node order in
each layer) follows :func:`node_sort_key`, which sorts integer-looking labels
numerically so that "smallest node id" means what one expects for numeric
datasets.

On-disk format (see :func:`load_network` / :func:`dump_network`)::

    manifest.json   {"layers": [{"name", "edges", "alpha", "cap"}, ...],
                     "weights": "weights.tsv" | {"mode": ...},
                     "symmetrize": false, "sink": "self-loop"}
    <layer>.tsv     u <TAB> v <TAB> w
    weights.tsv     node <TAB> sigma
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import NonConvergenceError, ParseError, SinkNodeError, ValidationError

ROW_SUM_TOL = 1e-9
SINK_POLICIES = ("self-loop", "error")


def node_sort_key(label: str):
    try:
        return (0, int(label), label)
    except ValueError:
        return (1, 0, label)


def sorted_labels(labels: Iterable[str]) -> list[str]:
    return sorted(set(labels), key=node_sort_key)


@dataclass(frozen=True, eq=False)
class Layer:
    """One weighted digraph explored by a single random walker.

    ``src``/``dst`` hold local node indices into ``nodes``; ``alpha`` is the
    starting distribution over local nodes.  ``alpha_mode`` records how alpha
    was specified so the layer can be serialized back faithfully.
    """

    name: str
    nodes: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    alpha: np.ndarray
    budget_cap: int = 0
    alpha_mode: str = "explicit"
    sink: str = "self-loop"
    _local: dict = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_local", {u: j for j, u in enumerate(self.nodes)})

    @property
    def n(self) -> int:
        return len(self.nodes)

    def local_index(self, label: str) -> int:
        return self._local[label]

    def __contains__(self, label) -> bool:
        return label in self._local

    def edges(self) -> list[tuple[str, str, float]]:
        return [(self.nodes[a], self.nodes[b], float(w))
                for a, b, w in zip(self.src, self.dst, self.weight)]

    def adjacency(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.weight, (self.src, self.dst)), shape=(self.n, self.n))

    def replace(self, **changes) -> "Layer":
        kw = dict(name=self.name, nodes=self.nodes, src=self.src, dst=self.dst,
                  weight=self.weight, alpha=self.alpha, budget_cap=self.budget_cap,
                  alpha_mode=self.alpha_mode, sink=self.sink)
        kw.update(changes)
        return Layer(**kw)


def make_layer(name: str, edges: Iterable[Sequence], alpha="fixed-node", budget_cap: int = 0,
               *, sink: str = "self-loop", symmetrize: bool = False,
               nodes: Iterable[str] = ()) -> Layer:
    """Build and validate a :class:`Layer` from labelled edges.

    ``alpha`` may be ``"fixed-node"`` (smallest id), ``"fixed-node:<id>"``,
    ``"stationary"``, a mapping label -> probability, or an array aligned with
    the sorted node list.  Parallel edges are merged by summing weights.
    """
    if sink not in SINK_POLICIES:
        raise ValidationError(f"unknown sink policy {sink!r}")
    weights: dict[tuple[str, str], float] = {}
    for e in edges:
        if len(e) == 2:
            u, v, w = e[0], e[1], 1.0
        elif len(e) == 3:
            u, v, w = e
        else:
            raise ValidationError(f"layer {name}: edge must be (u, v[, w]), got {e!r}")
        u, v, w = str(u), str(v), float(w)
        if not np.isfinite(w) or w <= 0:
            raise ValidationError(f"layer {name}: edge ({u}, {v}) has non-positive weight {w}")
        weights[(u, v)] = weights.get((u, v), 0.0) + w
    if symmetrize:
        for (u, v), w in list(weights.items()):
            if (v, u) not in weights:
                weights[(v, u)] = w
    labels = sorted_labels([u for u, _ in weights] + [v for _, v in weights] + [str(x) for x in nodes])
    if not labels:
        raise ValidationError(f"layer {name} is empty")
    local = {u: j for j, u in enumerate(labels)}
    out_deg = np.zeros(len(labels), dtype=int)
    for (u, _v) in weights:
        out_deg[local[u]] += 1
    if sink == "self-loop":
        for j in np.flatnonzero(out_deg == 0):
            weights[(labels[j], labels[j])] = 1.0
    items = sorted(weights.items(), key=lambda kv: (local[kv[0][0]], local[kv[0][1]]))
    src = np.array([local[u] for (u, _), _ in items], dtype=np.int64)
    dst = np.array([local[v] for (_, v), _ in items], dtype=np.int64)
    wts = np.array([w for _, w in items], dtype=float)
    layer = Layer(name=str(name), nodes=tuple(labels), src=src, dst=dst, weight=wts,
                  alpha=np.zeros(len(labels)), budget_cap=int(budget_cap), sink=sink)
    if layer.budget_cap < 0:
        raise ValidationError(f"layer {name}: negative budget cap")
    return set_alpha(layer, alpha)


def set_alpha(layer: Layer, alpha) -> Layer:
    """Return a copy of ``layer`` with its starting distribution resolved from ``alpha``."""
    n = layer.n
    if isinstance(alpha, str):
        if alpha == "fixed-node":
            vec = np.zeros(n)
            vec[0] = 1.0
            return layer.replace(alpha=vec, alpha_mode=f"fixed-node:{layer.nodes[0]}")
        if alpha.startswith("fixed-node:"):
            target = alpha.split(":", 1)[1]
            if target not in layer:
                raise ValidationError(f"layer {layer.name}: start node {target!r} not in layer")
            vec = np.zeros(n)
            vec[layer.local_index(target)] = 1.0
            return layer.replace(alpha=vec, alpha_mode=alpha)
        if alpha == "stationary":
            pi = stationary_distribution(transition_matrix(layer))
            return layer.replace(alpha=pi, alpha_mode="stationary")
        raise ValidationError(f"layer {layer.name}: unknown alpha mode {alpha!r}")
    if isinstance(alpha, Mapping):
        vec = np.zeros(n)
        for label, p in alpha.items():
            label = str(label)
            if label not in layer:
                raise ValidationError(f"layer {layer.name}: alpha names unknown node {label!r}")
            vec[layer.local_index(label)] = float(p)
    else:
        vec = np.asarray(alpha, dtype=float).copy()
        if vec.shape != (n,):
            raise ValidationError(f"layer {layer.name}: alpha has shape {vec.shape}, expected ({n},)")
    if np.any(vec < 0) or not np.isfinite(vec).all() or abs(vec.sum() - 1.0) > 1e-9:
        raise ValidationError(f"layer {layer.name}: alpha is not a probability distribution")
    return layer.replace(alpha=vec, alpha_mode="explicit")


def transition_matrix(layer: Layer, *, as_sparse: bool = False):
    """Row-normalized adjacency ``P[u, v] = A[u, v] / sum_w A[u, w]``.

    Dense ``ndarray`` by default; ``as_sparse=True`` returns CSR.
    """
    adj = layer.adjacency()
    out = np.asarray(adj.sum(axis=1)).ravel()
    sinks = np.flatnonzero(out <= 0)
    if sinks.size:
        raise SinkNodeError(f"layer {layer.name}: node {layer.nodes[sinks[0]]!r} has no out-edges")
    P = sparse.diags(1.0 / out) @ adj
    P = sparse.csr_matrix(P)
    return P if as_sparse else P.toarray()


def stationary_distribution(matrix, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix by power iteration.

    Iterates the lazy chain ``(P + I) / 2``, which has the same fixed point
    but converges on periodic chains.  Chains that are not irreducible have
    no unique answer and raise :class:`NonConvergenceError`.  Once the
    residual ``||pi P - pi||_1`` is below ``tol`` the iteration keeps going
    while the residual still halves within a few steps, so the result is
    usually accurate to near machine precision.
    """
    P = sparse.csr_matrix(matrix)
    n = P.shape[0]
    ncomp, _ = connected_components(P, directed=True, connection="strong")
    if ncomp != 1:
        raise NonConvergenceError(f"chain is reducible ({ncomp} strongly connected components)")
    PT = P.T.tocsr()
    pi = np.full(n, 1.0 / n)
    best, best_res, since = None, np.inf, 0
    for _ in range(max_iter):
        nxt = 0.5 * (pi + PT @ pi)
        nxt /= nxt.sum()
        res = np.abs(PT @ nxt - nxt).sum()
        if res < 0.5 * best_res:
            best, best_res, since = nxt, res, 0
        else:
            since += 1
        if best_res <= tol and (since >= 50 or best_res <= 1e-15):
            return best
        pi = nxt
    if best_res <= tol:
        return best
    raise NonConvergenceError(f"power iteration did not reach tol={tol} in {max_iter} steps")


@dataclass(frozen=True, eq=False)
class LayeredNetwork:
    """Layers over a shared node universe with importance weights ``sigma``."""

    layers: tuple[Layer, ...]
    node_universe: tuple[str, ...]
    weights: np.ndarray
    _index: dict = field(default=None, repr=False)
    _layer_globals: tuple = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "node_universe", tuple(self.node_universe))
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        index = {u: j for j, u in enumerate(self.node_universe)}
        if len(index) != len(self.node_universe):
            raise ValidationError("node universe contains duplicates")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(index),):
            raise ValidationError("weights must align with the node universe")
        if not np.isfinite(w).all() or np.any(w < 0) or np.any(w > 1):
            raise ValidationError("node weights must lie in [0, 1]")
        globs = []
        for layer in self.layers:
            try:
                globs.append(np.array([index[u] for u in layer.nodes], dtype=np.int64))
            except KeyError as exc:
                raise ValidationError(f"layer {layer.name}: node {exc.args[0]!r} not in universe") from None
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_layer_globals", tuple(globs))

    @property
    def m(self) -> int:
        return len(self.layers)

    @property
    def N(self) -> int:
        return len(self.node_universe)

    @property
    def caps(self) -> tuple[int, ...]:
        return tuple(layer.budget_cap for layer in self.layers)

    @property
    def overlapping(self) -> bool:
        seen = np.zeros(self.N, dtype=bool)
        for g in self._layer_globals:
            if seen[g].any():
                return True
            seen[g] = True
        return False

    def global_index(self, label: str) -> int:
        return self._index[label]

    def layer_globals(self, i: int) -> np.ndarray:
        """Global indices of layer ``i``'s nodes, in local order."""
        return self._layer_globals[i]

    def sigma(self, label: str) -> float:
        return float(self.weights[self._index[label]])

    def with_caps(self, caps: Sequence[int]) -> "LayeredNetwork":
        if len(caps) != self.m:
            raise ValidationError(f"expected {self.m} caps, got {len(caps)}")
        layers = [layer.replace(budget_cap=int(c)) for layer, c in zip(self.layers, caps)]
        if any(c < 0 for c in caps):
            raise ValidationError("caps must be non-negative")
        return LayeredNetwork(layers, self.node_universe, self.weights)

    def with_alpha(self, alpha) -> "LayeredNetwork":
        """Apply one alpha specification (e.g. ``"stationary"``) to every layer."""
        return LayeredNetwork([set_alpha(layer, alpha) for layer in self.layers],
                              self.node_universe, self.weights)


def build_network(layers: Sequence[Layer], weights=None, *, default_weight: float | None = None) -> LayeredNetwork:
    """Assemble a network; ``weights`` maps label -> sigma (or is an aligned array)."""
    universe = sorted_labels(u for layer in layers for u in layer.nodes)
    if weights is None:
        if default_weight is None:
            raise ValidationError("node weights missing")
        w = np.full(len(universe), float(default_weight))
    elif isinstance(weights, Mapping):
        w = np.empty(len(universe))
        for j, u in enumerate(universe):
            if u in weights:
                w[j] = float(weights[u])
            elif default_weight is not None:
                w[j] = default_weight
            else:
                raise ValidationError(f"no weight given for node {u!r}")
    else:
        w = np.asarray(weights, dtype=float)
    return LayeredNetwork(tuple(layers), tuple(universe), w)


def random3_weights(universe: Sequence[str], seed: int) -> np.ndarray:
    """Weights drawn uniformly from {0, 0.5, 1} in universe order."""
    rng = np.random.default_rng(seed)
    return rng.choice(np.array([0.0, 0.5, 1.0]), size=len(universe))


# ---------------------------------------------------------------- file IO

def _read_rows(path: Path, ncols: tuple[int, ...]) -> list[list[str]]:
    rows = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError:
        raise
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) not in ncols:
            raise ParseError(f"{path}:{lineno}: expected {ncols} columns, got {len(parts)}")
        rows.append(parts)
    return rows


def _read_edges(path: Path) -> list[tuple[str, str, float]]:
    edges = []
    for parts in _read_rows(path, (2, 3)):
        try:
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParseError(f"{path}: bad weight {parts[2]!r}") from None
        edges.append((parts[0], parts[1], w))
    return edges


def _read_weight_map(path: Path) -> dict[str, float]:
    out = {}
    for parts in _read_rows(path, (2,)):
        try:
            out[parts[0]] = float(parts[1])
        except ValueError:
            raise ParseError(f"{path}: bad value {parts[1]!r}") from None
    return out


def load_network(config) -> LayeredNetwork:
    """Load a network from a manifest path or an in-memory descriptor.

    In-memory descriptors use the manifest schema, but ``edges`` may be a list
    of ``(u, v, w)`` triples and ``weights`` a mapping.  Raises
    :class:`ParseError` on malformed files and :class:`ValidationError` on bad
    content.
    """
    if isinstance(config, (str, os.PathLike)):
        path = Path(config)
        try:
            desc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        base = path.parent
    else:
        desc, base = dict(config), Path(".")
    if not isinstance(desc, dict):
        raise ParseError("manifest must be a JSON object")
    known = {"layers", "weights", "symmetrize", "sink"}
    unknown = set(desc) - known
    if unknown:
        raise ParseError(f"unknown manifest keys: {sorted(unknown)}")
    specs = desc.get("layers") or []
    if not specs:
        raise ValidationError("manifest lists no layers")
    symmetrize = bool(desc.get("symmetrize", False))
    sink = desc.get("sink", "self-loop")
    layers = []
    for j, spec in enumerate(specs):
        name = str(spec.get("name", f"layer{j}"))
        edges = spec.get("edges", [])
        if isinstance(edges, (str, os.PathLike)):
            edges = _read_edges(base / edges)
        alpha = spec.get("alpha", "fixed-node")
        if isinstance(alpha, dict) and "file" in alpha:
            alpha = _read_weight_map(base / alpha["file"])
        layers.append(make_layer(name, edges, alpha, int(spec.get("cap", 0)), sink=sink,
                                 symmetrize=symmetrize, nodes=spec.get("nodes", ())))
    wspec = desc.get("weights", {"mode": "uniform", "value": 1.0})
    if isinstance(wspec, (str, os.PathLike)):
        return build_network(layers, _read_weight_map(base / wspec))
    if isinstance(wspec, dict) and "mode" in wspec:
        mode = wspec["mode"]
        if mode == "uniform":
            return build_network(layers, default_weight=float(wspec.get("value", 1.0)))
        if mode == "random3":
            universe = sorted_labels(u for layer in layers for u in layer.nodes)
            return build_network(layers, random3_weights(universe, int(wspec.get("seed", 0))))
        raise ValidationError(f"unknown weights mode {mode!r}")
    if isinstance(wspec, dict):
        return build_network(layers, {str(k): v for k, v in wspec.items()})
    raise ParseError("weights must be a file name or an object")


def _fmt(x: float) -> str:
    return repr(float(x))


def canonical_files(net: LayeredNetwork) -> dict[str, str]:
    """Canonical text of every file making up ``net`` (name -> content)."""
    files = {}
    manifest_layers = []
    for j, layer in enumerate(net.layers):
        fname = f"layer{j}.tsv"
        files[fname] = "".join(f"{u}\t{v}\t{_fmt(w)}\n" for u, v, w in layer.edges())
        entry = {"name": layer.name, "edges": fname, "cap": layer.budget_cap}
        touched = set(layer.src.tolist()) | set(layer.dst.tolist())
        if len(touched) < layer.n:
            entry["nodes"] = [u for j, u in enumerate(layer.nodes) if j not in touched]
        if layer.alpha_mode == "explicit":
            aname = f"layer{j}.alpha.tsv"
            files[aname] = "".join(f"{u}\t{_fmt(p)}\n" for u, p in zip(layer.nodes, layer.alpha) if p > 0)
            entry["alpha"] = {"file": aname}
        else:
            entry["alpha"] = layer.alpha_mode
        manifest_layers.append(entry)
    files["weights.tsv"] = "".join(f"{u}\t{_fmt(s)}\n" for u, s in zip(net.node_universe, net.weights))
    sink = net.layers[0].sink
    manifest = {"layers": manifest_layers, "weights": "weights.tsv", "symmetrize": False, "sink": sink}
    files["manifest.json"] = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    return files


def dump_network(net: LayeredNetwork, directory) -> Path:
    """Write the canonical form of ``net``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in canonical_files(net).items():
        tmp = directory / (name + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, directory / name)
    return directory / "manifest.json"


def network_hash(net: LayeredNetwork) -> str:
    h = hashlib.sha256()
    for name, text in sorted(canonical_files(net).items()):
        h.update(name.encode())
        h.update(b"\0")
        h.update(text.encode())
        h.update(b"\0")
    # alpha vectors resolved from "stationary" are not in the files
    for layer in net.layers:
        h.update(np.ascontiguousarray(layer.alpha).tobytes())
    return h.hexdigest()


def expand_multi_walker(net: LayeredNetwork, walkers_per_layer: Sequence[int]) -> LayeredNetwork:
    """Replace layer ``i`` by ``walkers_per_layer[i]`` identical copies.

    Several independent walkers on one layer behave exactly like that many
    layers sharing the same graph, so every solver works unchanged.
    """
    if len(walkers_per_layer) != net.m:
        raise ValidationError(f"expected {net.m} walker counts, got {len(walkers_per_layer)}")
    layers = []
    for layer, w in zip(net.layers, walkers_per_layer):
        if int(w) < 1:
            raise ValidationError("each layer needs at least one walker")
        layers.append(layer)
        for copy in range(2, int(w) + 1):
            layers.append(layer.replace(name=f"{layer.name}#{copy}"))
    return LayeredNetwork(layers, net.node_universe, net.weights)
