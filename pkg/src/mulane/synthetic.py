"""Small random instances for tests, demos and the simulation harness."""
from __future__ import annotations

import numpy as np

from .network import LayeredNetwork, build_network, make_layer


def random_layer_edges(rng: np.random.Generator, labels, p_extra: float = 0.3,
                       weighted: bool = True) -> list[tuple[str, str, float]]:
    """Symmetric connected edge list: a random spanning tree plus extra edges."""
    labels = list(labels)
    n = len(labels)
    edges = {}

    def add(a, b):
        w = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
        edges[(a, b)] = w
        edges[(b, a)] = w

    order = rng.permutation(n)
    for pos in range(1, n):
        add(labels[order[pos]], labels[order[rng.integers(pos)]])
    for a in range(n):
        for b in range(a + 1, n):
            if (labels[a], labels[b]) not in edges and rng.random() < p_extra:
                add(labels[a], labels[b])
    if n == 1:
        edges[(labels[0], labels[0])] = 1.0
    return [(u, v, w) for (u, v), w in edges.items()]


def random_network(rng: np.random.Generator, m: int, n_range=(2, 6), *, overlapping: bool = True,
                   alpha="fixed-node", caps=None, universe: int | None = None,
                   weights: str = "uniform01", p_extra: float = 0.3,
                   weighted: bool = True) -> LayeredNetwork:
    """Random ``m``-layer network with connected symmetric layers.

    Overlapping networks draw each layer's nodes from a shared pool of
    ``universe`` labels; non-overlapping ones use disjoint label ranges.
    ``alpha`` is ``"fixed-node"``, ``"stationary"`` or ``"random"``.
    ``weights`` is ``"uniform01"``, ``"random3"`` or ``"ones"``.
    """
    sizes = rng.integers(n_range[0], n_range[1] + 1, size=m)
    pool = universe or int(max(sizes.max(), round(1.5 * sizes.mean())))
    layers = []
    offset = 0
    for i, n in enumerate(sizes):
        if overlapping:
            ids = np.sort(rng.choice(pool, size=int(n), replace=False))
        else:
            ids = np.arange(offset, offset + n)
            offset += n
        labels = [str(x) for x in ids]
        edges = random_layer_edges(rng, labels, p_extra, weighted)
        if alpha == "random":
            a = rng.dirichlet(np.ones(int(n)))
            a_spec = {u: float(p) for u, p in zip(labels, a)}
            # dirichlet draws may miss 1 by an ulp; renormalize in label order
            total = sum(a_spec.values())
            a_spec = {u: p / total for u, p in a_spec.items()}
        else:
            a_spec = alpha
        cap = int(caps[i]) if caps is not None else 0
        layers.append(make_layer(f"L{i}", edges, a_spec, cap))
    universe_labels = sorted({u for layer in layers for u in layer.nodes}, key=lambda s: int(s))
    if weights == "uniform01":
        w = rng.random(len(universe_labels))
    elif weights == "random3":
        w = rng.choice(np.array([0.0, 0.5, 1.0]), size=len(universe_labels))
    elif weights == "ones":
        w = np.ones(len(universe_labels))
    else:
        raise ValueError(f"unknown weights {weights!r}")
    return build_network(layers, dict(zip(universe_labels, w)))
