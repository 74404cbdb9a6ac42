"""Sum-edge pruning.

Three ways to pick edges: a raw weight cutoff, top-down probability mass, and
circuit flows aggregated over an example set. The rank-based methods remove
``floor(fraction * |sum edges|)`` edges, lowest score first, ties broken by
(node id, child position) ascending so nested fractions prune nested edge
sets. Stored weights are never rescaled; scoring for the top-down method
normalizes per node internally only. Every method finishes with the same
structural cleanup as ``simplify``, so outputs validate or are empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import NEG_INF, InputNode, ProbCircuit, SumNode, Workspace
from .errors import PutputError

__all__ = [
    "PruneParams",
    "prune_threshold",
    "prune_top_down",
    "prune_flows",
    "top_down_scores",
    "flow_scores",
    "apply_prune",
    "sum_edges",
]

_METHODS = ("threshold", "topdown", "flows")


@dataclass(frozen=True)
class PruneParams:
    """Method plus exactly the knobs that method reads.

    ``flow_source`` is provenance only (a path or the label "target"); the
    example matrix itself is passed to the pruning call.
    """

    method: str
    alpha: float | None = None
    fraction: float | None = None
    flow_source: str | None = None

    def __post_init__(self):
        if self.method not in _METHODS:
            raise PutputError(f"unknown pruning method {self.method!r}")
        if self.method == "threshold":
            if self.alpha is None or self.fraction is not None or self.flow_source is not None:
                raise PutputError("threshold pruning takes alpha and nothing else")
        else:
            if self.fraction is None or self.alpha is not None:
                raise PutputError(f"{self.method} pruning takes fraction, not alpha")
            if self.method == "topdown" and self.flow_source is not None:
                raise PutputError("topdown pruning takes no flow source")
            if self.method == "flows" and self.flow_source is None:
                raise PutputError("flows pruning records its flow source")

    def describe(self) -> str:
        if self.method == "threshold":
            return f"threshold alpha={self.alpha!r}"
        if self.method == "topdown":
            return f"topdown fraction={self.fraction!r}"
        return f"flows fraction={self.fraction!r} source={self.flow_source}"


def sum_edges(pc: ProbCircuit) -> list[tuple[int, int]]:
    """(node id, child position) for every sum edge, in that order."""
    out = []
    for i, node in enumerate(pc.nodes):
        if isinstance(node, SumNode):
            out.extend((i, p) for p in range(len(node.children)))
    return out


def prune_threshold(pc: ProbCircuit, alpha: float) -> ProbCircuit:
    """Remove every sum edge with weight strictly below ``alpha``, then clean
    up (which also drops exact-zero weights, as simplify always does)."""
    if alpha < 0:
        raise PutputError(f"alpha must be non-negative, got {alpha!r}")
    if pc.is_empty:
        return pc
    ws = Workspace.from_circuit(pc)
    for i, node in enumerate(pc.nodes):
        if isinstance(node, SumNode):
            keep = [p for p, w in enumerate(node.weights) if w >= alpha and w != 0.0]
            ws.children[i] = [node.children[p] for p in keep]
            ws.weights[i] = [node.weights[p] for p in keep]
    ws.cleanup()
    return ws.compact()


def top_down_scores(pc: ProbCircuit) -> dict[tuple[int, int], float]:
    """Edge mass when 1.0 enters the root and splits per normalized weight at
    sums while products pass their full mass to every child. A node reached
    along several paths accumulates."""
    mass = np.zeros(len(pc.nodes))
    mass[pc.root] = 1.0
    scores: dict[tuple[int, int], float] = {}
    for i in reversed(pc.topo_order):
        node = pc.nodes[i]
        if isinstance(node, SumNode):
            total = sum(node.weights)
            for p, (c, w) in enumerate(zip(node.children, node.weights)):
                share = mass[i] * (w / total) if total > 0 else 0.0
                scores[(i, p)] = share
                mass[c] += share
        elif not isinstance(node, InputNode):
            for c in node.children:
                mass[c] += mass[i]
    return scores


def flow_scores(pc: ProbCircuit, examples) -> dict[tuple[int, int], float]:
    """Aggregate circuit flow through each sum edge over the example rows.

    Per example, flow 1 enters the root; a sum edge carries
    ``flow * weight * p_child / p_node`` (zero where the node itself has zero
    probability) and products forward their whole flow to each child.
    """
    x = np.asarray(examples, dtype=bool)
    if x.ndim != 2 or x.shape[0] == 0:
        raise PutputError("flows pruning needs a non-empty example matrix")
    if pc.is_empty:
        return {}

    # forward pass, keeping every node's log value
    vals: list = [None] * len(pc.nodes)
    n_rows = x.shape[0]
    with np.errstate(divide="ignore"):
        for i in pc.topo_order:
            node = pc.nodes[i]
            if isinstance(node, InputNode):
                bit = x[:, node.var] if node.positive else ~x[:, node.var]
                vals[i] = np.where(bit, 0.0, NEG_INF)
            elif isinstance(node, SumNode):
                logw = np.log(np.asarray(node.weights, dtype=float))
                stacked = np.stack([vals[c] for c in node.children]) + logw[:, None]
                top = np.max(stacked, axis=0)
                finite = top > NEG_INF
                out = np.full(n_rows, NEG_INF)
                if np.any(finite):
                    out[finite] = top[finite] + np.log(
                        np.exp(stacked[:, finite] - top[finite]).sum(axis=0)
                    )
                vals[i] = out
            else:
                acc = vals[node.children[0]].copy()
                for c in node.children[1:]:
                    acc += vals[c]
                vals[i] = acc

    flows: list = [np.zeros(n_rows) for _ in pc.nodes]
    flows[pc.root] = np.ones(n_rows)
    scores: dict[tuple[int, int], float] = {}
    with np.errstate(divide="ignore"):
        for i in reversed(pc.topo_order):
            node = pc.nodes[i]
            if isinstance(node, InputNode):
                continue
            if isinstance(node, SumNode):
                ok = vals[i] > NEG_INF
                for p, (c, w) in enumerate(zip(node.children, node.weights)):
                    contrib = np.zeros(n_rows)
                    if w > 0 and np.any(ok):
                        ratio = np.exp(np.log(w) + vals[c][ok] - vals[i][ok])
                        contrib[ok] = flows[i][ok] * ratio
                    scores[(i, p)] = float(contrib.sum())
                    flows[c] += contrib
            else:
                for c in node.children:
                    flows[c] += flows[i]
    return scores


def _prune_ranked(pc: ProbCircuit, scores: dict[tuple[int, int], float], fraction: float) -> ProbCircuit:
    if not 0 <= fraction <= 1:
        raise PutputError(f"fraction must be in [0, 1], got {fraction!r}")
    if pc.is_empty:
        return pc
    edges = sum_edges(pc)
    n_remove = int(fraction * len(edges))
    ranked = sorted(edges, key=lambda e: (scores[e], e[0], e[1]))
    doomed = set(ranked[:n_remove])
    ws = Workspace.from_circuit(pc)
    for i, node in enumerate(pc.nodes):
        if isinstance(node, SumNode):
            keep = [p for p in range(len(node.children)) if (i, p) not in doomed]
            ws.children[i] = [node.children[p] for p in keep]
            ws.weights[i] = [node.weights[p] for p in keep]
    ws.drop_zero_weight_edges()
    ws.cleanup()
    return ws.compact()


def prune_top_down(pc: ProbCircuit, fraction: float) -> ProbCircuit:
    return _prune_ranked(pc, top_down_scores(pc), fraction)


def prune_flows(pc: ProbCircuit, examples, fraction: float) -> ProbCircuit:
    return _prune_ranked(pc, flow_scores(pc, examples), fraction)


def apply_prune(pc: ProbCircuit, params: PruneParams, flow_examples=None) -> ProbCircuit:
    if params.method == "threshold":
        return prune_threshold(pc, params.alpha)
    if params.method == "topdown":
        return prune_top_down(pc, params.fraction)
    if flow_examples is None:
        raise PutputError("flows pruning needs an example matrix")
    return prune_flows(pc, flow_examples, params.fraction)
