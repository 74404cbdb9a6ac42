"""Circuit arenas and their evaluation.

A probabilistic circuit is a DAG of Input / Sum / Product nodes stored in an
indexed arena (children referenced by integer id). Input distributions are
boolean indicators: an input for variable v with positive polarity outputs 1
exactly when the assignment sets v, so complementary inputs always sum to 1.
A logic circuit is the same shape with Or / And in place of Sum / Product.

Circuits are immutable after construction; every transformation returns a new
value. The designated empty circuit (no nodes, root -1) is first class: it
assigns probability 0 everywhere and its logical theory is never satisfied.

Probability evaluation runs in log space. The value -inf is the exact-zero
marker: it only ever enters through an input indicator that is off (or a zero
weight), never through underflow, so ``p > 0`` tests on log values are exact.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CircuitStructureError, ScopeError

__all__ = [
    "InputNode",
    "SumNode",
    "ProductNode",
    "AndNode",
    "OrNode",
    "ProbCircuit",
    "LogicCircuit",
    "Violation",
    "validate",
    "simplify",
    "pc_to_logic",
    "to_formula",
]

EMPTY_ROOT = -1

NEG_INF = float("-inf")


@dataclass(frozen=True)
class InputNode:
    """Literal leaf: outputs 1 when variable ``var`` equals ``positive``."""

    var: int
    positive: bool


@dataclass(frozen=True)
class SumNode:
    children: tuple[int, ...]
    weights: tuple[float, ...]


@dataclass(frozen=True)
class ProductNode:
    children: tuple[int, ...]


@dataclass(frozen=True)
class AndNode:
    children: tuple[int, ...]


@dataclass(frozen=True)
class OrNode:
    children: tuple[int, ...]


_PC_KINDS = (InputNode, SumNode, ProductNode)
_LC_KINDS = (InputNode, AndNode, OrNode)


def _children_of(node) -> tuple[int, ...]:
    return () if isinstance(node, InputNode) else node.children


class _CircuitBase:
    """Shared arena mechanics for both circuit kinds."""

    nodes: tuple
    root: int

    def __init__(self, nodes, root):
        nodes = tuple(nodes)
        root = int(root)
        n = len(nodes)
        if root == EMPTY_ROOT:
            if nodes:
                raise CircuitStructureError("empty circuit must have no nodes")
        elif not 0 <= root < n:
            raise CircuitStructureError(f"root id {root} out of range for {n} nodes")
        for i, node in enumerate(nodes):
            if not isinstance(node, self._kinds):
                raise CircuitStructureError(f"node {i} has foreign type {type(node).__name__}")
            for c in _children_of(node):
                if not 0 <= c < n:
                    raise CircuitStructureError(f"node {i} references missing child {c}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "root", root)

    def __setattr__(self, key, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and self.nodes == other.nodes
            and self.root == other.root
        )

    def __hash__(self):
        return hash((type(self).__name__, self.nodes, self.root))

    def __repr__(self):
        return f"{type(self).__name__}({len(self.nodes)} nodes, root={self.root})"

    @property
    def is_empty(self) -> bool:
        return self.root == EMPTY_ROOT

    @property
    def size(self) -> int:
        """Node count."""
        return len(self.nodes)

    @cached_property
    def num_vars(self) -> int:
        """1 + highest referenced variable id (0 for the empty circuit)."""
        top = -1
        for node in self.nodes:
            if isinstance(node, InputNode) and node.var > top:
                top = node.var
        return top + 1

    @cached_property
    def topo_order(self) -> tuple[int, ...]:
        """Children-before-parents order over all stored nodes (smallest id first
        among ready nodes, so the order is deterministic)."""
        n = len(self.nodes)
        indeg = [0] * n
        parents: list[list[int]] = [[] for _ in range(n)]
        for i, node in enumerate(self.nodes):
            for c in _children_of(node):
                indeg[i] += 1
                parents[c].append(i)
        ready = [i for i in range(n) if indeg[i] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            i = heapq.heappop(ready)
            order.append(i)
            for p in parents[i]:
                indeg[p] -= 1
                if indeg[p] == 0:
                    heapq.heappush(ready, p)
        if len(order) != n:
            raise CircuitStructureError("circuit contains a cycle")
        return tuple(order)

    @cached_property
    def parent_map(self) -> tuple[tuple[int, ...], ...]:
        """For each node id, the sorted ids of nodes holding an edge to it."""
        acc: list[set[int]] = [set() for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            for c in _children_of(node):
                acc[c].add(i)
        return tuple(tuple(sorted(s)) for s in acc)

    @cached_property
    def scopes(self) -> tuple[frozenset, ...]:
        """Variable scope of every node (union of input variables below it)."""
        out: list[frozenset] = [frozenset()] * len(self.nodes)
        for i in self.topo_order:
            node = self.nodes[i]
            if isinstance(node, InputNode):
                out[i] = frozenset((node.var,))
            else:
                acc: set[int] = set()
                for c in node.children:
                    acc |= out[c]
                out[i] = frozenset(acc)
        return tuple(out)

    @property
    def scope(self) -> frozenset:
        return frozenset() if self.is_empty else self.scopes[self.root]

    def input_ids(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if isinstance(n, InputNode)]

    def _check_assignment_width(self, width: int):
        if width < self.num_vars:
            raise ScopeError(
                f"assignment has {width} variables, circuit references up to {self.num_vars - 1}"
            )


def _as_bool_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=bool)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ScopeError(f"assignments must be 1- or 2-dimensional, got shape {arr.shape}")
    return arr


class ProbCircuit(_CircuitBase):
    """Probabilistic circuit with boolean input distributions.

    Weights live on sum edges, stored raw: they are never normalized, and
    pruning never rescales the survivors. A zero weight behaves exactly like
    an absent edge during evaluation; ``simplify`` removes it structurally.
    """

    _kinds = _PC_KINDS

    @classmethod
    def empty(cls) -> "ProbCircuit":
        return cls((), EMPTY_ROOT)

    @cached_property
    def n_sum_edges(self) -> int:
        return sum(len(n.children) for n in self.nodes if isinstance(n, SumNode))

    def log_probs(self, assignments) -> np.ndarray:
        """Log probability of each row; -inf marks exact zero."""
        x = _as_bool_matrix(assignments)
        n_rows = x.shape[0]
        if self.is_empty:
            return np.full(n_rows, NEG_INF)
        self._check_assignment_width(x.shape[1])
        vals: list = [None] * len(self.nodes)
        with np.errstate(divide="ignore"):
            for i in self.topo_order:
                node = self.nodes[i]
                if isinstance(node, InputNode):
                    bit = x[:, node.var] if node.positive else ~x[:, node.var]
                    vals[i] = np.where(bit, 0.0, NEG_INF)
                elif isinstance(node, ProductNode):
                    if not node.children:
                        raise CircuitStructureError(f"product node {i} has no children")
                    acc = vals[node.children[0]].copy()
                    for c in node.children[1:]:
                        acc += vals[c]
                    vals[i] = acc
                else:
                    if len(node.weights) != len(node.children):
                        raise CircuitStructureError(f"sum node {i} weight arity mismatch")
                    if not node.children:
                        raise CircuitStructureError(f"sum node {i} has no children")
                    logw = np.log(np.asarray(node.weights, dtype=float))
                    stacked = np.stack([vals[c] for c in node.children]) + logw[:, None]
                    # logsumexp that keeps the all/-inf column exact
                    top = np.max(stacked, axis=0)
                    finite = top > NEG_INF
                    out = np.full(n_rows, NEG_INF)
                    if np.any(finite):
                        shifted = np.exp(stacked[:, finite] - top[finite])
                        out[finite] = top[finite] + np.log(shifted.sum(axis=0))
                    vals[i] = out
        return vals[self.root]

    def log_prob(self, assignment) -> float:
        return float(self.log_probs([list(assignment)])[0])

    def prob(self, assignment) -> float:
        """Linear probability; may underflow to 0.0 for very small values.
        Use log_prob when the exact-zero distinction matters."""
        return math.exp(self.log_prob(assignment))

    def covered(self, assignments) -> np.ndarray:
        """Boolean support test per row, exactly equal to ``log_probs > -inf``
        but computed without floats (zero-weight edges excluded)."""
        x = _as_bool_matrix(assignments)
        if self.is_empty:
            return np.zeros(x.shape[0], dtype=bool)
        self._check_assignment_width(x.shape[1])
        vals: list = [None] * len(self.nodes)
        for i in self.topo_order:
            node = self.nodes[i]
            if isinstance(node, InputNode):
                vals[i] = x[:, node.var] if node.positive else ~x[:, node.var]
            elif isinstance(node, ProductNode):
                if not node.children:
                    raise CircuitStructureError(f"product node {i} has no children")
                acc = vals[node.children[0]].copy()
                for c in node.children[1:]:
                    acc &= vals[c]
                vals[i] = acc
            else:
                live = [c for c, w in zip(node.children, node.weights) if w > 0.0]
                acc = np.zeros(x.shape[0], dtype=bool)
                for c in live:
                    acc |= vals[c]
                vals[i] = acc
        return vals[self.root]


class LogicCircuit(_CircuitBase):
    """Logical circuit over the same literal leaves, with And / Or gates."""

    _kinds = _LC_KINDS

    @classmethod
    def empty(cls) -> "LogicCircuit":
        return cls((), EMPTY_ROOT)

    def evaluate_many(self, assignments) -> np.ndarray:
        x = _as_bool_matrix(assignments)
        if self.is_empty:
            return np.zeros(x.shape[0], dtype=bool)
        self._check_assignment_width(x.shape[1])
        vals: list = [None] * len(self.nodes)
        for i in self.topo_order:
            node = self.nodes[i]
            if isinstance(node, InputNode):
                vals[i] = x[:, node.var] if node.positive else ~x[:, node.var]
            else:
                if not node.children:
                    raise CircuitStructureError(f"gate {i} has no children")
                acc = vals[node.children[0]].copy()
                if isinstance(node, AndNode):
                    for c in node.children[1:]:
                        acc &= vals[c]
                else:
                    for c in node.children[1:]:
                        acc |= vals[c]
                vals[i] = acc
        return vals[self.root]

    def evaluate(self, assignment) -> bool:
        return bool(self.evaluate_many([list(assignment)])[0])


@dataclass(frozen=True)
class Violation:
    """One structural property failure, naming the offending node."""

    node: int
    rule: str
    detail: str


def validate(circuit) -> list[Violation]:
    """Audit a circuit against its structural contract.

    Returns a list of violations (empty iff the circuit is a DAG whose inner
    nodes are non-empty, sums are smooth with non-negative weights of matching
    arity, and products are decomposable). Logic circuits are checked for the
    shape properties only.
    """
    out: list[Violation] = []
    if circuit.is_empty:
        return out
    probabilistic = isinstance(circuit, ProbCircuit)
    try:
        circuit.topo_order
    except CircuitStructureError:
        out.append(Violation(circuit.root, "dag", "circuit contains a cycle"))
        return out

    for i, node in enumerate(circuit.nodes):
        if isinstance(node, InputNode):
            continue
        if not node.children:
            out.append(Violation(i, "leaf", "inner node has no children"))
        if probabilistic and isinstance(node, SumNode):
            if len(node.weights) != len(node.children):
                out.append(
                    Violation(
                        i,
                        "weight-arity",
                        f"{len(node.weights)} weights for {len(node.children)} children",
                    )
                )
            for w in node.weights:
                if w < 0:
                    out.append(Violation(i, "weight-sign", f"negative weight {w!r}"))
                    break

    scopes = circuit.scopes
    for i, node in enumerate(circuit.nodes):
        if isinstance(node, SumNode):
            kids = node.children
            if kids:
                first = scopes[kids[0]]
                if any(scopes[c] != first for c in kids[1:]):
                    out.append(Violation(i, "smoothness", "sum children have differing scopes"))
        elif isinstance(node, ProductNode):
            seen: set[int] = set()
            for c in node.children:
                if scopes[c] & seen:
                    out.append(
                        Violation(i, "decomposability", "product children share variables")
                    )
                    break
                seen |= scopes[c]
    return out


class Workspace:
    """Mutable edge-editing view of a circuit used by simplify and the pruners.

    Node ids never shift while editing (deleted ids leave holes), so iteration
    stays stable across edits; ``compact`` buys back a dense immutable circuit.
    Requires an arena that lists children before parents, which every builder
    here produces; ascending live ids are then a valid evaluation order.
    """

    __slots__ = ("kind", "var", "positive", "children", "weights", "root", "probabilistic")

    def __init__(self):
        self.kind: dict[int, str] = {}
        self.var: dict[int, int] = {}
        self.positive: dict[int, bool] = {}
        self.children: dict[int, list[int]] = {}
        self.weights: dict[int, list[float]] = {}
        self.root: int = EMPTY_ROOT
        self.probabilistic: bool = True

    @classmethod
    def from_circuit(cls, circuit) -> "Workspace":
        order = circuit.topo_order  # also proves acyclicity
        ws = cls()
        ws.probabilistic = isinstance(circuit, ProbCircuit)
        rank = {node_id: pos for pos, node_id in enumerate(order)}
        if any(rank[i] != i for i in range(len(order))):
            # ids must themselves be topologically ordered for ascending-id passes
            raise CircuitStructureError("workspace requires children-before-parents ids")
        for i, node in enumerate(circuit.nodes):
            if isinstance(node, InputNode):
                ws.kind[i] = "L"
                ws.var[i] = node.var
                ws.positive[i] = node.positive
                ws.children[i] = []
            elif isinstance(node, SumNode):
                ws.kind[i] = "S"
                ws.children[i] = list(node.children)
                ws.weights[i] = list(node.weights)
            elif isinstance(node, OrNode):
                ws.kind[i] = "O"
                ws.children[i] = list(node.children)
            elif isinstance(node, AndNode):
                ws.kind[i] = "A"
                ws.children[i] = list(node.children)
            else:
                ws.kind[i] = "P"
                ws.children[i] = list(node.children)
        ws.root = circuit.root
        return ws

    def copy(self) -> "Workspace":
        ws = Workspace()
        ws.kind = dict(self.kind)
        ws.var = dict(self.var)
        ws.positive = dict(self.positive)
        ws.children = {i: list(c) for i, c in self.children.items()}
        ws.weights = {i: list(w) for i, w in self.weights.items()}
        ws.root = self.root
        ws.probabilistic = self.probabilistic
        return ws

    @property
    def is_empty(self) -> bool:
        return self.root == EMPTY_ROOT

    def live_ids(self) -> list[int]:
        return sorted(self.kind)

    def drop_zero_weight_edges(self):
        for i, ws in self.weights.items():
            if any(w == 0.0 for w in ws):
                kids = self.children[i]
                keep = [p for p, w in enumerate(ws) if w != 0.0]
                self.children[i] = [kids[p] for p in keep]
                self.weights[i] = [ws[p] for p in keep]

    def remove_edge(self, parent: int, position: int):
        """Remove the child edge at ``position`` of ``parent`` (no cleanup)."""
        del self.children[parent][position]
        if parent in self.weights:
            del self.weights[parent][position]

    def cleanup(self):
        """Structural closure after edge edits.

        Deletes inner nodes left without children; a deleted node is treated
        as unsatisfiable, so Sum parents drop the edge while Product/And
        parents die with it. Finishes by dropping everything unreachable from
        the root; a dead root empties the whole workspace.
        """
        parents: dict[int, set[int]] = {i: set() for i in self.kind}
        for i, kids in self.children.items():
            for c in kids:
                parents[c].add(i)
        dead: set[int] = set()
        work = [i for i in self.kind if self.kind[i] != "L" and not self.children[i]]
        work.sort()
        while work:
            x = work.pop()
            if x in dead:
                continue
            dead.add(x)
            for p in sorted(parents[x]):
                if p in dead:
                    continue
                if self.kind[p] in ("S", "O"):
                    kids = self.children[p]
                    if p in self.weights:
                        ws = self.weights[p]
                        keep = [(c, w) for c, w in zip(kids, ws) if c != x]
                        self.children[p] = [c for c, _ in keep]
                        self.weights[p] = [w for _, w in keep]
                    else:
                        self.children[p] = [c for c in kids if c != x]
                    if not self.children[p]:
                        work.append(p)
                else:
                    work.append(p)
        if self.root in dead:
            self._clear()
            return
        reachable: set[int] = set()
        stack = [self.root]
        while stack:
            i = stack.pop()
            if i in reachable or i in dead:
                continue
            reachable.add(i)
            stack.extend(self.children[i])
        for i in list(self.kind):
            if i not in reachable:
                self._drop_node(i)

    def _drop_node(self, i: int):
        del self.kind[i]
        del self.children[i]
        self.var.pop(i, None)
        self.positive.pop(i, None)
        self.weights.pop(i, None)

    def _clear(self):
        self.kind.clear()
        self.var.clear()
        self.positive.clear()
        self.children.clear()
        self.weights.clear()
        self.root = EMPTY_ROOT

    def covered(self, x: np.ndarray) -> np.ndarray:
        """Support test per row of the boolean matrix ``x``."""
        if self.is_empty:
            return np.zeros(x.shape[0], dtype=bool)
        vals: dict[int, np.ndarray] = {}
        for i in self.live_ids():
            kind = self.kind[i]
            if kind == "L":
                col = x[:, self.var[i]]
                vals[i] = col if self.positive[i] else ~col
            elif kind in ("P", "A"):
                kids = self.children[i]
                acc = vals[kids[0]].copy()
                for c in kids[1:]:
                    acc &= vals[c]
                vals[i] = acc
            else:
                if kind == "S":
                    kids = [c for c, w in zip(self.children[i], self.weights[i]) if w > 0.0]
                else:
                    kids = self.children[i]
                acc = np.zeros(x.shape[0], dtype=bool)
                for c in kids:
                    acc |= vals[c]
                vals[i] = acc
        return vals[self.root]

    def compact(self):
        """Dense immutable circuit with ids renumbered in ascending live order."""
        cls = ProbCircuit if self.probabilistic else LogicCircuit
        if self.is_empty:
            return cls.empty()
        live = self.live_ids()
        remap = {old: new for new, old in enumerate(live)}
        nodes = []
        for old in live:
            kind = self.kind[old]
            if kind == "L":
                nodes.append(InputNode(self.var[old], self.positive[old]))
            elif kind == "S":
                nodes.append(
                    SumNode(
                        tuple(remap[c] for c in self.children[old]),
                        tuple(self.weights[old]),
                    )
                )
            elif kind == "P":
                nodes.append(ProductNode(tuple(remap[c] for c in self.children[old])))
            elif kind == "A":
                nodes.append(AndNode(tuple(remap[c] for c in self.children[old])))
            else:
                nodes.append(OrNode(tuple(remap[c] for c in self.children[old])))
        return cls(tuple(nodes), remap[self.root])


def simplify(circuit):
    """Structural cleanup: drop zero-weight sum edges, delete childless inner
    nodes (propagating: Sum parents lose the edge, Product parents die), and
    remove unreachable nodes. Never changes the evaluated probability. A dead
    root yields the designated empty circuit."""
    if circuit.is_empty:
        return circuit
    ws = Workspace.from_circuit(circuit)
    ws.drop_zero_weight_edges()
    ws.cleanup()
    return ws.compact()


def pc_to_logic(pc: ProbCircuit) -> LogicCircuit:
    """Structural map Sum -> Or, Product -> And, inputs kept, ids preserved.

    With strictly positive retained weights the result is satisfied exactly
    where the circuit assigns positive probability; run ``simplify`` first if
    zero-weight edges may be present."""
    if pc.is_empty:
        return LogicCircuit.empty()
    nodes = []
    for node in pc.nodes:
        if isinstance(node, InputNode):
            nodes.append(node)
        elif isinstance(node, SumNode):
            nodes.append(OrNode(node.children))
        else:
            nodes.append(AndNode(node.children))
    return LogicCircuit(tuple(nodes), pc.root)


def to_formula(circuit, names=None) -> str:
    """Parenthesized formula rendering, for small circuits and messages.

    Shared subcircuits are expanded at every occurrence, so this is
    exponential on heavily shared DAGs; keep it to display sizes."""
    if circuit.is_empty:
        return "false"

    def name(v: int) -> str:
        return names[v] if names is not None else f"x{v}"

    def render(i: int) -> str:
        node = circuit.nodes[i]
        if isinstance(node, InputNode):
            return name(node.var) if node.positive else "-" + name(node.var)
        sep = " ∧ " if isinstance(node, (ProductNode, AndNode)) else " ∨ "
        parts = [render(c) for c in node.children]
        if len(parts) == 1:
            return parts[0]
        return "(" + sep.join(parts) + ")"

    return render(circuit.root)
