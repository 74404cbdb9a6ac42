"""Plain-text circuit serialization.

Probabilistic circuit, header ``putput-pc v1``::

    0 L 3 1            # input: variable 3, polarity 1=positive
    1 L 3 0
    2 S 0:0.6 1:0.4    # sum: child:weight pairs
    3 P 2 ...          # product: children
    root 3

Logic circuits use header ``putput-lc v1`` with ``O`` (or) and ``A`` (and)
lines and no weights. Ids are dense and each node appears after its children,
so a file is also a valid evaluation order. The empty circuit is a header
followed by ``root -1``. ``#`` starts a comment; writers never emit comments,
and weights are written with repr so round trips are bit exact.
"""

from __future__ import annotations

from pathlib import Path

from .circuits import (
    EMPTY_ROOT,
    AndNode,
    InputNode,
    LogicCircuit,
    OrNode,
    ProbCircuit,
    ProductNode,
    SumNode,
)
from .errors import FormatError

PC_HEADER = "putput-pc v1"
LC_HEADER = "putput-lc v1"

__all__ = [
    "PC_HEADER",
    "LC_HEADER",
    "write_pc",
    "read_pc",
    "write_lc",
    "read_lc",
    "dumps_pc",
    "dumps_lc",
    "read_any_circuit",
    "write_matrix",
    "read_matrix",
]


def _emit(circuit, header: str) -> str:
    lines = [header]
    if circuit.is_empty:
        lines.append(f"root {EMPTY_ROOT}")
        return "\n".join(lines) + "\n"
    order = circuit.topo_order
    remap = {old: new for new, old in enumerate(order)}
    for old in order:
        node = circuit.nodes[old]
        i = remap[old]
        if isinstance(node, InputNode):
            lines.append(f"{i} L {node.var} {1 if node.positive else 0}")
        elif isinstance(node, SumNode):
            pairs = " ".join(f"{remap[c]}:{w!r}" for c, w in zip(node.children, node.weights))
            lines.append(f"{i} S {pairs}")
        elif isinstance(node, OrNode):
            lines.append(f"{i} O " + " ".join(str(remap[c]) for c in node.children))
        elif isinstance(node, AndNode):
            lines.append(f"{i} A " + " ".join(str(remap[c]) for c in node.children))
        else:
            lines.append(f"{i} P " + " ".join(str(remap[c]) for c in node.children))
    lines.append(f"root {remap[circuit.root]}")
    return "\n".join(lines) + "\n"


def dumps_pc(pc: ProbCircuit) -> str:
    return _emit(pc, PC_HEADER)


def dumps_lc(lc: LogicCircuit) -> str:
    return _emit(lc, LC_HEADER)


def write_pc(pc: ProbCircuit, path):
    Path(path).write_text(dumps_pc(pc), encoding="utf-8")


def write_lc(lc: LogicCircuit, path):
    Path(path).write_text(dumps_lc(lc), encoding="utf-8")


def _strip(line: str) -> str:
    hash_pos = line.find("#")
    if hash_pos >= 0:
        line = line[:hash_pos]
    return line.strip()


def _parse(text: str, path, header: str, probabilistic: bool):
    lines = text.splitlines()
    node_lines: list[tuple[int, list[str]]] = []
    root: int | None = None
    saw_header = False
    for ln, raw in enumerate(lines, start=1):
        line = _strip(raw)
        if not line:
            continue
        if not saw_header:
            if line != header:
                raise FormatError(path, ln, f"expected header {header!r}, got {line!r}")
            saw_header = True
            continue
        toks = line.split()
        if toks[0] == "root":
            if root is not None:
                raise FormatError(path, ln, "duplicate root line")
            if len(toks) != 2:
                raise FormatError(path, ln, "root line needs exactly one id")
            try:
                root = int(toks[1])
            except ValueError:
                raise FormatError(path, ln, f"bad root id {toks[1]!r}") from None
            continue
        node_lines.append((ln, toks))
    if not saw_header:
        raise FormatError(path, 1, f"missing header {header!r}")
    if root is None:
        raise FormatError(path, len(lines) or 1, "missing root line")

    nodes: list = []
    for ln, toks in node_lines:
        try:
            node_id = int(toks[0])
        except ValueError:
            raise FormatError(path, ln, f"bad node id {toks[0]!r}") from None
        if node_id != len(nodes):
            raise FormatError(path, ln, f"node id {node_id} out of order (expected {len(nodes)})")
        if len(toks) < 2:
            raise FormatError(path, ln, "missing node kind")
        kind = toks[1]
        body = toks[2:]
        if kind == "L":
            if len(body) != 2 or body[1] not in ("0", "1"):
                raise FormatError(path, ln, "input line needs '<var> <0|1>'")
            try:
                var = int(body[0])
            except ValueError:
                raise FormatError(path, ln, f"bad variable id {body[0]!r}") from None
            if var < 0:
                raise FormatError(path, ln, f"negative variable id {var}")
            nodes.append(InputNode(var, body[1] == "1"))
            continue
        if probabilistic and kind == "S":
            children, weights = [], []
            if not body:
                raise FormatError(path, ln, "sum node has no children")
            for tok in body:
                part = tok.split(":")
                if len(part) != 2:
                    raise FormatError(path, ln, f"bad child:weight pair {tok!r}")
                try:
                    c = int(part[0])
                    w = float(part[1])
                except ValueError:
                    raise FormatError(path, ln, f"bad child:weight pair {tok!r}") from None
                children.append(c)
                weights.append(w)
            kids = children
            node = SumNode(tuple(children), tuple(weights))
        elif kind in ("P", "A", "O"):
            if probabilistic and kind != "P":
                raise FormatError(path, ln, f"kind {kind!r} not allowed in a probabilistic circuit")
            if not probabilistic and kind == "P":
                raise FormatError(path, ln, "kind 'P' not allowed in a logic circuit")
            if not body:
                raise FormatError(path, ln, "inner node has no children")
            try:
                kids = [int(t) for t in body]
            except ValueError:
                raise FormatError(path, ln, "bad child id") from None
            node = (
                ProductNode(tuple(kids))
                if kind == "P"
                else AndNode(tuple(kids))
                if kind == "A"
                else OrNode(tuple(kids))
            )
        else:
            raise FormatError(path, ln, f"unknown node kind {kind!r}")
        for c in kids:
            if not 0 <= c < len(nodes):
                raise FormatError(path, ln, f"child {c} not declared before use")
        nodes.append(node)

    if root == EMPTY_ROOT:
        if nodes:
            raise FormatError(path, len(lines), "root -1 requires an empty node list")
        return ProbCircuit.empty() if probabilistic else LogicCircuit.empty()
    if not 0 <= root < len(nodes):
        raise FormatError(path, len(lines), f"root {root} out of range")
    cls = ProbCircuit if probabilistic else LogicCircuit
    return cls(tuple(nodes), root)


def read_pc(path) -> ProbCircuit:
    text = _read_text(path)
    return _parse(text, path, PC_HEADER, probabilistic=True)


def read_lc(path) -> LogicCircuit:
    text = _read_text(path)
    return _parse(text, path, LC_HEADER, probabilistic=False)


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise FormatError(path, 0, "file not found")
    return p.read_text(encoding="utf-8")


def read_any_circuit(path):
    """Dispatch on the header line; returns a ProbCircuit or LogicCircuit."""
    text = _read_text(path)
    for raw in text.splitlines():
        line = _strip(raw)
        if not line:
            continue
        if line == PC_HEADER:
            return _parse(text, path, PC_HEADER, probabilistic=True)
        if line == LC_HEADER:
            return _parse(text, path, LC_HEADER, probabilistic=False)
        raise FormatError(path, 1, f"unrecognized circuit header {line!r}")
    raise FormatError(path, 1, "empty file")


def write_matrix(matrix, path):
    """Binarized example matrix: one row per line, bits space separated,
    columns in schema expansion order."""
    rows = ["".join("1" if b else "0" for b in row) for row in matrix]
    Path(path).write_text("\n".join(" ".join(r) for r in rows) + "\n", encoding="utf-8")


def read_matrix(path):
    import numpy as np

    out = []
    width = None
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        toks = line.split()
        if any(t not in ("0", "1") for t in toks):
            raise FormatError(path, ln, "matrix entries must be 0 or 1")
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise FormatError(path, ln, f"expected {width} columns, got {len(toks)}")
        out.append([t == "1" for t in toks])
    return np.array(out, dtype=bool)
