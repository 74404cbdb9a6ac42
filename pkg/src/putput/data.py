"""Catalogs, schemas, and the one-hot boolean view circuits evaluate on.

A schema fixes the variable order and, per variable, the value order; the
boolean expansion assigns each (variable, value) pair one bit, so a row maps
to a vector where exactly one bit per block is set. Binary-encoded variables
(kind "boolean", used for circuits built directly over propositional
variables) get a single bit instead; they are an in-memory convenience and
have no sidecar form.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .circuits import ProbCircuit
from .errors import FormatError, SchemaError

__all__ = [
    "Variable",
    "Schema",
    "Database",
    "boolean_schema",
    "load_csv",
    "save_csv",
    "load_schema",
    "save_schema",
    "load_example_set",
    "save_example_set",
    "compute_target",
    "compute_target_log",
]

CARDINALITY_WARNING = 256

_RESERVED = set("|:{},∈\n\r")


@dataclass(frozen=True)
class Variable:
    """One catalog attribute with its closed value list (declaration order)."""

    name: str
    values: tuple[str, ...]
    kind: str = "onehot"  # "onehot" | "boolean"

    def __post_init__(self):
        if not self.name or self.name != self.name.strip():
            raise SchemaError(f"bad variable name {self.name!r}")
        if not self.values:
            raise SchemaError(f"variable {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"variable {self.name!r} repeats a value")
        for v in self.values:
            if not v or v != v.strip():
                raise SchemaError(f"variable {self.name!r} has blank or untrimmed value {v!r}")
        if self.kind not in ("onehot", "boolean"):
            raise SchemaError(f"unknown variable kind {self.kind!r}")
        if self.kind == "boolean" and len(self.values) != 2:
            raise SchemaError("boolean-kind variables need exactly two values")
        if len(self.values) > CARDINALITY_WARNING:
            warnings.warn(
                f"variable {self.name!r} has {len(self.values)} values; "
                "the boolean expansion will be wide",
                stacklevel=3,
            )

    @property
    def width(self) -> int:
        return 1 if self.kind == "boolean" else len(self.values)


@dataclass(frozen=True)
class Schema:
    variables: tuple[Variable, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate variable names in schema")

    @cached_property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        """Bit ids per variable, in variable order."""
        out, base = [], 0
        for v in self.variables:
            out.append(tuple(range(base, base + v.width)))
            base += v.width
        return tuple(out)

    @property
    def num_bits(self) -> int:
        return sum(v.width for v in self.variables)

    @cached_property
    def bit_owner(self) -> tuple[tuple[int, int], ...]:
        """For each bit, (variable index, value index). Boolean-kind bits own
        value index 1 (the bit encodes 'value is values[1]')."""
        out = []
        for vi, v in enumerate(self.variables):
            if v.kind == "boolean":
                out.append((vi, 1))
            else:
                out.extend((vi, j) for j in range(len(v.values)))
        return tuple(out)

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise SchemaError(f"unknown variable {name!r}")

    def literal_values(self, bit: int, positive: bool) -> tuple[int, frozenset[int]]:
        """Value-set meaning of one boolean literal: (variable index, allowed
        value indices). A positive one-hot literal pins its value; a negative
        one allows everything else."""
        vi, vj = self.bit_owner[bit]
        var = self.variables[vi]
        if var.kind == "boolean":
            return vi, frozenset((1,)) if positive else frozenset((0,))
        if positive:
            return vi, frozenset((vj,))
        return vi, frozenset(range(len(var.values))) - frozenset((vj,))

    def encode_row(self, row) -> np.ndarray:
        bits = np.zeros(self.num_bits, dtype=bool)
        if len(row) != len(self.variables):
            raise SchemaError(f"row has {len(row)} cells for {len(self.variables)} variables")
        for (var, block), cell in zip(zip(self.variables, self.blocks), row):
            try:
                j = var.values.index(cell)
            except ValueError:
                raise SchemaError(f"value {cell!r} not in schema for variable {var.name!r}") from None
            if var.kind == "boolean":
                bits[block[0]] = j == 1
            else:
                bits[block[j]] = True
        return bits

    def decode_row(self, bits) -> tuple[str, ...]:
        bits = np.asarray(bits, dtype=bool)
        if bits.shape != (self.num_bits,):
            raise SchemaError(f"bit vector has shape {bits.shape}, expected ({self.num_bits},)")
        row = []
        for var, block in zip(self.variables, self.blocks):
            if var.kind == "boolean":
                row.append(var.values[1] if bits[block[0]] else var.values[0])
                continue
            on = [j for j, b in enumerate(block) if bits[b]]
            if len(on) != 1:
                raise SchemaError(
                    f"block of variable {var.name!r} has {len(on)} bits set, expected exactly one"
                )
            row.append(var.values[on[0]])
        return tuple(row)


def boolean_schema(names) -> Schema:
    """Schema of plain propositional variables, one bit each (internal use)."""
    return Schema(tuple(Variable(n, ("false", "true"), kind="boolean") for n in names))


@dataclass(frozen=True)
class Database:
    """Unique catalog rows in first-occurrence order; row index is identity."""

    schema: Schema
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(set(self.rows)) != len(self.rows):
            raise SchemaError("database rows must be unique")

    def __len__(self) -> int:
        return len(self.rows)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Boolean view, one row per example, schema expansion order."""
        if not self.rows:
            return np.zeros((0, self.schema.num_bits), dtype=bool)
        return np.stack([self.schema.encode_row(r) for r in self.rows])

    def index_of(self, row) -> int:
        try:
            return self.rows.index(tuple(row))
        except ValueError:
            raise SchemaError(f"row {row!r} not present in database") from None


def _check_serializable(schema: Schema):
    for var in schema.variables:
        if var.kind != "onehot":
            raise SchemaError(f"variable {var.name!r} is internal-only and has no sidecar form")
        bad = _RESERVED.intersection(var.name)
        if bad:
            raise SchemaError(f"variable name {var.name!r} contains reserved character")
        for v in var.values:
            if _RESERVED.intersection(v):
                raise SchemaError(
                    f"value {v!r} of variable {var.name!r} contains a reserved character"
                )


def save_schema(schema: Schema, path):
    """Sidecar: one ``name: v1|v2|...`` line per variable."""
    _check_serializable(schema)
    lines = [f"{v.name}: {'|'.join(v.values)}" for v in schema.variables]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schema(path) -> Schema:
    p = Path(path)
    if not p.is_file():
        raise FormatError(path, 0, "schema file not found")
    variables = []
    for ln, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise FormatError(path, ln, "expected 'name: v1|v2|...'")
        name, _, rest = line.partition(":")
        values = tuple(v.strip() for v in rest.split("|"))
        if any(not v for v in values):
            raise FormatError(path, ln, "empty value in list")
        try:
            variables.append(Variable(name.strip(), values))
        except SchemaError as exc:
            raise FormatError(path, ln, str(exc)) from None
    if not variables:
        raise FormatError(path, 1, "schema file declares no variables")
    return Schema(tuple(variables))


def load_csv(path, schema: Schema | None = None) -> Database:
    """Read a catalog. Cells are trimmed and must be non-empty; duplicate rows
    are dropped with a warning. Without a schema, values are collected per
    column in first-seen order."""
    p = Path(path)
    if not p.is_file():
        raise FormatError(path, 0, "csv file not found")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        table = list(reader)
    if not table:
        raise FormatError(path, 1, "csv file is empty")
    header = [h.strip() for h in table[0]]
    if any(not h for h in header):
        raise FormatError(path, 1, "blank column name in header")
    rows: list[tuple[str, ...]] = []
    for ln, record in enumerate(table[1:], start=2):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise FormatError(path, ln, f"expected {len(header)} cells, got {len(record)}")
        cells = tuple(c.strip() for c in record)
        for col, c in zip(header, cells):
            if not c:
                raise FormatError(path, ln, f"empty cell in column {col!r}")
        rows.append(cells)

    if schema is None:
        seen: list[dict[str, None]] = [dict() for _ in header]
        for cells in rows:
            for d, c in zip(seen, cells):
                d.setdefault(c, None)
        schema = Schema(
            tuple(Variable(n, tuple(d.keys())) for n, d in zip(header, seen))
        )
    else:
        names = [v.name for v in schema.variables]
        if header != names:
            raise SchemaError(f"csv header {header!r} does not match schema variables {names!r}")
        for ln_offset, cells in enumerate(rows):
            for var, c in zip(schema.variables, cells):
                if c not in var.values:
                    raise SchemaError(
                        f"value {c!r} not allowed for variable {var.name!r} (csv row {ln_offset + 2})"
                    )

    unique: dict[tuple[str, ...], None] = {}
    for cells in rows:
        unique.setdefault(cells, None)
    dupes = len(rows) - len(unique)
    if dupes:
        warnings.warn(f"dropped {dupes} duplicate row(s) from {p.name}", stacklevel=2)
    return Database(schema, tuple(unique.keys()))


def save_csv(db: Database, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([v.name for v in db.schema.variables])
        writer.writerows(db.rows)


def load_example_set(path, db: Database) -> frozenset[int]:
    """Example subsets are either newline-separated row indices or a CSV with
    the database's header, matched row-by-row."""
    p = Path(path)
    if not p.is_file():
        raise FormatError(path, 0, "example set file not found")
    lines = [l.strip() for l in p.read_text(encoding="utf-8").splitlines()]
    body = [l for l in lines if l and not l.startswith("#")]
    if not body:
        return frozenset()
    if all(tok.isdigit() for l in body for tok in l.split()):
        out = set()
        for ln, l in enumerate(lines, start=1):
            l = l.strip()
            if not l or l.startswith("#"):
                continue
            for tok in l.split():
                idx = int(tok)
                if idx >= len(db):
                    raise FormatError(path, ln, f"row index {idx} out of range (database has {len(db)})")
                out.add(idx)
        return frozenset(out)
    sub = load_csv(path, schema=db.schema)
    return frozenset(db.index_of(r) for r in sub.rows)


def save_example_set(indices, path):
    Path(path).write_text(
        "".join(f"{i}\n" for i in sorted(indices)), encoding="utf-8"
    )


def compute_target_log(pc: ProbCircuit, db: Database, log_t: float) -> frozenset[int]:
    """Rows whose log likelihood is at least ``log_t`` (-inf selects all)."""
    if pc.num_vars > db.schema.num_bits:
        raise SchemaError(
            f"circuit references bit {pc.num_vars - 1} but the schema expands to "
            f"{db.schema.num_bits} bits"
        )
    lp = pc.log_probs(db.matrix)
    return frozenset(int(i) for i in np.flatnonzero(lp >= log_t))


def compute_target(pc: ProbCircuit, db: Database, t: float) -> frozenset[int]:
    """Rows with likelihood at least ``t``; the comparison runs in log space
    so exact zeros stay exact. ``t = 0`` selects the entire database."""
    if t < 0:
        raise SchemaError(f"threshold must be non-negative, got {t!r}")
    log_t = -math.inf if t == 0 else math.log(t)
    return compute_target_log(pc, db, log_t)
