"""Multi-valued CNF theories: extraction from logic circuits, a readability
score, and query rendering.

A clause is a disjunction of value-set atoms, at most one atom per catalog
variable. Extraction flattens a logic circuit over the one-hot booleans back
into this multi-valued form: a positive literal pins its variable to one
value, a negative literal allows every other value, and same-variable atoms
inside a clause merge by union. The readability score charges each clause its
value-set entropy, multiplied up by how many other clauses touch the same
variables.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .circuits import AndNode, InputNode, LogicCircuit, OrNode
from .data import Schema, load_schema
from .errors import ClauseBudgetError, FormatError, PutputError, SchemaError

__all__ = [
    "Clause",
    "Cnf",
    "extract_cnf",
    "clause_entropy",
    "clause_incomprehensibility",
    "incomprehensibility",
    "emit_query",
    "write_cnf",
    "read_cnf",
    "CNF_HEADER",
]

CNF_HEADER = "putput-cnf v1"

DEFAULT_CLAUSE_BUDGET = 10_000

# raw pair-merge work allowed per OR fold before giving up; keeps a doomed
# distribution from burning minutes before the clause budget would catch it
_MERGE_GUARD = 250_000


@dataclass(frozen=True)
class Clause:
    """Disjunction of per-variable value-set atoms.

    ``atoms`` is sorted by variable index with no variable repeated and no
    empty value set. The one exception is the atom-less clause, which stands
    for the never-satisfiable theory (only the empty circuit produces it).
    """

    atoms: tuple[tuple[int, frozenset[int]], ...]

    @classmethod
    def of(cls, mapping) -> "Clause":
        """Build from a {variable index: iterable of value indices} mapping."""
        atoms = tuple(sorted((v, frozenset(vals)) for v, vals in dict(mapping).items()))
        return cls(atoms)

    def __post_init__(self):
        seen = set()
        for var, allowed in self.atoms:
            if var in seen:
                raise PutputError(f"clause repeats variable index {var}")
            seen.add(var)
            if not allowed:
                raise PutputError(f"clause has an empty value set for variable index {var}")
        if tuple(sorted(self.atoms)) != self.atoms:
            raise PutputError("clause atoms must be sorted by variable index")

    @property
    def is_bottom(self) -> bool:
        return not self.atoms

    @cached_property
    def variables(self) -> frozenset[int]:
        return frozenset(var for var, _ in self.atoms)

    def allowed(self, var: int) -> frozenset[int] | None:
        for v, vals in self.atoms:
            if v == var:
                return vals
        return None

    def satisfied_by(self, values) -> bool:
        """True when the row (tuple of value indices per variable) hits any atom."""
        return any(values[var] in allowed for var, allowed in self.atoms)


@dataclass(frozen=True)
class Cnf:
    """Conjunction of clauses over one schema. No clauses means always-true."""

    schema: Schema
    clauses: tuple[Clause, ...]

    def __post_init__(self):
        for clause in self.clauses:
            for var, allowed in clause.atoms:
                if not 0 <= var < len(self.schema.variables):
                    raise SchemaError(f"clause references variable index {var} outside schema")
                width = len(self.schema.variables[var].values)
                if any(not 0 <= j < width for j in allowed):
                    raise SchemaError(
                        f"clause value set for {self.schema.variables[var].name!r} "
                        f"leaves the schema's value range"
                    )

    @property
    def is_true(self) -> bool:
        return not self.clauses

    @property
    def is_false(self) -> bool:
        return any(c.is_bottom for c in self.clauses)

    def __len__(self) -> int:
        return len(self.clauses)

    def evaluate(self, values) -> bool:
        """Row as a tuple of value indices, one per schema variable."""
        return all(c.satisfied_by(values) for c in self.clauses)

    def covers(self, db) -> np.ndarray:
        """Boolean mask of the database rows the theory selects."""
        lookup = [
            {val: j for j, val in enumerate(var.values)} for var in self.schema.variables
        ]
        out = np.zeros(len(db), dtype=bool)
        for i, row in enumerate(db.rows):
            values = tuple(lookup[v][cell] for v, cell in enumerate(row))
            out[i] = self.evaluate(values)
        return out

    def covers_bits(self, bits) -> np.ndarray:
        """Same selection over a one-hot boolean matrix."""
        bits = np.asarray(bits, dtype=bool)
        lookup = [
            {val: j for j, val in enumerate(var.values)} for var in self.schema.variables
        ]
        out = np.zeros(bits.shape[0], dtype=bool)
        for i in range(bits.shape[0]):
            row = self.schema.decode_row(bits[i])
            values = tuple(lookup[v][cell] for v, cell in enumerate(row))
            out[i] = self.evaluate(values)
        return out


def _full_widths(schema: Schema) -> tuple[int, ...]:
    return tuple(len(v.values) for v in schema.variables)


def _canonical(mapping: dict[int, frozenset[int]]):
    return tuple(sorted(mapping.items()))


def _subsumes(small, large) -> bool:
    # small implies large: every atom of small widens inside large
    large_map = dict(large)
    for var, allowed in small:
        other = large_map.get(var)
        if other is None or not allowed <= other:
            return False
    return True


def _minimize(clauses: set) -> set:
    """Drop every clause another clause subsumes (equal ones are already one)."""
    ordered = sorted(clauses, key=len)
    kept: list = []
    for cand in ordered:
        cand_vars = frozenset(v for v, _ in cand)
        dominated = False
        for prev in kept:
            if len(prev) > len(cand):
                break
            if frozenset(v for v, _ in prev) <= cand_vars and _subsumes(prev, cand):
                dominated = True
                break
        if not dominated:
            kept.append(cand)
    # a later, longer clause can never subsume an earlier shorter one, so one
    # ordered pass suffices
    return set(kept)


def _check_budget(clauses, budget: int):
    if len(clauses) > budget:
        raise ClauseBudgetError(
            f"theory distillation reached {len(clauses)} clauses "
            f"(budget {budget}); prune the circuit further before extracting"
        )


def _merge_or(left: set, right: set, widths, budget: int) -> set:
    if len(left) * len(right) > max(_MERGE_GUARD, budget):
        raise ClauseBudgetError(
            f"theory distillation would merge {len(left) * len(right)} clause pairs "
            f"(budget {budget}); prune the circuit further before extracting"
        )
    merged: set = set()
    for ca in left:
        base = dict(ca)
        for cb in right:
            combo = dict(base)
            for var, allowed in cb:
                prior = combo.get(var)
                combo[var] = allowed if prior is None else prior | allowed
            if any(len(vals) == widths[var] for var, vals in combo.items()):
                continue  # some atom admits every value: the clause is vacuous
            merged.add(_canonical(combo))
    return _minimize(merged)


def extract_cnf(lc: LogicCircuit, schema: Schema, budget: int = DEFAULT_CLAUSE_BUDGET) -> Cnf:
    """Flatten a logic circuit over the schema's one-hot booleans into a
    multi-valued CNF.

    AND units take the union of their children's clause sets; OR units
    distribute pairwise, unioning same-variable value sets within each merged
    clause. Vacuous clauses are dropped and subsumed clauses removed at every
    step. Raises when the working clause set outgrows ``budget``.
    """
    if budget < 1:
        raise PutputError(f"clause budget must be positive, got {budget!r}")
    if lc.is_empty:
        return Cnf(schema, (Clause(()),))
    widths = _full_widths(schema)
    for i in lc.input_ids():
        if not 0 <= lc.nodes[i].var < schema.num_bits:
            raise SchemaError(
                f"circuit references boolean variable {lc.nodes[i].var} "
                f"outside the schema's {schema.num_bits} bits"
            )

    memo: dict[int, frozenset] = {}
    for i in lc.topo_order:
        node = lc.nodes[i]
        if isinstance(node, InputNode):
            var, allowed = schema.literal_values(node.var, node.positive)
            if len(allowed) == widths[var]:
                clauses = frozenset()  # single-value variable: the literal is vacuous
            elif not allowed:
                clauses = frozenset({()})  # its negation can never hold
            else:
                clauses = frozenset({_canonical({var: allowed})})
        elif isinstance(node, AndNode):
            pool: set = set()
            for c in node.children:
                pool |= memo[c]
            clauses = frozenset(_minimize(pool))
            _check_budget(clauses, budget)
        else:
            if not isinstance(node, OrNode):
                # a probabilistic circuit slipped in; its sum/product nodes
                # would silently read as disjunctions here
                raise PutputError(
                    f"extraction needs a logic circuit, found {type(node).__name__}"
                )
            parts = [memo[c] for c in node.children]
            acc = set(parts[0])
            for part in parts[1:]:
                acc = _merge_or(acc, set(part), widths, budget)
                _check_budget(acc, budget)
            clauses = frozenset(acc)
        memo[i] = clauses

    final = sorted(
        memo[lc.root],
        key=lambda cl: (len(cl), [(var, sorted(vals)) for var, vals in cl]),
    )
    return Cnf(schema, tuple(Clause(c) for c in final))


def clause_entropy(clause: Clause, var: int, schema: Schema) -> float:
    """Entropy-style cost of one variable inside one clause.

    With k allowed values out of m, the cost is -(k/m) * log2(k/m); both an
    absent variable (k = 0) and a fully open one (k = m) cost nothing.
    """
    m = len(schema.variables[var].values)
    allowed = clause.allowed(var)
    k = 0 if allowed is None else len(allowed)
    if k == 0 or k == m:
        return 0.0
    ratio = k / m
    return -ratio * math.log2(ratio)


def clause_incomprehensibility(clause: Clause, schema: Schema) -> float:
    """Sum of the per-variable entropy costs; absent variables contribute 0."""
    return sum(clause_entropy(clause, var, schema) for var, _ in clause.atoms)


def incomprehensibility(cnf: Cnf) -> float:
    """Readability score of the whole theory, lower is easier to read.

    Each clause pays its own cost once, plus once more for every distinct
    clause sharing at least one variable with it; equivalently each clause's
    cost is scaled by one plus its clause-graph degree.
    """
    costs = [clause_incomprehensibility(c, cnf.schema) for c in cnf.clauses]
    postings: dict[int, list[int]] = {}
    for i, clause in enumerate(cnf.clauses):
        for var in clause.variables:
            postings.setdefault(var, []).append(i)
    neighbors: list[set[int]] = [set() for _ in cnf.clauses]
    for members in postings.values():
        for i in members:
            neighbors[i].update(members)
    total = 0.0
    for i, cost in enumerate(costs):
        degree = len(neighbors[i] - {i})
        total += cost * (1 + degree)
    return total


def _human_atom(var, allowed: frozenset[int]) -> str:
    values = var.values
    m = len(values)
    chosen = sorted(allowed)
    if len(chosen) == 1:
        return f"{var.name} = {values[chosen[0]]}"
    if len(chosen) == m - 1 and m > 2:
        (excluded,) = sorted(set(range(m)) - allowed)
        return f"{var.name} != {values[excluded]}"
    return f"{var.name} IN {{{', '.join(values[j] for j in chosen)}}}"


def _sql_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _sql_value(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


def _sql_atom(var, allowed: frozenset[int]) -> str:
    values = var.values
    m = len(values)
    chosen = sorted(allowed)
    if len(chosen) == 1:
        return f"{_sql_ident(var.name)} = {_sql_value(values[chosen[0]])}"
    if len(chosen) == m - 1 and m > 2:
        (excluded,) = sorted(set(range(m)) - allowed)
        return f"{_sql_ident(var.name)} <> {_sql_value(values[excluded])}"
    rendered = ", ".join(_sql_value(values[j]) for j in chosen)
    return f"{_sql_ident(var.name)} IN ({rendered})"


def emit_query(cnf: Cnf, dialect: str = "human") -> str:
    """Render the theory as a readable selection condition.

    The human dialect writes `var = v`, `var != v` (when only one value is
    excluded), or `var IN {...}`; sql-where writes the equivalent SQL boolean
    expression. Clauses join with AND, atoms within a clause with OR.
    """
    if dialect not in ("human", "sql-where"):
        raise PutputError(f"unknown dialect {dialect!r}")
    sql = dialect == "sql-where"
    if cnf.is_true:
        return "1=1" if sql else "TRUE"
    if cnf.is_false:
        return "1=0" if sql else "FALSE"
    render = _sql_atom if sql else _human_atom
    parts = []
    for clause in cnf.clauses:
        atoms = [render(cnf.schema.variables[var], allowed) for var, allowed in clause.atoms]
        parts.append(atoms[0] if len(atoms) == 1 else "(" + " OR ".join(atoms) + ")")
    return " AND ".join(parts)


def write_cnf(cnf: Cnf, path, schema_ref: str):
    """One clause per line under the format header; ``schema_ref`` names the
    schema sidecar (relative to the written file) that gives the atoms meaning."""
    lines = [CNF_HEADER, f"schema {schema_ref}"]
    for clause in cnf.clauses:
        if clause.is_bottom:
            lines.append("unsat")
            continue
        atoms = []
        for var, allowed in clause.atoms:
            variable = cnf.schema.variables[var]
            atoms.append(
                f"{variable.name}∈{{{','.join(variable.values[j] for j in sorted(allowed))}}}"
            )
        lines.append(" | ".join(atoms))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_ATOM_RE = re.compile(r"^(.*?)∈\{(.*)\}$")


def read_cnf(path, schema: Schema | None = None) -> Cnf:
    """Parse a theory file; the schema comes from the file's sidecar reference
    unless one is passed in directly."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != CNF_HEADER:
        raise FormatError(path, 1, f"expected header {CNF_HEADER!r}")
    body = raw[1:]
    line_no = 1
    clauses: list[Clause] = []
    seen_schema_line = False
    for offset, line in enumerate(body, start=2):
        line_no = offset
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if text.startswith("schema "):
            if seen_schema_line:
                raise FormatError(path, line_no, "duplicate schema reference")
            seen_schema_line = True
            ref = text[len("schema "):].strip()
            if schema is None:
                sidecar = os.path.join(os.path.dirname(os.fspath(path)) or ".", ref)
                if not os.path.exists(sidecar):
                    raise FormatError(path, line_no, f"schema sidecar {ref!r} not found")
                schema = load_schema(sidecar)
            continue
        if schema is None:
            raise FormatError(path, line_no, "clause appears before any schema reference")
        if text == "unsat":
            clauses.append(Clause(()))
            continue
        mapping: dict[int, frozenset[int]] = {}
        for atom_text in text.split(" | "):
            match = _ATOM_RE.match(atom_text.strip())
            if not match:
                raise FormatError(path, line_no, f"unreadable atom {atom_text.strip()!r}")
            name, value_text = match.group(1), match.group(2)
            try:
                var = schema.index_of(name)
            except SchemaError as exc:
                raise FormatError(path, line_no, str(exc)) from None
            variable = schema.variables[var]
            allowed = set()
            for v in value_text.split(","):
                if v not in variable.values:
                    raise FormatError(
                        path, line_no, f"value {v!r} not in schema for variable {name!r}"
                    )
                allowed.add(variable.values.index(v))
            prior = mapping.get(var, frozenset())
            mapping[var] = prior | frozenset(allowed)
        clauses.append(Clause.of(mapping))
    if schema is None:
        raise FormatError(path, line_no, "no schema reference and none supplied")
    return Cnf(schema, tuple(clauses))
