"""Exception types shared across the toolkit.

Everything expected (bad input files, data without the looked-for structure,
budgets exceeded) derives from PutputError; the CLI maps those to exit code 2
and anything else to exit code 1.
"""

from __future__ import annotations


class PutputError(Exception):
    """Base class for every anticipated failure."""


class ScopeError(PutputError):
    """An assignment does not cover the variables a circuit references."""


class CircuitStructureError(PutputError):
    """A circuit arena cannot be evaluated (cycle, arity mismatch, missing root)."""


class FormatError(PutputError):
    """A text artifact failed to parse. Carries file and line for the message."""

    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class SchemaError(PutputError):
    """Catalog data does not fit its schema (ragged row, empty cell, unknown value)."""


class ElbowNotFoundError(PutputError):
    """No threshold satisfied the knee conditions.

    ``profile`` holds the full (candidate, count-above) table so a caller can
    pick a threshold manually.
    """

    def __init__(self, message: str, profile):
        self.profile = tuple(profile)
        super().__init__(message)


class ClauseBudgetError(PutputError):
    """CNF distillation exceeded its clause budget; prune the circuit further."""


class PipelineError(PutputError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}': {exc}")
