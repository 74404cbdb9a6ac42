"""Set-overlap scoring of a predicted row set against a target row set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError

__all__ = ["EvalReport", "score", "f1_from_counts", "f1_masks"]


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """2TP / (2TP + FP + FN); two empty sets count as perfect agreement."""
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2 * tp / denom


def f1_masks(predicted: np.ndarray, target: np.ndarray) -> float:
    tp = int(np.count_nonzero(predicted & target))
    fp = int(np.count_nonzero(predicted & ~target))
    fn = int(np.count_nonzero(~predicted & target))
    return f1_from_counts(tp, fp, fn)


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        return f1_from_counts(self.tp, self.fp, self.fn)

    def to_text(self) -> str:
        """Key:value block with a stable key order."""
        return (
            f"tp: {self.tp}\n"
            f"fp: {self.fp}\n"
            f"fn: {self.fn}\n"
            f"tn: {self.tn}\n"
            f"precision: {self.precision!r}\n"
            f"recall: {self.recall!r}\n"
            f"f1: {self.f1!r}\n"
        )


def score(predicted, target, universe_size: int) -> EvalReport:
    """Confusion counts of two row-index sets inside a universe of
    ``universe_size`` rows."""
    predicted = frozenset(predicted)
    target = frozenset(target)
    for name, s in (("predicted", predicted), ("target", target)):
        for i in s:
            if not 0 <= i < universe_size:
                raise SchemaError(f"{name} set index {i} outside universe of {universe_size}")
    tp = len(predicted & target)
    fp = len(predicted - target)
    fn = len(target - predicted)
    tn = universe_size - tp - fp - fn
    return EvalReport(tp, fp, fn, tn)
