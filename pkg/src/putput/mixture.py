"""Baseline density model: an EM-trained mixture of fully factorized
categorical components, compiled into a circuit the rest of the toolkit can
prune and read theories out of. Also the import path for circuits learned
elsewhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .circuits import InputNode, ProbCircuit, ProductNode, SumNode, validate
from .data import Database, Schema, boolean_schema
from .errors import CircuitStructureError, PutputError
from .io import read_pc

__all__ = ["MixtureConfig", "learn_mixture", "import_circuit", "CategoricalMixture"]


@dataclass(frozen=True)
class MixtureConfig:
    seed: int
    k: int = 8
    em_iters: int = 50
    smooth: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise PutputError(f"component count must be at least 1, got {self.k!r}")
        if self.em_iters < 1:
            raise PutputError(f"EM needs at least one iteration, got {self.em_iters!r}")
        if not self.smooth > 0:
            raise PutputError(f"smoothing pseudo-count must be positive, got {self.smooth!r}")
        if not isinstance(self.seed, (int, np.integer)):
            raise PutputError(f"seed must be an integer, got {self.seed!r}")


def _em_fit(values: np.ndarray, widths, cfg: MixtureConfig):
    """EM over rows of value indices.

    Returns component priors, one per-variable (k x width) table each, and the
    per-iteration penalized objective trace. The smoothing pseudo-count acts
    as a Dirichlet prior, so the penalized objective is what each iteration
    is guaranteed not to decrease.
    """
    n, d = values.shape
    k = min(cfg.k, n)
    if k < cfg.k:
        warnings.warn(
            f"component count {cfg.k} exceeds the {n} training examples; using k={k}",
            stacklevel=3,
        )
    s = float(cfg.smooth)
    rng = np.random.default_rng(cfg.seed)

    onehots = [np.equal.outer(values[:, j], np.arange(widths[j])).astype(float) for j in range(d)]
    resp = rng.random((n, k))
    resp /= resp.sum(axis=1, keepdims=True)

    trace: list[float] = []
    prev = -np.inf
    phi = np.full(k, 1.0 / k)
    tables: list[np.ndarray] = []
    for _ in range(cfg.em_iters):
        weight = resp.sum(axis=0)
        phi = (weight + s) / (n + k * s)
        tables = [
            (resp.T @ onehots[j] + s) / (weight[:, None] + widths[j] * s) for j in range(d)
        ]
        logp = np.log(phi)[None, :].repeat(n, axis=0)
        for j in range(d):
            logp += np.log(tables[j])[:, values[:, j]].T
        top = logp.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
        penalty = s * (np.log(phi).sum() + sum(np.log(t).sum() for t in tables))
        objective = float(lse.sum() + penalty)
        assert objective >= prev - 1e-7 * max(1.0, abs(prev)), "EM objective decreased"
        prev = objective
        trace.append(objective)
        resp = np.exp(logp - lse[:, None])
    return phi, tables, trace


def _compile(schema: Schema, phi: np.ndarray, tables) -> ProbCircuit:
    """Arena layout: shared literals, shared per-value products, one sum per
    (component, variable), one product per component, a root sum on top."""
    nodes: list = []
    pos_ids, neg_ids = {}, {}
    for bit in range(schema.num_bits):
        pos_ids[bit] = len(nodes)
        nodes.append(InputNode(bit, True))
        neg_ids[bit] = len(nodes)
        nodes.append(InputNode(bit, False))

    value_ids: list[list[int]] = []
    for var, block in zip(schema.variables, schema.blocks):
        per_value = []
        if var.kind == "boolean":
            for j in range(2):
                per_value.append(len(nodes))
                nodes.append(ProductNode((pos_ids[block[0]] if j == 1 else neg_ids[block[0]],)))
        else:
            for j in range(len(var.values)):
                children = [pos_ids[block[j]]]
                children.extend(neg_ids[b] for i, b in enumerate(block) if i != j)
                per_value.append(len(nodes))
                nodes.append(ProductNode(tuple(children)))
        value_ids.append(per_value)

    k = len(phi)
    component_ids = []
    for c in range(k):
        var_sums = []
        for j in range(len(schema.variables)):
            weights = tuple(float(w) for w in tables[j][c])
            var_sums.append(len(nodes))
            nodes.append(SumNode(tuple(value_ids[j]), weights))
        component_ids.append(len(nodes))
        nodes.append(ProductNode(tuple(var_sums)))

    root = len(nodes)
    nodes.append(SumNode(tuple(component_ids), tuple(float(w) for w in phi)))
    pc = ProbCircuit(tuple(nodes), root)
    assert not validate(pc), "compiled mixture failed structural validation"
    return pc


def learn_mixture(db: Database, positives, cfg: MixtureConfig) -> ProbCircuit:
    """Fit the mixture on the given database rows and compile it.

    ``positives`` are row indices into ``db``. Smoothing keeps every learned
    weight strictly positive, so the compiled circuit's support is decided
    entirely by structure until something prunes it.
    """
    index = sorted(set(int(i) for i in positives))
    if not index:
        raise PutputError("cannot learn from an empty example set")
    if index[0] < 0 or index[-1] >= len(db):
        raise PutputError(f"positive index outside the database's {len(db)} rows")
    lookup = [{val: j for j, val in enumerate(var.values)} for var in db.schema.variables]
    values = np.array(
        [[lookup[j][cell] for j, cell in enumerate(db.rows[i])] for i in index], dtype=np.int64
    )
    widths = tuple(len(var.values) for var in db.schema.variables)
    phi, tables, _ = _em_fit(values, widths, cfg)
    return _compile(db.schema, phi, tables)


def import_circuit(path) -> ProbCircuit:
    """Load an externally produced circuit file and insist it validates."""
    pc = read_pc(path)
    problems = validate(pc)
    if problems:
        summary = "; ".join(f"node {v.node}: {v.detail}" for v in problems[:5])
        more = "" if len(problems) <= 5 else f" (+{len(problems) - 5} more)"
        raise CircuitStructureError(f"{path}: circuit fails validation: {summary}{more}")
    return pc


class CategoricalMixture(BaseEstimator):
    """Density estimator over one-hot boolean rows.

    Rows of ``X`` are 0/1 vectors. Without an explicit schema every column is
    treated as an independent boolean variable; passing a schema groups
    columns into one-hot blocks so per-variable distributions are categorical.
    """

    def __init__(self, k=8, em_iters=50, smooth=1.0, seed=0, schema=None):
        self.k = k
        self.em_iters = em_iters
        self.smooth = smooth
        self.seed = seed
        self.schema = schema

    def fit(self, X, y=None):
        X = check_array(X, dtype=None)
        X = np.asarray(X).astype(bool)
        schema = self.schema
        if schema is None:
            schema = boolean_schema([f"x{j}" for j in range(X.shape[1])])
        if X.shape[1] != schema.num_bits:
            raise PutputError(
                f"X has {X.shape[1]} columns but the schema describes {schema.num_bits} bits"
            )
        cfg = MixtureConfig(seed=self.seed, k=self.k, em_iters=self.em_iters, smooth=self.smooth)
        values = np.zeros((X.shape[0], len(schema.variables)), dtype=np.int64)
        for vi, (var, block) in enumerate(zip(schema.variables, schema.blocks)):
            if var.kind == "boolean":
                values[:, vi] = X[:, block[0]].astype(np.int64)
            else:
                bits = X[:, list(block)]
                if not np.all(bits.sum(axis=1) == 1):
                    raise PutputError(
                        f"rows are not one-hot within the block of variable {var.name!r}"
                    )
                values[:, vi] = bits.argmax(axis=1)
        widths = tuple(len(var.values) for var in schema.variables)
        k_eff = min(cfg.k, X.shape[0])
        phi, tables, trace = _em_fit(values, widths, cfg)
        self.schema_ = schema
        self.circuit_ = _compile(schema, phi, tables)
        self.weights_ = np.asarray(phi)
        self.objective_trace_ = tuple(trace)
        self.n_components_ = k_eff
        return self

    def score_samples(self, X):
        check_is_fitted(self, "circuit_")
        X = check_array(X, dtype=None)
        return self.circuit_.log_probs(np.asarray(X).astype(bool))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))
