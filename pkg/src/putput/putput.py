"""The two-step theory extraction pipeline and its threshold finder.

Step 1 searches one pruning method's scalar parameter for the circuit whose
support best matches the target rows. Step 2 then tears out individual input
edges as long as that score does not drop below the bound step 1 achieved.
The surviving circuit's logical shadow is distilled to a multi-valued CNF and
rendered as a query.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .circuits import LogicCircuit, ProbCircuit, Workspace, pc_to_logic
from .data import Database, boolean_schema, compute_target_log, save_schema
from .errors import ClauseBudgetError, ElbowNotFoundError, PipelineError, PutputError
from .io import write_lc, write_pc
from .metrics import EvalReport, f1_masks, score
from .mixture import MixtureConfig, learn_mixture
from .pruning import PruneParams, prune_flows, prune_threshold, prune_top_down, sum_edges
from .theory import (
    Cnf,
    DEFAULT_CLAUSE_BUDGET,
    emit_query,
    extract_cnf,
    incomprehensibility,
    write_cnf,
)

__all__ = [
    "ElbowResult",
    "elbow_threshold",
    "step1_search",
    "prune_input_nodes",
    "Step2Stats",
    "PipelineConfig",
    "PutputResult",
    "run_pipeline",
    "save_result",
    "PutputQuery",
]

_GRID_POINTS = 21
_RESOLUTION = 1e-3
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ElbowResult:
    """Chosen threshold plus the scan that produced it.

    ``cliff`` is the accepted candidate on the scanned scale (log-likelihood
    when ``log_space``); ``threshold`` sits strictly between the cliff and the
    next distinct likelihood, so selecting rows with likelihood >= threshold
    keeps exactly the rows strictly above the cliff. ``profile`` pairs every
    scanned candidate with its count of strictly-higher-likelihood rows.
    """

    threshold: float
    log_threshold: float
    cliff: float
    profile: tuple[tuple[float, int], ...]
    log_space: bool
    epsilon: float


def elbow_threshold(
    pc: ProbCircuit, db: Database, epsilon: float = 1e-5, log_space: bool = False
) -> ElbowResult:
    """Find the likelihood cutoff under which row counts fall off a cliff.

    Scans the distinct database likelihoods as candidates; a candidate t is
    accepted when the count drop just above t is under a quarter of the drop
    into t, while the drop after that stays above a quarter of its
    predecessor (both measured at ``epsilon`` spacing, with a zero denominator
    disqualifying the candidate). The highest accepted candidate wins. In
    ``log_space`` mode the same scan runs over log-likelihoods and epsilon is
    in nats, for circuits whose linear likelihoods underflow.
    """
    if len(db) == 0:
        raise PutputError("elbow scan needs a non-empty database")
    if not epsilon > 0:
        raise PutputError(f"epsilon must be positive, got {epsilon!r}")
    lp = pc.log_probs(db.matrix)
    vals = lp if log_space else np.exp(lp)
    order = np.sort(vals)
    candidates = np.unique(vals)

    def above(x: float) -> int:
        return len(order) - int(np.searchsorted(order, x, side="right"))

    accepted = []
    profile = []
    for t in candidates:
        t = float(t)
        profile.append((t, above(t)))
        d0 = above(t) - above(t - epsilon)
        d1 = above(t + epsilon) - above(t)
        if d0 == 0 or d1 == 0:
            continue
        d2 = above(t + 2 * epsilon) - above(t + epsilon)
        if d1 / d0 < 0.25 and d2 / d1 > 0.25:
            accepted.append(t)
    if not accepted:
        raise ElbowNotFoundError(
            "no candidate passed the knee ratio conditions; "
            "pick a threshold manually from the attached profile",
            profile,
        )
    cliff = max(accepted)
    idx = int(np.searchsorted(candidates, cliff))
    if idx + 1 < len(candidates):
        cut = (cliff + float(candidates[idx + 1])) / 2.0
    else:
        cut = cliff + epsilon
    if log_space:
        log_threshold = cut
        threshold = math.exp(cut)  # may underflow; log_threshold stays exact
    else:
        threshold = cut
        log_threshold = math.log(cut) if cut > 0 else float("-inf")
    return ElbowResult(threshold, log_threshold, cliff, tuple(profile), log_space, epsilon)


def _search_key(entry):
    f1, size, param = entry
    return (-f1, size, param)


def step1_search(
    pc: ProbCircuit, db: Database, target, method: str, threads: int | None = None
):
    """Pick the pruning parameter whose resulting circuit's support best
    matches the target rows.

    21 evenly spaced parameters cover the valid range, then golden-section
    refinement narrows the best point's bracket down to 1e-3. Comparisons are
    lexicographic: higher f1, then fewer nodes, then the smaller parameter.
    Returns (pruned circuit, parameter record, score report).
    """
    target = sorted(set(int(i) for i in target))
    if not target:
        raise PutputError("step-1 search needs a non-empty target set")
    if target[0] < 0 or target[-1] >= len(db):
        raise PutputError(f"target index outside the database's {len(db)} rows")
    x = db.matrix
    target_mask = np.zeros(len(db), dtype=bool)
    target_mask[target] = True
    flow_examples = x[target]

    if method == "threshold":
        weights = [w for node in pc.nodes for w in getattr(node, "weights", ())]
        hi = max(weights) if weights else 0.0
        prune = lambda a: prune_threshold(pc, a)
    elif method == "topdown":
        hi = 1.0
        prune = lambda f: prune_top_down(pc, f)
    elif method == "flows":
        hi = 1.0
        prune = lambda f: prune_flows(pc, flow_examples, f)
    else:
        raise PutputError(f"unknown pruning method {method!r}")
    if not pc.is_empty:
        pc.topo_order  # warm the shared cache before any thread pool touches it

    cache: dict[float, tuple[float, int, ProbCircuit]] = {}

    def assess(param: float):
        param = float(param)
        if param not in cache:
            pruned = prune(param)
            f1 = f1_masks(pruned.covered(x), target_mask)
            cache[param] = (f1, pruned.size, pruned)
        return cache[param]

    grid = [float(v) for v in np.linspace(0.0, hi, _GRID_POINTS)] if hi > 0 else [0.0]
    if threads and threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            pruned_list = list(pool.map(prune, grid))
        for param, pruned in zip(grid, pruned_list):
            f1 = f1_masks(pruned.covered(x), target_mask)
            cache[float(param)] = (f1, pruned.size, pruned)
    else:
        for param in grid:
            assess(param)

    best = min(grid, key=lambda p: _search_key((cache[p][0], cache[p][1], p)))
    i = grid.index(best)
    lo = grid[i - 1] if i > 0 else grid[i]
    hi_b = grid[i + 1] if i + 1 < len(grid) else grid[i]
    a, b = lo, hi_b
    while b - a > _RESOLUTION:
        c = b - (b - a) * _INVPHI
        d = a + (b - a) * _INVPHI
        fc, fd = assess(c), assess(d)
        if _search_key((fc[0], fc[1], c)) <= _search_key((fd[0], fd[1], d)):
            b = d
        else:
            a = c

    best = min(cache, key=lambda p: _search_key((cache[p][0], cache[p][1], p)))
    f1, size, circuit = cache[best]
    if method == "threshold":
        params = PruneParams("threshold", alpha=best)
    elif method == "topdown":
        params = PruneParams("topdown", fraction=best)
    else:
        params = PruneParams("flows", fraction=best, flow_source="target")
    covered_idx = [int(i) for i in np.flatnonzero(circuit.covered(x))]
    report = score(covered_idx, target, len(db))
    return circuit, params, report


@dataclass(frozen=True)
class Step2Stats:
    sweeps: int
    edges_removed: int
    lb: float
    size_before: int
    size_after: int


_DIRTY = object()  # incomprehensibility not measured since the last acceptance


def _workspace_incomp(ws: Workspace, schema, budget: int):
    """Incomprehensibility of the workspace's distilled theory, or None when
    the theory outgrows the clause budget and cannot be measured."""
    try:
        cnf = extract_cnf(pc_to_logic(ws.compact()), schema, budget)
    except ClauseBudgetError:
        return None
    return incomprehensibility(cnf)


def prune_input_nodes(
    pc: ProbCircuit,
    db: Database,
    target,
    strict: bool = False,
    clause_budget: int = DEFAULT_CLAUSE_BUDGET,
) -> tuple[ProbCircuit, Step2Stats]:
    """Remove input-node edges one at a time wherever the match score allows.

    The score floor ``lb`` is the circuit's f1 against the target, measured
    once up front and never revised. Sweeps visit input nodes by ascending id
    and their parents by ascending id; a removal that strictly improves f1 is
    always kept, and one that merely ties the floor is kept only when the
    resulting theory's incomprehensibility does not grow (with ``strict``,
    ties are rejected outright). Circuits whose theory exceeds
    ``clause_budget`` are too large to measure, so ties there fall back to
    the f1 rule alone. Sweeping repeats until the node count stops changing.
    """
    target = sorted(set(int(i) for i in target))
    x = db.matrix
    target_mask = np.zeros(len(db), dtype=bool)
    target_mask[target] = True
    if pc.is_empty:
        return pc, Step2Stats(0, 0, 1.0 if not target else 0.0, 0, 0)
    lb = f1_masks(pc.covered(x), target_mask)
    ws = Workspace.from_circuit(pc)
    size_before = pc.size
    sweeps = 0
    removed = 0
    current_incomp = _DIRTY
    while True:
        sweeps += 1
        nodes_at_start = len(ws.kind)
        for n in [i for i in ws.live_ids() if ws.kind[i] == "L"]:
            if n not in ws.kind:
                continue  # an earlier acceptance swept it away
            parents = [p for p in ws.live_ids() if n in ws.children[p]]
            for z in parents:
                if z not in ws.kind or n not in ws.kind or n not in ws.children[z]:
                    continue
                trial = ws.copy()
                trial.remove_edge(z, trial.children[z].index(n))
                trial.cleanup()
                f1 = f1_masks(trial.covered(x), target_mask)
                if f1 > lb:
                    accept = True
                    trial_incomp = _DIRTY
                elif not strict and f1 == lb:
                    if current_incomp is _DIRTY:
                        current_incomp = _workspace_incomp(ws, db.schema, clause_budget)
                    if current_incomp is None:
                        accept = True
                        trial_incomp = _DIRTY
                    else:
                        trial_incomp = _workspace_incomp(trial, db.schema, clause_budget)
                        accept = (
                            trial_incomp is not None
                            and trial_incomp <= current_incomp + 1e-12
                        )
                else:
                    accept = False
                if accept:
                    ws = trial
                    current_incomp = trial_incomp
                    removed += 1
        if len(ws.kind) == nodes_at_start:
            break
    out = ws.compact()
    return out, Step2Stats(sweeps, removed, lb, size_before, out.size)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    k: int = 8
    em_iters: int = 50
    smooth: float = 1.0
    method: str = "flows"
    epsilon: float = 1e-5
    threshold: float | None = None
    log_space: bool = False
    strict_guard: bool = False
    clause_budget: int = DEFAULT_CLAUSE_BUDGET
    threads: int = 1

    def __post_init__(self):
        if self.method not in ("threshold", "topdown", "flows"):
            raise PutputError(f"unknown pruning method {self.method!r}")
        if not self.epsilon > 0:
            raise PutputError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.threshold is not None and self.threshold < 0:
            raise PutputError(f"threshold must be non-negative, got {self.threshold!r}")
        if self.threads < 1:
            raise PutputError(f"thread bound must be at least 1, got {self.threads!r}")

    def mixture_config(self) -> MixtureConfig:
        return MixtureConfig(seed=self.seed, k=self.k, em_iters=self.em_iters, smooth=self.smooth)


@dataclass(frozen=True)
class PutputResult:
    """Everything the pipeline produced, ready for inspection or saving."""

    config: PipelineConfig
    schema: object
    size_learned: int
    threshold_source: str  # "elbow", "explicit", or "fallback-min"
    threshold: float
    log_threshold: float
    target: tuple[int, ...]
    step1_circuit: ProbCircuit
    step1_params: PruneParams
    step1_report: EvalReport
    lb: float
    final_circuit: ProbCircuit
    final_logic: LogicCircuit
    step2_report: EvalReport
    step2_stats: Step2Stats
    cnf_before: Cnf
    cnf: Cnf
    incomp_before: float
    incomp_after: float
    query: str

    def to_report_text(self) -> str:
        c = self.config
        lines = [
            "putput report v1",
            f"method: {c.method}",
            f"seed: {c.seed}",
            f"k: {c.k}",
            f"em_iters: {c.em_iters}",
            f"smooth: {c.smooth!r}",
            f"epsilon: {c.epsilon!r}",
            f"log_space: {str(c.log_space).lower()}",
            f"strict_guard: {str(c.strict_guard).lower()}",
            f"threshold_source: {self.threshold_source}",
            f"threshold: {self.threshold!r}",
            f"log_threshold: {self.log_threshold!r}",
            f"target_size: {len(self.target)}",
            f"size_learned: {self.size_learned}",
            f"size_step1: {self.step1_circuit.size}",
            f"size_final: {self.final_circuit.size}",
            f"prune: {self.step1_params.describe()}",
            f"lb: {self.lb!r}",
        ]
        for prefix, report in (("step1", self.step1_report), ("step2", self.step2_report)):
            for line in report.to_text().splitlines():
                lines.append(f"{prefix}_{line}")
        lines.extend(
            [
                f"sweeps: {self.step2_stats.sweeps}",
                f"edges_removed: {self.step2_stats.edges_removed}",
                f"clauses_before: {len(self.cnf_before)}",
                f"clauses: {len(self.cnf)}",
                f"incomprehensibility_before: {self.incomp_before:.5f}",
                f"incomprehensibility_after: {self.incomp_after:.5f}",
                f"query: {self.query}",
            ]
        )
        return "\n".join(lines) + "\n"


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except PutputError as exc:
        raise PipelineError(name, exc) from exc


def run_pipeline(db: Database, positives, config: PipelineConfig) -> PutputResult:
    """Learn, find the density cutoff, prune in two steps, distill the theory."""
    mixture = _stage("learn", learn_mixture, db, positives, config.mixture_config())

    if config.threshold is not None:
        source = "explicit"
        threshold = float(config.threshold)
        log_threshold = math.log(threshold) if threshold > 0 else float("-inf")
    else:
        try:
            found = elbow_threshold(mixture, db, config.epsilon, config.log_space)
            source = "elbow"
            threshold = found.threshold
            log_threshold = found.log_threshold
        except ElbowNotFoundError:
            # no cliff in the likelihood profile: fall back to covering the
            # whole database rather than aborting the run
            source = "fallback-min"
            log_threshold = float(np.min(mixture.log_probs(db.matrix)))
            threshold = math.exp(log_threshold)

    target = _stage("target", compute_target_log, mixture, db, log_threshold)
    if not target:
        raise PipelineError("target", PutputError("threshold leaves no target examples"))
    target = tuple(sorted(target))

    step1_circuit, params, report1 = _stage(
        "step1", step1_search, mixture, db, target, config.method, config.threads
    )
    final_circuit, stats = _stage(
        "step2", prune_input_nodes, step1_circuit, db, target,
        config.strict_guard, config.clause_budget,
    )
    covered_idx = [int(i) for i in np.flatnonzero(final_circuit.covered(db.matrix))]
    report2 = score(covered_idx, target, len(db))

    logic_before = _stage("theory", pc_to_logic, step1_circuit)
    final_logic = _stage("theory", pc_to_logic, final_circuit)
    cnf_before = _stage("theory", extract_cnf, logic_before, db.schema, config.clause_budget)
    cnf = _stage("theory", extract_cnf, final_logic, db.schema, config.clause_budget)
    incomp_before = _stage("metric", incomprehensibility, cnf_before)
    incomp_after = _stage("metric", incomprehensibility, cnf)
    query = _stage("emit", emit_query, cnf)

    return PutputResult(
        config=config,
        schema=db.schema,
        size_learned=mixture.size,
        threshold_source=source,
        threshold=threshold,
        log_threshold=log_threshold,
        target=target,
        step1_circuit=step1_circuit,
        step1_params=params,
        step1_report=report1,
        lb=stats.lb,
        final_circuit=final_circuit,
        final_logic=final_logic,
        step2_report=report2,
        step2_stats=stats,
        cnf_before=cnf_before,
        cnf=cnf,
        incomp_before=incomp_before,
        incomp_after=incomp_after,
        query=query,
    )


def save_result(result: PutputResult, outdir):
    """Write the result directory: both circuits, the logic circuit, the
    theory with its schema sidecar, and the plain-text report."""
    os.makedirs(outdir, exist_ok=True)
    write_pc(result.step1_circuit, os.path.join(outdir, "step1.pc"))
    write_pc(result.final_circuit, os.path.join(outdir, "final.pc"))
    write_lc(result.final_logic, os.path.join(outdir, "final.lc"))
    save_schema(result.schema, os.path.join(outdir, "schema.txt"))
    write_cnf(result.cnf, os.path.join(outdir, "theory.cnf"), "schema.txt")
    with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_report_text())


class PutputQuery(BaseEstimator):
    """Estimator facade over the whole pipeline for one-hot boolean rows.

    ``fit(X, y)`` treats rows with y != 0 as the known positives and every row
    as part of the catalog; duplicates collapse to one catalog row, counted as
    positive if any of its occurrences was. ``predict`` applies the extracted
    theory. The readable query ends up in ``query_``.
    """

    def __init__(
        self,
        k=8,
        em_iters=50,
        smooth=1.0,
        seed=0,
        method="flows",
        epsilon=1e-5,
        threshold=None,
        log_space=False,
        strict_guard=False,
        clause_budget=DEFAULT_CLAUSE_BUDGET,
        schema=None,
    ):
        self.k = k
        self.em_iters = em_iters
        self.smooth = smooth
        self.seed = seed
        self.method = method
        self.epsilon = epsilon
        self.threshold = threshold
        self.log_space = log_space
        self.strict_guard = strict_guard
        self.clause_budget = clause_budget
        self.schema = schema

    def fit(self, X, y):
        X = check_array(X, dtype=None)
        X = np.asarray(X).astype(bool)
        y = column_or_1d(y)
        if len(y) != X.shape[0]:
            raise PutputError(f"y has {len(y)} entries for {X.shape[0]} rows")
        schema = self.schema
        if schema is None:
            schema = boolean_schema([f"x{j}" for j in range(X.shape[1])])
        if X.shape[1] != schema.num_bits:
            raise PutputError(
                f"X has {X.shape[1]} columns but the schema describes {schema.num_bits} bits"
            )
        rows: list[tuple[str, ...]] = []
        seen: dict[tuple[str, ...], int] = {}
        positive_rows: set[int] = set()
        for i in range(X.shape[0]):
            row = schema.decode_row(X[i])
            if row not in seen:
                seen[row] = len(rows)
                rows.append(row)
            if y[i]:
                positive_rows.add(seen[row])
        if not positive_rows:
            raise PutputError("fit needs at least one positive row")
        db = Database(schema, tuple(rows))
        config = PipelineConfig(
            seed=self.seed,
            k=self.k,
            em_iters=self.em_iters,
            smooth=self.smooth,
            method=self.method,
            epsilon=self.epsilon,
            threshold=self.threshold,
            log_space=self.log_space,
            strict_guard=self.strict_guard,
            clause_budget=self.clause_budget,
        )
        self.result_ = run_pipeline(db, sorted(positive_rows), config)
        self.schema_ = schema
        self.cnf_ = self.result_.cnf
        self.query_ = self.result_.query
        return self

    def predict(self, X):
        check_is_fitted(self, "cnf_")
        X = check_array(X, dtype=None)
        return self.cnf_.covers_bits(np.asarray(X).astype(bool)).astype(int)

    def score(self, X, y):
        """Overlap f1 between the theory's selection and the rows y marks."""
        pred = self.predict(X).astype(bool)
        truth = column_or_1d(y).astype(bool)
        return f1_masks(pred, truth)
