"""Circuit pruning and theory extraction for boolean-input probabilistic
circuits over multi-valued catalogs."""

from .circuits import (
    AndNode,
    InputNode,
    LogicCircuit,
    OrNode,
    ProbCircuit,
    ProductNode,
    SumNode,
    Violation,
    Workspace,
    pc_to_logic,
    simplify,
    to_formula,
    validate,
)
from .data import (
    Database,
    Schema,
    Variable,
    boolean_schema,
    compute_target,
    compute_target_log,
    load_csv,
    load_example_set,
    load_schema,
    save_csv,
    save_example_set,
    save_schema,
)
from .errors import (
    CircuitStructureError,
    ClauseBudgetError,
    ElbowNotFoundError,
    FormatError,
    PipelineError,
    PutputError,
    SchemaError,
    ScopeError,
)
from .io import (
    LC_HEADER,
    PC_HEADER,
    dumps_lc,
    dumps_pc,
    read_any_circuit,
    read_lc,
    read_matrix,
    read_pc,
    write_lc,
    write_matrix,
    write_pc,
)
from .metrics import EvalReport, f1_from_counts, f1_masks, score
from .mixture import CategoricalMixture, MixtureConfig, import_circuit, learn_mixture
from .pruning import (
    PruneParams,
    apply_prune,
    flow_scores,
    prune_flows,
    prune_threshold,
    prune_top_down,
    sum_edges,
    top_down_scores,
)
from .putput import (
    ElbowResult,
    PipelineConfig,
    PutputQuery,
    PutputResult,
    Step2Stats,
    elbow_threshold,
    prune_input_nodes,
    run_pipeline,
    save_result,
    step1_search,
)
from .theory import (
    CNF_HEADER,
    DEFAULT_CLAUSE_BUDGET,
    Clause,
    Cnf,
    clause_entropy,
    clause_incomprehensibility,
    emit_query,
    extract_cnf,
    incomprehensibility,
    read_cnf,
    write_cnf,
)

__version__ = "0.1.0"
