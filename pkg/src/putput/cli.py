"""Command line entry point.

Every subcommand is a thin wrapper over one library operation. Expected
failures (bad files, parameters out of range, budgets) exit with code 2 and a
single `error:` line on stderr; anything unexpected exits 1. All randomness
comes from the --seed flag, so identical invocations write identical bytes.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import click

from .data import load_csv, load_example_set, load_schema, save_schema
from .errors import ElbowNotFoundError, PipelineError, PutputError
from .io import LC_HEADER, PC_HEADER, read_lc, write_matrix, write_pc
from .metrics import score
from .mixture import MixtureConfig, import_circuit, learn_mixture
from .pruning import PruneParams, apply_prune
from .putput import PipelineConfig, elbow_threshold, run_pipeline, save_result
from .theory import CNF_HEADER, emit_query, incomprehensibility, read_cnf

_DEFAULT_THREADS = os.cpu_count() or 1


def _one_line(exc: Exception) -> str:
    return " ".join(str(exc).split())


@contextmanager
def _guard():
    try:
        yield
    except PutputError as exc:
        click.echo(f"error: {_one_line(exc)}", err=True)
        raise SystemExit(2)
    except (click.ClickException, click.Abort):
        raise
    except Exception as exc:
        click.echo(f"internal error: {type(exc).__name__}: {_one_line(exc)}", err=True)
        raise SystemExit(1)


def _load(fn, *args, **kwargs):
    """Run a loader; every failure reads as a stage-named expected error."""
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except PutputError as exc:
        raise PipelineError("load", exc) from exc
    except OSError as exc:
        raise PipelineError("load", PutputError(_one_line(exc))) from exc


def _load_db(csv_path, schema_path):
    schema = _load(load_schema, schema_path) if schema_path else None
    return _load(load_csv, csv_path, schema)


@click.group()
def main():
    """Prune probabilistic circuits and read database queries out of them."""


@main.command()
@click.argument("csv", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None,
              help="Explicit schema sidecar instead of inferring one from the data.")
@click.option("-o", "--out", required=True, type=click.Path(),
              help="Directory for schema.txt and matrix.txt.")
def binarize(csv, schema_path, out):
    """One-hot encode a catalog CSV."""
    with _guard():
        db = _load_db(csv, schema_path)
        os.makedirs(out, exist_ok=True)
        save_schema(db.schema, os.path.join(out, "schema.txt"))
        write_matrix(db.matrix, os.path.join(out, "matrix.txt"))
        click.echo(f"{len(db)} rows, {db.schema.num_bits} bits -> {out}")


@main.command()
@click.argument("csv", type=click.Path())
@click.argument("positives", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None)
@click.option("--k", default=8, show_default=True, help="Mixture components.")
@click.option("--em-iters", default=50, show_default=True)
@click.option("--smooth", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path())
def learn(csv, positives, schema_path, k, em_iters, smooth, seed, out):
    """Fit the mixture model on the positive rows and write the circuit."""
    with _guard():
        db = _load_db(csv, schema_path)
        pos = _load(load_example_set, positives, db)
        cfg = MixtureConfig(seed=seed, k=k, em_iters=em_iters, smooth=smooth)
        pc = learn_mixture(db, pos, cfg)
        write_pc(pc, out)
        click.echo(f"{pc.size} nodes -> {out}")


@main.command()
@click.argument("circuit", type=click.Path())
@click.argument("csv", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None)
@click.option("--epsilon", default=1e-5, show_default=True)
@click.option("--log-space", is_flag=True,
              help="Scan log-likelihoods with epsilon in nats.")
def elbow(circuit, csv, schema_path, epsilon, log_space):
    """Find the likelihood threshold under a cliff in the density profile."""
    with _guard():
        pc = _load(import_circuit, circuit)
        db = _load_db(csv, schema_path)
        try:
            found = elbow_threshold(pc, db, epsilon, log_space)
        except ElbowNotFoundError as exc:
            for value, count in exc.profile:
                click.echo(f"profile {value!r} {count}")
            raise
        click.echo(f"threshold {found.threshold!r}")
        click.echo(f"log_threshold {found.log_threshold!r}")
        click.echo(f"cliff {found.cliff!r}")
        for value, count in found.profile:
            click.echo(f"profile {value!r} {count}")


@main.command()
@click.argument("circuit", type=click.Path())
@click.option("--method", required=True, type=click.Choice(["threshold", "topdown", "flows"]))
@click.option("--alpha", type=float, default=None, help="Weight cutoff (threshold method).")
@click.option("--fraction", type=float, default=None,
              help="Share of sum edges to drop (topdown and flows).")
@click.option("--flow-set", type=click.Path(), default=None,
              help="Example-set file whose rows drive the flows method.")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Catalog the flow set and target refer to.")
@click.option("--target", "target_path", type=click.Path(), default=None,
              help="Example-set file to score the pruned circuit against.")
@click.option("--schema", "schema_path", type=click.Path(), default=None)
@click.option("-o", "--out", required=True, type=click.Path())
def prune(circuit, method, alpha, fraction, flow_set, csv_path, target_path, schema_path, out):
    """Apply one pruning method at one parameter value."""
    with _guard():
        pc = _load(import_circuit, circuit)
        db = _load_db(csv_path, schema_path) if csv_path else None
        flow_source = None
        flow_examples = None
        if method == "flows":
            if db is None:
                raise PutputError("flows pruning needs --csv for its example rows")
            if flow_set:
                rows = sorted(_load(load_example_set, flow_set, db))
                flow_source = flow_set
            elif target_path:
                rows = sorted(_load(load_example_set, target_path, db))
                flow_source = "target"
            else:
                raise PutputError("flows pruning needs --flow-set or --target")
            flow_examples = db.matrix[rows]
        params = PruneParams(method, alpha=alpha, fraction=fraction, flow_source=flow_source)
        pruned = apply_prune(pc, params, flow_examples)
        write_pc(pruned, out)
        click.echo(f"{pc.size} -> {pruned.size} nodes ({params.describe()})")
        if db is not None and target_path:
            target = _load(load_example_set, target_path, db)
            covered = [int(i) for i in pruned.covered(db.matrix).nonzero()[0]]
            click.echo(score(covered, target, len(db)).to_text(), nl=False)


@main.command()
@click.argument("csv", type=click.Path())
@click.argument("positives", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None)
@click.option("--method", default="flows", show_default=True,
              type=click.Choice(["threshold", "topdown", "flows"]))
@click.option("--k", default=8, show_default=True)
@click.option("--em-iters", default=50, show_default=True)
@click.option("--smooth", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epsilon", default=1e-5, show_default=True)
@click.option("--threshold", type=float, default=None,
              help="Skip the elbow scan and use this likelihood cutoff.")
@click.option("--log-space", is_flag=True)
@click.option("--strict-guard", is_flag=True,
              help="Keep step-2 removals only when they strictly improve f1.")
@click.option("--clause-budget", default=10_000, show_default=True)
@click.option("--threads", default=_DEFAULT_THREADS, show_default=False,
              help="Parallelism bound for the step-1 parameter search.")
@click.option("-o", "--out", required=True, type=click.Path())
def putput(csv, positives, schema_path, method, k, em_iters, smooth, seed, epsilon,
           threshold, log_space, strict_guard, clause_budget, threads, out):
    """Run the full pipeline and write the result directory."""
    with _guard():
        db = _load_db(csv, schema_path)
        pos = _load(load_example_set, positives, db)
        config = PipelineConfig(
            seed=seed,
            k=k,
            em_iters=em_iters,
            smooth=smooth,
            method=method,
            epsilon=epsilon,
            threshold=threshold,
            log_space=log_space,
            strict_guard=strict_guard,
            clause_budget=clause_budget,
            threads=threads,
        )
        result = run_pipeline(db, pos, config)
        save_result(result, out)
        click.echo(f"target {len(result.target)} of {len(db)} rows")
        click.echo(
            f"size {result.size_learned} -> {result.step1_circuit.size}"
            f" -> {result.final_circuit.size}"
        )
        click.echo(f"f1 {result.step1_report.f1!r} -> {result.step2_report.f1!r}")
        click.echo(
            f"incomprehensibility {result.incomp_before:.5f} -> {result.incomp_after:.5f}"
        )
        click.echo(f"query: {result.query}")


def _sniff_header(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.readline().strip()


@main.command(name="score")
@click.argument("artifact", type=click.Path())
@click.argument("csv", type=click.Path())
@click.argument("target", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None)
def score_cmd(artifact, csv, target, schema_path):
    """Score a circuit or theory file's selection against a target set."""
    with _guard():
        db = _load_db(csv, schema_path)
        header = _load(_sniff_header, artifact)
        if header == PC_HEADER:
            predicted_mask = _load(import_circuit, artifact).covered(db.matrix)
        elif header == LC_HEADER:
            predicted_mask = _load(read_lc, artifact).evaluate_many(db.matrix)
        elif header == CNF_HEADER:
            cnf = _load(read_cnf, artifact, db.schema)
            predicted_mask = cnf.covers(db)
        else:
            raise PutputError(f"{artifact}: unrecognized artifact header {header!r}")
        target_rows = _load(load_example_set, target, db)
        predicted = [int(i) for i in predicted_mask.nonzero()[0]]
        click.echo(score(predicted, target_rows, len(db)).to_text(), nl=False)


@main.command()
@click.argument("cnf", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None)
def incomp(cnf, schema_path):
    """Print a theory file's incomprehensibility."""
    with _guard():
        schema = _load(load_schema, schema_path) if schema_path else None
        theory = _load(read_cnf, cnf, schema)
        click.echo(f"{incomprehensibility(theory):.5f}")


@main.command()
@click.argument("cnf", type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(), default=None)
@click.option("--dialect", default="human", show_default=True,
              type=click.Choice(["human", "sql-where"]))
def emit(cnf, schema_path, dialect):
    """Print a theory file as a query."""
    with _guard():
        schema = _load(load_schema, schema_path) if schema_path else None
        theory = _load(read_cnf, cnf, schema)
        click.echo(emit_query(theory, dialect))


if __name__ == "__main__":
    main()
