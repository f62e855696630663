"""Command-line front end: ingestion, weight derivation, auction runs, verification.

Exit codes are a stable contract: 0 success, 1 input problem, 2 empty
instance after filtering, 3 property failure. stdout carries only the report;
diagnostics and machine-readable error JSON go to stderr. All randomness
flows from --seed.
"""

import csv
import io
import json
import sys

import click

from .errors import (
    EmptyInstance,
    InstanceTooLarge,
    ParseError,
    PrivauctionError,
    ValidationError,
)
from .estimator import evaluate
from .instances import (
    ValueInterval,
    canonicalize,
    filter_assumption1,
    parse_database,
    parse_instance,
)
from .mechanism import fair_inner_product
from .optimal import brute_force_opt, fractional_optimum
from .predictors import FeatureSet, WeightSpec, build_instance, load_feature_csv
from .verify import SweepConfig, default_threads, run_approximation_sweep, run_truthfulness_sweep

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_EMPTY = 2
EXIT_PROPERTY = 3


def _emit_json(data: dict) -> None:
    click.echo(json.dumps(data, sort_keys=True, indent=2))


def _emit_csv(rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    click.echo(buffer.getvalue(), nl=False)


def _fail(code: int, error: Exception) -> None:
    payload = {"error": type(error).__name__, "message": str(error)}
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(code)


def _classify(error: Exception) -> int:
    if isinstance(error, EmptyInstance):
        return EXIT_EMPTY
    return EXIT_INPUT


def _load_document(path: str) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def _prepare(document: dict, arithmetic: str):
    """Parse, filter, and canonicalize; returns everything needed for reports."""
    instance = parse_instance(document)
    database = parse_database(document, instance)
    if arithmetic == "rational":
        instance = instance.to_rational()
    filtered, removed = filter_assumption1(instance)
    canonical, perm = canonicalize(filtered)
    return instance, filtered, canonical, perm, removed, database


def _expand(values, removed: list[int], n_original: int, fill=0.0) -> list:
    """Scatter per-survivor values back into original index order."""
    kept = [i for i in range(n_original) if i not in set(removed)]
    out = [fill] * n_original
    for value, original in zip(values, kept):
        out[original] = value
    return out


@click.group()
def main() -> None:
    """Privacy auctions for weighted linear predictors."""


@main.command("run")
@click.argument("instance_path", type=click.Path())
@click.option("--compare-opt", is_flag=True, help="Also report the oracle, the relaxation, and their ratio.")
@click.option("--database", "use_database", is_flag=True, help="Evaluate the released estimator on the embedded database block.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the sampled estimate.")
@click.option("--output", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--arithmetic", type=click.Choice(["float", "rational"]), default="float", show_default=True)
def cmd_run(instance_path, compare_opt, use_database, seed, output, arithmetic):
    """Run the auction on an instance file and print the outcome."""
    try:
        document = _load_document(instance_path)
        original, filtered, canonical, perm, removed, database = _prepare(document, arithmetic)
        outcome = fair_inner_product(canonical, identity=perm)
    except PrivauctionError as exc:
        _fail(_classify(exc), exc)

    survivors_json = outcome.to_json(perm)  # survivor (filtered) index order
    n0 = original.n
    kept = [i for i in range(n0) if i not in set(removed)]
    report = {
        "O": sorted(kept[i] for i in survivors_json["O"]),
        "payments": _expand(survivors_json["payments"], removed, n0),
        "k": survivors_json["k"],
        "i_star": kept[survivors_json["i_star"]],
        "branch": survivors_json["branch"],
        "r": None if survivors_json["r"] is None else kept[survivors_json["r"]],
        "p_hat": survivors_json["p_hat"],
        "objective": survivors_json["objective"],
        "removed": removed,
        "dclef": {
            "x": _expand(survivors_json["dclef"]["x"], removed, n0, fill=0),
            "sigma": survivors_json["dclef"]["sigma"],
            "epsilons": _expand(survivors_json["dclef"]["epsilons"], removed, n0),
            "distortion": survivors_json["dclef"]["distortion"],
        },
    }

    try:
        if compare_opt:
            oracle = brute_force_opt(canonical)
            report["oracle"] = {
                "objective": float(oracle.objective),
                "x": _expand(perm.restore(oracle.x), removed, n0, fill=0),
                "payments": _expand(
                    [float(p) for p in perm.restore(oracle.payments)], removed, n0
                ),
            }
            try:
                fractional = fractional_optimum(canonical)
                report["fractional"] = {
                    "objective": float(fractional.objective),
                    "x_star": _expand(
                        [float(x) for x in perm.restore(fractional.x_star)], removed, n0
                    ),
                    "payments": _expand(
                        [float(p) for p in perm.restore(fractional.payments)], removed, n0
                    ),
                    "ell": fractional.ell,
                }
            except PrivauctionError as exc:
                report["fractional"] = {"error": type(exc).__name__, "message": str(exc)}
            mech_objective = float(outcome.objective)
            report["ratio"] = float(oracle.objective) / mech_objective
        if use_database:
            if database is None:
                raise ValidationError("instance file has no database block")
            survivor_db = database.subset(kept)
            canonical_db = perm.apply(survivor_db.entries)
            report["estimate"] = evaluate(outcome.dclef, canonical_db, seed)
            report["seed"] = seed
    except (InstanceTooLarge, ValidationError) as exc:
        _fail(EXIT_INPUT, exc)

    if output == "csv":
        rows = [("index", "weight", "unit_cost", "x", "payment", "epsilon")]
        for i in range(n0):
            rows.append(
                (
                    i,
                    f"{float(original.weights[i]):.12g}",
                    f"{float(original.unit_costs[i]):.12g}",
                    report["dclef"]["x"][i],
                    f"{float(report['payments'][i]):.12g}",
                    f"{float(report['dclef']['epsilons'][i]):.12g}",
                )
            )
        _emit_csv(rows)
    else:
        _emit_json(report)


@main.command("verify")
@click.argument("config_path", type=click.Path(), required=False)
@click.option("--mutate", default=None, help="Fault injection, e.g. payment-scale:0.9.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--instances", type=int, default=None, help="Override the instance count.")
@click.option("--arithmetic", type=click.Choice(["float", "rational"]), default=None, help="Override the config arithmetic mode.")
@click.option("--threads", type=int, default=None, help="Worker cap (default PRIVAUCTION_THREADS).")
@click.option("--skip-approximation", is_flag=True, help="Run only the truthfulness sweep.")
@click.option("--output", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def cmd_verify(config_path, mutate, seed, instances, arithmetic, threads, skip_approximation, output):
    """Run property sweeps; exit 0 only when every property holds everywhere."""
    try:
        data = _load_document(config_path) if config_path else {}
        if seed is not None:
            data["rng_seed"] = seed
        if instances is not None:
            data["instance_count"] = instances
        if arithmetic is not None:
            data["arithmetic_mode"] = arithmetic
        config = SweepConfig.from_json(data)
        threads = default_threads() if threads is None else threads
        truthfulness = run_truthfulness_sweep(config, mutation=mutate, threads=threads)
        reports = {"truthfulness": truthfulness.to_json()}
        approximation = None
        if not skip_approximation:
            approximation = run_approximation_sweep(config, threads=threads)
            reports["approximation"] = approximation.to_json()
    except PrivauctionError as exc:
        _fail(_classify(exc), exc)

    ok = truthfulness.ok and (approximation is None or approximation.ok)
    payload = {"ok": ok, "reports": reports}
    if output == "csv":
        rows = approximation.csv_rows() if approximation is not None else [("instance_id", "ratio", "branch")]
        _emit_csv(rows)
    else:
        _emit_json(payload)
    if not ok:
        witnesses = truthfulness.failures + (approximation.failures if approximation else [])
        click.echo(json.dumps({"witnesses": witnesses[:10]}, sort_keys=True), err=True)
        sys.exit(EXIT_PROPERTY)


@main.command("weights")
@click.argument("features_csv", type=click.Path())
@click.option("--query", default=None, help="Comma-separated query features.")
@click.option("--query-csv", type=click.Path(), default=None, help="Single-row CSV with the query features.")
@click.option("--method", type=click.Choice(["knn", "nadaraya-watson", "ridge", "kernel-regression"]), required=True)
@click.option("--k", type=int, default=None, help="Neighbor count for knn.")
@click.option("--kernel", type=click.Choice(["gaussian", "linear"]), default="gaussian", show_default=True)
@click.option("--bandwidth", type=float, default=1.0, show_default=True)
@click.option("--lam", type=float, default=None, help="Regularization strength for ridge / kernel regression.")
@click.option("--drop-tol", type=float, default=1e-12, show_default=True, help="Relative magnitude below which weights are dropped.")
@click.option("--id-column", is_flag=True, help="Treat the first CSV column as row ids.")
@click.option("--costs", default=None, help="Comma-separated unit costs, one per feature row.")
@click.option("--budget", type=float, default=None)
@click.option("--r-min", type=float, default=0.0, show_default=True)
@click.option("--r-max", type=float, default=1.0, show_default=True)
@click.option("--output", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def cmd_weights(features_csv, query, query_csv, method, k, kernel, bandwidth, lam,
                drop_tol, id_column, costs, budget, r_min, r_max, output):
    """Derive predictor weights from feature data; optionally emit a full instance."""
    try:
        _, matrix = load_feature_csv(features_csv, id_column=id_column)
        if (query is None) == (query_csv is None):
            raise ValidationError("provide exactly one of --query or --query-csv")
        if query is not None:
            query_vector = [float(part) for part in query.split(",")]
        else:
            _, query_matrix = load_feature_csv(query_csv, id_column=False)
            if query_matrix.shape[0] != 1:
                raise ValidationError("query CSV must contain exactly one row")
            query_vector = list(query_matrix[0])
        features = FeatureSet(matrix, query_vector)
        spec = WeightSpec(
            method=method, k=k, kernel=kernel, bandwidth=bandwidth, lam=lam, drop_tol=drop_tol
        )
        derived = spec.derive(features)
        report = derived.to_json()
        if (costs is None) != (budget is None):
            raise ValidationError("--costs and --budget must be given together")
        if costs is not None:
            cost_values = [float(part) for part in costs.split(",")]
            instance = build_instance(
                derived, cost_values, budget, ValueInterval(r_min, r_max)
            )
            report.update(instance.to_json())
    except ValueError as exc:
        _fail(EXIT_INPUT, ValidationError(str(exc)))
    except PrivauctionError as exc:
        _fail(_classify(exc), exc)

    if output == "csv":
        rows = [("index", "weight")]
        rows.extend((orig, f"{w:.12g}") for orig, w in zip(derived.kept, derived.weights))
        _emit_csv(rows)
    else:
        _emit_json(report)


@main.command("oracle")
@click.argument("instance_path", type=click.Path())
@click.option("--arithmetic", type=click.Choice(["float", "rational"]), default="float", show_default=True)
@click.option("--output", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def cmd_oracle(instance_path, arithmetic, output):
    """Exhaustive optimum of the filtered instance (desk scale only)."""
    try:
        document = _load_document(instance_path)
        original, filtered, canonical, perm, removed, _ = _prepare(document, arithmetic)
        oracle = brute_force_opt(canonical)
    except PrivauctionError as exc:
        _fail(_classify(exc), exc)
    n0 = original.n
    report = {
        "objective": float(oracle.objective),
        "x": _expand(perm.restore(oracle.x), removed, n0, fill=0),
        "payments": _expand([float(p) for p in perm.restore(oracle.payments)], removed, n0),
        "removed": removed,
    }
    if output == "csv":
        rows = [("index", "x", "payment")]
        rows.extend((i, report["x"][i], f"{report['payments'][i]:.12g}") for i in range(n0))
        _emit_csv(rows)
    else:
        _emit_json(report)


@main.command("fractional")
@click.argument("instance_path", type=click.Path())
@click.option("--arithmetic", type=click.Choice(["float", "rational"]), default="float", show_default=True)
@click.option("--output", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def cmd_fractional(instance_path, arithmetic, output):
    """Closed-form continuous optimum of the filtered instance."""
    try:
        document = _load_document(instance_path)
        original, filtered, canonical, perm, removed, _ = _prepare(document, arithmetic)
        fractional = fractional_optimum(canonical)
    except PrivauctionError as exc:
        _fail(_classify(exc), exc)
    n0 = original.n
    report = {
        "objective": float(fractional.objective),
        "x_star": _expand([float(x) for x in perm.restore(fractional.x_star)], removed, n0),
        "payments": _expand([float(p) for p in perm.restore(fractional.payments)], removed, n0),
        "ell": fractional.ell,
        "removed": removed,
    }
    if output == "csv":
        rows = [("index", "x_star", "payment")]
        rows.extend(
            (i, f"{report['x_star'][i]:.12g}", f"{report['payments'][i]:.12g}")
            for i in range(n0)
        )
        _emit_csv(rows)
    else:
        _emit_json(report)


if __name__ == "__main__":
    main()
