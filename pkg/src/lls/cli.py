"""Command-line pipeline: generate, estimate, moments, evaluate.

Every command writes its outputs plus a run manifest (configuration,
sha256 digests of inputs and outputs, library version) so a run can be
audited and reproduced bit for bit.  Exit codes: 0 success, 2 usage,
3 data/validation error, 4 model not applicable, 5 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DataError,
    LLSError,
    ModelNotApplicableError,
    NumericalError,
)
from .frequency import (
    FrequencyTable,
    build_moment_matrix,
    frequency,
    load_dataset,
    matrix_from_csv,
    matrix_to_csv,
    save_dataset,
)
from .oracle import (
    exact_moment_matrix,
    generate_model,
    model_from_json,
    principal_angles,
    sample_dataset,
    save_model,
)
from .plane import Basis, estimate_plane
from .schema import (
    Schema,
    moment_indices_up_to,
    parse_pattern,
    pattern_to_string,
)
from .solver import (
    ConditionalMomentTable,
    assemble_system,
    load_moment_csv,
    moment_relation_residual,
    solve_system,
    subpattern_closure,
)


class UsageError(LLSError):
    """Flag combination that argparse cannot check on its own."""


# -- small helpers ----------------------------------------------------------------


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: Path, command: str, config: dict, inputs, outputs) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "version": __version__,
    }
    path = out_dir / f"manifest-{command}.json"
    _write_json(path, manifest)
    return path


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _levels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"levels must be comma-separated integers, got {text!r}"
        ) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _load_span(path) -> Basis:
    """Read a basis from either a basis JSON or a synthetic-model JSON."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from None
    if isinstance(obj, dict) and "support" in obj:
        model = model_from_json(obj)
        return Basis(model.schema, model.basis)
    return Basis.from_json(obj)


def _infer_schema(path) -> Schema:
    """Schema from a dataset file: per-column maxima of the level codes."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    if len(lines) < 2:
        raise DataError(f"{path}: no observations")
    n_cols = len(lines[0].split(","))
    top = [0] * n_cols
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != n_cols:
            raise DataError(f"{path}:{i}: expected {n_cols} fields, got {len(parts)}")
        for j, part in enumerate(parts):
            try:
                top[j] = max(top[j], int(part))
            except ValueError:
                raise DataError(f"{path}:{i}: invalid integer {part!r}") from None
    low = [j for j, t in enumerate(top) if t < 2]
    if low:
        raise DataError(
            f"{path}: variable {low[0] + 1} never takes a second level; "
            "pass --levels explicitly if its range is known"
        )
    return Schema(tuple(top))


# -- commands ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = _out_dir(args)
    schema = Schema(args.levels)
    model = generate_model(
        schema,
        args.k,
        args.support,
        args.seed,
        basis_concentration=args.basis_concentration,
    )
    # a fixed offset keeps the data stream independent of the model stream
    data = sample_dataset(model, args.n, seed=args.seed + 1)
    model_path = out / args.model_name
    data_path = out / args.data_name
    save_model(model, model_path)
    save_dataset(data, data_path)
    outputs = [model_path, data_path]
    print(
        f"model {model_path}: J={schema.n_variables} |L|={schema.total_cells} "
        f"K={args.k} S={args.support}"
    )
    print(f"dataset {data_path}: n={args.n} rows")
    if args.exact_moments:
        moments_path = out / args.exact_moments
        exact = exact_moment_matrix(model, max_col_order=args.max_col_order)
        matrix_to_csv(exact.matrix, moments_path)
        outputs.append(moments_path)
        print(f"exact moment matrix: {moments_path}")
    _write_manifest(
        out,
        "generate",
        {
            "levels": list(args.levels),
            "k": args.k,
            "support": args.support,
            "n": args.n,
            "seed": args.seed,
            "basisConcentration": args.basis_concentration,
            "exactMoments": args.exact_moments,
            "maxColOrder": args.max_col_order,
        },
        [],
        outputs,
    )
    return 0


def cmd_estimate(args) -> int:
    out = _out_dir(args)
    if args.from_moments:
        matrix = matrix_from_csv(args.from_moments, sample_size=args.sample_size)
        inputs = [args.from_moments]
        source = f"moment matrix {args.from_moments}"
    else:
        schema = Schema(args.levels) if args.levels else _infer_schema(args.data)
        if not 1 <= args.max_col_order <= schema.n_variables - 1:
            raise UsageError(
                f"--max-col-order must be in [1, {schema.n_variables - 1}] "
                f"for {schema.n_variables} variables"
            )
        dataset = load_dataset(args.data, schema)
        matrix = build_moment_matrix(dataset, max_col_order=args.max_col_order)
        inputs = [args.data]
        source = f"dataset {args.data} (n={dataset.n})"

    basis, report = estimate_plane(
        matrix,
        rank_threshold_factor=args.rank_threshold_factor,
        eig_threshold_factor=args.eig_threshold_factor,
        k_override=args.k_override,
        column_weighting=args.column_weighting,
    )
    basis_path = out / args.basis_name
    report_path = out / args.report_name
    basis.save(basis_path)
    _write_json(report_path, report.to_json())

    svals = " ".join(f"{s:.6g}" for s in report.singular_values[:6])
    eigs = " ".join(f"{g:.6g}" for g in report.eigenvalues[:6])
    print(f"input: {source}")
    print(f"plane dimension K = {report.k} (rank estimate {report.k0})")
    print(f"singular values: {svals}")
    print(f"scatter eigenvalues: {eigs}")
    print(
        f"columns: {report.n_columns} kept, "
        f"{report.n_columns_dropped_completion + report.n_columns_dropped_normalization}"
        f" dropped; cells imputed: {report.n_cells_imputed}"
    )
    print(f"wrote {basis_path} and {report_path}")
    _write_manifest(
        out,
        "estimate",
        {
            "fromMoments": str(args.from_moments) if args.from_moments else None,
            "data": str(args.data) if args.data else None,
            "levels": list(args.levels) if args.levels else None,
            "maxColOrder": args.max_col_order,
            "rankThresholdFactor": args.rank_threshold_factor,
            "eigThresholdFactor": args.eig_threshold_factor,
            "kOverride": args.k_override,
            "columnWeighting": args.column_weighting,
            "sampleSize": args.sample_size,
        },
        inputs,
        [basis_path, report_path],
    )
    return 0


def _read_targets(args, schema: Schema, dataset):
    if args.targets == "observed":
        rows = sorted({tuple(int(x) for x in row) for row in dataset.rows})
        if args.target_order >= schema.n_variables:
            return rows
        # Conditional moments of a pattern are only reachable when the
        # system extends a couple of strata past it, so targeting every
        # full response row buys nothing but size: condition on its
        # order-q sections instead.
        sections = set()
        for row in rows:
            for keep in combinations(range(schema.n_variables), args.target_order):
                pat = [0] * schema.n_variables
                for j in keep:
                    pat[j] = row[j]
                sections.add(tuple(pat))
        print(
            f"targets: {len(rows)} observed patterns -> "
            f"{len(sections)} order-{args.target_order} sections"
        )
        return sorted(sections)
    targets = []
    with open(args.targets, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            targets.append(parse_pattern(schema, line))
    if not targets:
        raise DataError(f"{args.targets}: no target patterns found")
    return targets


def cmd_moments(args) -> int:
    out = _out_dir(args)
    basis = Basis.load(args.basis)
    schema = basis.schema
    dataset = load_dataset(args.data, schema)
    requested = _read_targets(args, schema, dataset)

    kept, skipped = [], []
    for target in requested:
        (kept if frequency(dataset, target) > 0 else skipped).append(target)

    moments_path = out / args.moments_name
    report_path = out / args.report_name
    if kept:
        n_indices = len(moment_indices_up_to(basis.k, args.moment_order))
        pattern_limit = max(1, args.max_unknowns // n_indices)
        try:
            closure = subpattern_closure(schema, kept, limit=pattern_limit)
        except DataError as exc:
            raise DataError(
                f"{exc}; lower --target-order, raise --max-unknowns, or refit "
                f"the basis with --k-override to shrink the moment index set "
                f"({n_indices} indices per pattern at K={basis.k})"
            ) from exc
        entries = {pat: frequency(dataset, pat) for pat in closure}
        freqs = FrequencyTable(schema, entries, sample_size=dataset.n)
        system = assemble_system(
            basis, freqs, kept,
            moment_order=args.moment_order,
            max_unknowns=args.max_unknowns,
        )
        table = solve_system(system, anchor_weight=args.anchor_weight)
        table.save_csv(moments_path)
        residual = moment_relation_residual(basis, table)
        report = table.report_json()
        report["relationResidual"] = residual
        print(
            f"targets: {len(kept)} solved "
            f"({report['rowsReported']} determined moment rows, "
            f"{report['undetermined']} of {report['unknowns']} unknowns undetermined)"
        )
        print(f"relation residual: {residual:.3e}")
    else:
        with open(moments_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("pattern,momentIndex,h,conditionalMoment\n")
        report = {"rowsReported": 0}
        print("targets: none with positive frequency; empty table written")
    report["skippedTargets"] = [pattern_to_string(t) for t in skipped]
    _write_json(report_path, report)
    if skipped:
        print("skipped targets (zero frequency):")
        for t in skipped:
            print(f"  {pattern_to_string(t)}")
    print(f"wrote {moments_path} and {report_path}")
    inputs = [args.basis, args.data]
    if args.targets != "observed":
        inputs.append(args.targets)
    _write_manifest(
        out,
        "moments",
        {
            "basis": str(args.basis),
            "data": str(args.data),
            "targets": str(args.targets),
            "targetOrder": args.target_order,
            "momentOrder": args.moment_order,
            "anchorWeight": args.anchor_weight,
            "maxUnknowns": args.max_unknowns,
        },
        inputs,
        [moments_path, report_path],
    )
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    truth = _load_span(args.truth)
    estimate = _load_span(args.estimate)
    if truth.schema != estimate.schema:
        raise DataError(
            f"schema mismatch: truth has levels {truth.schema.levels}, "
            f"estimate has {estimate.schema.levels}"
        )
    angles = principal_angles(truth, estimate)
    report = {
        "angles": [float(a) for a in angles],
        "maxAngle": float(angles.max()) if angles.size else 0.0,
        "kTruth": truth.k,
        "kEstimate": estimate.k,
    }
    print("principal angles (rad): " + " ".join(f"{a:.3e}" for a in angles))
    print(f"max angle: {report['maxAngle']:.3e}")
    inputs = [args.truth, args.estimate]
    if args.moments:
        rows = load_moment_csv(args.moments, estimate.schema)
        table = ConditionalMomentTable(
            schema=estimate.schema,
            k=estimate.k,
            rows=tuple(rows),
            residual_norm=0.0,
            equation_counts={},
            n_unknowns=len(rows),
            n_undetermined=0,
            rank_deficient=False,
        )
        report["relationResidual"] = moment_relation_residual(estimate, table)
        print(f"relation residual: {report['relationResidual']:.3e}")
        inputs.append(args.moments)
    report_path = out / args.report_name
    _write_json(report_path, report)
    print(f"wrote {report_path}")
    _write_manifest(
        out,
        "evaluate",
        {
            "truth": str(args.truth),
            "estimate": str(args.estimate),
            "moments": str(args.moments) if args.moments else None,
        },
        inputs,
        [report_path],
    )
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lls",
        description="Latent linear structure models for categorical data.",
    )
    parser.add_argument("--version", action="version", version=f"lls {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser(
        "generate", help="write a synthetic model and a sampled dataset"
    )
    gen.add_argument("--levels", type=_levels, required=True,
                     help="comma-separated level counts, e.g. 2,2,3")
    gen.add_argument("--k", type=_positive_int, required=True,
                     help="plane dimension of the generated model")
    gen.add_argument("--support", type=_positive_int, required=True,
                     help="number of latent support points (>= k)")
    gen.add_argument("--n", type=_positive_int, required=True,
                     help="number of rows to sample")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--basis-concentration", type=_positive_float, default=4.0,
                     help="Dirichlet concentration of the basis blocks; "
                          "values < 1 give well-separated components")
    gen.add_argument("--exact-moments", default=None, metavar="NAME",
                     help="also write the model's exact moment matrix "
                          "(for estimate --from-moments)")
    gen.add_argument("--max-col-order", type=_positive_int, default=2,
                     help="column order of the exact moment matrix")
    gen.add_argument("--output-dir", default=".")
    gen.add_argument("--model-name", default="model.json")
    gen.add_argument("--data-name", default="data.csv")
    gen.set_defaults(func=cmd_generate)

    est = sub.add_parser("estimate", help="recover the supporting plane")
    src = est.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset CSV (levels coded 1..L_j)")
    src.add_argument("--from-moments",
                     help="moment-matrix CSV to use instead of raw data")
    est.add_argument("--levels", type=_levels,
                     help="level counts; inferred from the data when omitted")
    est.add_argument("--max-col-order", type=_positive_int, default=2)
    est.add_argument("--rank-threshold-factor", type=_positive_float, default=1.0)
    est.add_argument("--eig-threshold-factor", type=_positive_float, default=1.0)
    est.add_argument("--k-override", type=_positive_int, default=None,
                     help="force the plane dimension instead of estimating it")
    est.add_argument("--column-weighting", action="store_true",
                     help="down-weight noisy columns in the plane fit")
    est.add_argument("--sample-size", type=_positive_int, default=None,
                     help="sample size behind a --from-moments matrix "
                          "(omit for exact matrices)")
    est.add_argument("--output-dir", default=".")
    est.add_argument("--basis-name", default="basis.json")
    est.add_argument("--report-name", default="report.json")
    est.set_defaults(func=cmd_estimate)

    mom = sub.add_parser("moments", help="solve for conditional latent moments")
    mom.add_argument("--basis", required=True, help="basis JSON from estimate")
    mom.add_argument("--data", required=True, help="dataset CSV")
    mom.add_argument("--targets", required=True,
                     help="'observed' (all distinct response rows) or a file "
                          "with one pattern per line, e.g. 1,0,2")
    mom.add_argument("--target-order", type=_positive_int, default=3,
                     help="with --targets observed, condition on order-q "
                          "sections of the rows instead of full rows")
    mom.add_argument("--moment-order", type=_positive_int, default=2,
                     help="largest latent moment order (>= 1)")
    mom.add_argument("--anchor-weight", type=_positive_float, default=10.0)
    mom.add_argument("--max-unknowns", type=_positive_int, default=3000)
    mom.add_argument("--output-dir", default=".")
    mom.add_argument("--moments-name", default="moments.csv")
    mom.add_argument("--report-name", default="moments-report.json")
    mom.set_defaults(func=cmd_moments)

    ev = sub.add_parser("evaluate", help="compare an estimated plane to a model")
    ev.add_argument("--truth", required=True,
                    help="model JSON or basis JSON with the reference plane")
    ev.add_argument("--estimate", required=True,
                    help="basis JSON (or model JSON) to evaluate")
    ev.add_argument("--moments", default=None,
                    help="optional moment CSV; reports its relation residual")
    ev.add_argument("--output-dir", default=".")
    ev.add_argument("--report-name", default="evaluation.json")
    ev.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ModelNotApplicableError as exc:
        print(f"model not applicable: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 5
    except LLSError as exc:  # pragma: no cover - base-class safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
