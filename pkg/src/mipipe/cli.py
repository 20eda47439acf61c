"""Command-line front end.

Every command writes ``<output>.manifest.json`` beside its main output with
the argv, a hash of the parsed options and library versions, enough to
replay the run. Exit codes: 0 success, 1 data or convergence error, 2 usage.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .datamodel import Contrast, ParseError, read_design, read_matrix, write_design, write_matrix
from .impute import ConvergenceError, EngineConfig, choose_draw_count, impute_multiple, read_stack, write_stack
from .infer import read_report, write_reports
from .pipeline import AnalysisConfig, analyze
from .preprocess import filter_presence, log2_transform, quantile_normalize
from .simulate import SimSpec, ampute_mcar

log = logging.getLogger("mipipe")


class UsageError(Exception):
    pass


def _versions() -> dict:
    import scipy
    import sklearn

    return {
        "mipipe": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(output, args, argv, extra=None) -> Path:
    opts = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(opts, sort_keys=True, default=str)
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "options": json.loads(blob),
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": opts.get("seed"),
        "versions": _versions(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **(extra or {}),
    }
    path = Path(str(output) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("MIPIPE_THREADS")
    return int(env) if env else 1


def _engine(args) -> EngineConfig:
    return EngineConfig(
        method=args.method,
        k_neighbors=args.k,
        n_components=args.ncp,
        rf_trees=args.trees,
        max_iter=args.max_iter,
        tol=args.tol,
        mle_deterministic=args.mle_deterministic,
    )


def _draws(value: str):
    if value == "auto":
        return None
    try:
        D = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--draws takes an integer or 'auto'") from None
    if D < 1:
        raise argparse.ArgumentTypeError("--draws must be >= 1")
    return D


def _fractions(value: str):
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("--mv takes comma-separated fractions") from None


# ---- commands -------------------------------------------------------------


def cmd_simulate(args, argv):
    m, design, truth = SimSpec(args.design, args.seed).generate()
    write_matrix(m, args.out)
    if args.design_out:
        write_design(design, args.design_out)
    if args.truth_out:
        with open(args.truth_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "de"])
            w.writerows(zip(m.row_ids, truth.de_rows.astype(int)))
    write_manifest(args.out, args, argv)


def cmd_ampute(args, argv):
    m = read_matrix(args.input, protein_column=args.protein_column)
    out = ampute_mcar(m, args.prop, args.seed)
    write_matrix(out, args.out)
    write_manifest(args.out, args, argv, {"missing_fraction": out.missing_fraction})


def cmd_normalize(args, argv):
    m = read_matrix(args.input, protein_column=args.protein_column)
    if args.log2:
        m = log2_transform(m)
    write_matrix(quantile_normalize(m), args.out)
    write_manifest(args.out, args, argv)


def cmd_filter(args, argv):
    m = read_matrix(args.input, protein_column=args.protein_column)
    out = filter_presence(m, read_design(args.design), args.k)
    log.info("kept %d of %d rows", out.shape[0], m.shape[0])
    write_matrix(out, args.out)
    write_manifest(args.out, args, argv)


def cmd_impute(args, argv):
    m = read_matrix(args.input, protein_column=args.protein_column)
    d = read_design(args.design)
    D = args.draws if args.draws is not None else choose_draw_count(m.missing_fraction)
    stack = impute_multiple(m, d, D, _engine(args), args.seed, threads=_threads(args))
    manifest = write_stack(stack, args.out_dir)
    write_manifest(manifest, args, argv)


def cmd_aggregate(args, argv):
    from .aggregate import aggregate_sum

    stack = read_stack(args.input)
    manifest = write_stack(aggregate_sum(stack), args.out)
    write_manifest(manifest, args, argv)


def _contrast(spec: str, design) -> Contrast:
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) != 2:
        raise UsageError("--contrast takes two condition labels: a,b")
    try:
        return Contrast(design.index(parts[0]), design.index(parts[1]))
    except KeyError as e:
        raise UsageError(str(e)) from None


def cmd_analyze(args, argv):
    m = read_matrix(args.input, protein_column=args.protein_column or args.aggregate)
    d = read_design(args.design)
    cfg = AnalysisConfig(
        engine=_engine(args),
        draws=args.draws,
        seed=args.seed,
        fdr=args.fdr,
        raw_alpha=args.raw_alpha,
        log2=args.log2,
        normalize=args.normalize,
        filter_k=args.filter,
        aggregate=args.aggregate,
        eq9_literal=args.eq9_literal,
        threads=_threads(args),
    )
    contrasts = [_contrast(args.contrast, d)] if args.contrast else None
    res = analyze(m, d, cfg, contrasts)
    log.info("prior: d0=%s s0^2=%.6g, D=%d", res.moderation.d0, res.moderation.s0_sq, res.stack.D)
    write_reports(res.reports, args.out)
    if args.dump_pooled:
        _dump_pooled(res, args.dump_pooled)
    write_manifest(args.out, args, argv, {"D": res.stack.D, "D_rule": res.D_rule,
                                          "d0": res.moderation.d0, "s0_sq": res.moderation.s0_sq})


def _dump_pooled(res, path):
    from .datamodel import format_float

    conds = res.design.conditions
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id"] + [f"beta_{c}" for c in conds] + [f"var_{c}" for c in conds])
        diag = np.diagonal(res.pooled.sigma, axis1=1, axis2=2)
        for i, rid in enumerate(res.stack.draws[0].row_ids):
            w.writerow([rid] + [format_float(v) for v in res.pooled.beta[i]] + [format_float(v) for v in diag[i]])


def _read_truth(path) -> dict[str, bool]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return {r[0]: r[1].strip() in ("1", "true", "TRUE", "True") for r in rows[1:]}


def cmd_evaluate(args, argv):
    from .evaluate import confusion, metrics, write_rows

    truth = _read_truth(args.truth)
    out = []
    for con, rep in read_report(args.report).items():
        try:
            labels = np.array([truth[r] for r in rep["row_id"]])
        except KeyError as e:
            raise ParseError(f"row {e.args[0]!r} missing from truth file") from None
        c = confusion(rep["decided"], labels)
        out.append({"contrast": con, **asdict(c), **metrics(c)})
    write_rows(out, args.out)
    write_manifest(args.out, args, argv)


def cmd_bench(args, argv):
    from .evaluate import BenchConfig, bench, write_bench

    cfg = BenchConfig(
        design_id=args.design,
        replicates=args.reps,
        mv_grid=args.mv,
        engine=_engine(args),
        fdr=args.fdr,
        seed=args.seed,
        normalize=args.normalize,
    )
    records = bench(cfg, threads=_threads(args))
    summary = args.summary_out or str(Path(args.out).with_suffix("")) + "_summary.csv"
    write_bench(records, args.out, summary)
    write_manifest(args.out, args, argv)


# ---- parser ---------------------------------------------------------------


def _add_engine(p):
    p.add_argument("--method", choices=("knn", "mle", "norm", "pca", "rf"), default="mle")
    p.add_argument("--k", type=int, default=10, help="neighbours for knn")
    p.add_argument("--ncp", type=int, default=2, help="components for pca")
    p.add_argument("--trees", type=int, default=100, help="trees for rf")
    p.add_argument("--max-iter", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--mle-deterministic", action="store_true", help="fill with conditional means")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mipipe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated dataset")
    p.add_argument("--design", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--design-out")
    p.add_argument("--truth-out")
    p.set_defaults(func=cmd_simulate)

    def io(p, design=False):
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--protein-column", action="store_true", help="second CSV column holds protein ids")
        if design:
            p.add_argument("--design", required=True)

    p = sub.add_parser("ampute", help="mask cells completely at random")
    io(p)
    p.add_argument("--prop", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_ampute)

    p = sub.add_parser("normalize", help="quantile normalization")
    io(p)
    p.add_argument("--log2", action="store_true", help="log2-transform first")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("filter", help="keep rows observed >= k times in every condition")
    io(p, design=True)
    p.add_argument("--k", type=int, default=1)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("impute", help="multiple imputation to a stack directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--protein-column", action="store_true")
    p.add_argument("--draws", type=_draws, default=None, help="integer or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    _add_engine(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("aggregate", help="sum unique peptides into proteins, per draw")
    p.add_argument("--in", dest="input", required=True, help="stack manifest or directory")
    p.add_argument("--out", required=True, help="output stack directory")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("analyze", help="full multiple-imputation differential analysis")
    io(p, design=True)
    p.add_argument("--draws", type=_draws, default=None, help="integer or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fdr", type=float, default=0.01, help="threshold on BH-adjusted p-values")
    p.add_argument("--raw-alpha", type=float, default=None, help="also require raw p <= this level")
    p.add_argument("--contrast", help="two condition labels a,b (default: all pairs)")
    p.add_argument("--log2", action="store_true")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--filter", type=int, default=None, metavar="K")
    p.add_argument("--aggregate", action="store_true", help="protein-level results from peptides")
    p.add_argument("--eq9-literal", action="store_true", help="divide by the moderated variance")
    p.add_argument("--dump-pooled")
    _add_engine(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="score a report against truth labels")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="simulation benchmark: mi4p vs single imputation")
    p.add_argument("--design", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--mv", type=_fractions, default=(0.01, 0.05, 0.10, 0.15, 0.20, 0.25))
    p.add_argument("--fdr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out")
    _add_engine(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    warnings.formatwarning = lambda msg, cat, *a, **k: f"{cat.__name__}: {msg}"
    try:
        args.func(args, argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"mipipe: error: {e}", file=sys.stderr)
        return 2
    except (ParseError, ValueError, ConvergenceError, RuntimeError, OSError) as e:
        print(f"mipipe {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
