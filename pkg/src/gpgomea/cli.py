"""Command-line entry point: ``run``, ``bench``, ``stats`` and ``show``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import (
    BenchError,
    MatrixSettings,
    aggregate_median,
    final_checkpoint,
    mean_of_medians,
    metric_table,
    read_records,
    run_matrix,
    run_one,
)
from .config import KEYS, ConfigError, RunConfig, parse_config
from .problems import IngestionError
from .records import RunRecord
from .report import emit_report
from .stats import friedman_nemenyi

log = logging.getLogger("gpgomea")


class CliError(Exception):
    pass


def _settings(cfg: RunConfig) -> MatrixSettings:
    return MatrixSettings(budget=cfg.budget, checkpoints=tuple(cfg.checkpoints),
                          operators=cfg.operators, depth=cfg.depth, constraint=cfg.constraint,
                          constants=cfg.constants, rows=cfg.rows, data_seed=cfg.data_seed,
                          train_fraction=cfg.train_fraction, pop_base=cfg.pop_base)


def _list_flag(text: str | None):
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_run(args) -> int:
    problem = args.problem
    if args.csv:
        problem = f"csv:{args.csv}"
    elif args.combine:
        parts = _list_flag(args.combine)
        if len(parts) != 2:
            raise CliError("--combine expects two problem names: a,b")
        problem = "|".join(parts)
    ops = args.operators
    if ops is not None and "," in ops:
        ops = _list_flag(ops)
    overrides = {
        "problem": problem, "operators": ops, "depth": args.depth, "gcs": args.gcs,
        "ssi": args.ssi, "budget": args.budget,
        "checkpoints": [int(c) for c in _list_flag(args.checkpoints)] if args.checkpoints
        else None,
        "seeds": [args.seed] if args.seed is not None else None,
        "rows": args.rows, "data_seed": args.data_seed, "pop_base": args.pop_base,
        "out": args.out,
    }
    cfg = parse_config(args.config, overrides)
    rec = run_one(cfg.variant, cfg.problem, cfg.seeds[0], _settings(cfg))
    text = rec.to_json() + "\n"
    if cfg.out:
        try:
            Path(cfg.out).write_text(text)
        except OSError as e:
            raise CliError(f"cannot write {cfg.out}: {e.strerror}") from e
    else:
        sys.stdout.write(text)
    return 0


def _report(records: list[RunRecord], metric: str, checkpoint: int | None, out_dir,
            configs=None) -> dict:
    rows = aggregate_median(records)
    if checkpoint is None:
        checkpoint = final_checkpoint(rows)
    problems, cfgs, table = metric_table(rows, metric, checkpoint, configs)
    summary = mean_of_medians(rows, metric, checkpoint)
    result = None
    if len(cfgs) >= 2 and len(problems) >= 2:
        result = friedman_nemenyi(table, higher_is_better=metric.endswith("r2"))
    elif len(cfgs) >= 2:
        log.warning("statistics need at least 2 problems; skipped")
    if out_dir is not None:
        emit_report(rows, result, out_dir, configs=cfgs, metric=metric, checkpoint=checkpoint,
                    summary=summary)
    lines = [f"{metric} at {checkpoint} FEs, {len(problems)} problem(s)"]
    for j, c in enumerate(cfgs):
        s = summary[c]
        rank = f"  mean rank {result.mean_ranks[j]:.3f}" if result is not None else ""
        lines.append(f"  {c:<14} mean-of-medians {s['mean']:.6g} "
                     f"[{s['ci_low']:.6g}, {s['ci_high']:.6g}]{rank}")
    if result is not None:
        lines.append(f"  Friedman chi2 = {result.statistic:.6g}, p = {result.p_value:.4g}, "
                     f"CD = {result.critical_distance:.4f}")
    print("\n".join(lines))
    return {"rows": rows, "result": result}


def cmd_bench(args) -> int:
    overrides = {"out": args.out, "jobs": args.jobs}
    cfg = parse_config(args.matrix, overrides)
    if not cfg.out:
        raise CliError("bench needs an output directory (--out or out = ...)")
    problems = list(cfg.problems) or [cfg.problem]
    out = Path(cfg.out)
    records = run_matrix(cfg.variants, problems, cfg.seeds, _settings(cfg),
                         out=out / "records.jsonl", jobs=cfg.jobs)
    _report(records, cfg.metric, None, out, [v.label for v in cfg.variants])
    return 0


def _load_any(path: Path) -> list[RunRecord]:
    if path.is_dir():
        recs = []
        for p in sorted(path.glob("*.jsonl")):
            recs += read_records(p)
        for p in sorted(path.glob("*.json")):
            if p.name != "summary.json":
                recs.append(_load_record(p))
        return recs
    if path.suffix == ".jsonl":
        return read_records(path)
    return [_load_record(path)]


def _load_record(path: Path) -> RunRecord:
    try:
        return RunRecord.load(path)
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from e
    except (ValueError, TypeError, KeyError) as e:
        raise CliError(f"{path}: not a run record ({e})") from e


def cmd_stats(args) -> int:
    records = []
    for p in args.records:
        path = Path(p)
        if not path.exists():
            raise CliError(f"{p}: no such file or directory")
        records += _load_any(path)
    if not records:
        raise CliError("no run records found")
    _report(records, args.metric, args.checkpoint, args.out)
    return 0


def cmd_show(args) -> int:
    rec = _load_record(Path(args.record))
    print(f"config {rec.config}  problem {rec.problem}  seed {rec.seed}  "
          f"operators {rec.operators}  depth {rec.depth}  total FEs {rec.total_fes}")
    for c in rec.checkpoints:
        print(f"  {c.fe_threshold:>9} FEs  train mse {c.train_mse:.6g}  test mse {c.test_mse:.6g}"
              f"  train R2 {c.train_r2:.6f}  test R2 {c.test_r2:.6f}")
    if rec.final is not None:
        print(rec.final.expression)
    return 0


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:<15} {v}" for k, v in KEYS.items())
    p = argparse.ArgumentParser(
        prog="gpgomea", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Symbolic regression with gene-pool optimal mixing on fixed tree templates.",
        epilog=f"config file keys (key = value, one per line, # comments):\n{keys}")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one run on one problem; prints or writes the RunRecord JSON")
    r.add_argument("--config", help="key = value config file")
    r.add_argument("--problem", help='built-in problem name or "a|b" combination')
    r.add_argument("--csv", help="CSV data file (last column is the target)")
    r.add_argument("--combine", metavar="A,B", help="gate problems A and B on a Boolean variable")
    r.add_argument("--operators", help="T22, T11, B15, B9, B4 or a comma-separated list")
    r.add_argument("--depth", help='template depth, or "feasible[-k]"')
    r.add_argument("--gcs", help="off, 1, 1+, 2, 2+, 3 or 3+")
    r.add_argument("--ssi", nargs="?", const="true", choices=["true", "false"],
                   help="semantic subtree inheritance")
    r.add_argument("--budget", type=int, help="function-evaluation cap")
    r.add_argument("--seed", type=int)
    r.add_argument("--checkpoints", help="comma-separated ascending FE thresholds")
    r.add_argument("--rows", type=int, help="rows sampled for built-in problems")
    r.add_argument("--data-seed", type=int)
    r.add_argument("--pop-base", type=int)
    r.add_argument("--out", help="write the record here instead of standard output")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="run a configuration x problem x seed matrix")
    b.add_argument("--matrix", required=True, help="matrix config file")
    b.add_argument("--out", help="output directory (records.jsonl plus report files)")
    b.add_argument("--jobs", type=int, help="parallel worker processes")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("stats", help="aggregate stored records and rank configurations")
    s.add_argument("records", nargs="+", help="record files (.json, .jsonl) or directories")
    s.add_argument("--metric", default="test_r2",
                   choices=["test_r2", "train_r2", "test_mse", "train_mse"])
    s.add_argument("--checkpoint", type=int, help="FE checkpoint (default: final)")
    s.add_argument("--out", help="write report files to this directory")
    s.set_defaults(func=cmd_stats)

    w = sub.add_parser("show", help="print a stored RunRecord")
    w.add_argument("record")
    w.set_defaults(func=cmd_show)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, BenchError, IngestionError) as e:
        print(f"gpgomea: error: {e}", file=sys.stderr)
    except (ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"gpgomea: error: {msg}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
