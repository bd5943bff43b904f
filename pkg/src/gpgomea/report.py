"""Report files: long-form median CSV, JSON summary and a critical-difference SVG."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .bench import METRIC_NAMES, MedianRow
from .stats import FriedmanResult, cliques

__all__ = ["emit_report", "write_medians_csv", "read_medians_csv", "cd_diagram_svg",
           "ReportError"]

CSV_FIELDS = ["config", "problem", "fe_threshold", "n_seeds", *METRIC_NAMES]


class ReportError(OSError):
    pass


def write_medians_csv(rows: Sequence[MedianRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in rows:
            # repr keeps every float exact through the round trip
            w.writerow([r.config, r.problem, r.fe_threshold, r.n_seeds,
                        *(repr(float(getattr(r, m))) for m in METRIC_NAMES)])


def read_medians_csv(path) -> list[MedianRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [MedianRow(r["config"], r["problem"], int(r["fe_threshold"]), int(r["n_seeds"]),
                          **{m: float(r[m]) for m in METRIC_NAMES}) for r in reader]


def cd_diagram_svg(labels: Sequence[str], mean_ranks: Sequence[float], cd: float,
                   title: str = "") -> str:
    """Critical-difference diagram: configs on a rank axis, bars join groups within CD."""
    k = len(labels)
    width, margin = 640, 60
    axis_y = 70
    lo, hi = 1, max(k, 2)
    scale = (width - 2 * margin) / (hi - lo)

    def x(rank):
        return margin + (rank - lo) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{axis_y + 40 + 22 * k}" font-family="sans-serif" font-size="12">']
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">'
                     f'{escape(title)}</text>')
    parts.append(f'<line x1="{x(lo):.1f}" y1="{axis_y}" x2="{x(hi):.1f}" y2="{axis_y}" '
                 'stroke="black"/>')
    for r in range(lo, hi + 1):
        parts.append(f'<line x1="{x(r):.1f}" y1="{axis_y - 5}" x2="{x(r):.1f}" '
                     f'y2="{axis_y}" stroke="black"/>')
        parts.append(f'<text x="{x(r):.1f}" y="{axis_y - 9}" text-anchor="middle">{r}</text>')
    # CD scale bar
    parts.append(f'<line class="cd" x1="{x(lo):.1f}" y1="34" x2="{x(min(lo + cd, hi)):.1f}" y2="34" '
                 'stroke="black" stroke-width="2"/>')
    parts.append(f'<text x="{x(lo):.1f}" y="30">CD = {cd:.3f}</text>')
    order = sorted(range(k), key=lambda j: (mean_ranks[j], labels[j]))
    for n, j in enumerate(order):
        yy = axis_y + 40 + 22 * n
        parts.append(f'<line x1="{x(mean_ranks[j]):.1f}" y1="{axis_y}" '
                     f'x2="{x(mean_ranks[j]):.1f}" y2="{yy}" stroke="gray"/>')
        parts.append(f'<text class="config" x="{x(mean_ranks[j]) + 4:.1f}" y="{yy + 4}" '
                     f'data-rank="{mean_ranks[j]!r}">{escape(labels[j])} '
                     f'({mean_ranks[j]:.2f})</text>')
    for n, group in enumerate(cliques(mean_ranks, cd)):
        members = " ".join(escape(labels[j]) for j in group)
        a = min(mean_ranks[j] for j in group)
        b = max(mean_ranks[j] for j in group)
        yy = axis_y + 8 + 6 * n
        parts.append(f'<line class="clique" data-members="{members}" x1="{x(a) - 3:.1f}" '
                     f'y1="{yy}" x2="{x(b) + 3:.1f}" y2="{yy}" stroke="black" '
                     'stroke-width="3"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(rows: Sequence[MedianRow], result: FriedmanResult | None, out_dir, *,
                configs: Sequence[str] = (), metric: str = "test_r2",
                checkpoint: int | None = None, summary: dict | None = None) -> dict[str, Path]:
    """Write ``medians.csv``, ``summary.json`` and (with stats) ``cd_diagram.svg``."""
    out = Path(out_dir)
    paths = {"csv": out / "medians.csv", "json": out / "summary.json"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_medians_csv(rows, paths["csv"])
        doc = {
            "metric": metric,
            "checkpoint": checkpoint,
            "mean_of_medians": summary or {},
            "statistics": result.to_dict(configs) if result is not None else None,
            "medians": [asdict(r) for r in rows],
        }
        paths["json"].write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        if result is not None:
            paths["svg"] = out / "cd_diagram.svg"
            paths["svg"].write_text(cd_diagram_svg(list(configs), list(result.mean_ranks),
                                                   result.critical_distance,
                                                   f"{metric} at {checkpoint} FEs"))
    except OSError as e:
        raise ReportError(f"cannot write report to {out}: {e.strerror or e}") from e
    return paths
