"""Aggregate result files into per-class tables: rows = classes, columns = methods."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

from .engine import AggregateTable, RunResult, aggregate

TABLE_COLUMNS = ("axis", "x", "class", "method", "mean_auc", "std_auc", "n")
MEAN_ROW = "Mean AUC"


class ReportError(ValueError):
    """Results cannot be combined into one table."""


def read_results(paths: Iterable) -> list[RunResult]:
    results = []
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise FileNotFoundError(f"results file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                results.append(RunResult.from_json(line))
            except (json.JSONDecodeError, TypeError, ValueError) as e:
                raise ReportError(f"{path}:{lineno}: unreadable result line ({e})") from None
    return results


def check_compatible(results: Sequence[RunResult]) -> None:
    if not results:
        raise ReportError("empty table: no results to report")
    digests = sorted({r.config_digest for r in results})
    if len(digests) > 1:
        raise ReportError(f"results come from incompatible protocols; digests: {', '.join(digests)}")
    axes = sorted({r.axis for r in results})
    if len(axes) > 1:
        raise ReportError(f"results mix sweep axes {axes}")


def build_table(results: Sequence[RunResult]) -> AggregateTable:
    check_compatible(results)
    return aggregate(results)


def _pct(mean: float, std: float) -> str:
    return f"{100 * mean:.1f}±{100 * std:.1f}"


def format_table(table: AggregateTable) -> str:
    """One block per axis value, Appendix-G style: AUC in % as mean±std over seeds."""
    blocks = []
    methods = table.methods
    for x in table.xs:
        present = [m for m in methods if (x, m) in table.cells]
        header = ["class"] + present
        rows = []
        for c in table.classes:
            row = [str(c)]
            for m in present:
                s = table.cells[(x, m)].get(c)
                row.append("-" if s is None else _pct(s.mean, s.std))
            rows.append(row)
        rows.append([MEAN_ROW] + [_pct(g.mean, g.std) for g in (table.grand(x, m) for m in present)])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = []
        if table.axis != "none":
            lines.append(f"{table.axis} = {x}")
        fmt = lambda r: "  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths)))
        lines.append(fmt(header))
        lines.append("  ".join("-" * w for w in widths))
        lines.extend(fmt(r) for r in rows[:-1])
        lines.append("  ".join("-" * w for w in widths))
        lines.append(fmt(rows[-1]))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def table_rows(table: AggregateTable):
    for x in table.xs:
        for m in table.methods:
            if (x, m) not in table.cells:
                continue
            for c, s in table.cells[(x, m)].items():
                yield table.axis, x, c, m, s.mean, s.std, s.n
            g = table.grand(x, m)
            yield table.axis, x, "mean", m, g.mean, g.std, g.n


def write_table_csv(table: AggregateTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for axis, x, c, m, mu, sd, n in table_rows(table):
            w.writerow([axis, "" if x is None else x, c, m, f"{mu:.6f}", f"{sd:.6f}", n])
