"""Metrics CSV persistence and per-cycle seed aggregation."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADER = ("strategy", "seed", "cycle", "labeled", "metric", "value")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ReportRow:
    strategy: str
    seed: int
    cycle: int
    labeled: int
    metric: str
    value: float

    def key(self):
        return (self.strategy, self.seed, self.cycle, self.metric)


def rows_from_results(results):
    rows = []
    for run in results:
        for rec in run.records:
            rows.append(ReportRow(run.strategy, run.seed, rec.cycle, rec.labeled, rec.metric, rec.value))
            if rec.spearman is not None:
                rows.append(ReportRow(run.strategy, run.seed, rec.cycle, rec.labeled, "spearman", rec.spearman))
    return rows


def format_value(value):
    return f"{value:.6g}"


def write_metrics_csv(rows, path):
    """One line per row, sorted by (strategy, seed, cycle, metric); 6 significant digits."""
    rows = list(rows)
    if not rows:
        raise ReportError("no rows to write")
    keys = [r.key() for r in rows]
    if len(set(keys)) != len(keys):
        raise ReportError("duplicate (strategy, seed, cycle, metric) rows")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in sorted(rows, key=ReportRow.key):
            w.writerow([r.strategy, r.seed, r.cycle, r.labeled, r.metric, format_value(r.value)])
    return path


def read_metrics_csv(path):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise ReportError(f"{path}: expected header {','.join(HEADER)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(HEADER):
                raise ReportError(f"{path}: malformed row {lineno}")
            try:
                rows.append(ReportRow(rec[0], int(rec[1]), int(rec[2]), int(rec[3]), rec[4], float(rec[5])))
            except ValueError:
                raise ReportError(f"{path}: malformed row {lineno}") from None
    return rows


@dataclass
class SummaryRow:
    strategy: str
    metric: str
    cycle: int
    labeled: int
    n: int
    mean: float
    std: float
    min: float
    max: float


def summarize(rows):
    """Across-seed mean, sample std (ddof=1; 0 for one seed), min and max."""
    groups = defaultdict(list)
    labeled = {}
    for r in rows:
        k = (r.strategy, r.metric, r.cycle)
        groups[k].append(r.value)
        labeled[k] = r.labeled
    out = []
    for k in sorted(groups):
        v = np.asarray(groups[k])
        std = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
        out.append(SummaryRow(k[0], k[1], k[2], labeled[k], len(v), float(v.mean()), std,
                              float(v.min()), float(v.max())))
    return out


def write_summary_csv(summary, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "metric", "cycle", "labeled", "n", "mean", "std", "min", "max"])
        for s in summary:
            w.writerow([s.strategy, s.metric, s.cycle, s.labeled, s.n,
                        format_value(s.mean), format_value(s.std),
                        format_value(s.min), format_value(s.max)])
    return Path(path)


def final_cycle_means(rows, metric):
    """Mean over seeds of ``metric`` at each strategy's last cycle."""
    summary = [s for s in summarize(rows) if s.metric == metric]
    last = {}
    for s in summary:
        if s.strategy not in last or s.cycle > last[s.strategy].cycle:
            last[s.strategy] = s
    return {k: v.mean for k, v in last.items()}
