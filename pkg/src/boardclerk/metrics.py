"""Latency and throughput metrics over raw simulation records.

Everything here is recomputable from the latency record stream; the summary
adds no information of its own.  Latencies are reported both in virtual time
units and in rounds, where one round is the observed mean time between
consecutive proposal rounds of the run (delay-model independent).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Optional

from .simulator import LatencyRecord, SimResult
from .utxo import TxResult


@dataclass
class MetricsSummary:
    committed: int = 0
    successful: int = 0
    failed: int = 0
    fast_committed: int = 0
    fast_commit_rate: float = 0.0
    mean_formal_time: float = 0.0
    median_formal_time: float = 0.0
    p95_formal_time: float = 0.0
    mean_formal_rounds: float = 0.0
    median_formal_rounds: float = 0.0
    p95_formal_rounds: float = 0.0
    mean_fast_time: float = 0.0
    mean_fast_rounds: float = 0.0
    throughput: float = 0.0
    round_duration: float = 0.0
    uncommitted: int = 0
    truncated: bool = False

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _p95(values: list[float]) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    index = min(len(ordered) - 1, int(round(0.95 * (len(ordered) - 1))))
    return ordered[index]


def mean_round_duration(result: SimResult) -> float:
    """Observed mean time between consecutive proposal rounds."""
    times_by_round: dict[int, float] = {}
    for time, round_, _, _ in result.message_log:
        if round_ not in times_by_round:
            times_by_round[round_] = time
        else:
            times_by_round[round_] = min(times_by_round[round_], time)
    if len(times_by_round) < 2:
        return 1.0
    first = times_by_round[min(times_by_round)]
    last = times_by_round[max(times_by_round)]
    spread = max(times_by_round) - min(times_by_round)
    if spread <= 0 or last <= first:
        return 1.0
    return (last - first) / spread


def summarize(result: SimResult) -> MetricsSummary:
    rd = mean_round_duration(result)
    formal_times: list[float] = []
    fast_times: list[float] = []
    committed = successful = failed = fast = uncommitted = 0
    last_commit = 0.0
    first_submit: Optional[float] = None
    for rec in result.records.values():
        if rec.commit_time is None:
            uncommitted += 1
            continue
        committed += 1
        if rec.result is TxResult.SUCCESS:
            successful += 1
        else:
            failed += 1
        formal_times.append(rec.commit_time - rec.submit_time)
        last_commit = max(last_commit, rec.commit_time)
        if first_submit is None or rec.submit_time < first_submit:
            first_submit = rec.submit_time
        if rec.fast_time is not None:
            fast += 1
            fast_times.append(rec.fast_time - rec.submit_time)

    summary = MetricsSummary(
        committed=committed,
        successful=successful,
        failed=failed,
        fast_committed=fast,
        fast_commit_rate=(fast / committed) if committed else 0.0,
        uncommitted=uncommitted,
        truncated=result.truncated,
        round_duration=rd,
    )
    if formal_times:
        summary.mean_formal_time = statistics.fmean(formal_times)
        summary.median_formal_time = statistics.median(formal_times)
        summary.p95_formal_time = _p95(formal_times)
        summary.mean_formal_rounds = summary.mean_formal_time / rd
        summary.median_formal_rounds = summary.median_formal_time / rd
        summary.p95_formal_rounds = summary.p95_formal_time / rd
        span = last_commit - (first_submit or 0.0)
        summary.throughput = committed / span if span > 0 else 0.0
    if fast_times:
        summary.mean_fast_time = statistics.fmean(fast_times)
        summary.mean_fast_rounds = summary.mean_fast_time / rd
    return summary


CSV_COLUMNS = [
    "experiment",
    "sweep_var",
    "sweep_value",
    "seed",
    "config_hash",
    "n",
    "f",
    "committed",
    "successful",
    "failed",
    "fast_committed",
    "fast_commit_rate",
    "mean_formal_time",
    "median_formal_time",
    "p95_formal_time",
    "mean_formal_rounds",
    "median_formal_rounds",
    "p95_formal_rounds",
    "mean_fast_time",
    "mean_fast_rounds",
    "throughput",
    "round_duration",
    "uncommitted",
    "truncated",
]


def summary_row(
    summary: MetricsSummary,
    experiment: str,
    sweep_var: str,
    sweep_value,
    seed: int,
    config_hash: str,
    n: int,
    f: int,
) -> dict:
    row = {
        "experiment": experiment,
        "sweep_var": sweep_var,
        "sweep_value": sweep_value,
        "seed": seed,
        "config_hash": config_hash,
        "n": n,
        "f": f,
    }
    row.update(summary.as_dict())
    row["truncated"] = int(summary.truncated)
    return row


def rows_to_csv(rows: list[dict]) -> str:
    def fmt(value) -> str:
        if isinstance(value, float):
            return f"{value:.6f}"
        return str(value)

    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(fmt(row.get(col, "")) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def rows_to_json_lines(rows: list[dict]) -> str:
    import json

    out = []
    for row in rows:
        ordered = {col: row.get(col, "") for col in CSV_COLUMNS}
        out.append(json.dumps(ordered, sort_keys=False))
    return "\n".join(out) + "\n"


def rows_to_table(rows: list[dict]) -> str:
    cols = [
        "sweep_value",
        "seed",
        "committed",
        "fast_commit_rate",
        "mean_formal_rounds",
        "mean_fast_rounds",
        "throughput",
        "truncated",
    ]
    widths = {c: len(c) for c in cols}
    rendered = []
    for row in rows:
        cells = {}
        for c in cols:
            v = row.get(c, "")
            cells[c] = f"{v:.4f}" if isinstance(v, float) else str(v)
            widths[c] = max(widths[c], len(cells[c]))
        rendered.append(cells)
    header = "  ".join(c.ljust(widths[c]) for c in cols)
    lines = [header, "-" * len(header)]
    for cells in rendered:
        lines.append("  ".join(cells[c].ljust(widths[c]) for c in cols))
    return "\n".join(lines)
