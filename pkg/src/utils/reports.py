"""
Bench report exports: aligned text table, JSON, CSV of raw timings, Excel
"""

import json
import logging
from io import BytesIO
from pathlib import Path
from typing import Union

import pandas as pd

from src.bench.harness import ComparisonReport

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "model", "params", "flops", "last_layer_pct",
    "mean_ms", "std_ms", "ci95_ms", "min_ms", "max_ms", "p95_ms",
    "exclusive_mean_ms", "cpu_pct",
]


def summary_frame(report: ComparisonReport) -> pd.DataFrame:
    rows = []
    for row in report.rows:
        rows.append({
            "model": row.name,
            "params": row.params,
            "flops": row.flops,
            "last_layer_pct": row.last_layer_complexity,
            "mean_ms": row.latency.mean_ms,
            "std_ms": row.latency.std_ms,
            "ci95_ms": row.latency.ci95_half_width_ms,
            "min_ms": row.latency.min_ms,
            "max_ms": row.latency.max_ms,
            "p95_ms": row.latency.p95_ms,
            "exclusive_mean_ms": row.exclusive.mean_ms,
            "cpu_pct": row.cpu.mean_cpu_percent if row.cpu else float("nan"),
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def timings_frame(report: ComparisonReport) -> pd.DataFrame:
    records = []
    for row in report.rows:
        for i, value in enumerate(row.timings_ms):
            records.append({"model": row.name, "iteration": i, "mode": "inclusive", "latency_ms": value})
        for i, value in enumerate(row.exclusive_timings_ms):
            records.append({"model": row.name, "iteration": i, "mode": "exclusive", "latency_ms": value})
    return pd.DataFrame(records, columns=["model", "iteration", "mode", "latency_ms"])


def _json_float(value) -> str:
    # json.dumps writes floats with repr
    return repr(float(value))


def format_table(report: ComparisonReport) -> str:
    """Fixed-width table printing exactly the numbers the JSON report carries"""
    frame = summary_frame(report)
    lines = []
    if frame.empty:
        lines.append("(no models benchmarked)")
    else:
        lines.append(frame.to_string(index=False, float_format=_json_float, na_rep="-"))
    for error in report.errors:
        lines.append(f"error: {error['path']}: {error['error']}")
    return "\n".join(lines)


def write_json(report: ComparisonReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote JSON report to {path}")
    return path


def write_timings_csv(report: ComparisonReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    timings_frame(report).to_csv(path, index=False)
    logger.info(f"Wrote raw timings to {path}")
    return path


def excel_report(report: ComparisonReport) -> BytesIO:
    output = BytesIO()
    with pd.ExcelWriter(output, engine='openpyxl') as writer:
        summary_frame(report).to_excel(writer, sheet_name='Summary', index=False)
        timings_frame(report).to_excel(writer, sheet_name='Timings', index=False)
        cpu_rows = [
            {"model": row.name, "t": t, "cpu_pct": value}
            for row in report.rows if row.cpu
            for t, value in row.cpu.samples
        ]
        pd.DataFrame(cpu_rows, columns=["model", "t", "cpu_pct"]).to_excel(writer, sheet_name='CPU', index=False)
        pd.DataFrame(report.errors, columns=["path", "error"]).to_excel(writer, sheet_name='Errors', index=False)
    output.seek(0)
    return output


def write_xlsx(report: ComparisonReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(excel_report(report).getvalue())
    logger.info(f"Wrote Excel report to {path}")
    return path
