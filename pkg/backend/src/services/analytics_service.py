"""
Analytics Service for result aggregation and reporting.

Reads the per-run row files written by the experiment runner, validates them,
and produces per-(experiment, metric) statistics as a fixed-column CSV, a text
table and, optionally, a PDF.
"""

import glob
import json
import os
import re
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from services.errors import MalformedRowsError, SchemaConflictError

ROW_COLUMNS = ["schema_version", "config_hash", "experiment", "instance", "metric", "value", "verdict"]
AGGREGATE_COLUMNS = ["experiment", "metric", "count", "mean", "std", "q05", "q50", "q95", "pass_rate"]
VERDICTS = ("pass", "fail", "info", "skip")
REPORT_DIRNAME = "report"

_HASH_PATTERN = re.compile(r"^[0-9a-f]{16}$")


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------

def _bad_fields(row: Dict[str, str]) -> List[str]:
    bad = []
    if not row["schema_version"]:
        bad.append("schema_version")
    if not _HASH_PATTERN.match(row["config_hash"]):
        bad.append("config_hash")
    if not row["experiment"]:
        bad.append("experiment")
    if not re.fullmatch(r"-?\d+", row["instance"]):
        bad.append("instance")
    if not row["metric"]:
        bad.append("metric")
    try:
        float(row["value"])
    except ValueError:
        bad.append("value")
    if row["verdict"] not in VERDICTS:
        bad.append("verdict")
    return bad


def load_rows(path: str) -> pd.DataFrame:
    """
    Load and validate one row file.

    Args:
        path: CSV written by the experiment runner

    Returns:
        DataFrame with typed instance/value columns

    Raises:
        MalformedRowsError: On a wrong header or rows that fail validation (header is line 1)
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise MalformedRowsError(path, [1])
    except pd.errors.ParserError as e:
        found = re.search(r"line (\d+)", str(e))
        raise MalformedRowsError(path, [int(found.group(1))] if found else [])

    if list(frame.columns) != ROW_COLUMNS:
        raise MalformedRowsError(path, [1])

    bad_lines = [index + 2 for index, row in enumerate(frame.to_dict("records")) if _bad_fields(row)]
    if bad_lines:
        raise MalformedRowsError(path, bad_lines)

    frame["instance"] = frame["instance"].astype(int)
    frame["value"] = frame["value"].astype(float)
    return frame


def load_directory(in_dir: str) -> pd.DataFrame:
    """
    Load every top-level row file in a directory.

    Raises:
        MalformedRowsError: If any file fails validation
        SchemaConflictError: If the files mix schema versions
    """
    paths = sorted(glob.glob(os.path.join(in_dir, "*.csv")))
    frames = [load_rows(path) for path in paths]
    if not frames:
        return pd.DataFrame(columns=ROW_COLUMNS)
    rows = pd.concat(frames, ignore_index=True)
    versions = sorted(rows["schema_version"].unique())
    if len(versions) > 1:
        raise SchemaConflictError(f"Refusing to aggregate rows with schema versions {versions} from {in_dir}")
    print(f"[REPORT] Loaded {len(rows)} rows from {len(paths)} file(s)")
    return rows


def load_summaries(in_dir: str) -> List[Dict[str, Any]]:
    """Run summaries written next to the row files, for the verdict table."""
    summaries = []
    for path in sorted(glob.glob(os.path.join(in_dir, "*.summary.json"))):
        try:
            with open(path, "r", encoding="utf-8") as f:
                summaries.append(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            print(f"[REPORT] Skipping unreadable summary {path}: {str(e)}")
    return summaries


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _pass_rate(verdicts: pd.Series) -> float:
    graded = verdicts[verdicts.isin(["pass", "fail"])]
    if graded.empty:
        return float("nan")
    return float((graded == "pass").mean())


def aggregate(rows: pd.DataFrame) -> pd.DataFrame:
    """Per-(experiment, metric) count, mean, std, 5/50/95% quantiles and pass rate."""
    if rows.empty:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    records = []
    for (experiment, metric), group in rows.groupby(["experiment", "metric"], sort=True):
        values = group["value"].to_numpy(dtype=float)
        records.append({
            "experiment": experiment,
            "metric": metric,
            "count": len(values),
            "mean": float(np.mean(values)),
            "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
            "q05": float(np.quantile(values, 0.05)),
            "q50": float(np.quantile(values, 0.5)),
            "q95": float(np.quantile(values, 0.95)),
            "pass_rate": _pass_rate(group["verdict"]),
        })
    return pd.DataFrame(records, columns=AGGREGATE_COLUMNS)


def format_table(table: pd.DataFrame, summaries: Optional[List[Dict[str, Any]]] = None) -> str:
    """Human-readable report text."""
    lines = ["QPuzzle Lab Report", ""]
    if table.empty:
        lines.append("(no result rows)")
    else:
        lines.append(table.to_string(index=False, float_format=lambda v: f"{v:.6g}", na_rep="-"))
    if summaries:
        lines += ["", "Run verdicts:"]
        for summary in summaries:
            lines.append(f"  {summary.get('experiment')} [{summary.get('config_hash')}]: {summary.get('verdict')}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def export_to_csv(table: pd.DataFrame, output_path: str) -> str:
    table.to_csv(output_path, index=False, encoding="utf-8", lineterminator="\n",
                 float_format="%.12g", na_rep="")
    return output_path


def export_to_pdf(table: pd.DataFrame, output_path: str,
                  summaries: Optional[List[Dict[str, Any]]] = None) -> str:
    """Export the aggregate table to PDF."""
    try:
        from reportlab.lib.pagesizes import landscape, letter
        from reportlab.lib.styles import getSampleStyleSheet
        from reportlab.lib.units import inch
        from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle
    except ImportError:
        raise ImportError("reportlab is required for PDF export")

    doc = SimpleDocTemplate(output_path, pagesize=landscape(letter))
    story = []
    styles = getSampleStyleSheet()

    story.append(Paragraph("QPuzzle Lab Report", styles["Title"]))
    story.append(Spacer(1, 0.2 * inch))

    story.append(Paragraph("Aggregate Metrics", styles["Heading2"]))
    cells = [AGGREGATE_COLUMNS]
    for record in table.to_dict("records"):
        cells.append([
            record[c] if isinstance(record[c], str) else ("-" if pd.isna(record[c]) else f"{record[c]:.6g}")
            for c in AGGREGATE_COLUMNS
        ])

    grid = Table(cells)
    grid.setStyle(TableStyle([
        ("BACKGROUND", (0, 0), (-1, 0), "#4472C4"),
        ("TEXTCOLOR", (0, 0), (-1, 0), "white"),
        ("ALIGN", (0, 0), (-1, -1), "LEFT"),
        ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
        ("FONTSIZE", (0, 0), (-1, -1), 8),
        ("BACKGROUND", (0, 1), (-1, -1), "#F2F2F2"),
        ("GRID", (0, 0), (-1, -1), 1, "#CCCCCC")
    ]))
    story.append(grid)
    story.append(Spacer(1, 0.3 * inch))

    if summaries:
        story.append(Paragraph("Run Verdicts", styles["Heading2"]))
        for summary in summaries:
            story.append(Paragraph(
                f"{summary.get('experiment')} [{summary.get('config_hash')}]: {summary.get('verdict')}",
                styles["Normal"]))

    doc.build(story)
    return output_path


def build_report(in_dir: str, pdf: bool = False) -> Dict[str, Any]:
    """
    Aggregate every row file under `in_dir` into `<in_dir>/report/`.

    Args:
        in_dir: Directory holding runner outputs
        pdf: Also write report.pdf (needs reportlab)

    Returns:
        Dictionary with the aggregate table and the written paths
    """
    if not os.path.isdir(in_dir):
        raise FileNotFoundError(f"Report input directory not found: {in_dir}")
    rows = load_directory(in_dir)
    summaries = load_summaries(in_dir)
    table = aggregate(rows)

    report_dir = os.path.join(in_dir, REPORT_DIRNAME)
    os.makedirs(report_dir, exist_ok=True)
    paths = {"csv": export_to_csv(table, os.path.join(report_dir, "aggregate.csv"))}
    text = format_table(table, summaries)
    paths["text"] = os.path.join(report_dir, "report.txt")
    with open(paths["text"], "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    if pdf:
        paths["pdf"] = export_to_pdf(table, os.path.join(report_dir, "report.pdf"), summaries)

    print(f"[REPORT] {len(table)} aggregate row(s) written to {report_dir}")
    return {"table": table, "text": text, "paths": paths, "summaries": summaries}
