"""
CSV and JSON writers for study reports and single-level results.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List

from ..orchestration.state import ConvergenceReport


logger = logging.getLogger(__name__)

CSV_COLUMNS = ["level", "h", "state_l2", "state_l1", "adjoint_linf", "gradient_gap", "control_err"]


def _cell(value: Any) -> str:
    # repr keeps every bit of a float, so identical runs give identical files
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_to_csv(report: ConvergenceReport) -> str:
    """One row per level with the fixed column set; absent quantities stay blank."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in report.levels:
        row = [record.level, record.h] + [record.errors.get(column) for column in CSV_COLUMNS[2:]]
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


def read_csv_rows(path: Path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_report(report: ConvergenceReport, out_dir: Path, stem: str = "study") -> Dict[str, Path]:
    """
    Write ``<stem>.csv`` and ``<stem>.json`` into ``out_dir``.

    Returns:
        Mapping of format to written path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    csv_path.write_text(report_to_csv(report), encoding="utf-8")
    json_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote {csv_path} and {json_path}")
    return {"csv": csv_path, "json": json_path}


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_jsonl(records: List[Dict[str, Any]], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    logger.info(f"Wrote {path}")
    return path
