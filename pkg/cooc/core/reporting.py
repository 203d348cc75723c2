from __future__ import annotations

import json
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from cooc.config import CORR_DECIMALS, METRIC_DECIMALS
from cooc.core.correlation import CorrelationMatrix
from cooc.core.run_config import ValidationResult


def run_stamp() -> str:
    return datetime.now().strftime("%Y%m%d-%H%M%S")


def _unique_dir(dst: Path) -> Path:
    """
    If dst exists, add suffix _N.
    """
    if not dst.exists():
        return dst
    i = 2
    while True:
        candidate = dst.with_name(f"{dst.name}_{i}")
        if not candidate.exists():
            return candidate
        i += 1


def ensure_run_dir(out: Path, command: str, stamp: Optional[str] = None) -> Path:
    """Creates <out>/<command>-<stamp>/ without ever reusing an existing folder."""
    out.mkdir(parents=True, exist_ok=True)
    while True:
        target = _unique_dir(out / f"{command}-{stamp or run_stamp()}")
        try:
            target.mkdir()
            return target
        except FileExistsError:
            # lost a race with a concurrent run; pick the next suffix
            continue


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def json_text(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


def frame_csv(frame: pd.DataFrame, decimals: int = METRIC_DECIMALS) -> str:
    return frame.to_csv(index=False, float_format=f"%.{decimals}f", lineterminator="\n")


def corr_to_frame(corr: CorrelationMatrix, class_names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    names = list(class_names or corr.class_names or [str(i) for i in range(corr.U)])
    values = np.where(corr.valid, corr.values, np.nan)
    return pd.DataFrame(values, index=pd.Index(names, name="class"), columns=names)


def corr_csv_text(corr: CorrelationMatrix, class_names: Optional[Sequence[str]] = None) -> str:
    """Header row and first column hold class names; invalid pairs are empty cells."""
    return corr_to_frame(corr, class_names).to_csv(float_format=f"%.{CORR_DECIMALS}f", lineterminator="\n")


def corr_json(corr: CorrelationMatrix, class_names: Optional[Sequence[str]] = None) -> dict:
    names = list(class_names or corr.class_names or [str(i) for i in range(corr.U)])
    return {
        "class_names": names,
        "values": [[round(float(v), CORR_DECIMALS) for v in row] for row in corr.values],
        "valid": corr.valid.tolist(),
    }


def serialize_results(results: Iterable[ValidationResult]) -> List[dict]:
    return [{"level": r.level, "message": r.message} for r in results]


def build_report_dict(
    tool_version: str,
    command: str,
    config: dict,
    tables: Optional[Dict[str, List[dict]]] = None,
    summary: Optional[dict] = None,
    notes: Optional[List[ValidationResult]] = None,
) -> dict:
    # no timestamp: repeated runs must produce identical files
    return {
        "tool": "cooc",
        "version": tool_version,
        "command": command,
        "config": config,
        "summary": summary or {},
        "tables": tables or {},
        "notes": serialize_results(notes or []),
    }


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _cell(v: Any) -> str:
    if isinstance(v, dict):
        # pre-rendered markup from _styled
        return str(v.get("text", ""))
    if isinstance(v, float):
        return f"{v:.4f}" if np.isfinite(v) else "-"
    return _esc(str(v))


_TD = 'style="vertical-align:top; padding:6px 8px; border-bottom:1px solid #ddd;"'
_TH = 'style="text-align:left; padding:6px 8px; border-bottom:2px solid #333;"'


def _html_table(rows: List[dict]) -> str:
    if not rows:
        return "<div><i>No rows</i></div>"
    cols = list(rows[0].keys())
    head = "".join(f"<th {_TH}>{_esc(c)}</th>" for c in cols)
    body = []
    for row in rows:
        body.append("<tr>" + "".join(f"<td {_TD}>{_cell(row.get(c, ''))}</td>" for c in cols) + "</tr>")
    return f"""<table style="border-collapse:collapse;">
    <thead><tr>{head}</tr></thead>
    <tbody>{''.join(body)}</tbody>
  </table>"""


def report_html(report: dict, highlights: Optional[Dict[str, List[dict]]] = None) -> str:
    """
    Simple no-deps HTML summary. `highlights` maps a table name to rows whose
    cells may be {"text": ..., "bold": bool, "underline": bool} records.
    """
    title = f"{report.get('tool')} {report.get('command')} - Report"

    cfg_rows = "".join(
        f"<div><b>{_esc(str(k))}</b>: {_esc(json.dumps(to_jsonable(v)))}</div>"
        for k, v in report.get("config", {}).items()
    )
    summary_rows = "".join(
        f"<div><b>{_esc(str(k))}</b>: {_cell(v)}</div>" for k, v in report.get("summary", {}).items()
    )

    sections = []
    tables = dict(report.get("tables", {}))
    for name, rows in (highlights or {}).items():
        tables[name] = [{k: _styled(v) for k, v in row.items()} for row in rows]
    for name, rows in tables.items():
        sections.append(f'<h2 style="margin-top:24px;">{_esc(name)}</h2>\n  {_html_table(rows)}')

    notes = "".join(
        f"<div><b>{_esc(n['level'])}</b>: {_esc(n['message'])}</div>" for n in report.get("notes", [])
    ) or "<div><i>None</i></div>"

    return f"""<!doctype html>
<html>
<head>
  <meta charset="utf-8" />
  <title>{_esc(title)}</title>
</head>
<body style="font-family: Arial, sans-serif; margin: 24px;">
  <h1 style="margin-bottom:4px;">{_esc(title)}</h1>
  <div style="color:#444;">Version: {_esc(str(report.get('version', '')))}</div>

  <h2>Summary</h2>
  {summary_rows or '<div><i>None</i></div>'}

  {''.join(sections)}

  <h2 style="margin-top:24px;">Configuration</h2>
  {cfg_rows}

  <h2 style="margin-top:24px;">Notes</h2>
  {notes}
</body>
</html>
"""


def _styled(v: Any) -> Any:
    if not isinstance(v, dict):
        return v
    text = _cell(v.get("text", ""))
    if v.get("bold"):
        text = f"<b>{text}</b>"
    if v.get("underline"):
        text = f"<u>{text}</u>"
    return {"text": text}


class RunWriter:
    """Serializes every write into one run folder; safe to share between worker threads."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self.files: List[str] = []
        self._lock = threading.Lock()

    def _path(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_text(self, name: str, text: str) -> Path:
        with self._lock:
            path = self._path(name)
            path.write_text(text, encoding="utf-8", newline="")
            self.files.append(name)
            return path

    def write_bytes(self, name: str, data: bytes) -> Path:
        with self._lock:
            path = self._path(name)
            path.write_bytes(data)
            self.files.append(name)
            return path

    def write_json(self, name: str, obj: Any) -> Path:
        return self.write_text(name, json_text(obj))

    def write_frame(self, name: str, frame: pd.DataFrame, decimals: int = METRIC_DECIMALS) -> Path:
        return self.write_text(name, frame_csv(frame, decimals))

    def write_report(self, report: dict, highlights: Optional[Dict[str, List[dict]]] = None) -> None:
        self.write_json("report.json", report)
        self.write_text("report.html", report_html(report, highlights))
