from __future__ import annotations

import csv
import io
import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from cooc.config import FEATURE_SIG_DIGITS
from cooc.core.correlation import LabelSpace
from cooc.core.dataset import DatasetTable
from cooc.errors import ConfigError, ParseError

ID_COLUMNS = ("subject", "task", "domain")

_FEATURE_RE = re.compile(r"^f(?P<idx>\d+)$")


def format_float(v: float) -> str:
    return f"{v:.{FEATURE_SIG_DIGITS}g}"


def dataset_csv_text(table: DatasetTable) -> str:
    """CSV with header subject,task,domain,f0..f{D-1},<class names>."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*ID_COLUMNS, *(f"f{i}" for i in range(table.feature_dim)), *table.class_names])
    for i in range(table.n_rows):
        w.writerow(
            [
                table.subject_ids[i],
                table.task_ids[i],
                table.domain_ids[i],
                *(format_float(v) for v in table.features[i]),
                *(str(int(v)) for v in table.labels[i]),
            ]
        )
    return buf.getvalue()


def write_dataset(table: DatasetTable, path: Path) -> None:
    path.write_text(dataset_csv_text(table), encoding="utf-8", newline="")


def _split_header(header: List[str]) -> tuple[int, Tuple[str, ...]]:
    """Returns (feature count, class names) from a dataset header row."""
    if tuple(header[:3]) != ID_COLUMNS:
        raise ParseError(f"header must start with {','.join(ID_COLUMNS)}, got {','.join(header[:3])}", line=1)

    d = 0
    for name in header[3:]:
        m = _FEATURE_RE.match(name)
        if not m:
            break
        if int(m.group("idx")) != d:
            raise ParseError(f"feature columns out of order at '{name}' (expected f{d})", line=1)
        d += 1

    classes = tuple(header[3 + d :])
    if d == 0:
        raise ParseError("header has no feature columns (f0, f1, ...)", line=1)
    try:
        LabelSpace(classes)
    except ConfigError as e:
        raise ParseError(f"bad class columns: {e}", line=1) from e
    return d, classes


def parse_dataset(
    text: str,
    expected_classes: Optional[Sequence[str]] = None,
    task_names: Optional[Sequence[str]] = None,
) -> DatasetTable:
    # row-by-row csv instead of pandas so every ParseError carries its 1-based line number
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", line=1) from None

    d, classes = _split_header(header)
    if expected_classes is not None and tuple(expected_classes) != classes:
        missing = [c for c in expected_classes if c not in classes]
        extra = [c for c in classes if c not in expected_classes]
        raise ParseError(
            f"schema mismatch: missing classes {missing or '-'}, unexpected classes {extra or '-'}",
            line=1,
        )

    width = 3 + d + len(classes)
    subjects: List[str] = []
    tasks: List[str] = []
    domains: List[str] = []
    features: List[List[float]] = []
    labels: List[List[int]] = []

    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} cells, got {len(row)}", line=line)
        subjects.append(row[0])
        tasks.append(row[1])
        domains.append(row[2])
        try:
            features.append([float(v) for v in row[3 : 3 + d]])
        except ValueError as e:
            raise ParseError(f"bad feature value ({e})", line=line) from None
        lab = row[3 + d :]
        for name, cell in zip(classes, lab):
            if cell not in ("0", "1"):
                raise ParseError(f"label '{name}' must be 0 or 1, got '{cell}'", line=line)
        labels.append([int(v) for v in lab])

    order: List[str] = list(task_names or [])
    for t in tasks:
        if t not in order:
            order.append(t)

    return DatasetTable(
        features=np.asarray(features, dtype=np.float64).reshape(len(features), d),
        labels=np.asarray(labels, dtype=np.int8).reshape(len(labels), len(classes)),
        subject_ids=subjects,
        task_ids=tasks,
        domain_ids=domains,
        space=LabelSpace(classes),
        task_names=tuple(order),
    )


def read_dataset(
    path: Path,
    expected_classes: Optional[Sequence[str]] = None,
    task_names: Optional[Sequence[str]] = None,
) -> DatasetTable:
    return parse_dataset(path.read_text(encoding="utf-8"), expected_classes, task_names)


def predictions_csv_text(yhat: np.ndarray, class_names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(class_names))
    for row in np.asarray(yhat, dtype=np.float64):
        w.writerow([format_float(v) for v in row])
    return buf.getvalue()


def read_predictions(path: Path) -> tuple[np.ndarray, Tuple[str, ...]]:
    reader = csv.reader(io.StringIO(path.read_text(encoding="utf-8"), newline=""))
    try:
        classes = tuple(next(reader))
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    rows: List[List[float]] = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(classes):
            raise ParseError(f"expected {len(classes)} cells, got {len(row)}", line=reader.line_num)
        try:
            values = [float(v) for v in row]
        except ValueError as e:
            raise ParseError(f"bad prediction value ({e})", line=reader.line_num) from None
        if not all(0.0 < v < 1.0 for v in values):
            raise ParseError("predictions must lie strictly inside (0, 1)", line=reader.line_num)
        rows.append(values)
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), len(classes)), classes
