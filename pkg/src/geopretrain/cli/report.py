"""Aggregate results tables across runs, flagging the best value per column."""

from __future__ import annotations

import csv
from pathlib import Path

RESULTS_NAME = "results.csv"
PER_CLASS_NAME = "per_class_results.csv"


def _read_rows(paths) -> tuple[list[str], list[dict]]:
    columns: list[str] = []
    rows: list[dict] = []
    for path in paths:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                continue
            for name in reader.fieldnames:
                if name not in columns:
                    columns.append(name)
            rows.extend(reader)
    return columns, rows


def _numeric_columns(columns, rows) -> list[str]:
    numeric = []
    for col in columns:
        if col == "model":
            continue
        try:
            for row in rows:
                float(row.get(col, ""))
            numeric.append(col)
        except ValueError:
            continue
    return numeric


def markdown_table(columns, rows, flag_best=True) -> str:
    numeric = _numeric_columns(columns, rows) if flag_best else []
    best = {col: max(float(r[col]) for r in rows) for col in numeric}
    lines = ["| " + " | ".join(columns) + " |",
             "| " + " | ".join("---" for _ in columns) + " |"]
    for row in rows:
        cells = []
        for col in columns:
            value = row.get(col, "")
            if col in best and float(value) == best[col]:
                value = f"**{value}**"
            cells.append(value)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def generate_report(results_dir: str | Path, out_dir: str | Path) -> Path | None:
    """Merge every results.csv / per_class_results.csv under results_dir.

    Returns the written report path, or None when no rows were found.
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir)
    sections = []
    for name, title in ((RESULTS_NAME, "Results"),
                        (PER_CLASS_NAME, "Per-class results")):
        paths = sorted(results_dir.rglob(name))
        if not paths:
            continue
        columns, rows = _read_rows(paths)
        if not rows:
            continue
        rows.sort(key=lambda r: r.get("model", ""))
        sections.append(f"## {title}\n\n{markdown_table(columns, rows)}\n")
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / name, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            writer.writerows(rows)
    if not sections:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    report = out_dir / "report.md"
    report.write_text("# Evaluation report\n\n" + "\n".join(sections))
    return report


def append_results_row(path: str | Path, columns: list[str], row: dict) -> None:
    """Append one row, writing the header when the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        if new:
            writer.writeheader()
        writer.writerow(row)
