"""Bundled reference result tables for report and regression tooling.

These are transcribed benchmark figures: display constants only, never
computational ground truth. The file ships with the package and is
checksummed by the test suite, so any edit is a deliberate, visible act.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .metrics import ModelPoint

DATA_FILE = "reference_data/reference_tables.csv"


@dataclass(frozen=True)
class ReferenceEntry:
    table: str
    row: str
    metric: str  # empty for a row's single headline value
    variant: str  # distinguishes training regimes within one table
    value: int | float | str
    citation: str


def _parse_value(text: str) -> int | float | str:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _normalize(text: str) -> str:
    return "".join(ch for ch in text.lower() if ch.isalnum())


def _normalize_table(table: str) -> str:
    norm = _normalize(str(table))
    return norm[5:] if norm.startswith("table") else norm


def data_bytes() -> bytes:
    return resources.files("gesturekit").joinpath(DATA_FILE).read_bytes()


def data_sha256() -> str:
    return hashlib.sha256(data_bytes()).hexdigest()


@lru_cache(maxsize=1)
def entries() -> tuple[ReferenceEntry, ...]:
    text = data_bytes().decode("utf-8")
    reader = csv.DictReader(text.splitlines())
    out = []
    for line in reader:
        out.append(
            ReferenceEntry(
                table=line["table"],
                row=line["row"],
                metric=line["metric"],
                variant=line["variant"],
                value=_parse_value(line["value"]),
                citation=line["citation"],
            )
        )
    if not out:
        raise ValueError("reference table file is empty")
    return tuple(out)


def tables() -> tuple[str, ...]:
    seen = dict.fromkeys(e.table for e in entries())
    return tuple(seen)


def lookup(table, row: str, metric: str | None = None, variant: str | None = None):
    """Exact transcribed value for (table, row, metric[, variant]).

    Matching is case- and punctuation-insensitive; a row may be named by any
    unique prefix ("proposed" finds "Proposed method"). With metric omitted,
    either the row must hold a single value or one entry must be the row's
    unnamed headline value.
    """
    t = _normalize_table(table)
    candidates = [e for e in entries() if _normalize_table(e.table) == t]
    if not candidates:
        raise KeyError(f"unknown table {table!r}; have {sorted(set(tables()))}")

    want = _normalize(row)
    exact = [e for e in candidates if _normalize(e.row) == want]
    if not exact:
        prefixed_rows = {e.row for e in candidates if _normalize(e.row).startswith(want)}
        if len(prefixed_rows) != 1:
            raise KeyError(f"row {row!r} not found in table {table!r} (prefixes: {sorted(prefixed_rows)})")
        exact = [e for e in candidates if e.row in prefixed_rows]
    candidates = exact

    if metric is not None:
        candidates = [e for e in candidates if _normalize(e.metric) == _normalize(metric)]
        if not candidates:
            raise KeyError(f"metric {metric!r} not found for row {row!r} in table {table!r}")
    if variant is not None:
        candidates = [e for e in candidates if _normalize(e.variant) == _normalize(variant)]
        if not candidates:
            raise KeyError(f"variant {variant!r} not found for row {row!r} in table {table!r}")

    if len(candidates) == 1:
        return candidates[0].value
    if metric is None:
        headline = [e for e in candidates if e.metric == ""]
        if len(headline) == 1:
            return headline[0].value
    keys = sorted({(e.metric, e.variant) for e in candidates})
    raise KeyError(f"ambiguous lookup ({table!r}, {row!r}): specify one of {keys}")


def model_points(table: str = "fig10") -> list[ModelPoint]:
    """The bundled F1-versus-parameters points, ready for the Pareto report."""
    t = _normalize_table(table)
    rows: dict[str, dict[str, float]] = {}
    for e in entries():
        if _normalize_table(e.table) == t and e.metric in ("f1", "params"):
            rows.setdefault(e.row, {})[e.metric] = float(e.value)
    points = []
    for name in rows:
        cell = rows[name]
        if set(cell) != {"f1", "params"}:
            raise ValueError(f"row {name!r} in table {table!r} lacks f1/params")
    points = [ModelPoint(name, rows[name]["f1"], rows[name]["params"]) for name in rows]
    if not points:
        raise KeyError(f"table {table!r} holds no model points")
    return points
