"""Deterministic CSV and plot-data writers."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Iterable, Mapping, Sequence

SCHEMA_VERSION = 1


def format_value(value) -> str:
    """Stable text form: ``repr`` for floats so reruns are byte-identical."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def write_results(records: Iterable[Mapping], path: str, columns: Sequence[str], fmt: str = "csv") -> str:
    """Write records to ``path``; an empty stream yields a header-only file.

    ``fmt="csv"`` gives RFC-4180-style CSV with a header row; ``fmt="dat"``
    gives whitespace-separated columns with a ``#`` header for plotting tools.
    """
    if fmt not in ("csv", "dat"):
        raise ValueError(f"unknown output format {fmt!r}")
    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(columns)
                for rec in records:
                    writer.writerow([format_value(rec.get(c)) for c in columns])
            else:
                fh.write("# " + " ".join(columns) + "\n")
                for rec in records:
                    fh.write(" ".join(format_value(rec.get(c)) or "nan" for c in columns) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def write_metadata(path: str, items: Sequence[tuple], extra: Mapping) -> str:
    """Sidecar JSON with the full configuration and schema version (no timestamps)."""
    payload = {"schema_version": SCHEMA_VERSION, "config": dict(items)}
    payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def read_results(path: str) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
