#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""RFC-4180 CSV tables with 17-significant-digit floats."""

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    """Round-trip exact decimal for floats, plain text otherwise."""
    if isinstance(value, float):
        return f"{value:.16e}"
    return str(value)


def render_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} values, header has {len(header)}")
        writer.writerow([format_value(value) for value in row])
    return buffer.getvalue()


def parse_table(text: str) -> tuple[list[str], list[list[str]]]:
    reader = csv.reader(io.StringIO(text, newline=""))
    rows = [row for row in reader if row]
    if not rows:
        raise ValueError("table has no header row")
    return rows[0], rows[1:]


def read_text(path: Path | str) -> str:
    """File contents with line ends left untranslated."""
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def read_float_table(path: Path | str) -> tuple[list[str], list[list[float]]]:
    """Header and float rows of a numeric CSV file."""
    header, rows = parse_table(read_text(path))
    return header, [[float(value) for value in row] for row in rows]


def read_columns(path: Path | str) -> dict[str, list[float]]:
    """Numeric CSV file as a mapping from column name to values."""
    header, rows = read_float_table(path)
    return {name: [row[i] for row in rows] for i, name in enumerate(header)}
