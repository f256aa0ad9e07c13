"""Atomic text output: write to a temporary file in the target directory, then rename."""

from __future__ import annotations

import csv
import io
import os
import tempfile


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows, fmt=None) -> str:
    """CSV with a header; ``fmt`` formats float cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        cells = [row[c] for c in columns] if isinstance(row, dict) else list(row)
        if fmt is not None:
            cells = [fmt(x) if isinstance(x, float) else x for x in cells]
        writer.writerow(cells)
    return buf.getvalue()
