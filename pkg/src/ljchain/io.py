"""Atomic artifact writers."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def metadata_line(**fields) -> str:
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    parts = [f"generated={stamp}"] + [f"{k}={v}" for k, v in fields.items()]
    return "# " + " ".join(parts)


def csv_text(rows, meta: str | None = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write(meta.rstrip("\n") + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def write_csv(path, rows, **meta) -> Path:
    return atomic_write_text(path, csv_text(rows, metadata_line(**meta)))


def read_csv_body(path) -> list[list[str]]:
    """Rows of a CSV artifact with ``#`` metadata lines dropped."""
    with open(path, newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
