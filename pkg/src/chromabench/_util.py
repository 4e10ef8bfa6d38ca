"""Shared plumbing: deterministic float formatting and atomic file writes."""

from __future__ import annotations

import os
from pathlib import Path


def fmt9(x: float) -> str:
    """Format a float with 9 significant digits (the CSV convention)."""
    return format(float(x), ".9g")


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write bytes via a temp file + rename so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink(missing_ok=True)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """UTF-8, LF line endings, atomic replace."""
    atomic_write_bytes(path, text.encode("utf-8"))
