"""Atomic text output: write to a sibling temp file, then rename over the target."""
from __future__ import annotations

import os
from pathlib import Path


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path
