"""Small shared helpers: canonical JSON, config hashing, atomic writes."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile


def to_jsonable(obj):
    """Recursively convert dataclasses/tuples/numpy scalars to JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def canonical_hash(obj) -> str:
    """12-hex-digit content hash, stable under dict key order."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:12]


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file + rename so readers never see partial content."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
