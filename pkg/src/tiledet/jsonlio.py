"""JSON Lines plumbing shared by the file-based stages.

Artifacts produced by this toolkit that depend on a frame manifest start
with a single header line {"kind": ..., "manifest_sha256": ...}; readers
also accept header-less files (no hash check possible then). The frame
manifest itself is the root artifact and carries no header; its identity
is the SHA-256 of its raw bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import SchemaViolationError


def dumps_record(obj: dict[str, Any]) -> str:
    """Serialize one record deterministically (compact, key order preserved)."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write records one per line; returns the number of lines written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (1-based line number, parsed object) per non-empty line."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolationError(str(path), line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise SchemaViolationError(str(path), line_no, "expected a JSON object")
            yield line_no, obj


def sha256_of_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def header_record(kind: str, manifest_sha256: str | None) -> dict[str, Any]:
    rec: dict[str, Any] = {"kind": kind}
    if manifest_sha256 is not None:
        rec["manifest_sha256"] = manifest_sha256
    return rec


def is_header(obj: dict[str, Any]) -> bool:
    return "kind" in obj


def require_fields(path: str, line_no: int, obj: dict[str, Any], fields: dict[str, str]) -> None:
    """Validate presence and kind ("int" | "number" | "str" | "bool") of each field."""
    for name, kind in fields.items():
        if name not in obj:
            raise SchemaViolationError(path, line_no, f"missing field {name!r}")
        value = obj[name]
        # bool is an int subclass, so exclude it from the numeric kinds
        if kind == "int":
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif kind == "number":
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif kind == "str":
            ok = isinstance(value, str)
        elif kind == "bool":
            ok = isinstance(value, bool)
        else:  # pragma: no cover - programming error
            raise ValueError(f"unknown field kind {kind!r}")
        if not ok:
            raise SchemaViolationError(path, line_no, f"field {name!r} is not a {kind}")
