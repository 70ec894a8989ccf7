"""Small file I/O helpers: JSONL streams, TSV tables, atomic writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

from vctrace.errors import TableFormatError


def read_jsonl(path: str | Path) -> Iterator[tuple[int, Any, str | None]]:
    """Yield (line_number, parsed_object, error) per non-blank line.

    Malformed JSON yields (line_number, None, message) so callers can keep
    streaming; line numbers are 1-based.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line), None
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc.msg}"


def write_jsonl(path: str | Path, records: Iterable[Any]) -> int:
    """Atomically write records as one JSON object per line. Returns count."""
    n = 0
    with atomic_write(path) as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            n += 1
    return n


def dumps_stable(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


class atomic_write:
    """Context manager writing to a temp file, renamed into place on success."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._tmp = None
        self._fh = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(
            prefix=self.path.name + ".", suffix=".tmp", dir=self.path.parent
        )
        self._tmp = tmp
        self._fh = os.fdopen(fd, "w", encoding="utf-8", newline="\n")
        return self._fh

    def __exit__(self, exc_type, exc, tb):
        self._fh.close()
        if exc_type is None:
            os.replace(self._tmp, self.path)
        else:
            os.unlink(self._tmp)
        return False


def read_tsv(path: str | Path, required_columns: list[str]) -> list[dict[str, str]]:
    """Read a header-bearing TSV into row dicts, validating the header.

    Raises TableFormatError when the header is missing a required column or
    a row has the wrong field count.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise TableFormatError(f"{path}: empty file, expected header")
        header = header_line.rstrip("\n").split("\t")
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise TableFormatError(
                f"{path}: header missing column(s): {', '.join(missing)}"
            )
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(header):
                raise TableFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
                )
            rows.append(dict(zip(header, fields)))
    return rows


def write_tsv(path: str | Path, header: list[str], rows: Iterable[Iterable[Any]]) -> int:
    n = 0
    with atomic_write(path) as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")
            n += 1
    return n
