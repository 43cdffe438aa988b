"""Feature tables and deterministic text serialization.

All tabular artifacts in this package go through this module so that a rerun
with the same seed produces byte-identical files.  Floats are rendered with
``repr``, which is the shortest string that round-trips, and rows are written
with ``\n`` endings regardless of platform.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, SchemaError


def format_value(x: float) -> str:
    """Shortest round-tripping representation; nan/inf render as such."""
    return repr(float(x))


def write_delimited(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a comma-delimited table atomically (tmp file + rename)."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: str, text: str) -> None:
    """Write text so that readers never observe a partially written file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    """Stable JSON rendering used for hashing configs and plans."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_seed(root_seed: int, *tags) -> int:
    """Deterministic child seed for a named unit of work.

    Python's builtin hash is salted per process, so child seeds are derived
    from a sha256 of the root seed plus the tag tuple instead.
    """
    text = canonical_json([int(root_seed), [str(t) for t in tags]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class FeatureTable:
    """A dense student-by-feature matrix with named columns.

    Rows are keyed by student id and columns by rendered feature names.
    Values are float64; the container is immutable.
    """

    student_ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.student_ids), len(self.columns)):
            raise SchemaError(
                f"value block {v.shape} does not match "
                f"{len(self.student_ids)} students x {len(self.columns)} columns"
            )
        if len(set(self.columns)) != len(self.columns):
            raise SchemaError("duplicate column names")
        if len(set(self.student_ids)) != len(self.student_ids):
            raise SchemaError("duplicate student ids")
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return len(self.student_ids)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaError(f"no such column: {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def select_columns(self, names: Sequence[str]) -> "FeatureTable":
        """Reindex to the given columns, erroring on any missing name."""
        missing = [n for n in names if n not in set(self.columns)]
        if missing:
            raise SchemaError(f"columns absent from table: {missing}")
        pos = {c: i for i, c in enumerate(self.columns)}
        idx = [pos[n] for n in names]
        return FeatureTable(self.student_ids, tuple(names), self.values[:, idx])

    def drop_columns(self, names: Sequence[str]) -> "FeatureTable":
        gone = set(names)
        keep = [c for c in self.columns if c not in gone]
        return self.select_columns(keep)

    def to_text(self) -> str:
        lines = [",".join(("student_id",) + self.columns)]
        for i, sid in enumerate(self.student_ids):
            cells = [sid] + [format_value(x) for x in self.values[i]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        atomic_write_text(path, self.to_text())

    @staticmethod
    def from_text(text: str) -> "FeatureTable":
        lines = text.splitlines()
        if not lines:
            raise ParseError("empty table", 1)
        header = lines[0].split(",")
        if not header or header[0] != "student_id":
            raise ParseError("first column must be student_id", 1)
        columns = tuple(header[1:])
        ids: list[str] = []
        rows: list[list[float]] = []
        for no, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, found {len(cells)}", no
                )
            ids.append(cells[0])
            try:
                rows.append([float(c) for c in cells[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), no) from None
        values = np.array(rows, dtype=float) if rows else np.zeros((0, len(columns)))
        return FeatureTable(tuple(ids), columns, values)

    @staticmethod
    def read(path: str) -> "FeatureTable":
        with open(path, "r", encoding="utf-8") as fh:
            return FeatureTable.from_text(fh.read())
