"""CSV-backed datasets and their in-memory form.

Files are UTF-8 CSV with a header row and RFC-4180 quoting. A dataset
on disk is either a single ``.csv`` file or a directory of ``.csv``
shards read in sorted filename order. Timestamps are ISO-8601.
"""

from __future__ import annotations

import csv
import os
import re
import zlib
from dataclasses import dataclass, field
from datetime import datetime

from ..errors import MissingInput, SchemaViolation
from ..model.schema import Schema, format_value, parse_value

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_SNIFF_ROWS = 1000


@dataclass
class InMemoryDataset:
    schema: Schema
    rows: list = field(default_factory=list)  # list of value tuples

    def __len__(self) -> int:
        return len(self.rows)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=row_sort_key)

    def column(self, name: str) -> list:
        idx = self.schema.index_of(name)
        return [row[idx] for row in self.rows]


def row_sort_key(row: tuple) -> tuple:
    """Total order over rows of one schema (column types are uniform, so
    plain value comparison works; bools sort as ints)."""
    return tuple(int(v) if isinstance(v, bool) else v for v in row)


def stable_hash(value) -> int:
    """Process-independent hash (builtin hash is salted per process)."""
    return zlib.crc32(format_value(value).encode("utf-8"))


def read_csv(path: str, schema: Schema) -> InMemoryDataset:
    if not os.path.isfile(path):
        raise MissingInput(path)
    rows = []
    width = len(schema.attributes)
    types = [a.type for a in schema.attributes]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaViolation(f"{path}: empty file, expected a header row")
        if [h for h in header] != schema.names():
            raise SchemaViolation(f"{path}: header {header} does not match schema {schema.names()}")
        for lineno, record in enumerate(reader, start=2):
            if len(record) != width:
                raise SchemaViolation(f"{path}:{lineno}: expected {width} fields, got {len(record)}")
            try:
                rows.append(tuple(parse_value(text, t) for text, t in zip(record, types)))
            except ValueError as exc:
                raise SchemaViolation(f"{path}:{lineno}: {exc}")
    return InMemoryDataset(schema, rows)


def write_csv(path: str, dataset: InMemoryDataset, sort: bool = True):
    """Write one CSV file; by default rows are sorted by all columns so
    output files are byte-deterministic."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    rows = dataset.sorted_rows() if sort else dataset.rows
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.schema.names())
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def shard_paths(path: str) -> list[str]:
    """The ordered file list behind a dataset path (file or shard dir)."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".csv"))
        if not names:
            raise MissingInput(f"{path}: no .csv shards")
        return [os.path.join(path, n) for n in names]
    if os.path.isfile(path):
        return [path]
    raise MissingInput(path)


def read_dataset(path: str, schema: Schema) -> InMemoryDataset:
    """Read a file or a directory of shards into one in-memory dataset."""
    rows: list = []
    for shard in shard_paths(path):
        rows.extend(read_csv(shard, schema).rows)
    return InMemoryDataset(schema, rows)


def _guess_type(samples: list[str]) -> str:
    filled = [s for s in samples if s != ""]
    if not filled:
        return "string"
    if all(s in ("true", "false") for s in filled):
        return "bool"
    if all(_INT_RE.match(s) for s in filled):
        return "int64"
    if all(_FLOAT_RE.match(s) for s in filled):
        return "float64"
    try:
        for s in filled:
            datetime.fromisoformat(s)
        return "timestamp"
    except ValueError:
        return "string"


def infer_schema(path: str) -> Schema | None:
    """Guess a schema from a CSV header plus up to 1000 data rows.
    Returns None when the path is not a readable CSV."""
    try:
        first = shard_paths(path)[0]
    except MissingInput:
        return None
    try:
        with open(first, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or any(not h for h in header):
                return None
            columns: list[list[str]] = [[] for _ in header]
            for i, record in enumerate(reader):
                if i >= _SNIFF_ROWS:
                    break
                if len(record) != len(header):
                    return None
                for col, text in zip(columns, record):
                    col.append(text)
    except (OSError, UnicodeDecodeError, csv.Error):
        return None
    try:
        return Schema.of(*((name, _guess_type(col)) for name, col in zip(header, columns)))
    except Exception:
        return None


def mean_string_widths(dataset: InMemoryDataset) -> dict[str, float]:
    """Observed mean character width per string column (for byte
    estimates); empty datasets report no widths."""
    out = {}
    if not dataset.rows:
        return out
    for i, attr in enumerate(dataset.schema.attributes):
        if attr.type == "string":
            out[attr.name] = sum(len(row[i]) for row in dataset.rows) / len(dataset.rows)
    return out
