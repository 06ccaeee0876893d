"""Durable single-file record store.

Newline-delimited JSON, one `{"op": "put"|"delete", "record": ...}` per
line. Every record carries a `type` and a `key`; (type, key) identifies
it, later puts overwrite earlier ones. `compact()` rewrites the file as
a snapshot of live records. Appends take an exclusive flock on a
sidecar lock file so concurrent processes serialize their writes;
readers replay without locking.
"""

from __future__ import annotations

import fcntl
import json
import os
import tempfile

from .errors import MalformedJson


class LogStore:
    def __init__(self, path: str):
        self.path = path
        self._live: dict[tuple[str, str], dict] = {}
        self._order: list[tuple[str, str]] = []
        self._lines = 0
        self._replay()

    # -- persistence -----------------------------------------------------

    def _lock_path(self) -> str:
        return self.path + ".lock"

    def _replay(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                self._lines += 1
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    raise MalformedJson(f"{self.path}:{lineno}: not JSON")
                self._apply(entry)

    def _apply(self, entry: dict):
        op = entry.get("op")
        record = entry.get("record")
        if op == "put":
            key = (record["type"], record["key"])
            if key not in self._live:
                self._order.append(key)
            self._live[key] = record
        elif op == "delete":
            key = (record["type"], record["key"])
            self._live.pop(key, None)
            if key in self._order:
                self._order.remove(key)
        else:
            raise MalformedJson(f"unknown op {op!r}")

    def _append(self, entry: dict):
        line = json.dumps(entry, sort_keys=True, separators=(",", ":"))
        with open(self._lock_path(), "w") as lock_fh:
            fcntl.flock(lock_fh, fcntl.LOCK_EX)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        self._lines += 1
        self._apply(entry)

    # -- API -------------------------------------------------------------

    def put(self, record: dict):
        if "type" not in record or "key" not in record:
            raise MalformedJson("record needs type and key")
        self._append({"op": "put", "record": record})

    def delete(self, rtype: str, key: str):
        self._append({"op": "delete", "record": {"type": rtype, "key": key}})

    def get(self, rtype: str, key: str) -> dict | None:
        return self._live.get((rtype, key))

    def records(self, rtype: str) -> list[dict]:
        return [self._live[k] for k in self._order if k[0] == rtype]

    def types(self) -> set[str]:
        return {t for t, _ in self._live}

    def compact(self):
        """Rewrite the log as one put per live record, atomically."""
        with open(self._lock_path(), "w") as lock_fh:
            fcntl.flock(lock_fh, fcntl.LOCK_EX)
            dir_name = os.path.dirname(os.path.abspath(self.path)) or "."
            fd, tmp = tempfile.mkstemp(prefix=".storetmp", dir=dir_name)
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    for key in self._order:
                        entry = {"op": "put", "record": self._live[key]}
                        fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, self.path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        self._lines = len(self._order)

    def dump(self) -> str:
        """Canonical text of every live record, for equality comparison."""
        lines = [
            json.dumps(self._live[k], sort_keys=True, separators=(",", ":"))
            for k in sorted(self._live)
        ]
        return "\n".join(lines)
