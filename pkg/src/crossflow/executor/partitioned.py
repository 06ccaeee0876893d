"""Partitioned parallel backend.

Datasets move through a fragment as W row chunks. Element-at-a-time
operators run chunk-local; join, groupby and dedup first repartition
every input by a stable hash of the first key column so equal keys
meet in the same partition; train and sink gather. Chunks are
contiguous slices and shuffles concatenate partition outputs in index
order, so within any hash bucket rows keep their original relative
order and results match the single-threaded backend row for row as a
multiset.

Worker tasks are plain module functions over picklable arguments; with
one worker (or ``use_processes=False``) the same tasks run inline,
which keeps the partitioning semantics while skipping process startup.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor

from ..model.graph import DataflowGraph
from ..model.schema import Schema
from .base import (
    FragmentOutcome,
    NodeMeasure,
    consumers_within,
    fragment_entry_error,
    wrap_node_error,
)
from .dataset import InMemoryDataset, stable_hash
from .learner import ModelArtifact
from . import ops


def _task_rows(op: str, payload: dict, schema_json: list, rows: list) -> list:
    ds = InMemoryDataset(Schema.from_json(schema_json), rows)
    if op == "filter":
        return ops.apply_filter(ds, payload["predicate"]).rows
    if op == "map":
        return ops.apply_map(ds, payload["columns"]).rows
    if op == "cast":
        return ops.apply_cast(ds, payload["types"]).rows
    if op == "predict":
        return ops.apply_predict(ds, ModelArtifact.from_json(payload["model"])).rows
    raise ValueError(f"not an element-at-a-time operator: {op}")  # pragma: no cover


def _task_bucket(key_index: int, n_buckets: int, rows: list) -> list:
    buckets = [[] for _ in range(n_buckets)]
    for row in rows:
        buckets[stable_hash(row[key_index]) % n_buckets].append(row)
    return buckets


def _task_join(left_schema: list, right_schema: list, keys: list, left_rows: list, right_rows: list) -> list:
    left = InMemoryDataset(Schema.from_json(left_schema), left_rows)
    right = InMemoryDataset(Schema.from_json(right_schema), right_rows)
    return ops.apply_join(left, right, keys).rows


def _task_groupby(schema_json: list, keys: list, aggs: dict, rows: list) -> list:
    ds = InMemoryDataset(Schema.from_json(schema_json), rows)
    return ops.apply_groupby(ds, keys, aggs).rows


def _task_dedup(schema_json: list, keys: list, rows: list) -> list:
    ds = InMemoryDataset(Schema.from_json(schema_json), rows)
    return ops.apply_dedup(ds, keys).rows


def _chunk(rows: list, n: int) -> list:
    """Split into n contiguous slices whose sizes differ by at most 1."""
    size, extra = divmod(len(rows), n)
    parts = []
    start = 0
    for i in range(n):
        end = start + size + (1 if i < extra else 0)
        parts.append(rows[start:end])
        start = end
    return parts


class _Parts:
    """A dataset living as W ordered row chunks."""

    def __init__(self, schema: Schema, chunks: list):
        self.schema = schema
        self.chunks = chunks

    @property
    def total(self) -> int:
        return sum(len(c) for c in self.chunks)

    def gather(self) -> InMemoryDataset:
        rows = []
        for c in self.chunks:
            rows.extend(c)
        return InMemoryDataset(self.schema, rows)


class PartitionedBackend:
    kind = "partitioned"

    def __init__(self, workers: int | None = None, use_processes: bool | None = None):
        self.workers = max(1, workers if workers is not None else (os.cpu_count() or 1))
        self.use_processes = self.workers > 1 if use_processes is None else use_processes
        self._pool = None

    # -- pool -------------------------------------------------------------

    def _run_tasks(self, fn, args_list: list) -> list:
        if not self.use_processes or len(args_list) <= 1:
            return [fn(*args) for args in args_list]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        futures = [self._pool.submit(fn, *args) for args in args_list]
        return [f.result() for f in futures]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- execution --------------------------------------------------------

    def execute(self, graph: DataflowGraph, node_ids, entry: dict, keep=()) -> FragmentOutcome:
        outcome = FragmentOutcome()
        data: dict = {}
        for name, value in entry.items():
            data[name] = value  # placeholders stay whole until their source runs
        keep = frozenset(keep)
        remaining = consumers_within(graph, node_ids)

        for nid in node_ids:
            node = graph.node(nid)

            def resolve(name, node=node):
                if name not in data:
                    raise fragment_entry_error(node, name)
                return data[name]

            started = time.perf_counter()
            try:
                cards, out_card = self._execute_node(node, data, resolve, outcome)
            except Exception as exc:
                raise wrap_node_error(nid, exc)
            wall = time.perf_counter() - started
            out_rows = {}
            for conn in node.outputs:
                value = data.get(conn)
                if isinstance(value, _Parts):
                    out_rows[conn] = value.total
                elif isinstance(value, InMemoryDataset):
                    out_rows[conn] = len(value)
                else:
                    out_rows[conn] = 1
            outcome.measures.append(NodeMeasure(nid, cards, out_card, wall, out_rows))
            if node.operator == "source":
                for name in node.inputs:
                    data.pop(name, None)
            for conn in graph.dataset_inputs(node):
                remaining[conn] -= 1
                # exit connectors in `keep` outlive the fragment; models stay
                # for registration; everything else is freed when dead
                if remaining[conn] == 0 and conn not in keep and isinstance(data.get(conn), (_Parts, InMemoryDataset)):
                    del data[conn]
        for conn, value in data.items():
            outcome.connectors[conn] = value.gather() if isinstance(value, _Parts) else value
        return outcome

    def _as_parts(self, value) -> _Parts:
        if isinstance(value, _Parts):
            return value
        return _Parts(value.schema, _chunk(value.rows, self.workers))

    def _rows_of(self, value) -> int:
        if isinstance(value, _Parts):
            return value.total
        if isinstance(value, InMemoryDataset):
            return len(value)
        return 1

    def _shuffle(self, value, key_index: int) -> _Parts:
        """Repartition by hash of one column; bucket i is the ordered
        concatenation of every input chunk's bucket i."""
        parts = self._as_parts(value)
        w = self.workers
        bucketed = self._run_tasks(_task_bucket, [(key_index, w, c) for c in parts.chunks])
        merged = []
        for b in range(w):
            rows = []
            for per_chunk in bucketed:
                rows.extend(per_chunk[b])
            merged.append(rows)
        return _Parts(parts.schema, merged)

    def _execute_node(self, node, data, resolve, outcome):
        op = node.operator
        params = node.params
        if op == "source":
            cards = []
            total = 0
            for in_name, out_name in zip(node.inputs, node.outputs):
                value = resolve(in_name)
                if isinstance(value, InMemoryDataset):
                    data[out_name] = self._as_parts(value)
                else:
                    data[out_name] = value
                rows = self._rows_of(value)
                cards.append(rows)
                total += rows
            return cards, total
        if op == "sink":
            value = resolve(node.inputs[0])
            ds = value.gather() if isinstance(value, _Parts) else value
            outcome.sink_results[node.node_id] = InMemoryDataset(ds.schema, ds.sorted_rows())
            return [len(ds)], 0
        if op == "train":
            value = resolve(node.inputs[0])
            ds = value.gather() if isinstance(value, _Parts) else value
            model = ops.apply_train(ds, list(params.get("features") or ()), params.get("target"))
            data[node.outputs[0]] = model
            outcome.training[node.node_id] = {
                "per_epoch": [(1, "rmse", model.training_metrics["rmse"])],
                "final_metrics": dict(model.training_metrics),
            }
            return [len(ds)], 1
        if op == "predict":
            model = dataset_value = None
            cards = []
            for name in node.inputs:
                value = resolve(name)
                if isinstance(value, ModelArtifact):
                    model = value
                    cards.append(1)
                else:
                    dataset_value = value
                    cards.append(self._rows_of(value))
            if model is None or dataset_value is None:
                raise fragment_entry_error(node, "model")
            parts = self._as_parts(dataset_value)
            payload = {"model": model.to_json()}
            schema_json = parts.schema.to_json()
            results = self._run_tasks(
                _task_rows, [("predict", payload, schema_json, c) for c in parts.chunks]
            )
            out = _Parts(ops.predict_schema(parts.schema), results)
            data[node.outputs[0]] = out
            return cards, out.total
        if op in ("filter", "map", "cast"):
            parts = self._as_parts(resolve(node.inputs[0]))
            schema_json = parts.schema.to_json()
            if op == "filter":
                payload = {"predicate": str(params.get("predicate"))}
                out_schema = parts.schema
            elif op == "map":
                payload = {"columns": dict(params.get("columns") or {})}
                out_schema = ops.map_schema(parts.schema, payload["columns"])
            else:
                payload = {"types": dict(params.get("types") or {})}
                out_schema = ops.cast_schema(parts.schema, payload["types"])
            results = self._run_tasks(
                _task_rows, [(op, payload, schema_json, c) for c in parts.chunks]
            )
            out = _Parts(out_schema, results)
            data[node.outputs[0]] = out
            return [parts.total], out.total
        if op == "join":
            keys = list(params.get("keys") or ())
            left_value = resolve(node.inputs[0])
            right_value = resolve(node.inputs[1])
            left_schema = self._as_parts(left_value).schema
            right_schema = self._as_parts(right_value).schema
            in_cards = [self._rows_of(left_value), self._rows_of(right_value)]
            if keys:
                left = self._shuffle(left_value, left_schema.index_of(keys[0]))
                right = self._shuffle(right_value, right_schema.index_of(keys[0]))
                pairs = list(zip(left.chunks, right.chunks))
            else:
                pairs = [(self._as_parts(left_value).gather().rows, self._as_parts(right_value).gather().rows)]
            results = self._run_tasks(
                _task_join,
                [(left_schema.to_json(), right_schema.to_json(), keys, l, r) for l, r in pairs],
            )
            out = _Parts(ops.join_schema(left_schema, right_schema, keys), results)
            data[node.outputs[0]] = out
            return in_cards, out.total
        if op in ("groupby", "dedup"):
            keys = list(params.get("keys") or ())
            value = resolve(node.inputs[0])
            parts = self._as_parts(value)
            schema = parts.schema
            hash_keys = keys or (schema.names() if op == "dedup" else [])
            if hash_keys:
                shuffled = self._shuffle(value, schema.index_of(hash_keys[0]))
                chunks = shuffled.chunks
            else:
                chunks = [parts.gather().rows]
            if op == "groupby":
                aggs = dict(params.get("aggs") or {})
                results = self._run_tasks(
                    _task_groupby, [(schema.to_json(), keys, aggs, c) for c in chunks]
                )
                out_schema = ops.groupby_schema(schema, keys, aggs)
            else:
                results = self._run_tasks(
                    _task_dedup, [(schema.to_json(), keys, c) for c in chunks]
                )
                out_schema = schema
            out = _Parts(out_schema, results)
            data[node.outputs[0]] = out
            return [parts.total], out.total
        raise ValueError(f"unhandled operator {op}")  # pragma: no cover
