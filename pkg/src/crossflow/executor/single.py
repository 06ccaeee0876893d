"""Single-threaded reference backend.

Executes a fragment's nodes in order, entirely in this process. This
is the semantic oracle: the partitioned backend must produce identical
output multisets and per-node cardinalities.
"""

from __future__ import annotations

import time

from ..model.graph import DataflowGraph
from .base import (
    FragmentOutcome,
    NodeMeasure,
    consumers_within,
    fragment_entry_error,
    split_predict_inputs,
    wrap_node_error,
)
from .dataset import InMemoryDataset
from . import ops


class SingleBackend:
    kind = "single"

    def execute(self, graph: DataflowGraph, node_ids, entry: dict, keep=()) -> FragmentOutcome:
        outcome = FragmentOutcome()
        data: dict = dict(entry)
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
                out_rows[conn] = len(value) if isinstance(value, InMemoryDataset) else 1
            outcome.measures.append(NodeMeasure(nid, cards, out_card, wall, out_rows))
            if node.operator == "source":
                for name in node.inputs:
                    data.pop(name, None)
            for conn in graph.dataset_inputs(node):
                remaining[conn] -= 1
                # exit connectors in `keep` outlive the fragment; models stay
                # for registration; everything else is freed when dead
                if remaining[conn] == 0 and conn not in keep and isinstance(data.get(conn), InMemoryDataset):
                    del data[conn]
        outcome.connectors = data
        return outcome

    def _execute_node(self, node, data, resolve, outcome):
        op = node.operator
        params = node.params
        if op == "source":
            cards = []
            total = 0
            for in_name, out_name in zip(node.inputs, node.outputs):
                value = resolve(in_name)
                data[out_name] = value
                rows = len(value) if isinstance(value, InMemoryDataset) else 1
                cards.append(rows)
                total += rows
            return cards, total
        if op == "sink":
            ds = resolve(node.inputs[0])
            outcome.sink_results[node.node_id] = InMemoryDataset(ds.schema, ds.sorted_rows())
            return [len(ds)], 0
        if op == "predict":
            ds, model, cards = split_predict_inputs(node, resolve)
            data[node.outputs[0]] = ops.apply_predict(ds, model)
            return cards, len(data[node.outputs[0]])
        if op == "train":
            ds = resolve(node.inputs[0])
            model = ops.apply_train(ds, list(params.get("features") or ()), params.get("target"))
            data[node.outputs[0]] = model
            outcome.training[node.node_id] = {
                "per_epoch": [(1, "rmse", model.training_metrics["rmse"])],
                "final_metrics": dict(model.training_metrics),
            }
            return [len(ds)], 1
        if op == "join":
            left = resolve(node.inputs[0])
            right = resolve(node.inputs[1])
            out = ops.apply_join(left, right, list(params.get("keys") or ()))
            data[node.outputs[0]] = out
            return [len(left), len(right)], len(out)
        ds = resolve(node.inputs[0])
        if op == "filter":
            out = ops.apply_filter(ds, str(params.get("predicate")))
        elif op == "map":
            out = ops.apply_map(ds, dict(params.get("columns") or {}))
        elif op == "cast":
            out = ops.apply_cast(ds, dict(params.get("types") or {}))
        elif op == "groupby":
            out = ops.apply_groupby(ds, list(params.get("keys") or ()), dict(params.get("aggs") or {}))
        elif op == "dedup":
            out = ops.apply_dedup(ds, list(params.get("keys") or ()))
        else:  # pragma: no cover - operator set is closed
            raise ValueError(f"unhandled operator {op}")
        data[node.outputs[0]] = out
        return [len(ds)], len(out)
