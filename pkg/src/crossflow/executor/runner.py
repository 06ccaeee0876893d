"""Plan execution: fragments to backends, outputs to catalog and disk.

The coordinator walks a scheduled plan's jobs in dependency order,
hands each compute fragment's nodes to the platform's backend, stages
inter-fragment connectors in memory, writes sink and model outputs
under the assigned platform's storage root, registers them in the
catalog, and records the run's provenance.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from ..catalog import Catalog
from ..errors import MissingInput
from ..model.graph import DataflowGraph, attach_payloads, dataflow_to_json
from ..model.schema import Schema
from ..provenance import OperatorTrace, Provenance, RunRecord, TrainingTrace
from ..scheduler import ScheduledPlan
from .base import FragmentOutcome
from .dataset import InMemoryDataset, mean_string_widths, read_dataset, write_csv
from .learner import MODEL_KIND, ModelArtifact
from .partitioned import PartitionedBackend
from .single import SingleBackend

_SINGLE = SingleBackend()
_PARTITIONED: dict = {}  # workers -> reusable backend (keeps its pool warm)


def get_backend(kind: str, workers: int | None = None):
    if kind == "single":
        return _SINGLE
    key = workers or (os.cpu_count() or 1)
    if key not in _PARTITIONED:
        _PARTITIONED[key] = PartitionedBackend(workers=key)
    return _PARTITIONED[key]


def close_backends():
    for backend in _PARTITIONED.values():
        backend.close()
    _PARTITIONED.clear()


@dataclass
class RunResult:
    run_id: str | None
    status: str
    outputs: dict  # producing node_id -> registered gid
    output_paths: dict  # producing node_id -> absolute file path
    traces: list
    training: list
    wall_time: float
    peak_live_tuples: int
    sink_rows: dict = field(default_factory=dict)  # sink node_id -> row count


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _location_path(catalog: Catalog, platform_id: str, path: str) -> str:
    if os.path.isabs(path):
        return path
    root = catalog.platform(platform_id).storage_root
    return os.path.join(root, path)


def _load_bound(catalog: Catalog, gid: str, prefer_platform: str | None):
    """(value, platform the bytes came from). Models rebuild from their
    catalog metadata when possible; datasets read the preferred
    platform's copy, falling back to any readable location."""
    record = catalog.require(gid)
    if record.kind == "model":
        meta = record.metadata
        if "coefficients" in meta:
            return (
                ModelArtifact(
                    kind=meta.get("kind", MODEL_KIND),
                    coefficients=list(meta["coefficients"]),
                    intercept=float(meta.get("intercept", 0.0)),
                    feature_names=list(meta.get("feature_names", [])),
                    target_name=meta.get("target_name", ""),
                    training_metrics=dict(meta.get("training_metrics", {})),
                    gid=gid,
                ),
                None,
            )
        for loc in record.locations:
            path = _location_path(catalog, loc["platform_id"], loc["path"])
            if os.path.exists(path):
                with open(path, encoding="utf-8") as fh:
                    model = ModelArtifact.loads(fh.read())
                model.gid = gid
                return model, loc["platform_id"]
        raise MissingInput(f"model {gid} has no readable location")
    schema = Schema.from_json(record.metadata["schema"])
    locations = list(record.locations)
    locations.sort(key=lambda loc: loc["platform_id"] != prefer_platform)
    errors = []
    for loc in locations:
        path = _location_path(catalog, loc["platform_id"], loc["path"])
        try:
            return read_dataset(path, schema), loc["platform_id"]
        except MissingInput as exc:
            errors.append(str(exc))
    raise MissingInput(f"dataset {gid}: no readable location ({'; '.join(errors) or 'none recorded'})")


def ensure_dataflow_registered(catalog: Catalog, graph: DataflowGraph) -> str:
    record = catalog.get(graph.gid)
    if record is not None and record.kind == "dataflow":
        return graph.gid
    return catalog.register_artifact(
        "dataflow",
        name=graph.description or graph.gid,
        metadata={"document": dataflow_to_json(graph)},
    )


def execute_in_memory(graph: DataflowGraph, entry: dict, backend) -> FragmentOutcome:
    """Run a whole graph as one fragment on `backend`, no catalog I/O."""
    return backend.execute(graph, graph.topological_order(), entry)


def _origin_gids(graph: DataflowGraph, start_conns: list, binding: dict) -> list:
    """Bound source GIDs reachable upstream of `start_conns`, sorted."""
    produced = graph.produced_connectors()
    seen: set = set()
    gids: set = set()
    stack = list(start_conns)
    while stack:
        conn = stack.pop()
        if conn in seen:
            continue
        seen.add(conn)
        producer_id = produced.get(conn)
        if producer_id is None:
            continue
        producer = graph.node(producer_id)
        if producer.operator == "source":
            # sources pair placeholders with outputs positionally
            idx = producer.outputs.index(conn)
            gid = binding.get(producer.inputs[idx])
            if gid:
                gids.add(gid)
        else:
            stack.extend(graph.dataset_inputs(producer))
    return sorted(gids)


def compute_peak_live_tuples(
    graph: DataflowGraph, node_order: list, out_conn_rows: dict
) -> tuple[int, dict]:
    """(global peak, per-node live totals) of summed live connector rows
    over the execution sequence. A node's inputs and outputs count as
    simultaneously live while it runs, and a connector dies once all
    its consumers have run."""
    consumers: dict = {}
    for e in graph.edges:
        consumers[e.out_conn] = consumers.get(e.out_conn, 0) + 1
    live: dict = {}
    peak = 0
    during: dict = {}
    for nid in node_order:
        node = graph.node(nid)
        for conn in node.outputs:
            live[conn] = out_conn_rows.get(conn, 0)
        during[nid] = sum(live.values())
        peak = max(peak, during[nid])
        for conn in graph.dataset_inputs(node):
            consumers[conn] -= 1
            if consumers[conn] == 0:
                live.pop(conn, None)
    return peak, during


def run(
    plan: ScheduledPlan,
    catalog: Catalog,
    backend: str | None = None,
    workers: int | None = None,
    record: bool = True,
) -> RunResult:
    """Execute `plan`. `backend` overrides every platform's executor
    kind; `record=False` skips catalog registration and provenance."""
    started_at = _now()
    started = time.perf_counter()
    graph = plan.graph
    if graph.payloads is None:
        graph = attach_payloads(graph, catalog)
    binding = graph.binding or {}

    frag_by_id = {f.fragment_id: f for f in plan.fragments}
    platform_of_node: dict = {}
    for job in plan.jobs:
        for nid in job.get("node_ids", ()):  # transfer jobs carry none
            platform_of_node[nid] = job["platform_id"]

    staged: dict = {}
    staged_consumers: dict = {}
    for f in plan.fragments:
        if f.kind != "transfer":
            for conn in f.entry_connectors:
                staged_consumers[conn] = staged_consumers.get(conn, 0) + 1

    measures: dict = {}
    training_info: dict = {}
    sink_results: dict = {}
    model_results: dict = {}
    node_order: list = []

    for job in plan.jobs:
        if job["role"] == "transfer":
            continue
        fragment = frag_by_id[job["fragment_id"]]
        entry: dict = {}
        for nid in fragment.node_ids:
            node = graph.node(nid)
            if node.operator != "source":
                continue
            for in_name in node.inputs:
                if in_name in binding:
                    gid = binding[in_name]
                    value, served_from = _load_bound(catalog, gid, job["platform_id"])
                    entry[in_name] = value
                    if (
                        record
                        and isinstance(value, InMemoryDataset)
                        and served_from != job["platform_id"]
                        and catalog.note_access(gid, job["platform_id"])
                    ):
                        rec = catalog.require(gid)
                        for loc in rec.locations:
                            if loc.get("replica") and loc["platform_id"] == job["platform_id"]:
                                write_csv(_location_path(catalog, loc["platform_id"], loc["path"]), value)
                else:
                    payload = (graph.payloads or {}).get(node.outputs[node.inputs.index(in_name)])
                    if payload is None or payload.schema is None:
                        raise MissingInput(f"{nid}: cannot resolve literal input {in_name!r}")
                    path = _location_path(catalog, catalog.default_platform, in_name)
                    entry[in_name] = read_dataset(path, payload.schema)
        for conn in fragment.entry_connectors:
            if conn not in staged:
                raise MissingInput(f"{fragment.fragment_id}: upstream connector {conn!r} not staged")
            entry[conn] = staged[conn]

        chosen = get_backend(backend or job["backend"], workers)
        outcome = chosen.execute(
            graph, list(fragment.node_ids), entry, keep=fragment.exit_connectors
        )

        for conn in fragment.exit_connectors:
            staged[conn] = outcome.connectors[conn]
        for conn in fragment.entry_connectors:
            staged_consumers[conn] -= 1
            if staged_consumers[conn] == 0:
                staged.pop(conn, None)
        for m in outcome.measures:
            measures[m.node_id] = m
            node_order.append(m.node_id)
        training_info.update(outcome.training)
        sink_results.update(outcome.sink_results)
        for nid in fragment.node_ids:
            node = graph.node(nid)
            if node.operator == "train":
                model_results[nid] = outcome.connectors[node.outputs[0]]

    # -- write and register outputs --------------------------------------
    outputs: dict = {}
    output_paths: dict = {}
    dataflow_record = catalog.get(graph.gid)
    domain = dataflow_record.domain if dataflow_record else None

    for nid, dataset in sorted(sink_results.items()):
        node = graph.node(nid)
        platform_id = platform_of_node[nid]
        rel = node.inputs[1] if len(node.inputs) > 1 else os.path.join("outputs", f"{graph.gid}_{nid}.csv")
        path = _location_path(catalog, platform_id, rel)
        write_csv(path, dataset)
        output_paths[nid] = os.path.abspath(path)
        if record:
            outputs[nid] = catalog.register_artifact(
                "dataset",
                name=node.inputs[0],
                domain=domain,
                metadata={
                    "schema": dataset.schema.to_json(),
                    "format": "csv",
                    "location": rel,
                    "rows": len(dataset),
                    "mean_string_widths": mean_string_widths(dataset),
                },
                locations=[{"platform_id": platform_id, "path": rel}],
                bucket="staging",
            )

    for nid, model in sorted(model_results.items()):
        node = graph.node(nid)
        platform_id = platform_of_node[nid]
        rel = os.path.join("models", f"{graph.gid}_{nid}.json")
        path = _location_path(catalog, platform_id, rel)
        origins = _origin_gids(graph, [node.inputs[0]], binding)
        if record:
            gid = catalog.register_artifact(
                "model",
                name=node.outputs[0],
                domain=domain,
                metadata={
                    "task": "regression",
                    "learning_scope": "dataset",
                    "training_dataset": origins[0] if len(origins) == 1 else None,
                    "training_datasets": origins,
                    "kind": model.kind,
                    "feature_names": list(model.feature_names),
                    "target_name": model.target_name,
                    "coefficients": list(model.coefficients),
                    "intercept": model.intercept,
                    "training_metrics": dict(model.training_metrics),
                    "format": "json",
                    "location": rel,
                },
                locations=[{"platform_id": platform_id, "path": rel}],
            )
            model.gid = gid
            outputs[nid] = gid
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(model.dumps())
        output_paths[nid] = os.path.abspath(path)

    # -- provenance -------------------------------------------------------
    out_conn_rows: dict = {}
    for m in measures.values():
        out_conn_rows.update(m.out_conn_rows)
    peak, live_during = compute_peak_live_tuples(graph, node_order, out_conn_rows)

    traces = [
        OperatorTrace(
            run_id=None,
            node_id=m.node_id,
            input_cardinalities=list(m.input_cardinalities),
            output_cardinality=m.output_cardinality,
            wall_time=m.wall_time,
            peak_live_tuples=live_during.get(m.node_id, 0),
            produced_gid=outputs.get(m.node_id),
            platform_id=platform_of_node.get(m.node_id),
        )
        for m in (measures[n] for n in node_order)
    ]
    training = [
        TrainingTrace(None, nid, info["per_epoch"], dict(info["final_metrics"]))
        for nid, info in sorted(training_info.items())
    ]

    run_id = None
    if record:
        dataflow_gid = ensure_dataflow_registered(catalog, graph)
        provenance = Provenance(catalog)
        run_record = RunRecord(
            run_id=None,
            dataflow=dataflow_gid,
            platform_assignment=dict(plan.assignment.placement),
            started_at=started_at,
            ended_at=_now(),
            status="success",
            document=dataflow_to_json(graph),
        )
        run_id = provenance.record_run(run_record, traces, training)

    wall = time.perf_counter() - started
    return RunResult(
        run_id=run_id,
        status="success",
        outputs=outputs,
        output_paths=output_paths,
        traces=traces,
        training=training,
        wall_time=wall,
        peak_live_tuples=peak,
        sink_rows={nid: len(ds) for nid, ds in sink_results.items()},
    )
