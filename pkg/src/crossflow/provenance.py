"""Retrospective provenance: run records, operator traces, derived
statistics, lineage, and PROV document export.

Records live in the same log store as the catalog. Every produced GID
gains one link record naming the dataflow, node, function, and the
nearest upstream GIDs; lineage and PROV documents are materialized from
links plus per-run traces on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import Catalog
from .errors import (
    InvalidMetadata,
    UnknownDataflow,
    UnknownGid,
    UnknownNode,
)
from .model.graph import DataflowGraph, dataflow_from_json

DEFAULT_SELECTIVITY = 1.0
DEFAULT_COST_PER_TUPLE = 1e-6  # seconds on the reference platform


@dataclass
class RunRecord:
    run_id: str | None
    dataflow: str
    platform_assignment: dict  # fragment_id -> platform_id
    started_at: str
    ended_at: str
    status: str  # "success" | "failed"
    # what actually executed: the concrete (bound, possibly rewritten)
    # dataflow JSON; the registered artifact may be the abstract form
    document: list | None = None


@dataclass
class OperatorTrace:
    run_id: str | None
    node_id: str
    input_cardinalities: list
    output_cardinality: int
    wall_time: float  # seconds
    peak_live_tuples: int = 0
    produced_gid: str | None = None
    platform_id: str | None = None
    operator: str | None = None
    function_alias: str | None = None
    extras: dict = field(default_factory=dict)  # user-defined hook records


@dataclass
class TrainingTrace:
    run_id: str | None
    node_id: str
    per_epoch: list  # [(epoch, metric_name, value)]
    final_metrics: dict = field(default_factory=dict)


@dataclass
class OperatorStats:
    function_alias: str
    mean_selectivity: float
    mean_cost_per_tuple: float  # seconds per input tuple, reference platform
    sample_count: int
    per_platform: dict = field(default_factory=dict)


class Provenance:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.store = catalog.store

    # -- recording -------------------------------------------------------

    def _dataflow_graph(self, gid: str) -> DataflowGraph:
        record = self.catalog.get(gid)
        if record is None or record.kind != "dataflow":
            raise UnknownDataflow(gid)
        document = record.metadata.get("document")
        if document is None:
            raise UnknownDataflow(f"{gid} has no stored document")
        return dataflow_from_json(document)

    def record_run(
        self,
        run: RunRecord,
        traces: list[OperatorTrace],
        training: list[TrainingTrace] | None = None,
    ) -> str:
        training = training or []
        if run.document is not None:
            graph = dataflow_from_json(run.document)
        else:
            graph = self._dataflow_graph(run.dataflow)
        known = {n.node_id for n in graph.nodes}
        for t in list(traces) + list(training):
            if t.node_id not in known:
                raise UnknownNode(t.node_id)
        for t in training:
            epochs = [e for e, _, _ in t.per_epoch]
            if epochs and (epochs[0] != 1 or any(b <= a for a, b in zip(epochs, epochs[1:]))):
                raise InvalidMetadata("epochs must increase strictly from 1")

        run_id = run.run_id or self.catalog._next_gid("run")
        run.run_id = run_id
        self.store.put(
            {
                "type": "run",
                "key": run_id,
                "run_id": run_id,
                "dataflow": run.dataflow,
                "platform_assignment": dict(run.platform_assignment),
                "started_at": run.started_at,
                "ended_at": run.ended_at,
                "status": run.status,
                "document": run.document,
            }
        )
        for t in traces:
            t.run_id = run_id
            node = graph.node(t.node_id)
            self.store.put(
                {
                    "type": "trace",
                    "key": f"{run_id}:{t.node_id}",
                    "run_id": run_id,
                    "node_id": t.node_id,
                    "operator": t.operator or node.operator,
                    "function_alias": t.function_alias or node.function_alias,
                    "input_cardinalities": list(t.input_cardinalities),
                    "output_cardinality": t.output_cardinality,
                    "wall_time": t.wall_time,
                    "peak_live_tuples": t.peak_live_tuples,
                    "produced_gid": t.produced_gid,
                    "platform_id": t.platform_id,
                    "extras": dict(t.extras),
                }
            )
        for t in training:
            t.run_id = run_id
            self.store.put(
                {
                    "type": "training",
                    "key": f"{run_id}:{t.node_id}",
                    "run_id": run_id,
                    "node_id": t.node_id,
                    "per_epoch": [list(e) for e in t.per_epoch],
                    "final_metrics": dict(t.final_metrics),
                }
            )

        produced = {t.node_id: t.produced_gid for t in traces if t.produced_gid}
        for t in traces:
            if not t.produced_gid:
                continue
            node = graph.node(t.node_id)
            inputs = self._nearest_upstream_gids(graph, t.node_id, produced)
            self.store.put(
                {
                    "type": "link",
                    "key": t.produced_gid,
                    "produced_gid": t.produced_gid,
                    "run_id": run_id,
                    "dataflow": run.dataflow,
                    "node_id": t.node_id,
                    "operator": node.operator,
                    "function_alias": node.function_alias,
                    "input_gids": inputs,
                }
            )
        return run_id

    def _nearest_upstream_gids(
        self, graph: DataflowGraph, node_id: str, produced: dict[str, str]
    ) -> list[str]:
        """Bound GIDs feeding `node_id`: source bindings plus artifacts
        produced upstream in the same run (which carry their own links)."""
        binding = graph.binding or {}
        found: list[str] = []
        seen_nodes: set[str] = set()
        stack = [node_id]
        while stack:
            current = stack.pop()
            for e in graph.edges:
                if e.consumer != current:
                    continue
                p = e.producer
                if p in seen_nodes:
                    continue
                seen_nodes.add(p)
                if p in produced and p != node_id:
                    found.append(produced[p])
                    continue  # its own link covers anything further up
                pnode = graph.node(p)
                if pnode.operator == "source":
                    for in_name, out_name in zip(pnode.inputs, pnode.outputs):
                        if out_name != e.out_conn:
                            continue
                        gid = binding.get(in_name)
                        if gid and self.catalog.get(gid) is not None:
                            found.append(gid)
                else:
                    stack.append(p)
        ordered = sorted(set(found))
        return ordered

    # -- statistics ------------------------------------------------------

    def _alias_of(self, dataflow_gid: str, node_id: str, cache: dict) -> str | None:
        if dataflow_gid not in cache:
            try:
                cache[dataflow_gid] = self._dataflow_graph(dataflow_gid)
            except UnknownDataflow:
                cache[dataflow_gid] = None
        graph = cache[dataflow_gid]
        if graph is None or not graph.has_node(node_id):
            return None
        return graph.node(node_id).function_alias

    def derive_stats(self, function_alias: str) -> OperatorStats:
        """Aggregate traces of every node bound to `function_alias`.

        Observed wall time is scaled by the executing platform's
        relative_speed so the stored cost is reference-platform cost;
        the scheduler divides it back out per candidate platform.
        """
        runs = {r["run_id"]: r for r in self.store.records("run")}
        cache: dict = {}
        speeds = {p.platform_id: p.relative_speed for p in self.catalog.platforms()}

        total_in = 0
        total_out = 0
        total_cost = 0.0
        samples = 0
        per_platform_in: dict[str, int] = {}
        per_platform_time: dict[str, float] = {}
        for rec in self.store.records("trace"):
            run = runs.get(rec["run_id"])
            if run is None:
                continue
            alias = self._alias_of(run["dataflow"], rec["node_id"], cache)
            if alias != function_alias:
                continue
            samples += 1
            in_sum = sum(rec["input_cardinalities"])
            total_in += in_sum
            total_out += rec["output_cardinality"]
            speed = speeds.get(rec.get("platform_id"), 1.0)
            total_cost += rec["wall_time"] * speed
            pid = rec.get("platform_id") or "unknown"
            per_platform_in[pid] = per_platform_in.get(pid, 0) + in_sum
            per_platform_time[pid] = per_platform_time.get(pid, 0.0) + rec["wall_time"]

        if samples == 0 or total_in == 0:
            return OperatorStats(
                function_alias=function_alias,
                mean_selectivity=DEFAULT_SELECTIVITY,
                mean_cost_per_tuple=DEFAULT_COST_PER_TUPLE,
                sample_count=samples,
            )
        per_platform = {
            pid: per_platform_time[pid] / per_platform_in[pid]
            for pid in per_platform_in
            if per_platform_in[pid] > 0
        }
        return OperatorStats(
            function_alias=function_alias,
            mean_selectivity=total_out / total_in,
            mean_cost_per_tuple=total_cost / total_in,
            sample_count=samples,
            per_platform=per_platform,
        )

    def stats_table(self, aliases: list[str]) -> dict[str, OperatorStats]:
        return {a: self.derive_stats(a) for a in aliases}

    # -- lineage ---------------------------------------------------------

    def link_of(self, gid: str) -> dict | None:
        return self.store.get("link", gid)

    def lineage(self, gid: str) -> set[str]:
        if self.catalog.get(gid) is None:
            raise UnknownGid(gid)
        seen: set[str] = set()
        stack = [gid]
        while stack:
            current = stack.pop()
            link = self.link_of(current)
            if not link:
                continue
            for parent in link["input_gids"]:
                if parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        return seen

    # -- PROV export -----------------------------------------------------

    def export_prov(self, gid: str) -> dict:
        """PROV-JSON document covering the upstream closure of `gid`.

        Intermediate connector datasets become entities named
        "run:conn:name"; registered artifacts keep their GIDs. One
        "engine" agent is associated with every activity.
        """
        if self.catalog.get(gid) is None:
            raise UnknownGid(gid)
        doc = {
            "entity": {},
            "activity": {},
            "agent": {"engine": {"prov:type": "prov:SoftwareAgent"}},
            "used": {},
            "wasGeneratedBy": {},
            "wasDerivedFrom": {},
            "wasAssociatedWith": {},
        }
        counters = {"u": 0, "g": 0, "d": 0, "a": 0}

        def rel(section: str, tag: str, payload: dict):
            counters[tag] += 1
            doc[section][f"_:{tag}{counters[tag]}"] = payload

        def add_entity(entity_id: str, attrs: dict):
            if entity_id not in doc["entity"]:
                doc["entity"][entity_id] = attrs

        visited_runs: set[tuple[str, str]] = set()
        pending = [gid]
        seen_gids: set[str] = set()
        while pending:
            current = pending.pop()
            if current in seen_gids:
                continue
            seen_gids.add(current)
            record = self.catalog.get(current)
            attrs = {"crossflow:kind": record.kind if record else "dataset"}
            add_entity(current, attrs)
            link = self.link_of(current)
            if not link:
                continue
            for parent in link["input_gids"]:
                pending.append(parent)
            key = (link["run_id"], link["node_id"])
            if key in visited_runs:
                continue
            visited_runs.add(key)
            self._emit_run_subgraph(doc, rel, add_entity, link, current)
        return doc

    def _run_graph(self, run_id: str, dataflow_gid: str) -> DataflowGraph:
        run_rec = self.store.get("run", run_id)
        if run_rec and run_rec.get("document"):
            return dataflow_from_json(run_rec["document"])
        return self._dataflow_graph(dataflow_gid)

    def _emit_run_subgraph(self, doc, rel, add_entity, link: dict, produced_gid: str):
        run_id = link["run_id"]
        graph = self._run_graph(run_id, link["dataflow"])
        traces = {
            rec["node_id"]: rec
            for rec in self.store.records("trace")
            if rec["run_id"] == run_id
        }
        scope = graph.upstream_nodes(link["node_id"]) | {link["node_id"]}
        binding = graph.binding or {}
        produced_by_node = {
            nid: rec["produced_gid"] for nid, rec in traces.items() if rec.get("produced_gid")
        }

        def conn_entity(conn: str, producer_id: str) -> str:
            if producer_id in produced_by_node and graph.node(producer_id).operator != "source":
                return produced_by_node[producer_id]
            return f"{run_id}:conn:{conn}"

        for nid in sorted(scope):
            node = graph.node(nid)
            activity_id = f"{run_id}:{nid}"
            trace = traces.get(nid)
            attrs = {
                "crossflow:operator": node.operator,
                "crossflow:function": node.function_alias,
            }
            if trace is not None:
                attrs["crossflow:wall_time"] = trace["wall_time"]
            doc["activity"][activity_id] = attrs
            rel("wasAssociatedWith", "a", {"prov:activity": activity_id, "prov:agent": "engine"})

            used_entities: list[str] = []
            if node.operator == "source":
                for in_name, out_name in zip(node.inputs, node.outputs):
                    bound = binding.get(in_name)
                    if bound and self.catalog.get(bound) is not None:
                        add_entity(bound, {"crossflow:kind": self.catalog.get(bound).kind})
                        used_entities.append(bound)
            for e in graph.edges:
                if e.consumer == nid:
                    entity_id = conn_entity(e.out_conn, e.producer)
                    add_entity(entity_id, {"crossflow:kind": "intermediate"})
                    used_entities.append(entity_id)
            for entity_id in used_entities:
                rel("used", "u", {"prov:activity": activity_id, "prov:entity": entity_id})

            generated: list[str] = []
            if nid in produced_by_node:
                generated.append(produced_by_node[nid])
            for conn in node.outputs:
                entity_id = conn_entity(conn, nid)
                if entity_id not in generated:
                    add_entity(entity_id, {"crossflow:kind": "intermediate"})
                    generated.append(entity_id)
            for entity_id in generated:
                rel("wasGeneratedBy", "g", {"prov:entity": entity_id, "prov:activity": activity_id})
                for source_entity in used_entities:
                    rel(
                        "wasDerivedFrom",
                        "d",
                        {"prov:generatedEntity": entity_id, "prov:usedEntity": source_entity},
                    )

    # -- run accessors ---------------------------------------------------

    def runs(self) -> list[dict]:
        return self.store.records("run")

    def traces_of(self, run_id: str) -> list[dict]:
        return [r for r in self.store.records("trace") if r["run_id"] == run_id]

    def training_of(self, run_id: str) -> list[dict]:
        return [r for r in self.store.records("training") if r["run_id"] == run_id]
