"""Semantics-preserving dataflow rewriting.

Two rewrites, driven by provenance statistics:
- within each maximal chain of movable element-at-a-time operators
  between barriers, reorder by ascending rank (selectivity - 1) / cost,
  subject to read/write dependencies;
- push a filter sitting directly on a join output below the join, onto
  the input side that carries every attribute the predicate reads.

Every change is recorded in a replayable RewriteTrace. Connector
payloads are recomputed after each step so later steps see current
schemas.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import InvalidGraph, MissingSourceSize
from .model.functions import (
    ELEMENT_AT_A_TIME,
    FunctionDescriptor,
    builtin_functions,
    node_reads,
    node_writes,
)
from .model.graph import (
    DataflowGraph,
    Edge,
    OperatorNode,
    repropagate,
    source_payload_map,
    validate,
)

BARRIER_OPERATORS = ("source", "sink", "join", "groupby", "dedup", "train")


@dataclass(frozen=True)
class RewriteAnnotation:
    node_id: str
    selectivity: float
    cost_per_tuple: float  # seconds
    rank: float
    movable: bool


def annotate(
    graph: DataflowGraph,
    stats_provider,
    functions: dict[str, FunctionDescriptor] | None = None,
) -> dict[str, RewriteAnnotation]:
    """Attach selectivity/cost/rank to every node.

    `stats_provider` is anything with derive_stats(alias) (a Provenance
    instance) or a plain dict alias -> stats object. Unknown aliases get
    neutral defaults: selectivity 1.0, cost 1 microsecond.
    """
    functions = functions or builtin_functions()

    def stats_for(alias: str):
        if stats_provider is None:
            return None
        if hasattr(stats_provider, "derive_stats"):
            return stats_provider.derive_stats(alias)
        return stats_provider.get(alias)

    out = {}
    for node in graph.nodes:
        stats = stats_for(node.function_alias)
        selectivity = getattr(stats, "mean_selectivity", None)
        cost = getattr(stats, "mean_cost_per_tuple", None)
        if selectivity is None:
            selectivity = 1.0
        if cost is None or cost <= 0:
            cost = 1e-6
        descriptor = functions.get(node.function_alias)
        opaque = descriptor.opaque if descriptor is not None else True
        movable = node.operator in ELEMENT_AT_A_TIME and not opaque
        out[node.node_id] = RewriteAnnotation(
            node_id=node.node_id,
            selectivity=selectivity,
            cost_per_tuple=cost,
            rank=(selectivity - 1.0) / cost,
            movable=movable,
        )
    return out


# -- rewrite trace --------------------------------------------------------


@dataclass
class RewriteTrace:
    steps: list = field(default_factory=list)

    def record(self, rule_name: str, before: list[str], after: list[str], **extra):
        step = {"rule": rule_name, "before": list(before), "after": list(after)}
        step.update(extra)
        self.steps.append(step)

    def to_json(self) -> list:
        return list(self.steps)

    @classmethod
    def from_json(cls, obj) -> "RewriteTrace":
        return cls(steps=list(obj))

    def replay(self, graph: DataflowGraph, functions=None) -> DataflowGraph:
        """Re-apply the recorded steps to `graph`, reproducing the
        rewritten output."""
        functions = functions or builtin_functions()
        src_payloads = source_payload_map(graph)
        current = graph
        for step in self.steps:
            if step["rule"] == "push_below_join":
                current = _push_filter_below_join(
                    current, step["filter"], step["join"], step["side"]
                )
            elif step["rule"] == "reorder_chain":
                current = _apply_chain_order(current, step["before"], step["after"])
            else:
                raise InvalidGraph(f"unknown rewrite rule {step['rule']!r}")
            if src_payloads:
                current = repropagate(current, src_payloads, functions)
        return current


# -- graph surgery --------------------------------------------------------


def _single_consumer(graph: DataflowGraph, conn: str) -> str | None:
    consumers = [e.consumer for e in graph.edges if e.in_conn == conn]
    if len(consumers) == 1:
        return consumers[0]
    return None


def _rebuild_edges(nodes: tuple[OperatorNode, ...]) -> tuple[Edge, ...]:
    producers = {}
    for n in nodes:
        for c in n.outputs:
            producers[c] = n.node_id
    edges = []
    for n in nodes:
        for c in n.inputs:
            if c in producers:
                edges.append(Edge(producers[c], c, n.node_id, c))
    return tuple(edges)


def _replace_input(node: OperatorNode, old: str, new: str) -> OperatorNode:
    inputs = tuple(new if c == old else c for c in node.inputs)
    return replace(node, inputs=inputs)


def _chain_entry_connector(graph: DataflowGraph, head: OperatorNode) -> str:
    """The dataset input linking the chain head to its upstream
    producer. A predict head also has a model input, which stays put."""
    produced = graph.produced_connectors()
    candidates = [c for c in head.inputs if c in produced]
    if len(candidates) == 1:
        return candidates[0]
    dataset_like = [
        c
        for c in candidates
        if not (graph.payloads and c in graph.payloads and graph.payloads[c].kind == "model")
        and graph.node(produced[c]).operator != "train"
    ]
    if len(dataset_like) == 1:
        return dataset_like[0]
    raise InvalidGraph(f"cannot identify the chain input of {head.node_id}")


def _apply_chain_order(graph: DataflowGraph, before: list[str], after: list[str]) -> DataflowGraph:
    """Rewire a linear chain into a new node order. Each node keeps its
    own output connector name; downstream consumers follow the new tail."""
    if sorted(before) != sorted(after):
        raise InvalidGraph("chain reorder must permute the same nodes")
    if before == after:
        return graph
    head = graph.node(before[0])
    entry_conn = _chain_entry_connector(graph, head)
    out_conn = {nid: _chain_out_connector(graph, nid) for nid in before}
    old_in = {before[0]: entry_conn}
    for prev, nid in zip(before, before[1:]):
        old_in[nid] = out_conn[prev]
    tail_conn = out_conn[before[-1]]
    new_tail_conn = out_conn[after[-1]]

    nodes = list(graph.nodes)
    index = {n.node_id: i for i, n in enumerate(nodes)}
    prev_conn = entry_conn
    for nid in after:
        nodes[index[nid]] = _replace_input(nodes[index[nid]], old_in[nid], prev_conn)
        prev_conn = out_conn[nid]
    if tail_conn != new_tail_conn:
        for i, node in enumerate(nodes):
            if node.node_id in before:
                continue
            if tail_conn in node.inputs:
                nodes[i] = _replace_input(node, tail_conn, new_tail_conn)
    reordered = tuple(nodes)
    return replace(graph, nodes=reordered, edges=_rebuild_edges(reordered), payloads=None)


def _chain_out_connector(graph: DataflowGraph, node_id: str) -> str:
    node = graph.node(node_id)
    if len(node.outputs) != 1:
        raise InvalidGraph(f"chain node {node_id} must have one output")
    return node.outputs[0]


def _push_filter_below_join(
    graph: DataflowGraph, filter_id: str, join_id: str, side_conn: str
) -> DataflowGraph:
    """side -> join -> filter  becomes  side -> filter -> join."""
    fnode = graph.node(filter_id)
    jnode = graph.node(join_id)
    join_out = jnode.outputs[0]
    filter_out = fnode.outputs[0]
    nodes = list(graph.nodes)
    index = {n.node_id: i for i, n in enumerate(nodes)}
    nodes[index[filter_id]] = _replace_input(fnode, join_out, side_conn)
    nodes[index[join_id]] = _replace_input(jnode, side_conn, filter_out)
    for i, node in enumerate(nodes):
        if node.node_id in (filter_id, join_id):
            continue
        if filter_out in node.inputs:
            nodes[i] = _replace_input(node, filter_out, join_out)
    rewired = tuple(nodes)
    return replace(graph, nodes=rewired, edges=_rebuild_edges(rewired), payloads=None)


# -- the rewrite pass -----------------------------------------------------


def _reads(node: OperatorNode, functions) -> frozenset:
    descriptor = functions.get(node.function_alias)
    if descriptor is None:
        return frozenset()
    return node_reads(node.operator, node.params, descriptor)


def _writes(node: OperatorNode, functions) -> frozenset:
    descriptor = functions.get(node.function_alias)
    if descriptor is None:
        return frozenset()
    return node_writes(node.operator, node.params, descriptor)


def _is_model_connector(graph: DataflowGraph, conn: str) -> bool:
    if graph.payloads and conn in graph.payloads:
        return graph.payloads[conn].kind == "model"
    producer = graph.produced_connectors().get(conn)
    return producer is not None and graph.node(producer).operator == "train"


def _find_chains(graph: DataflowGraph, annotations) -> list[list[str]]:
    """Maximal linear runs of movable nodes: each link is a single-
    consumer dataset connector between two movable nodes."""
    movable = {
        n.node_id
        for n in graph.nodes
        if annotations[n.node_id].movable and len(n.outputs) == 1
    }
    next_of: dict[str, str] = {}
    prev_of: dict[str, str] = {}
    for nid in movable:
        node = graph.node(nid)
        conn = node.outputs[0]
        consumer = _single_consumer(graph, conn)
        if consumer in movable and not _is_model_connector(graph, conn):
            next_of[nid] = consumer
            prev_of[consumer] = nid
    chains = []
    for nid in sorted(movable):
        if nid in prev_of:
            continue
        chain = [nid]
        while chain[-1] in next_of:
            chain.append(next_of[chain[-1]])
        if len(chain) > 1:
            chains.append(chain)
    return chains


def _legal_order(chain: list[str], graph: DataflowGraph, annotations, functions) -> list[str]:
    """Minimum-rank-first list scheduling under read/write precedence."""
    reads = {nid: _reads(graph.node(nid), functions) for nid in chain}
    writes = {nid: _writes(graph.node(nid), functions) for nid in chain}
    position = {nid: i for i, nid in enumerate(chain)}
    preds: dict[str, set[str]] = {nid: set() for nid in chain}
    for i, a in enumerate(chain):
        for b in chain[i + 1:]:
            conflict = (
                writes[a] & reads[b]
                or reads[a] & writes[b]
                or writes[a] & writes[b]
            )
            if conflict:
                preds[b].add(a)
    done: list[str] = []
    emitted: set[str] = set()
    remaining = set(chain)
    while remaining:
        ready = [nid for nid in remaining if preds[nid] <= emitted]
        ready.sort(key=lambda nid: (annotations[nid].rank, position[nid]))
        pick = ready[0]
        done.append(pick)
        emitted.add(pick)
        remaining.remove(pick)
    return done


def rewrite(
    graph: DataflowGraph,
    annotations: dict[str, RewriteAnnotation],
    functions: dict[str, FunctionDescriptor] | None = None,
    pushdown: bool = True,
    reorder: bool = True,
) -> tuple[DataflowGraph, RewriteTrace]:
    functions = functions or builtin_functions()
    trace = RewriteTrace()
    src_payloads = source_payload_map(graph)
    current = graph

    def refresh(g: DataflowGraph) -> DataflowGraph:
        return repropagate(g, src_payloads, functions) if src_payloads else g

    # filter pushdown below joins, to fixpoint
    changed = pushdown
    while changed:
        changed = False
        for node in current.nodes:
            if node.operator != "filter" or not annotations[node.node_id].movable:
                continue
            produced = current.produced_connectors()
            chain_in = node.inputs[0]
            producer_id = produced.get(chain_in)
            if producer_id is None:
                continue
            producer = current.node(producer_id)
            if producer.operator != "join":
                continue
            if _single_consumer(current, chain_in) != node.node_id:
                continue
            side = _pushdown_side(current, producer, _reads(node, functions))
            if side is None:
                continue
            current = refresh(
                _push_filter_below_join(current, node.node_id, producer_id, side)
            )
            trace.record(
                "push_below_join",
                [producer_id, node.node_id],
                [node.node_id, producer_id],
                filter=node.node_id,
                join=producer_id,
                side=side,
            )
            changed = True
            break

    # rank-order movable chains
    for chain in _find_chains(current, annotations) if reorder else []:
        new_order = _legal_order(chain, current, annotations, functions)
        if new_order != chain:
            current = refresh(_apply_chain_order(current, chain, new_order))
            trace.record("reorder_chain", chain, new_order)

    if trace.steps:
        report = validate(current, functions, src_payloads or None)
        if not report.ok:
            raise InvalidGraph(f"rewrite produced an invalid graph: {report}")
    return current, trace


def _pushdown_side(graph: DataflowGraph, join_node: OperatorNode, filter_reads: frozenset) -> str | None:
    """The join input connector whose schema covers the filter's columns,
    or None when neither side qualifies."""
    if not filter_reads:
        return None
    for conn in graph.dataset_inputs(join_node):
        attrs = _connector_attrs(graph, conn)
        if attrs is not None and filter_reads <= attrs:
            return conn
    return None


def _connector_attrs(graph: DataflowGraph, conn: str) -> frozenset | None:
    if graph.payloads and conn in graph.payloads:
        payload = graph.payloads[conn]
        if payload.kind == "dataset" and payload.schema is not None:
            return frozenset(payload.schema.names())
    return None


# -- cardinality estimation ----------------------------------------------


@dataclass
class Cardinalities:
    node_out: dict  # node_id -> estimated output rows
    node_in: dict  # node_id -> estimated total input rows
    connector_rows: dict  # connector -> estimated rows

    def to_json(self) -> dict:
        return {
            "node_out": dict(self.node_out),
            "node_in": dict(self.node_in),
            "connector_rows": dict(self.connector_rows),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Cardinalities":
        return cls(dict(obj["node_out"]), dict(obj["node_in"]), dict(obj["connector_rows"]))


def estimate_cardinalities(
    graph: DataflowGraph,
    annotations: dict[str, RewriteAnnotation],
    input_sizes: dict[str, float],
) -> Cardinalities:
    """Forward size propagation. `input_sizes` keys are source
    placeholder names (or the GIDs they are bound to)."""
    binding = graph.binding or {}

    def size_of(placeholder: str) -> float:
        if placeholder in input_sizes:
            return float(input_sizes[placeholder])
        gid = binding.get(placeholder)
        if gid is not None and gid in input_sizes:
            return float(input_sizes[gid])
        raise MissingSourceSize(placeholder)

    conn_rows: dict[str, float] = {}
    node_out: dict[str, float] = {}
    node_in: dict[str, float] = {}
    for nid in graph.topological_order():
        node = graph.node(nid)
        sel = annotations[nid].selectivity
        if node.operator == "source":
            total = 0.0
            for in_name, out_name in zip(node.inputs, node.outputs):
                rows = size_of(in_name)
                conn_rows[out_name] = rows
                total += rows
            node_in[nid] = total
            node_out[nid] = total
            continue
        in_conns = graph.dataset_inputs(node)
        ins = [conn_rows.get(c, 0.0) for c in in_conns]
        node_in[nid] = sum(ins)
        if node.operator == "sink":
            node_out[nid] = 0.0
            continue
        if node.operator == "train":
            out = 1.0
        elif node.operator == "join":
            biggest = max(ins) if ins else 0.0
            product = 1.0
            for v in ins:
                product *= v
            out = sel * (product / biggest) if biggest > 0 else 0.0
        elif node.operator == "predict":
            data_rows = [
                conn_rows.get(c, 0.0)
                for c in in_conns
                if not _is_model_connector(graph, c)
            ]
            out = sel * (data_rows[0] if data_rows else 0.0)
        else:
            out = sel * node_in[nid]
        node_out[nid] = out
        for c in node.outputs:
            conn_rows[c] = 1.0 if node.operator == "train" else out
    return Cardinalities(node_out, node_in, conn_rows)
