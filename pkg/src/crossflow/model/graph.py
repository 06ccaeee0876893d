"""Dataflow graphs: parsing, validation, binding, and schema propagation.

A dataflow is a DAG of operator nodes joined by named dataset connectors.
The JSON dialect is an array whose first element is a header
``{"GID": ..., "description": ...}``; the rest are node objects with
``node_id``, ``operator``, ``function_alias``, ``input``, ``output`` and
optional ``params``. Connector pairing is by exact name: the node listing
a name under ``output`` produces it, every node listing it under
``input`` consumes it. Input names nobody produces are placeholders to be
bound to catalog GIDs (or treated as literal paths, see `bind`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from ..errors import (
    DanglingConnector,
    DuplicateNodeId,
    InvalidGraph,
    MalformedJson,
    MissingBinding,
    MissingParam,
    SchemaMismatch,
    UnknownGid,
    UnknownOperator,
)
from . import predicate as pred_mod
from .functions import (
    OPERATOR_KIND,
    OPERATORS,
    VARIADIC,
    FunctionDescriptor,
    builtin_functions,
)
from .schema import Attribute, Schema

_AGG_FUNCS = ("sum", "count", "mean", "min", "max")


@dataclass(frozen=True)
class Edge:
    producer: str
    out_conn: str
    consumer: str
    in_conn: str


@dataclass(frozen=True)
class OperatorNode:
    node_id: str
    operator: str
    function_alias: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConnectorPayload:
    """What flows over a connector once schemas are resolved."""

    kind: str  # "dataset" | "model"
    schema: Schema | None = None
    model: dict | None = None  # {"feature_names": [...], "target_name": ...}


@dataclass(frozen=True)
class DataflowGraph:
    gid: str
    description: str
    nodes: tuple[OperatorNode, ...]
    edges: tuple[Edge, ...]
    binding: dict | None = None
    param_values: dict | None = None
    # propagated connector payloads; set on concrete graphs by bind()
    payloads: dict | None = None

    # -- lookups ---------------------------------------------------------

    def node(self, node_id: str) -> OperatorNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.node_id == node_id for n in self.nodes)

    def producer_of(self, conn: str) -> str | None:
        for e in self.edges:
            if e.out_conn == conn:
                return e.producer
        for n in self.nodes:
            if conn in n.outputs:
                return n.node_id
        return None

    def consumers_of(self, conn: str) -> list[str]:
        return sorted({e.consumer for e in self.edges if e.in_conn == conn})

    def produced_connectors(self) -> dict[str, str]:
        """connector name -> producing node id, for every output."""
        out = {}
        for n in self.nodes:
            for c in n.outputs:
                out[c] = n.node_id
        return out

    def placeholders(self) -> list[str]:
        produced = self.produced_connectors()
        names = []
        for n in self.nodes:
            for c in n.inputs:
                if c not in produced and c not in names:
                    names.append(c)
        return names

    def dataset_inputs(self, node: OperatorNode) -> list[str]:
        """Input connectors of `node` that another node produces."""
        produced = self.produced_connectors()
        return [c for c in node.inputs if c in produced]

    def unbound_inputs(self, node: OperatorNode) -> list[str]:
        produced = self.produced_connectors()
        return [c for c in node.inputs if c not in produced]

    def predecessors(self, node_id: str) -> list[str]:
        return sorted({e.producer for e in self.edges if e.consumer == node_id})

    def successors(self, node_id: str) -> list[str]:
        return sorted({e.consumer for e in self.edges if e.producer == node_id})

    def is_concrete(self) -> bool:
        return self.binding is not None

    # -- ordering --------------------------------------------------------

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; ties broken by node_id so the order is stable."""
        indeg = {n.node_id: 0 for n in self.nodes}
        succs: dict[str, set[str]] = {n.node_id: set() for n in self.nodes}
        for e in self.edges:
            if e.consumer not in succs[e.producer]:
                succs[e.producer].add(e.consumer)
                indeg[e.consumer] += 1
        ready = sorted(nid for nid, d in indeg.items() if d == 0)
        order = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            changed = False
            for s in sorted(succs[nid]):
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
                    changed = True
            if changed:
                ready.sort()
        if len(order) != len(self.nodes):
            raise InvalidGraph("graph contains a cycle")
        return order

    def upstream_nodes(self, node_id: str) -> set[str]:
        preds: dict[str, set[str]] = {n.node_id: set() for n in self.nodes}
        for e in self.edges:
            preds[e.consumer].add(e.producer)
        seen: set[str] = set()
        stack = [node_id]
        while stack:
            cur = stack.pop()
            for p in preds[cur]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen


# -- parsing / serialization ---------------------------------------------


def parse_dataflow(text: str) -> DataflowGraph:
    """Parse the JSON dialect into an abstract dataflow graph."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc))
    return dataflow_from_json(doc)


def dataflow_from_json(doc) -> DataflowGraph:
    if not isinstance(doc, list) or not doc:
        raise MalformedJson("document must be a nonempty JSON array")
    header = doc[0]
    if not isinstance(header, dict) or "GID" not in header or "description" not in header:
        raise MalformedJson("first element must carry GID and description")
    nodes = []
    seen_ids = set()
    for i, obj in enumerate(doc[1:], start=1):
        if not isinstance(obj, dict):
            raise MalformedJson(f"element {i} is not an object")
        for key in ("node_id", "operator", "function_alias"):
            if key not in obj:
                raise MalformedJson(f"element {i} misses required key {key!r}")
        node_id = obj["node_id"]
        if node_id in seen_ids:
            raise DuplicateNodeId(node_id)
        seen_ids.add(node_id)
        operator = str(obj["operator"]).lower()
        if operator not in OPERATORS:
            raise UnknownOperator(obj["operator"])
        inputs = obj.get("input") or []
        outputs = obj.get("output")
        if outputs is None:
            outputs = []
        if not isinstance(inputs, list) or not isinstance(outputs, list):
            raise MalformedJson(f"element {i}: input/output must be arrays (or output null)")
        params = obj.get("params") or {}
        if not isinstance(params, dict):
            raise MalformedJson(f"element {i}: params must be an object")
        nodes.append(
            OperatorNode(
                node_id=node_id,
                operator=operator,
                function_alias=obj["function_alias"],
                inputs=tuple(inputs),
                outputs=tuple(outputs),
                params=dict(params),
            )
        )

    producers: dict[str, str] = {}
    for n in nodes:
        for c in n.outputs:
            if c in producers:
                raise DanglingConnector(f"connector {c!r} produced by both {producers[c]!r} and {n.node_id!r}")
            producers[c] = n.node_id

    edges = []
    for n in nodes:
        for c in n.inputs:
            if c in producers:
                edges.append(Edge(producers[c], c, n.node_id, c))

    graph = DataflowGraph(
        gid=header["GID"],
        description=header["description"],
        nodes=tuple(nodes),
        edges=tuple(edges),
        binding=dict(header["binding"]) if "binding" in header else None,
        param_values=dict(header["param_values"]) if "param_values" in header else None,
    )
    return graph


def dataflow_to_json(graph: DataflowGraph) -> list:
    header: dict = {"GID": graph.gid, "description": graph.description}
    if graph.binding is not None:
        header["binding"] = dict(graph.binding)
    if graph.param_values is not None:
        header["param_values"] = dict(graph.param_values)
    doc: list = [header]
    for n in graph.nodes:
        obj: dict = {
            "node_id": n.node_id,
            "operator": n.operator,
            "function_alias": n.function_alias,
            "input": list(n.inputs),
            "output": list(n.outputs) if n.outputs else None,
        }
        if n.params:
            obj["params"] = n.params
        doc.append(obj)
    return doc


def serialize_dataflow(graph: DataflowGraph) -> str:
    return json.dumps(dataflow_to_json(graph), indent=2)


# -- validation ----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    node_id: str | None
    detail: str

    def __str__(self) -> str:
        where = f" at {self.node_id}" if self.node_id else ""
        return f"{self.code}{where}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def add(self, code: str, node_id: str | None, detail: str):
        self.violations.append(Violation(code, node_id, detail))

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(str(v) for v in self.violations)


def _find_cycle(graph: DataflowGraph) -> list[str] | None:
    color: dict[str, int] = {n.node_id: 0 for n in graph.nodes}
    succs: dict[str, list[str]] = {n.node_id: [] for n in graph.nodes}
    for e in graph.edges:
        succs[e.producer].append(e.consumer)
    stack_trace: list[str] = []

    def visit(nid: str) -> list[str] | None:
        color[nid] = 1
        stack_trace.append(nid)
        for s in succs[nid]:
            if color[s] == 1:
                return stack_trace[stack_trace.index(s):]
            if color[s] == 0:
                found = visit(s)
                if found:
                    return found
        color[nid] = 2
        stack_trace.pop()
        return None

    for nid in sorted(color):
        if color[nid] == 0:
            found = visit(nid)
            if found:
                return found
    return None


def validate(
    graph: DataflowGraph,
    functions: dict[str, FunctionDescriptor],
    source_payloads: dict[str, ConnectorPayload] | None = None,
) -> ValidationReport:
    """Check structure, operator/function agreement, arities, and (when
    source payloads are known) schema propagation. Violations are report
    entries, never exceptions."""
    report = ValidationReport()

    cycle = _find_cycle(graph)
    if cycle:
        report.add("Cycle", None, "[" + ", ".join(cycle) + "]")
        return report  # downstream checks assume a DAG

    produced = graph.produced_connectors()
    for n in graph.nodes:
        fd = functions.get(n.function_alias)
        if fd is None:
            report.add("UnknownFunction", n.node_id, f"no descriptor for alias {n.function_alias!r}")
            continue
        expected_kind = OPERATOR_KIND[n.operator]
        if fd.kind != expected_kind:
            report.add(
                "KindMismatch",
                n.node_id,
                f"operator {n.operator!r} needs kind {expected_kind!r}, alias {n.function_alias!r} is {fd.kind!r}",
            )
        dataset_ins = [c for c in n.inputs if c in produced]
        free_ins = [c for c in n.inputs if c not in produced]
        if n.operator == "source":
            if dataset_ins:
                report.add("ArityMismatch", n.node_id, f"source inputs must be placeholders, got {dataset_ins}")
            if len(n.inputs) != len(n.outputs) or not n.outputs:
                report.add(
                    "ArityMismatch",
                    n.node_id,
                    f"source pairs inputs to outputs positionally ({len(n.inputs)} in, {len(n.outputs)} out)",
                )
            if fd.arity_out != VARIADIC and len(n.outputs) != fd.arity_out:
                report.add("ArityMismatch", n.node_id, f"alias declares {fd.arity_out} outputs, node has {len(n.outputs)}")
        elif n.operator == "sink":
            if len(dataset_ins) != 1:
                report.add("ArityMismatch", n.node_id, f"sink needs exactly one produced input, got {len(dataset_ins)}")
            if len(free_ins) > 1:
                report.add("ArityMismatch", n.node_id, f"sink allows at most one path placeholder, got {free_ins}")
            if n.outputs:
                report.add("ArityMismatch", n.node_id, "sink has no outputs")
        else:
            if free_ins:
                report.add("ArityMismatch", n.node_id, f"unproduced inputs {free_ins} on non-source node")
            if fd.arity_in != VARIADIC and len(dataset_ins) != fd.arity_in:
                report.add(
                    "ArityMismatch", n.node_id, f"needs {fd.arity_in} inputs, got {len(dataset_ins)}"
                )
            if n.operator == "train":
                if len(n.outputs) > 1:
                    report.add("ArityMismatch", n.node_id, "train produces at most one model connector")
            elif fd.arity_out != VARIADIC and len(n.outputs) != fd.arity_out:
                report.add("ArityMismatch", n.node_id, f"needs {fd.arity_out} outputs, got {len(n.outputs)}")
        for pname, _ptype in fd.params_schema:
            if pname not in n.params:
                report.add("MissingParam", n.node_id, f"required param {pname!r} absent")

    if report.violations:
        return report

    _propagate_payloads(graph, functions, source_payloads or {}, report, strict=False)
    return report


# -- schema propagation --------------------------------------------------


def _infer_map_schema(schema: Schema, columns: dict, report: ValidationReport, node_id: str) -> Schema | None:
    attrs = list(schema.attributes)
    for name, expr_text in columns.items():
        try:
            expr = pred_mod.parse_expression(str(expr_text), schema)
        except Exception as exc:
            code = "UnknownColumn" if "UnknownColumn" in type(exc).__name__ else "BadExpression"
            report.add(code, node_id, f"column {name!r}: {exc}")
            return None
        replaced = False
        for i, a in enumerate(attrs):
            if a.name == name:
                attrs[i] = Attribute(name, expr.type)
                replaced = True
        if not replaced:
            attrs.append(Attribute(name, expr.type))
    return Schema(tuple(attrs))


def _agg_result_type(fn: str, in_type: str) -> str | None:
    if fn == "count":
        return "int64"
    if fn == "mean":
        return "float64" if in_type in ("int64", "float64") else None
    if fn == "sum":
        return in_type if in_type in ("int64", "float64") else None
    if fn in ("min", "max"):
        return in_type if in_type != "bool" else None
    return None


def _propagate_payloads(
    graph: DataflowGraph,
    functions: dict[str, FunctionDescriptor],
    source_payloads: dict[str, ConnectorPayload],
    report: ValidationReport,
    strict: bool,
) -> dict[str, ConnectorPayload]:
    """Walk the DAG in topological order resolving connector payloads.

    In non-strict mode (validate), connectors whose payloads cannot be
    resolved are skipped silently: abstract graphs legitimately lack
    schemas. Strict mode (bind) records a violation instead.
    """
    payloads: dict[str, ConnectorPayload] = {}

    def get(conn: str) -> ConnectorPayload | None:
        return payloads.get(conn)

    for nid in graph.topological_order():
        n = graph.node(nid)
        dataset_ins = graph.dataset_inputs(n)

        if n.operator == "source":
            for in_name, out_name in zip(n.inputs, n.outputs):
                payload = source_payloads.get(in_name)
                if payload is None:
                    if strict:
                        report.add("SchemaError", nid, f"no payload for source input {in_name!r}")
                    continue
                payloads[out_name] = payload
            continue

        ins = [get(c) for c in dataset_ins]
        if any(p is None for p in ins):
            if strict:
                missing = [c for c, p in zip(dataset_ins, ins) if p is None]
                report.add("SchemaError", nid, f"unresolved input connectors {missing}")
            continue

        if n.operator == "sink":
            continue

        if n.operator == "predict":
            models = [p for p in ins if p.kind == "model"]
            datasets = [p for p in ins if p.kind == "dataset"]
            if len(models) != 1 or len(datasets) != 1:
                report.add("SchemaError", nid, "predict needs one dataset and one model input")
                continue
            schema = datasets[0].schema
            meta = models[0].model or {}
            for feat in meta.get("feature_names", ()):
                if not schema.has(feat):
                    report.add("UnknownColumn", nid, f"model feature {feat!r} absent from input schema")
                elif schema.type_of(feat) not in ("int64", "float64"):
                    report.add("SchemaError", nid, f"model feature {feat!r} is not numeric")
            if report.violations and strict:
                continue
            attrs = list(schema.attributes)
            if schema.has("prediction"):
                report.add("SchemaError", nid, "input already carries a 'prediction' column")
                continue
            attrs.append(Attribute("prediction", "float64"))
            if n.outputs:
                payloads[n.outputs[0]] = ConnectorPayload("dataset", Schema(tuple(attrs)))
            continue

        if any(p.kind != "dataset" for p in ins):
            report.add("SchemaError", nid, f"{n.operator} consumes datasets only")
            continue
        schemas = [p.schema for p in ins]

        out_schema: Schema | None = None
        params = n.params
        if n.operator == "filter":
            try:
                pred_mod.parse_predicate(str(params.get("predicate", "")), schemas[0])
                out_schema = schemas[0]
            except Exception as exc:
                code = "UnknownColumn" if "UnknownColumn" in type(exc).__name__ else "BadPredicate"
                report.add(code, nid, str(exc))
        elif n.operator == "map":
            out_schema = _infer_map_schema(schemas[0], params.get("columns") or {}, report, nid)
        elif n.operator == "cast":
            attrs = list(schemas[0].attributes)
            ok = True
            for col, to_type in (params.get("types") or {}).items():
                if not schemas[0].has(col):
                    report.add("UnknownColumn", nid, f"cast column {col!r} absent")
                    ok = False
                    continue
                idx = schemas[0].index_of(col)
                attrs[idx] = Attribute(col, to_type)
            if ok:
                try:
                    out_schema = Schema(tuple(attrs))
                except Exception as exc:
                    report.add("SchemaError", nid, str(exc))
        elif n.operator == "join":
            keys = list(params.get("keys") or ())
            left, right = schemas[0], schemas[1]
            ok = True
            for k in keys:
                for side_name, side in (("left", left), ("right", right)):
                    if not side.has(k):
                        report.add("UnknownColumn", nid, f"join key {k!r} absent from {side_name} input")
                        ok = False
                if ok and left.type_of(k) != right.type_of(k):
                    report.add("SchemaError", nid, f"join key {k!r} type differs across inputs")
                    ok = False
            if ok:
                overlap = (set(left.names()) & set(right.names())) - set(keys)
                if overlap:
                    report.add("SchemaError", nid, f"non-key columns {sorted(overlap)} appear on both join sides")
                else:
                    attrs = list(left.attributes) + [a for a in right.attributes if a.name not in keys]
                    out_schema = Schema(tuple(attrs))
        elif n.operator == "groupby":
            keys = list(params.get("keys") or ())
            schema = schemas[0]
            ok = True
            for k in keys:
                if not schema.has(k):
                    report.add("UnknownColumn", nid, f"groupby key {k!r} absent")
                    ok = False
            attrs = [Attribute(k, schema.type_of(k)) for k in keys if schema.has(k)]
            for out_name, spec in (params.get("aggs") or {}).items():
                fn, col = spec
                if fn not in _AGG_FUNCS:
                    report.add("SchemaError", nid, f"unknown aggregate {fn!r}")
                    ok = False
                    continue
                if col == "*":
                    if fn != "count":
                        report.add("SchemaError", nid, f"aggregate {fn!r} needs a column")
                        ok = False
                        continue
                    in_type = "int64"
                elif not schema.has(col):
                    report.add("UnknownColumn", nid, f"aggregate column {col!r} absent")
                    ok = False
                    continue
                else:
                    in_type = schema.type_of(col)
                result = _agg_result_type(fn, in_type)
                if result is None:
                    report.add("SchemaError", nid, f"aggregate {fn!r} undefined for {in_type}")
                    ok = False
                    continue
                attrs.append(Attribute(out_name, result))
            if ok:
                out_schema = Schema(tuple(attrs))
        elif n.operator == "dedup":
            schema = schemas[0]
            ok = True
            for k in params.get("keys") or ():
                if not schema.has(k):
                    report.add("UnknownColumn", nid, f"dedup key {k!r} absent")
                    ok = False
            if ok:
                out_schema = schema
        elif n.operator == "train":
            schema = schemas[0]
            features = list(params.get("features") or ())
            target = params.get("target")
            ok = True
            for col in features + ([target] if target else []):
                if not schema.has(col):
                    report.add("UnknownColumn", nid, f"training column {col!r} absent")
                    ok = False
                elif schema.type_of(col) not in ("int64", "float64"):
                    report.add("SchemaError", nid, f"training column {col!r} is not numeric")
                    ok = False
            if ok and n.outputs:
                payloads[n.outputs[0]] = ConnectorPayload(
                    "model", model={"feature_names": features, "target_name": target}
                )
            continue
        else:  # pragma: no cover - all operators handled above
            report.add("SchemaError", nid, f"unhandled operator {n.operator}")

        if out_schema is not None and n.outputs:
            payloads[n.outputs[0]] = ConnectorPayload("dataset", out_schema)

    return payloads


# -- binding -------------------------------------------------------------


def _looks_like_path(name: str) -> bool:
    return "/" in name or "." in name


def source_payload_map(graph: DataflowGraph) -> dict[str, ConnectorPayload]:
    """Placeholder -> payload, recovered from a graph that already has
    propagated payloads. Source wiring survives rewrites, so this map
    lets payloads be recomputed after graph surgery."""
    out: dict[str, ConnectorPayload] = {}
    if not graph.payloads:
        return out
    for n in graph.nodes:
        if n.operator != "source":
            continue
        for in_name, out_name in zip(n.inputs, n.outputs):
            if out_name in graph.payloads:
                out[in_name] = graph.payloads[out_name]
    return out


def repropagate(
    graph: DataflowGraph,
    source_payloads: dict[str, ConnectorPayload],
    functions: dict[str, FunctionDescriptor],
) -> DataflowGraph:
    """Recompute connector payloads after the wiring changed."""
    report = ValidationReport()
    payloads = _propagate_payloads(graph, functions, source_payloads, report, strict=False)
    return replace(graph, payloads=payloads)


def _substitute_params(node: OperatorNode, param_values: dict) -> OperatorNode:
    def subst(value):
        if isinstance(value, str) and value.startswith("$"):
            key = value[1:]
            if key not in param_values:
                raise MissingParam(key)
            return param_values[key]
        if isinstance(value, dict):
            return {k: subst(v) for k, v in value.items()}
        if isinstance(value, list):
            return [subst(v) for v in value]
        return value

    return replace(node, params=subst(node.params))


def _resolve_source_payloads(
    graph: DataflowGraph, dataset_bindings: dict[str, str], catalog
) -> dict[str, ConnectorPayload]:
    source_payloads: dict[str, ConnectorPayload] = {}
    for n in graph.nodes:
        free = graph.unbound_inputs(n)
        for name in free:
            if name in dataset_bindings:
                if n.operator == "sink":
                    continue  # output path binding, no payload
                gid = dataset_bindings[name]
                record = catalog.get(gid)
                if record is None:
                    raise UnknownGid(f"{name!r} bound to unknown gid {gid}")
                if record.kind == "dataset":
                    source_payloads[name] = ConnectorPayload(
                        "dataset", Schema.from_json(record.metadata["schema"])
                    )
                elif record.kind == "model":
                    source_payloads[name] = ConnectorPayload(
                        "model",
                        model={
                            "feature_names": record.metadata.get("feature_names", []),
                            "target_name": record.metadata.get("target_name"),
                        },
                    )
                else:
                    raise SchemaMismatch(f"{name!r} bound to a {record.kind}, expected dataset or model")
            elif _looks_like_path(name):
                if n.operator == "sink":
                    continue
                schema = catalog.sniff_schema(name)
                if schema is None:
                    raise MissingBinding(f"literal path {name!r} unreadable on default platform")
                source_payloads[name] = ConnectorPayload("dataset", schema)
            else:
                raise MissingBinding(name)
    return source_payloads


def bind(
    graph: DataflowGraph,
    dataset_bindings: dict[str, str],
    params: dict,
    catalog,
    functions: dict[str, FunctionDescriptor],
) -> DataflowGraph:
    """Produce a concrete graph: placeholders bound, params filled,
    schemas resolved from the catalog and propagated through all nodes.

    Placeholder resolution: a source/sink free input that appears in
    `dataset_bindings` is a placeholder; otherwise it must look like a
    literal path (contains '/' or an extension dot). Anything else is a
    MissingBinding.
    """
    nodes = tuple(_substitute_params(n, params) for n in graph.nodes)
    concrete = replace(graph, nodes=nodes)

    structural = validate(concrete, functions)
    hard = [v for v in structural.violations if v.code not in ("UnknownColumn", "SchemaError", "BadPredicate", "BadExpression")]
    if hard:
        raise InvalidGraph("; ".join(str(v) for v in hard))

    source_payloads = _resolve_source_payloads(concrete, dataset_bindings, catalog)
    report = ValidationReport()
    payloads = _propagate_payloads(concrete, functions, source_payloads, report, strict=True)
    if report.violations:
        first = report.violations[0]
        raise SchemaMismatch(str(first))

    return replace(
        concrete,
        binding=dict(dataset_bindings),
        param_values=dict(params),
        payloads=payloads,
    )


def attach_payloads(
    graph: DataflowGraph,
    catalog,
    functions: dict[str, FunctionDescriptor] | None = None,
) -> DataflowGraph:
    """Resolve payloads for an already-bound graph (e.g. one loaded from
    a plan file, where payloads are not serialized)."""
    if graph.binding is None:
        raise InvalidGraph("graph is not bound")
    source_payloads = _resolve_source_payloads(graph, graph.binding, catalog)
    return repropagate(graph, source_payloads, functions or builtin_functions())
