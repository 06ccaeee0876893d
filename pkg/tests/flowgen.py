"""Random valid dataflow generator shared by the property tests.

Flows draw from source/filter/map/cast/join/groupby/dedup. Sources get
disjoint column names plus a shared int64 key "k" so joins are always
well-typed; literals and expressions are generated type-correctly so
every emitted document passes validation.
"""

import json
import random

from crossflow.executor.dataset import InMemoryDataset
from crossflow.model.functions import builtin_functions
from crossflow.model.graph import ConnectorPayload, parse_dataflow, validate
from crossflow.model.schema import Schema

KEY_RANGE = 8
JOIN_ROW_CAP = 20_000


def source_dataset(rng: random.Random, idx: int, max_rows: int) -> InMemoryDataset:
    cols = [("k", "int64"), (f"a{idx}", "int64"), (f"b{idx}", "float64"), (f"s{idx}", "string")]
    with_bool = rng.random() < 0.5
    if with_bool:
        cols.append((f"f{idx}", "bool"))
    schema = Schema.of(*cols)
    rows = []
    for _ in range(rng.randrange(40, max_rows + 1)):
        row = [
            rng.randrange(KEY_RANGE),
            rng.randrange(-50, 51),
            rng.randrange(-400, 401) / 16.0,
            f"v{rng.randrange(6)}",
        ]
        if with_bool:
            row.append(rng.random() < 0.5)
        rows.append(tuple(row))
    return InMemoryDataset(schema, rows)


def _predicate_for(rng: random.Random, schema: Schema) -> str:
    def clause() -> str:
        attr = rng.choice(schema.attributes)
        name, type_name = attr.name, attr.type
        if type_name == "int64":
            return f"{name} <= {rng.randrange(-20, 21)}"
        if type_name == "float64":
            return f"{name} <= {rng.randrange(-200, 201) / 16.0!r}"
        if type_name == "string":
            op = rng.choice(("=", "!="))
            return f"{name} {op} 'v{rng.randrange(6)}'"
        return rng.choice((name, f"not {name}"))

    text = clause()
    if rng.random() < 0.3:
        text = f"{text} {rng.choice(('and', 'or'))} {clause()}"
    return text


def _columns(schema: Schema) -> list:
    return [(a.name, a.type) for a in schema.attributes]


def _numeric_columns(schema: Schema) -> list:
    return [(n, t) for n, t in _columns(schema) if t in ("int64", "float64")]


class _Flow:
    """Accumulates nodes while tracking live connector schemas."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.nodes = []
        self.live = []  # {"conn", "schema", "est", "has_key"}
        self.seq = 0

    def fresh(self, prefix: str) -> str:
        self.seq += 1
        return f"{prefix}{self.seq}"

    def add(self, operator: str, inputs: list, outputs: list, params: dict):
        nid = self.fresh("n")
        self.nodes.append(
            {
                "node_id": nid,
                "operator": operator,
                "function_alias": operator,
                "input": inputs,
                "output": outputs,
                "params": params,
            }
        )
        return nid

    def pick(self):
        return self.rng.choice(self.live)

    def replace_live(self, old, new):
        # connectors may fan out, so the producer stays live alongside
        # its consumer's output; drop the input only sometimes
        if self.rng.random() < 0.7:
            self.live.remove(old)
        self.live.append(new)


def random_flow(rng: random.Random, max_nodes: int = 12, max_source_rows: int = 800):
    """(graph, entry) with <= max_nodes nodes and validated structure."""
    flow = _Flow(rng)
    n_sources = rng.randrange(1, 4)
    entry = {}
    for i in range(n_sources):
        dataset = source_dataset(rng, i, max_source_rows)
        placeholder = f"in{i}"
        conn = f"src{i}"
        flow.add("source", [placeholder], [conn], {})
        entry[placeholder] = dataset
        flow.live.append(
            {"conn": conn, "schema": dataset.schema, "est": float(len(dataset)), "has_key": True}
        )

    budget = rng.randrange(1, max_nodes - n_sources + 1)
    for _ in range(budget):
        if len(flow.nodes) >= max_nodes:
            break
        op = rng.choice(("filter", "filter", "map", "cast", "join", "groupby", "dedup"))
        if op == "filter":
            src = flow.pick()
            out = flow.fresh("c")
            flow.add("filter", [src["conn"]], [out], {"predicate": _predicate_for(rng, src["schema"])})
            flow.replace_live(src, {**src, "conn": out, "est": src["est"] * 0.6})
        elif op == "map":
            src = flow.pick()
            numeric = _numeric_columns(src["schema"])
            if not numeric:
                continue
            col, type_name = rng.choice(numeric)
            if rng.random() < 0.5:
                target, expr = flow.fresh("m"), f"{col} * 2 + 1" if type_name == "int64" else f"{col} + 1.5"
            else:
                target, expr = col, f"{col} + 1" if type_name == "int64" else f"{col} + 0.25"
            out = flow.fresh("c")
            flow.add("map", [src["conn"]], [out], {"columns": {target: expr}})
            pairs = _columns(src["schema"])
            if target not in src["schema"].names():
                pairs.append((target, type_name))
            flow.replace_live(src, {**src, "conn": out, "schema": Schema.of(*pairs)})
        elif op == "cast":
            src = flow.pick()
            safe = {"int64": ("float64", "string"), "float64": ("string",), "bool": ("string",)}
            candidates = [(n, t) for n, t in _columns(src["schema"]) if t in safe and n != "k"]
            if not candidates:
                continue
            col, type_name = rng.choice(candidates)
            new_type = rng.choice(safe[type_name])
            out = flow.fresh("c")
            flow.add("cast", [src["conn"]], [out], {"types": {col: new_type}})
            pairs = [(n, new_type if n == col else t) for n, t in _columns(src["schema"])]
            flow.replace_live(src, {**src, "conn": out, "schema": Schema.of(*pairs)})
        elif op == "join":
            pairs = [
                (a, b)
                for a in flow.live
                for b in flow.live
                if a is not b
                and a["has_key"] and b["has_key"]
                and set(a["schema"].names()) & set(b["schema"].names()) == {"k"}
                and a["est"] * b["est"] / KEY_RANGE <= JOIN_ROW_CAP
            ]
            if not pairs:
                continue
            left, right = rng.choice(pairs)
            out = flow.fresh("c")
            flow.add("join", [left["conn"], right["conn"]], [out], {"keys": ["k"]})
            merged = _columns(left["schema"]) + [
                (n, t) for n, t in _columns(right["schema"]) if n != "k"
            ]
            for side in (left, right):
                if side in flow.live and rng.random() < 0.8:
                    flow.live.remove(side)
            flow.live.append(
                {
                    "conn": out,
                    "schema": Schema.of(*merged),
                    "est": left["est"] * right["est"] / KEY_RANGE,
                    "has_key": True,
                }
            )
        elif op == "groupby":
            src = flow.pick()
            numeric = _numeric_columns(src["schema"])
            if not numeric or not src["has_key"]:
                continue
            keys = ["k"]
            str_cols = [n for n, t in _columns(src["schema"]) if t == "string"]
            if str_cols and rng.random() < 0.4:
                keys.append(rng.choice(str_cols))
            tag = flow.fresh("g")
            aggs = {f"{tag}c": ["count", "*"]}
            col, _ = rng.choice(numeric)
            if rng.random() < 0.7:
                aggs[f"{tag}s"] = [rng.choice(("sum", "mean")), col]
            ordered = [n for n, t in _columns(src["schema"]) if t != "bool"]
            if ordered and rng.random() < 0.4:
                aggs[f"{tag}l"] = [rng.choice(("min", "max")), rng.choice(ordered)]
            out = flow.fresh("c")
            flow.add("groupby", [src["conn"]], [out], {"keys": keys, "aggs": aggs})
            key_types = dict(_columns(src["schema"]))
            pairs = [(kk, key_types[kk]) for kk in keys]
            for out_name, (fn, in_col) in aggs.items():
                if fn == "count":
                    pairs.append((out_name, "int64"))
                elif fn == "mean":
                    pairs.append((out_name, "float64"))
                else:
                    pairs.append((out_name, key_types.get(in_col, "int64")))
            flow.replace_live(
                src,
                {
                    "conn": out,
                    "schema": Schema.of(*pairs),
                    "est": min(src["est"], float(KEY_RANGE * (6 if len(keys) > 1 else 1))),
                    "has_key": True,
                },
            )
        else:  # dedup
            src = flow.pick()
            choice = rng.random()
            if choice < 0.3:
                keys = []
            elif src["has_key"]:
                keys = ["k"]
                others = [n for n in src["schema"].names() if n != "k"]
                if others and rng.random() < 0.5:
                    keys.append(rng.choice(others))
            else:
                keys = [src["schema"].names()[0]]
            out = flow.fresh("c")
            flow.add("dedup", [src["conn"]], [out], {"keys": keys})
            flow.replace_live(src, {**src, "conn": out})

    doc = [{"GID": f"rand-{rng.randrange(10**6)}", "description": "generated flow"}] + flow.nodes
    graph = parse_dataflow(json.dumps(doc))
    payloads = {ph: ConnectorPayload("dataset", entry[ph].schema) for ph in entry}
    report = validate(graph, builtin_functions(), payloads)
    assert report.ok, f"generator emitted an invalid flow: {report}"
    return graph, entry
