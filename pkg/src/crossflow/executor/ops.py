"""Pure operator kernels over in-memory datasets.

Each kernel takes datasets plus the node's params and returns a new
dataset; output schemas follow the same rules the binder uses to
propagate payloads. Kernels are deterministic: given equal input
multisets in equal order they produce identical outputs, and their
output multiset does not depend on how the input was partitioned.
"""

from __future__ import annotations

import math

from ..errors import CastError, SchemaViolation, UnknownKey
from ..model import predicate as pred
from ..model.schema import Attribute, Schema, format_value, parse_value
from .dataset import InMemoryDataset, row_sort_key
from .learner import ModelArtifact, fit_ols

AGG_FUNCS = ("sum", "count", "mean", "min", "max")


def apply_filter(ds: InMemoryDataset, predicate_text: str) -> InMemoryDataset:
    expr = pred.parse_predicate(predicate_text, ds.schema)
    fn = pred.compile_expr(expr, ds.schema)
    return InMemoryDataset(ds.schema, [row for row in ds.rows if fn(row)])


def map_schema(schema: Schema, columns: dict) -> Schema:
    attrs = list(schema.attributes)
    for name, text in columns.items():
        expr = pred.parse_expression(str(text), schema)
        replaced = False
        for i, a in enumerate(attrs):
            if a.name == name:
                attrs[i] = Attribute(name, expr.type)
                replaced = True
        if not replaced:
            attrs.append(Attribute(name, expr.type))
    return Schema(tuple(attrs))


def apply_map(ds: InMemoryDataset, columns: dict) -> InMemoryDataset:
    """Evaluate each expression against the input row; assignments
    replace the named column or append a new one."""
    schema = ds.schema
    out_schema = map_schema(schema, columns)
    compiled = {
        name: pred.compile_expr(pred.parse_expression(str(text), schema), schema)
        for name, text in columns.items()
    }
    in_names = schema.names()
    plan = []  # (source index | None, compute fn | None) per output attr
    for attr in out_schema.attributes:
        if attr.name in compiled:
            plan.append((None, compiled[attr.name]))
        else:
            plan.append((in_names.index(attr.name), None))
    rows = []
    for row in ds.rows:
        rows.append(tuple(row[idx] if fn is None else fn(row) for idx, fn in plan))
    return InMemoryDataset(out_schema, rows)


def _convert(value, from_type: str, to_type: str):
    if from_type == to_type:
        return value
    if from_type == "string":
        try:
            return parse_value(value, to_type)
        except ValueError as exc:
            raise CastError(str(exc))
    if to_type == "string":
        return format_value(value)
    if from_type == "int64" and to_type == "float64":
        return float(value)
    if from_type == "float64" and to_type == "int64":
        if float(value).is_integer():
            return int(value)
        raise CastError(f"{value!r} is not an integral value")
    raise CastError(f"no conversion {from_type} -> {to_type}")


def cast_schema(schema: Schema, types: dict) -> Schema:
    attrs = list(schema.attributes)
    for col, to_type in types.items():
        if not schema.has(col):
            raise UnknownKey(f"cast column {col!r} absent")
        attrs[schema.index_of(col)] = Attribute(col, to_type)
    return Schema(tuple(attrs))


def apply_cast(ds: InMemoryDataset, types: dict) -> InMemoryDataset:
    schema = ds.schema
    out_schema = cast_schema(schema, types)
    moves = [(schema.index_of(col), schema.type_of(col), to_type) for col, to_type in types.items()]
    rows = []
    for row in ds.rows:
        new = list(row)
        for idx, from_type, to_type in moves:
            new[idx] = _convert(row[idx], from_type, to_type)
        rows.append(tuple(new))
    return InMemoryDataset(out_schema, rows)


def join_schema(left: Schema, right: Schema, keys: list) -> Schema:
    for k in keys:
        if not left.has(k) or not right.has(k):
            raise UnknownKey(f"join key {k!r} absent")
    attrs = list(left.attributes) + [a for a in right.attributes if a.name not in keys]
    return Schema(tuple(attrs))


def apply_join(left: InMemoryDataset, right: InMemoryDataset, keys: list) -> InMemoryDataset:
    """Inner equi-join; output columns are the left schema followed by
    the right side's non-key columns."""
    out_schema = join_schema(left.schema, right.schema, keys)
    lkey = [left.schema.index_of(k) for k in keys]
    rkey = [right.schema.index_of(k) for k in keys]
    carry = [i for i, a in enumerate(right.schema.attributes) if a.name not in keys]
    table: dict = {}
    for row in right.rows:
        table.setdefault(tuple(row[i] for i in rkey), []).append(row)
    rows = []
    for row in left.rows:
        for match in table.get(tuple(row[i] for i in lkey), ()):
            rows.append(row + tuple(match[i] for i in carry))
    return InMemoryDataset(out_schema, rows)


def groupby_schema(schema: Schema, keys: list, aggs: dict) -> Schema:
    attrs = [Attribute(k, schema.type_of(k)) for k in keys]
    for out_name, (fn, col) in aggs.items():
        if fn not in AGG_FUNCS:
            raise UnknownKey(f"unknown aggregate {fn!r}")
        if col == "*":
            in_type = "int64"
        elif not schema.has(col):
            raise UnknownKey(f"aggregate column {col!r} absent")
        else:
            in_type = schema.type_of(col)
        out_type = {"count": "int64", "mean": "float64"}.get(fn, in_type)
        attrs.append(Attribute(out_name, out_type))
    return Schema(tuple(attrs))


def _aggregate(fn: str, values: list, in_type: str):
    if fn == "count":
        return len(values)
    if fn == "sum":
        return sum(values) if in_type == "int64" else math.fsum(values)
    if fn == "mean":
        return math.fsum(float(v) for v in values) / len(values)
    if fn == "min":
        return min(values)
    return max(values)


def apply_groupby(ds: InMemoryDataset, keys: list, aggs: dict) -> InMemoryDataset:
    schema = ds.schema
    out_schema = groupby_schema(schema, keys, aggs)
    key_idx = [schema.index_of(k) for k in keys]
    groups: dict = {}
    for row in ds.rows:
        groups.setdefault(tuple(row[i] for i in key_idx), []).append(row)
    specs = []
    for _, (fn, col) in aggs.items():
        idx = None if col == "*" else schema.index_of(col)
        in_type = "int64" if col == "*" else schema.type_of(col)
        specs.append((fn, idx, in_type))
    rows = []
    for key, members in groups.items():
        values = list(key)
        for fn, idx, in_type in specs:
            column = members if idx is None else [r[idx] for r in members]
            values.append(_aggregate(fn, column, in_type))
        rows.append(tuple(values))
    return InMemoryDataset(out_schema, rows)


def apply_dedup(ds: InMemoryDataset, keys: list) -> InMemoryDataset:
    """One row per distinct key tuple; among duplicates the row that
    sorts first by all columns survives, so the result does not depend
    on input order. No keys means all columns are the key."""
    schema = ds.schema
    names = keys or schema.names()
    for k in names:
        if not schema.has(k):
            raise UnknownKey(f"dedup key {k!r} absent")
    key_idx = [schema.index_of(k) for k in names]
    chosen: dict = {}
    order: list = []
    for row in ds.rows:
        key = tuple(row[i] for i in key_idx)
        if key not in chosen:
            chosen[key] = row
            order.append(key)
        elif row_sort_key(row) < row_sort_key(chosen[key]):
            chosen[key] = row
    return InMemoryDataset(schema, [chosen[k] for k in order])


def apply_train(ds: InMemoryDataset, features: list, target: str) -> ModelArtifact:
    schema = ds.schema
    for col in list(features) + [target]:
        if not schema.has(col):
            raise UnknownKey(f"training column {col!r} absent")
    f_idx = [schema.index_of(c) for c in features]
    t_idx = schema.index_of(target)
    feature_rows = [tuple(row[i] for i in f_idx) for row in ds.rows]
    targets = [row[t_idx] for row in ds.rows]
    return fit_ols(feature_rows, targets, list(features), target)


def predict_schema(schema: Schema) -> Schema:
    if schema.has("prediction"):
        raise SchemaViolation("input already has a prediction column")
    return Schema(tuple(schema.attributes) + (Attribute("prediction", "float64"),))


def apply_predict(ds: InMemoryDataset, model: ModelArtifact) -> InMemoryDataset:
    schema = ds.schema
    for col in model.feature_names:
        if not schema.has(col):
            raise SchemaViolation(f"model feature {col!r} absent from input")
    out_schema = predict_schema(schema)
    f_idx = [schema.index_of(c) for c in model.feature_names]
    rows = [row + (model.apply(tuple(row[i] for i in f_idx)),) for row in ds.rows]
    return InMemoryDataset(out_schema, rows)
