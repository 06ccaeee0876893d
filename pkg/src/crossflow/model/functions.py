"""Function descriptors: the declared behavior behind each operator node.

A descriptor states the function's kind (data access, element/set
transformation, learner, model application), dataset arities, declared
read/write attribute sets, and whether the function is opaque. Opaque
functions are black boxes: the optimizer never moves them and the
executor refuses to run them.
"""

from __future__ import annotations

from dataclasses import dataclass

FUNCTION_KINDS = ("source", "sink", "transform_element", "transform_set", "learner", "model_apply")

# operator class -> admissible function kind
OPERATOR_KIND = {
    "source": "source",
    "sink": "sink",
    "map": "transform_element",
    "filter": "transform_element",
    "cast": "transform_element",
    "join": "transform_set",
    "groupby": "transform_set",
    "dedup": "transform_set",
    "train": "learner",
    "predict": "model_apply",
}

OPERATORS = tuple(OPERATOR_KIND)

# set-at-a-time operators act as reorder barriers for the optimizer
ELEMENT_AT_A_TIME = ("map", "filter", "cast", "predict")

VARIADIC = -1


@dataclass(frozen=True)
class FunctionDescriptor:
    alias: str
    kind: str
    reads: frozenset = frozenset()
    writes: frozenset = frozenset()
    arity_in: int = 1
    arity_out: int = 1
    params_schema: tuple = ()  # (name, type) pairs of required params
    opaque: bool = False

    def to_json(self) -> dict:
        return {
            "alias": self.alias,
            "kind": self.kind,
            "reads": sorted(self.reads),
            "writes": sorted(self.writes),
            "arity_in": self.arity_in,
            "arity_out": self.arity_out,
            "params_schema": [list(p) for p in self.params_schema],
            "opaque": self.opaque,
        }

    @staticmethod
    def from_json(obj: dict) -> "FunctionDescriptor":
        return FunctionDescriptor(
            alias=obj["alias"],
            kind=obj["kind"],
            reads=frozenset(obj.get("reads", ())),
            writes=frozenset(obj.get("writes", ())),
            arity_in=obj.get("arity_in", 1),
            arity_out=obj.get("arity_out", 1),
            params_schema=tuple(tuple(p) for p in obj.get("params_schema", ())),
            opaque=obj.get("opaque", False),
        )


def builtin_functions() -> dict[str, FunctionDescriptor]:
    """Descriptors for the executable builtin library, keyed by alias.

    Builtins compute their effective read/write sets from node params
    (see `node_reads` / `node_writes`), so the static sets here are empty.
    """
    return {
        "source": FunctionDescriptor("source", "source", arity_in=0, arity_out=VARIADIC),
        "sink": FunctionDescriptor("sink", "sink", arity_in=1, arity_out=0),
        "filter": FunctionDescriptor("filter", "transform_element", params_schema=(("predicate", "string"),)),
        "map": FunctionDescriptor("map", "transform_element", params_schema=(("columns", "object"),)),
        "cast": FunctionDescriptor("cast", "transform_element", params_schema=(("types", "object"),)),
        "join": FunctionDescriptor("join", "transform_set", arity_in=2, params_schema=(("keys", "array"),)),
        "groupby": FunctionDescriptor(
            "groupby", "transform_set", params_schema=(("keys", "array"), ("aggs", "object"))
        ),
        "dedup": FunctionDescriptor("dedup", "transform_set", params_schema=(("keys", "array"),)),
        "train": FunctionDescriptor(
            "train", "learner", params_schema=(("features", "array"), ("target", "string"))
        ),
        "predict": FunctionDescriptor("predict", "model_apply", arity_in=2),
    }


BUILTIN_ALIASES = frozenset(builtin_functions())


def node_reads(operator: str, params: dict, descriptor: FunctionDescriptor) -> frozenset:
    """Attributes a node reads, specialized from params for builtins."""
    if operator == "filter":
        pred = params.get("predicate")
        if isinstance(pred, str):
            return frozenset(_expr_columns(pred))
        return descriptor.reads
    if operator == "cast":
        return frozenset((params.get("types") or {}).keys()) or descriptor.reads
    if operator == "map":
        cols = set()
        for expr_text in (params.get("columns") or {}).values():
            cols |= _expr_columns(expr_text)
        return frozenset(cols) or descriptor.reads
    if operator in ("join", "groupby", "dedup"):
        return frozenset(params.get("keys") or ()) or descriptor.reads
    if operator == "train":
        return frozenset(list(params.get("features") or ()) + [params["target"]]) if params.get("target") else descriptor.reads
    if operator == "predict":
        return frozenset(params.get("features") or ()) or descriptor.reads
    return descriptor.reads


def node_writes(operator: str, params: dict, descriptor: FunctionDescriptor) -> frozenset:
    if operator == "cast":
        return frozenset((params.get("types") or {}).keys()) or descriptor.writes
    if operator == "map":
        return frozenset((params.get("columns") or {}).keys()) or descriptor.writes
    if operator == "predict":
        return frozenset({"prediction"})
    return descriptor.writes


def _expr_columns(expr_text: str) -> set[str]:
    """Column names syntactically referenced by an expression string.

    Tokenizes without a schema (used before schemas are known), so any
    identifier that is not a keyword counts as a column reference.
    """
    from .predicate import _tokenize

    cols = set()
    for tok in _tokenize(expr_text):
        if tok.kind == "ident" and tok.text not in ("and", "or", "not", "true", "false"):
            cols.add(tok.text)
    return cols
