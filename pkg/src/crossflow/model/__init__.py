"""Core data model: schemas, predicates, functions, and dataflow graphs."""

from .functions import (
    BUILTIN_ALIASES,
    ELEMENT_AT_A_TIME,
    FUNCTION_KINDS,
    OPERATOR_KIND,
    OPERATORS,
    VARIADIC,
    FunctionDescriptor,
    builtin_functions,
    node_reads,
    node_writes,
)
from .graph import (
    ConnectorPayload,
    DataflowGraph,
    Edge,
    OperatorNode,
    ValidationReport,
    Violation,
    bind,
    dataflow_from_json,
    dataflow_to_json,
    parse_dataflow,
    serialize_dataflow,
    validate,
)
from .predicate import (
    compile_expr,
    parse_expression,
    parse_predicate,
)
from .schema import (
    ATTRIBUTE_TYPES,
    DEFAULT_STRING_WIDTH,
    TYPE_WIDTH_BYTES,
    Attribute,
    Schema,
    format_value,
    parse_value,
    value_from_json,
    value_to_json,
)

__all__ = [
    "ATTRIBUTE_TYPES",
    "Attribute",
    "BUILTIN_ALIASES",
    "ConnectorPayload",
    "DEFAULT_STRING_WIDTH",
    "DataflowGraph",
    "Edge",
    "ELEMENT_AT_A_TIME",
    "FUNCTION_KINDS",
    "FunctionDescriptor",
    "OPERATOR_KIND",
    "OPERATORS",
    "OperatorNode",
    "Schema",
    "TYPE_WIDTH_BYTES",
    "VARIADIC",
    "ValidationReport",
    "Violation",
    "bind",
    "builtin_functions",
    "compile_expr",
    "dataflow_from_json",
    "dataflow_to_json",
    "format_value",
    "node_reads",
    "node_writes",
    "parse_dataflow",
    "parse_expression",
    "parse_predicate",
    "parse_value",
    "serialize_dataflow",
    "validate",
    "value_from_json",
    "value_to_json",
]
