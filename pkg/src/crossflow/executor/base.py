"""Shared backend surface: what executing a fragment's nodes yields."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import EngineError, FunctionFailure, MissingInput
from ..model.graph import DataflowGraph, OperatorNode
from .dataset import InMemoryDataset
from .learner import ModelArtifact


@dataclass
class NodeMeasure:
    node_id: str
    input_cardinalities: list
    output_cardinality: int
    wall_time: float
    out_conn_rows: dict = field(default_factory=dict)  # connector -> rows


@dataclass
class FragmentOutcome:
    connectors: dict = field(default_factory=dict)  # connector -> dataset | model
    sink_results: dict = field(default_factory=dict)  # sink node_id -> sorted dataset
    measures: list = field(default_factory=list)
    training: dict = field(default_factory=dict)  # train node_id -> {per_epoch, final_metrics}


def split_predict_inputs(
    node: OperatorNode, resolve
) -> tuple[InMemoryDataset, ModelArtifact, list]:
    """(data, model, input cardinalities in declared order) for a
    predict node; `resolve` maps connector name to its value."""
    data = model = None
    cards = []
    for name in node.inputs:
        value = resolve(name)
        if isinstance(value, ModelArtifact):
            model = value
            cards.append(1)
        else:
            data = value
            cards.append(len(value))
    if data is None or model is None:
        raise MissingInput(f"{node.node_id}: needs one dataset and one model input")
    return data, model, cards


def wrap_node_error(node_id: str, exc: Exception) -> Exception:
    if isinstance(exc, EngineError):
        return exc
    return FunctionFailure(f"{node_id}: {type(exc).__name__}: {exc}")


def fragment_entry_error(node: OperatorNode, name: str) -> MissingInput:
    return MissingInput(f"{node.node_id}: no data for input {name!r}")


def consumers_within(graph: DataflowGraph, node_ids) -> dict:
    """connector -> number of consumers among `node_ids`."""
    members = set(node_ids)
    counts: dict = {}
    for e in graph.edges:
        if e.consumer in members:
            counts[e.out_conn] = counts.get(e.out_conn, 0) + 1
    return counts
