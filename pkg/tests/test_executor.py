"""Operator kernels, the two backends, and plan execution."""

import json
import math
import random

import pytest

from crossflow.errors import CastError, MissingInput, SchemaViolation, SingularSystem, UnknownKey
from crossflow.executor import ops
from crossflow.executor.dataset import InMemoryDataset, read_dataset, write_csv
from crossflow.executor.learner import MODEL_KIND, ModelArtifact, fit_ols
from crossflow.executor.partitioned import PartitionedBackend
from crossflow.executor.runner import compute_peak_live_tuples, execute_in_memory, run
from crossflow.executor.single import SingleBackend
from crossflow.model.functions import builtin_functions
from crossflow.model.graph import bind, parse_dataflow
from crossflow.model.schema import Schema
from crossflow.scheduler import schedule

from flowgen import random_flow

SCHEMA = Schema.of(("k", "int64"), ("x", "int64"), ("tag", "string"))


def ds(*rows, schema=SCHEMA):
    return InMemoryDataset(schema, list(rows))


def node(node_id, operator, inputs, outputs, params=None):
    return {
        "node_id": node_id,
        "operator": operator,
        "function_alias": operator,
        "input": inputs,
        "output": outputs,
        "params": params or {},
    }


def graph_of(*nodes):
    doc = [{"GID": "df-exec", "description": "executor case"}]
    doc.extend(nodes)
    return parse_dataflow(json.dumps(doc))


def test_filter_and_map_kernels():
    data = ds((1, 5, "a"), (2, -3, "b"), (3, 9, "a"))
    kept = ops.apply_filter(data, "x > 0 and tag = 'a'")
    assert kept.rows == [(1, 5, "a"), (3, 9, "a")]
    assert kept.schema == SCHEMA

    mapped = ops.apply_map(data, {"x": "x * 2", "half": "x / 2.0"})
    assert mapped.schema.names() == ["k", "x", "tag", "half"]
    assert mapped.schema.type_of("x") == "int64"
    assert mapped.schema.type_of("half") == "float64"  # division widens
    assert mapped.rows[0] == (1, 10, "a", 2.5)
    assert mapped.rows[1] == (2, -6, "b", -1.5)


def test_cast_conversions():
    schema = Schema.of(("n", "string"), ("f", "int64"), ("w", "float64"))
    data = InMemoryDataset(schema, [("41", 7, 3.0)])
    out = ops.apply_cast(data, {"n": "int64", "f": "float64", "w": "int64"})
    assert out.rows == [(41, 7.0, 3)]
    assert out.schema.to_json() == [["n", "int64"], ["f", "float64"], ["w", "int64"]]

    # values render the same way the csv writer does
    back = ops.apply_cast(out, {"f": "string"})
    assert back.rows[0][1] == "7.0"

    flags = InMemoryDataset(Schema.of(("b", "string")), [("true",), ("false",)])
    assert ops.apply_cast(flags, {"b": "bool"}).rows == [(True,), (False,)]


def test_cast_rejects_lossy_or_unknown():
    bad_text = InMemoryDataset(Schema.of(("n", "string")), [("4x",)])
    with pytest.raises(CastError):
        ops.apply_cast(bad_text, {"n": "int64"})
    fractional = InMemoryDataset(Schema.of(("w", "float64")), [(2.5,)])
    with pytest.raises(CastError):
        ops.apply_cast(fractional, {"w": "int64"})
    flags = InMemoryDataset(Schema.of(("b", "bool")), [(True,)])
    with pytest.raises(CastError):
        ops.apply_cast(flags, {"b": "float64"})
    with pytest.raises(UnknownKey):
        ops.apply_cast(fractional, {"missing": "string"})


def test_join_matches_nested_loop_oracle():
    left_schema = Schema.of(("k", "int64"), ("a", "int64"))
    right_schema = Schema.of(("k", "int64"), ("b", "string"))
    rng = random.Random(11)
    for _ in range(30):
        left = InMemoryDataset(
            left_schema, [(rng.randrange(5), rng.randrange(100)) for _ in range(rng.randrange(0, 25))]
        )
        right = InMemoryDataset(
            right_schema, [(rng.randrange(5), f"v{rng.randrange(9)}") for _ in range(rng.randrange(0, 25))]
        )
        got = ops.apply_join(left, right, ["k"])
        expect = [
            lrow + (rrow[1],)
            for lrow in left.rows
            for rrow in right.rows
            if lrow[0] == rrow[0]
        ]
        assert got.rows == expect  # left order, right appended in scan order
        assert got.schema.names() == ["k", "a", "b"]


def test_groupby_aggregate_values():
    schema = Schema.of(("g", "string"), ("v", "int64"), ("w", "float64"))
    data = InMemoryDataset(
        schema,
        [("a", 4, 1.5), ("b", 1, 2.0), ("a", 6, 0.5), ("a", 2, 3.5)],
    )
    out = ops.apply_groupby(
        data,
        ["g"],
        {
            "n": ("count", "*"),
            "total": ("sum", "v"),
            "avg": ("mean", "w"),
            "low": ("min", "v"),
            "high": ("max", "w"),
        },
    )
    assert out.schema.to_json() == [
        ["g", "string"],
        ["n", "int64"],
        ["total", "int64"],
        ["avg", "float64"],
        ["low", "int64"],
        ["high", "float64"],
    ]
    by_key = {row[0]: row for row in out.rows}
    assert by_key["a"] == ("a", 3, 12, pytest.approx((1.5 + 0.5 + 3.5) / 3), 2, 3.5)
    assert by_key["b"] == ("b", 1, 1, 2.0, 1, 2.0)
    assert [row[0] for row in out.rows] == ["a", "b"]  # first-appearance order

    with pytest.raises(UnknownKey):
        ops.apply_groupby(data, ["g"], {"z": ("median", "v")})
    with pytest.raises(UnknownKey):
        ops.apply_groupby(data, ["g"], {"z": ("sum", "missing")})


def test_dedup_keeps_smallest_row_per_key():
    data = ds((1, 9, "z"), (1, 2, "a"), (2, 5, "m"), (1, 2, "a"))
    out = ops.apply_dedup(data, ["k"])
    # survivor per key is the row that sorts first over all columns,
    # emitted in first-appearance order of the keys
    assert out.rows == [(1, 2, "a"), (2, 5, "m")]

    full = ops.apply_dedup(data, [])
    assert sorted(full.rows) == [(1, 2, "a"), (1, 9, "z"), (2, 5, "m")]

    with pytest.raises(UnknownKey):
        ops.apply_dedup(data, ["nope"])


def test_train_fits_line_and_predict_appends():
    schema = Schema.of(("x", "int64"), ("y", "float64"))
    pts = InMemoryDataset(schema, [(i, 2.0 * i + 1.0) for i in range(1, 11)])
    model = ops.apply_train(pts, ["x"], "y")
    assert model.kind == MODEL_KIND
    assert model.coefficients[0] == pytest.approx(2.0, abs=1e-9)
    assert model.intercept == pytest.approx(1.0, abs=1e-9)
    assert model.training_metrics["n_rows"] == 10
    assert model.training_metrics["rmse"] == pytest.approx(0.0, abs=1e-9)

    scored = ops.apply_predict(pts, model)
    assert scored.schema.names() == ["x", "y", "prediction"]
    assert scored.schema.type_of("prediction") == "float64"
    for x, y, pred in scored.rows:
        assert pred == pytest.approx(y, abs=1e-9)

    with pytest.raises(SchemaViolation):
        ops.apply_predict(scored, model)  # prediction column already exists
    with pytest.raises(UnknownKey):
        ops.apply_train(pts, ["x", "ghost"], "y")
    other = InMemoryDataset(Schema.of(("z", "float64")), [(1.0,)])
    with pytest.raises(SchemaViolation):
        ops.apply_predict(other, model)


def test_learner_edge_cases_and_artifact_roundtrip():
    with pytest.raises(SingularSystem):
        fit_ols([], [], ["x"], "y")

    # exactly collinear features stay solvable; their weights share the slope
    rows = [(float(i), float(i)) for i in range(1, 9)]
    targets = [2.0 * i + 1.0 for i in range(1, 9)]
    model = fit_ols(rows, targets, ["x1", "x2"], "y")
    assert model.coefficients[0] + model.coefficients[1] == pytest.approx(2.0, abs=1e-6)
    assert model.intercept == pytest.approx(1.0, abs=1e-6)

    again = ModelArtifact.loads(model.dumps())
    assert again == model
    assert again.apply((3.0, 3.0)) == pytest.approx(7.0, abs=1e-6)

    # fsum keeps the fit independent of row order
    shuffled = list(zip(rows, targets))
    random.Random(3).shuffle(shuffled)
    reordered = fit_ols([r for r, _ in shuffled], [t for _, t in shuffled], ["x1", "x2"], "y")
    assert reordered.coefficients == model.coefficients
    assert reordered.intercept == model.intercept


def test_single_backend_runs_and_frees():
    graph = graph_of(
        node("s", "source", ["pts"], ["raw"]),
        node("f", "filter", ["raw"], ["kept"], {"predicate": "x > 0"}),
        node("g", "groupby", ["kept"], ["byk"], {"keys": ["k"], "aggs": {"n": ["count", "*"]}}),
        node("w", "sink", ["byk", "out/counts.csv"], []),
    )
    entry = {"pts": ds((2, 4, "a"), (1, 7, "b"), (2, -1, "c"), (1, 3, "d"))}
    outcome = SingleBackend().execute(graph, graph.topological_order(), entry)

    assert outcome.sink_results["w"].rows == [(1, 2), (2, 1)]  # sinks sort
    cards = {m.node_id: (m.input_cardinalities, m.output_cardinality) for m in outcome.measures}
    assert cards == {"s": ([4], 4), "f": ([4], 3), "g": ([3], 2), "w": ([2], 0)}
    assert {m.node_id: m.out_conn_rows for m in outcome.measures}["f"] == {"kept": 3}
    # intermediate datasets are freed once their last consumer ran
    assert "raw" not in outcome.connectors
    assert "kept" not in outcome.connectors

    kept = SingleBackend().execute(graph, graph.topological_order(), dict(entry), keep=("kept",))
    assert kept.connectors["kept"].rows == [(2, 4, "a"), (1, 7, "b"), (1, 3, "d")]

    with pytest.raises(MissingInput):
        SingleBackend().execute(graph, graph.topological_order(), {})


def test_models_survive_intrafragment_freeing():
    graph = graph_of(
        node("s", "source", ["pts"], ["raw"]),
        node("t", "train", ["raw"], ["m"], {"features": ["x"], "target": "y"}),
        node("p", "predict", ["raw", "m"], ["scored"]),
        node("w", "sink", ["scored", "out/scored.csv"], []),
    )
    schema = Schema.of(("x", "int64"), ("y", "float64"))
    entry = {"pts": InMemoryDataset(schema, [(i, 3.0 * i - 2.0) for i in range(1, 8)])}
    outcome = execute_in_memory(graph, entry, SingleBackend())
    assert isinstance(outcome.connectors["m"], ModelArtifact)  # models are never freed
    assert outcome.training["t"]["per_epoch"][0][:2] == (1, "rmse")
    assert outcome.training["t"]["final_metrics"]["n_rows"] == 7
    cards = {m.node_id: m.input_cardinalities for m in outcome.measures}
    assert cards["p"] == [7, 1]  # model inputs count as one element
    for row in outcome.sink_results["w"].rows:
        assert row[2] == pytest.approx(row[1], abs=1e-9)


def test_partitioned_backend_matches_single():
    partitioned = PartitionedBackend(workers=2)
    single = SingleBackend()
    try:
        for seed in range(25):
            rng = random.Random(3000 + seed)
            graph, entry = random_flow(rng, max_nodes=9, max_source_rows=300)
            order = graph.topological_order()
            got_s = single.execute(graph, order, dict(entry))
            got_p = partitioned.execute(graph, order, dict(entry))
            assert set(got_s.connectors) == set(got_p.connectors)
            for conn, value in got_s.connectors.items():
                other = got_p.connectors[conn]
                assert other.schema == value.schema
                assert sorted(other.rows) == sorted(value.rows)
            cards_s = {m.node_id: (m.input_cardinalities, m.output_cardinality) for m in got_s.measures}
            cards_p = {m.node_id: (m.input_cardinalities, m.output_cardinality) for m in got_p.measures}
            assert cards_s == cards_p
    finally:
        partitioned.close()


def test_compute_peak_live_tuples_accounting():
    graph = graph_of(
        node("s", "source", ["pts"], ["raw"]),
        node("f1", "filter", ["raw"], ["c1"], {"predicate": "x > 0"}),
        node("f2", "filter", ["raw"], ["c2"], {"predicate": "x < 0"}),
        node("j", "join", ["c1", "c2"], ["both"], {"keys": ["k"]}),
        node("w", "sink", ["both", "out/j.csv"], []),
    )
    rows = {"raw": 100, "c1": 60, "c2": 30, "both": 10}
    peak, during = compute_peak_live_tuples(graph, ["s", "f1", "f2", "j", "w"], rows)
    # raw stays live until f2 consumes it; both filter outputs overlap it
    assert during == {"s": 100, "f1": 160, "f2": 190, "j": 100, "w": 10}
    assert peak == 190


def _seeded_training_flow(workspace):
    catalog, root = workspace
    schema = Schema.of(("x", "int64"), ("y", "float64"))
    pts = InMemoryDataset(schema, [(i, 2.0 * i + 1.0) for i in range(1, 21)])
    write_csv(str(root / "train.csv"), pts)
    gid = catalog.register_artifact(
        "dataset",
        "train-points",
        domain="demo",
        metadata={
            "schema": schema.to_json(),
            "format": "csv",
            "location": "train.csv",
            "rows": len(pts),
        },
        locations=[{"platform_id": "local", "path": "train.csv"}],
    )
    doc = [
        {"GID": "df-will-be-rewritten", "description": "fit and score"},
        node("s", "source", ["pts"], ["raw"]),
        node("f", "filter", ["raw"], ["kept"], {"predicate": "x <= 15"}),
        node("t", "train", ["kept"], ["m"], {"features": ["x"], "target": "y"}),
        node("p", "predict", ["kept", "m"], ["scored"]),
        node("w", "sink", ["scored", "out/scored.csv"], []),
    ]
    df_gid = catalog.register_artifact(
        "dataflow", "fit-and-score", domain="demo", metadata={"document": doc}
    )
    graph = bind(
        parse_dataflow(json.dumps(catalog.require(df_gid).metadata["document"])),
        {"pts": gid},
        {},
        catalog,
        builtin_functions(),
    )
    return catalog, root, gid, graph


def test_run_executes_plan_end_to_end(workspace):
    catalog, root, gid, graph = _seeded_training_flow(workspace)
    plan = schedule(graph, catalog)
    result = run(plan, catalog)

    assert result.status == "success"
    assert result.run_id and result.run_id.startswith("r-")
    assert result.sink_rows == {"w": 15}
    assert result.output_paths["w"] == str(root / "out" / "scored.csv")

    scored_record = catalog.require(result.outputs["w"])
    assert scored_record.kind == "dataset"
    assert scored_record.metadata["rows"] == 15
    assert scored_record.bucket == "staging"
    on_disk = read_dataset(
        result.output_paths["w"], Schema.from_json(scored_record.metadata["schema"])
    )
    assert len(on_disk) == 15
    for x, y, pred in on_disk.rows:
        assert pred == pytest.approx(y, abs=1e-9)

    model_record = catalog.require(result.outputs["t"])
    assert model_record.kind == "model"
    assert model_record.metadata["training_dataset"] == gid
    assert model_record.metadata["feature_names"] == ["x"]
    assert model_record.metadata["coefficients"][0] == pytest.approx(2.0, abs=1e-9)
    assert model_record.metadata["intercept"] == pytest.approx(1.0, abs=1e-9)

    from crossflow.provenance import Provenance

    prov = Provenance(catalog)
    traces = prov.traces_of(result.run_id)
    assert [t["node_id"] for t in traces] == ["s", "f", "t", "p", "w"]
    by_node = {t["node_id"]: t for t in traces}
    assert by_node["f"]["input_cardinalities"] == [20]
    assert by_node["f"]["output_cardinality"] == 15
    assert by_node["t"]["produced_gid"] == result.outputs["t"]
    assert by_node["t"]["operator"] == "train"
    training = prov.training_of(result.run_id)
    assert training[0]["per_epoch"][0][:2] == [1, "rmse"]
    assert prov.lineage(result.outputs["w"]) >= {gid}
    assert gid in prov.lineage(result.outputs["t"])

    assert result.peak_live_tuples >= 20  # source output alone is 20 live rows


def test_run_without_record_writes_but_skips_registry(workspace):
    catalog, root, gid, graph = _seeded_training_flow(workspace)
    before = len(catalog.artifacts())
    plan = schedule(graph, catalog)
    result = run(plan, catalog, record=False)
    assert result.run_id is None
    assert result.outputs == {}
    assert len(catalog.artifacts()) == before
    assert (root / "out" / "scored.csv").exists()
    assert (root / "models").exists()  # model file still lands on disk


def test_dataset_io_roundtrip_through_backend(tmp_path):
    schema = Schema.of(("k", "int64"), ("note", "string"))
    data = InMemoryDataset(schema, [(1, "plain"), (2, 'quo"ted, comma')])
    path = str(tmp_path / "r.csv")
    write_csv(path, data)
    again = read_dataset(path, schema)
    assert again.rows == data.rows
    total = math.fsum(row[0] for row in again.rows)
    assert total == 3.0
