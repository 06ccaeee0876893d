"""Catalog: platforms, artifacts, versions, buckets, replication."""

import math

import pytest

from crossflow.catalog import (
    BandwidthMatrix,
    Catalog,
    ChangeSet,
    PlatformDescriptor,
    classify,
)
from crossflow.errors import (
    DuplicateId,
    EmptyChangeSet,
    IllegalTransition,
    IncompleteBandwidthMatrix,
    InvalidMetadata,
    NotADataset,
    NotAModel,
    UnknownGid,
    UnknownPlatform,
)
from crossflow.model.schema import Schema

SCHEMA = Schema.of(("x", "int64"), ("tag", "string"))


def dataset_meta(schema=SCHEMA, **extra):
    meta = {"schema": schema.to_json(), "format": "csv", "location": "d.csv"}
    meta.update(extra)
    return meta


def loc(platform="local", path="d.csv"):
    return [{"platform_id": platform, "path": path}]


def test_platform_registry(workspace):
    catalog, _ = workspace
    assert [p.platform_id for p in catalog.platforms()] == ["local"]
    catalog.register_platform(PlatformDescriptor("edge", cpu_cores=4))
    assert catalog.platform("edge").cpu_cores == 4
    with pytest.raises(DuplicateId):
        catalog.register_platform(PlatformDescriptor("edge"))
    with pytest.raises(UnknownPlatform):
        catalog.platform("nowhere")
    with pytest.raises(InvalidMetadata):
        PlatformDescriptor("bad", relative_speed=0.0)
    with pytest.raises(InvalidMetadata):
        PlatformDescriptor("bad", executor_kind="quantum")


def test_bandwidth_matrix(workspace):
    catalog, _ = workspace
    catalog.register_platform(PlatformDescriptor("dc"))
    catalog.set_bandwidth("local", "dc", 100.0)
    matrix = catalog.bandwidth()
    assert matrix.get("local", "dc") == 100.0
    assert matrix.get("dc", "dc") == math.inf
    with pytest.raises(IncompleteBandwidthMatrix):
        matrix.get("dc", "local")
    assert not matrix.covers(["local", "dc"])
    with pytest.raises(IncompleteBandwidthMatrix):
        catalog.require_complete_bandwidth()
    catalog.set_bandwidth("dc", "local", 50.0)
    assert catalog.require_complete_bandwidth().covers(["local", "dc"])
    with pytest.raises(InvalidMetadata):
        catalog.set_bandwidth("local", "dc", 0.0)
    with pytest.raises(UnknownPlatform):
        catalog.set_bandwidth("local", "nowhere", 10.0)


def test_register_dataset_rules(workspace):
    catalog, _ = workspace
    gid = catalog.register_artifact("dataset", "pts", domain="demo", metadata=dataset_meta(), locations=loc())
    assert gid == "ds-000001"
    record = catalog.require(gid)
    assert record.bucket == "landing"
    assert record.version == 1
    assert record.locations[0] == {"platform_id": "local", "path": "d.csv", "replica": False}

    with pytest.raises(InvalidMetadata):
        catalog.register_artifact("dataset", "x", metadata={"format": "csv"}, locations=loc())
    with pytest.raises(InvalidMetadata):
        catalog.register_artifact("dataset", "x", metadata=dataset_meta(), locations=[])
    with pytest.raises(InvalidMetadata):
        catalog.register_artifact("dataset", "x", metadata=dataset_meta(), locations=loc(), bucket="attic")
    with pytest.raises(UnknownPlatform):
        catalog.register_artifact("dataset", "x", metadata=dataset_meta(), locations=loc("mars"))
    with pytest.raises(InvalidMetadata):
        catalog.register_artifact("sculpture", "x")


def test_register_model_and_function(workspace):
    catalog, _ = workspace
    with pytest.raises(InvalidMetadata):
        catalog.register_artifact("model", "m", metadata={"task": "regression"})
    gid = catalog.register_artifact(
        "model", "m", domain="demo", metadata={"task": "regression", "learning_scope": "batch"}
    )
    assert gid.startswith("md-")
    assert catalog.require(gid).bucket is None

    fn_gid = catalog.register_artifact("function", "double", domain="demo")
    assert catalog.require(fn_gid).domain is None  # functions are domain-free


def test_gid_sequence_is_global(workspace):
    catalog, _ = workspace
    a = catalog.register_artifact("dataset", "a", metadata=dataset_meta(), locations=loc())
    b = catalog.register_artifact("model", "b", metadata={"task": "t", "learning_scope": "s"})
    c = catalog.register_artifact("dataset", "c", metadata=dataset_meta(), locations=loc())
    assert (a, b, c) == ("ds-000001", "md-000002", "ds-000003")


def test_dataflow_document_gets_issued_gid(workspace):
    catalog, _ = workspace
    doc = [
        {"GID": "scratch", "description": "flow"},
        {"node_id": "s", "operator": "source", "function_alias": "source", "input": ["a"], "output": ["b"]},
    ]
    gid = catalog.register_artifact("dataflow", "flow", metadata={"document": doc})
    stored = catalog.require(gid).metadata["document"]
    assert stored[0]["GID"] == gid
    assert doc[0]["GID"] == "scratch"  # caller's copy untouched
    # registering a dataflow records the intent to run it
    stub = catalog.store.get("prospective", gid)
    assert stub["dataflow"] == gid


def test_version_chain(workspace):
    catalog, _ = workspace
    v1 = catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"})
    v2 = catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"}, version_of=v1)
    v3 = catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"}, version_of=v2)
    assert catalog.require(v3).version == 3
    assert catalog.version_chain(v3) == [v3, v2, v1]
    with pytest.raises(UnknownGid):
        catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"}, version_of="md-999999")
    ds = catalog.register_artifact("dataset", "d", metadata=dataset_meta(), locations=loc())
    with pytest.raises(InvalidMetadata):
        catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"}, version_of=ds)


def test_change_classification(workspace):
    catalog, _ = workspace
    with pytest.raises(EmptyChangeSet):
        classify(ChangeSet())
    assert classify(ChangeSet(hyperparameters_changed=True)) == "NewVersion"
    assert classify(ChangeSet(algorithm_changed=True)) == "NewModel"
    # inductive-bias flags dominate mixed sets
    assert classify(ChangeSet(minor_refactor=True, domain_changed=True)) == "NewModel"

    gid = catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"})
    assert catalog.classify_change(gid, ChangeSet(training_data_changed=True)) == "NewVersion"
    ds = catalog.register_artifact("dataset", "d", metadata=dataset_meta(), locations=loc())
    with pytest.raises(NotAModel):
        catalog.classify_change(ds, ChangeSet(minor_refactor=True))


def test_bucket_promotion(workspace):
    catalog, _ = workspace
    gid = catalog.register_artifact("dataset", "d", metadata=dataset_meta(), locations=loc())
    assert catalog.promote_dataset(gid, "staging").bucket == "staging"
    assert catalog.promote_dataset(gid, "curated").bucket == "curated"
    with pytest.raises(IllegalTransition):
        catalog.promote_dataset(gid, "curated")  # already there
    fresh = catalog.register_artifact("dataset", "e", metadata=dataset_meta(), locations=loc())
    with pytest.raises(IllegalTransition):
        catalog.promote_dataset(fresh, "curated")  # cannot skip staging
    with pytest.raises(IllegalTransition):
        catalog.promote_dataset(fresh, "attic")
    model = catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"})
    with pytest.raises(NotADataset):
        catalog.promote_dataset(model, "staging")


def test_select_models_scoring(workspace):
    catalog, _ = workspace
    train_schema = Schema.of(("x", "int64"), ("y", "float64"), ("z", "float64"))
    ds = catalog.register_artifact("dataset", "train", domain="rain", metadata=dataset_meta(train_schema), locations=loc())
    exact = catalog.register_artifact(
        "model",
        "good",
        domain="rain",
        metadata={"task": "regression", "learning_scope": "batch", "training_dataset": ds},
    )
    off_domain = catalog.register_artifact(
        "model",
        "other",
        domain="wind",
        metadata={"task": "regression", "learning_scope": "batch", "training_dataset": ds},
    )
    no_lineage = catalog.register_artifact(
        "model", "bare", domain="rain", metadata={"task": "classification", "learning_scope": "batch"}
    )

    request = Schema.of(("x", "int64"), ("y", "float64"))  # name overlap with training schema: 2/3
    ranked = catalog.select_models("regression", "rain", request, k=3)
    assert [gid for gid, _ in ranked] == [exact, off_domain, no_lineage]
    assert ranked[0][1] == pytest.approx((1 + 1 + 2 / 3) / 3)
    assert ranked[1][1] == pytest.approx((0 + 1 + 2 / 3) / 3)
    assert ranked[2][1] == pytest.approx((1 + 0 + 0) / 3)
    assert len(catalog.select_models("regression", "rain", request, k=1)) == 1
    with pytest.raises(InvalidMetadata):
        catalog.select_models("regression", "rain", request, k=0)


def test_access_counting_creates_replicas(workspace):
    catalog, _ = workspace
    catalog.register_platform(PlatformDescriptor("edge"))
    gid = catalog.register_artifact("dataset", "d", metadata=dataset_meta(), locations=loc("local", "data/d.csv"))

    # reads from the holding platform never replicate
    for _ in range(10):
        assert not catalog.note_access(gid, "local")

    # remote reads replicate once the counter passes the threshold (3)
    assert [catalog.note_access(gid, "edge") for _ in range(4)] == [False, False, False, True]
    record = catalog.require(gid)
    assert record.locations[1] == {"platform_id": "edge", "path": f"replicas/{gid}/d.csv", "replica": True}
    # counter reset on replication, so the next read counts from 1 again
    assert not catalog.note_access(gid, "edge")

    # models never replicate through access counting
    model = catalog.register_artifact("model", "m", metadata={"task": "t", "learning_scope": "s"})
    assert not catalog.note_access(model, "edge")


def test_decay_evicts_idle_replicas(workspace):
    catalog, _ = workspace
    catalog.register_platform(PlatformDescriptor("edge"))
    gid = catalog.register_artifact("dataset", "d", metadata=dataset_meta(), locations=loc())
    for _ in range(4):
        catalog.note_access(gid, "edge")
    assert len(catalog.require(gid).locations) == 2
    catalog.note_access(gid, "edge")  # count back to 1
    catalog.decay_access()  # 1 -> 0: replica evicted
    assert len(catalog.require(gid).locations) == 1


def test_catalog_reopens_from_log(workspace, tmp_path):
    catalog, _ = workspace
    gid = catalog.register_artifact("dataset", "d", metadata=dataset_meta(), locations=loc())
    catalog.promote_dataset(gid, "staging")
    path = catalog.store.path
    again = Catalog(path, default_platform="local")
    assert again.require(gid).bucket == "staging"
    assert [p.platform_id for p in again.platforms()] == ["local"]
    again.compact()
    assert Catalog(path).require(gid).bucket == "staging"


def test_sniff_schema_resolves_against_storage_root(workspace):
    catalog, root = workspace
    (root / "raw.csv").write_text("a,b\n1,x\n", encoding="utf-8")
    schema = catalog.sniff_schema("raw.csv")
    assert schema.to_json() == [["a", "int64"], ["b", "string"]]
    assert catalog.sniff_schema("missing.csv") is None
