"""Schemas, value codecs, and CSV dataset I/O."""

import random
from datetime import datetime

import pytest

from crossflow.errors import InvalidMetadata, MissingInput, SchemaViolation
from crossflow.executor.dataset import (
    InMemoryDataset,
    infer_schema,
    mean_string_widths,
    read_csv,
    read_dataset,
    shard_paths,
    stable_hash,
    write_csv,
)
from crossflow.model.schema import (
    DEFAULT_STRING_WIDTH,
    Schema,
    format_value,
    parse_value,
    row_width_bytes,
    value_from_json,
    value_to_json,
)


def test_schema_basics():
    schema = Schema.of(("x", "int64"), ("tag", "string"))
    assert schema.names() == ["x", "tag"]
    assert schema.has("tag") and not schema.has("y")
    assert schema.type_of("x") == "int64"
    assert schema.index_of("tag") == 1
    assert Schema.from_json(schema.to_json()) == schema


def test_schema_rejects_bad_attributes():
    with pytest.raises(InvalidMetadata):
        Schema.of(("x", "int64"), ("x", "string"))
    with pytest.raises(InvalidMetadata):
        Schema.of(("", "int64"))
    with pytest.raises(InvalidMetadata):
        Schema.of(("x", "int32"))


def test_value_roundtrips():
    cases = [
        ("int64", 42),
        ("int64", -7),
        ("float64", 2.5),
        ("float64", 0.1),
        ("string", "hello, world"),
        ("bool", True),
        ("bool", False),
        ("timestamp", datetime(2024, 3, 1, 12, 30)),
    ]
    for attr_type, value in cases:
        assert parse_value(format_value(value), attr_type) == value
        assert value_from_json(value_to_json(value)) == value


def test_parse_value_is_strict():
    with pytest.raises(ValueError):
        parse_value("1.5", "int64")
    with pytest.raises(ValueError):
        parse_value("True", "bool")
    with pytest.raises(ValueError):
        parse_value("not-a-date", "timestamp")


def test_row_width_bytes():
    schema = Schema.of(("a", "int64"), ("b", "float64"), ("c", "bool"), ("d", "timestamp"), ("e", "string"))
    assert row_width_bytes(schema) == 8 + 8 + 1 + 8 + DEFAULT_STRING_WIDTH
    assert row_width_bytes(schema, {"e": 4.0}) == 8 + 8 + 1 + 8 + 4.0


def test_stable_hash_matches_across_calls():
    # values that are == must hash alike even across numeric types
    assert stable_hash(2) == stable_hash(2)
    assert stable_hash("a") != stable_hash("b")


SCHEMA = Schema.of(("x", "int64"), ("y", "float64"), ("tag", "string"), ("ok", "bool"))
ROWS = [
    (1, 1.5, "north", True),
    (2, -0.25, "south, east", False),
    (3, 100.0, 'quo"ted', True),
]


def test_csv_roundtrip(tmp_path):
    path = str(tmp_path / "out" / "data.csv")
    write_csv(path, InMemoryDataset(SCHEMA, list(ROWS)))
    back = read_csv(path, SCHEMA)
    assert back.rows == sorted(ROWS)
    assert back.column("tag") == ["north", "south, east", 'quo"ted']


def test_read_csv_rejects_mismatches(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n", encoding="utf-8")
    with pytest.raises(SchemaViolation):
        read_csv(str(path), SCHEMA)
    path.write_text("x,y,tag,ok\n1,1.5,a\n", encoding="utf-8")
    with pytest.raises(SchemaViolation):
        read_csv(str(path), SCHEMA)
    path.write_text("x,y,tag,ok\noops,1.5,a,true\n", encoding="utf-8")
    with pytest.raises(SchemaViolation):
        read_csv(str(path), SCHEMA)
    with pytest.raises(MissingInput):
        read_csv(str(tmp_path / "absent.csv"), SCHEMA)


def test_sharded_datasets(tmp_path):
    shard_dir = tmp_path / "shards"
    shard_dir.mkdir()
    write_csv(str(shard_dir / "part-1.csv"), InMemoryDataset(SCHEMA, [ROWS[1]]))
    write_csv(str(shard_dir / "part-0.csv"), InMemoryDataset(SCHEMA, [ROWS[0], ROWS[2]]))
    assert [p.split("/")[-1] for p in shard_paths(str(shard_dir))] == ["part-0.csv", "part-1.csv"]
    merged = read_dataset(str(shard_dir), SCHEMA)
    assert sorted(merged.rows) == sorted(ROWS)
    with pytest.raises(MissingInput):
        shard_paths(str(tmp_path / "empty-or-missing"))


def test_infer_schema(tmp_path):
    path = tmp_path / "say.csv"
    path.write_text(
        "n,score,label,flag,when\n"
        "1,0.5,aa,true,2024-01-01T00:00:00\n"
        "-2,1e3,bb,false,2024-01-02T00:00:00\n",
        encoding="utf-8",
    )
    schema = infer_schema(str(path))
    assert schema.to_json() == [
        ["n", "int64"],
        ["score", "float64"],
        ["label", "string"],
        ["flag", "bool"],
        ["when", "timestamp"],
    ]
    assert infer_schema(str(tmp_path / "nope.csv")) is None
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b\n1\n", encoding="utf-8")
    assert infer_schema(str(ragged)) is None


def test_mean_string_widths():
    data = InMemoryDataset(SCHEMA, list(ROWS))
    widths = mean_string_widths(data)
    assert set(widths) == {"tag"}
    assert widths["tag"] == pytest.approx((5 + 11 + 7) / 3)
    assert mean_string_widths(InMemoryDataset(SCHEMA, [])) == {}


def test_random_value_roundtrip():
    rng = random.Random(11)
    for _ in range(300):
        attr_type = rng.choice(["int64", "float64", "bool", "timestamp"])
        if attr_type == "int64":
            value = rng.randint(-10**12, 10**12)
        elif attr_type == "float64":
            value = rng.uniform(-1e6, 1e6)
        elif attr_type == "bool":
            value = rng.random() < 0.5
        else:
            value = datetime(2020 + rng.randint(0, 5), rng.randint(1, 12), rng.randint(1, 28), rng.randint(0, 23), rng.randint(0, 59), rng.randint(0, 59))
        assert parse_value(format_value(value), attr_type) == value
