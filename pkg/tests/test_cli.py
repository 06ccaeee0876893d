"""Command-line lifecycle: exit codes, JSON payloads, config layering."""

import json
import os

import pytest

from crossflow.cli import main
from crossflow.config import ENV_NAMES

FLOW_DOC = [
    {"GID": "scratch", "description": "fit and score points"},
    {
        "node_id": "s",
        "operator": "source",
        "function_alias": "source",
        "input": ["pts"],
        "output": ["raw"],
        "params": {},
    },
    {
        "node_id": "f",
        "operator": "filter",
        "function_alias": "filter",
        "input": ["raw"],
        "output": ["kept"],
        "params": {"predicate": "x <= 15"},
    },
    {
        "node_id": "t",
        "operator": "train",
        "function_alias": "train",
        "input": ["kept"],
        "output": ["m"],
        "params": {"features": ["x"], "target": "y"},
    },
    {
        "node_id": "p",
        "operator": "predict",
        "function_alias": "predict",
        "input": ["kept", "m"],
        "output": ["scored"],
        "params": {},
    },
    {
        "node_id": "w",
        "operator": "sink",
        "function_alias": "sink",
        "input": ["scored", "out/scored.csv"],
        "output": [],
        "params": {},
    },
]


@pytest.fixture()
def clean_env(monkeypatch):
    for env_name in ENV_NAMES.values():
        monkeypatch.delenv(env_name, raising=False)
    return monkeypatch


def invoke(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def invoke_json(capsys, *argv):
    code, out, _ = invoke(capsys, "--json", *argv)
    return code, json.loads(out)


def test_cli_full_lifecycle(tmp_path, capsys, clean_env):
    clean_env.chdir(tmp_path)
    root = tmp_path / "local"
    root.mkdir()
    lines = ["x,y"] + [f"{i},{2.0 * i + 1.0!r}" for i in range(1, 21)]
    (root / "pts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (tmp_path / "flow.json").write_text(json.dumps(FLOW_DOC), encoding="utf-8")

    code, payload = invoke_json(
        capsys, "platforms", "add", "local", "--storage-root", str(root), "--cores", "2", "--gpus", "1"
    )
    assert code == 0 and payload["platform_id"] == "local"

    # schema is inferred from the file when not declared
    code, payload = invoke_json(capsys, "register", "dataset", "pts", "--path", "pts.csv", "--domain", "demo")
    assert code == 0
    ds_gid = payload["gid"]
    assert ds_gid.startswith("ds-")
    assert payload["rows"] == 20
    assert payload["schema"] == [["x", "int64"], ["y", "float64"]]
    assert payload["bucket"] == "landing"

    code, payload = invoke_json(capsys, "register", "dataflow", "flow.json", "--domain", "demo")
    assert code == 0
    df_gid = payload["gid"]
    assert df_gid.startswith("df-")
    assert payload["nodes"] == 5

    code, payload = invoke_json(capsys, "optimize", df_gid, "--bind", f"pts={ds_gid}")
    assert code == 0
    assert payload["steps"] == 0  # nothing to push or reorder in a single chain
    assert payload["document"][0]["GID"] == df_gid
    assert payload["document"][0]["binding"] == {"pts": ds_gid}

    code, payload = invoke_json(
        capsys, "schedule", df_gid, "--bind", f"pts={ds_gid}", "--out", "plan.json"
    )
    assert code == 0
    assert sorted(payload) == ["assignment", "cost", "dataflow", "estimates", "fragments", "jobs"]
    assert payload["assignment"]["placement"] == {"f1": "local"}
    assert os.path.exists(tmp_path / "plan.json")

    code, payload = invoke_json(capsys, "run", "plan.json")
    assert code == 0
    assert payload["status"] == "success"
    assert payload["run_id"].startswith("r-")
    assert payload["sink_rows"] == {"w": 15}
    model_gid = payload["outputs"]["t"]
    assert model_gid.startswith("md-")
    assert (root / "out" / "scored.csv").exists()

    # the recorded run now feeds statistics, ranking, and the fact base
    code, payload = invoke_json(capsys, "prov", "stats", "filter")
    assert code == 0
    stats = payload["stats"]["filter"]
    assert stats["sample_count"] == 1
    assert stats["mean_selectivity"] == pytest.approx(15 / 20)

    code, payload = invoke_json(
        capsys, "models", "select", "--task", "regression", "--domain", "demo",
        "--schema", "x:int64,y:float64", "-k", "2",
    )
    assert code == 0
    assert payload["models"][0]["gid"] == model_gid
    assert payload["models"][0]["score"] > 0.9

    code, payload = invoke_json(capsys, "kg", "query", "?- is_activity(A).")
    assert code == 0
    assert payload["count"] == 5  # one activity per executed node
    assert all(set(b) == {"A"} for b in payload["bindings"])

    code, payload = invoke_json(capsys, "prov", "export", model_gid)
    assert code == 0
    assert model_gid in payload["entity"]

    code, out, _ = invoke(capsys, "classify-change", model_gid, "--flags", "algorithm_changed")
    assert code == 0
    assert out.strip() == "NewModel"
    code, out, _ = invoke(
        capsys, "classify-change", model_gid, "--flags", "training_data_changed,minor_refactor"
    )
    assert code == 0
    assert out.strip() == "NewVersion"

    code, payload = invoke_json(capsys, "classify-change", ds_gid, "--flags", "minor_refactor")
    assert code == 1
    assert payload["error"]["code"] == "NotAModel"

    code, out, _ = invoke(capsys, "platforms", "list")
    assert code == 0
    assert out.splitlines()[0].startswith("platform")
    assert "local" in out


def test_cli_pipeline_composes_optimize_schedule_run(tmp_path, capsys, clean_env):
    clean_env.chdir(tmp_path)
    root = tmp_path / "local"
    root.mkdir()
    lines = ["x,y"] + [f"{i},{2.0 * i + 1.0!r}" for i in range(1, 21)]
    (root / "pts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (tmp_path / "flow.json").write_text(json.dumps(FLOW_DOC), encoding="utf-8")
    invoke(capsys, "platforms", "add", "local", "--storage-root", str(root), "--gpus", "1")
    code, payload = invoke_json(capsys, "register", "dataset", "pts", "--path", "pts.csv")
    ds_gid = payload["gid"]

    code, payload = invoke_json(capsys, "pipeline", "flow.json", "--bind", f"pts={ds_gid}")
    assert code == 0
    assert payload["status"] == "success"
    assert payload["run_id"].startswith("r-")
    assert payload["placement"] == {"f1": "local"}
    assert payload["rewrite_trace"] == []
    assert payload["estimated_cost"] > 0.0
    assert payload["sink_rows"] == {"w": 15}

    # an unrecorded run leaves no new artifacts but still writes the sink
    code, payload = invoke_json(
        capsys, "pipeline", "flow.json", "--bind", f"pts={ds_gid}", "--no-record", "--no-rewrite"
    )
    assert code == 0
    assert payload["run_id"] is None
    assert payload["outputs"] == {}


def test_cli_usage_errors_exit_one(tmp_path, capsys, clean_env):
    clean_env.chdir(tmp_path)
    code, _, err = invoke(capsys, "promote")  # missing arguments
    assert code == 1
    assert err.startswith("error:")

    code, payload = invoke_json(capsys, "promote", "ds-999999", "--to", "staging")
    assert code == 1
    assert payload["error"]["code"] == "UnknownGid"

    code, payload = invoke_json(capsys, "optimize", "nothing-here")
    assert code == 1
    assert "neither a readable file" in payload["error"]["message"]

    (tmp_path / "flow.json").write_text(json.dumps(FLOW_DOC), encoding="utf-8")
    root = tmp_path / "local"
    root.mkdir()
    invoke(capsys, "platforms", "add", "local", "--storage-root", str(root))
    code, payload = invoke_json(capsys, "schedule", "flow.json")
    assert code == 1
    assert payload["error"]["code"] == "UsageError"
    assert "abstract" in payload["error"]["message"]

    code, payload = invoke_json(capsys, "bench", "--files", "ten")
    assert code == 1
    assert "comma-separated integers" in payload["error"]["message"]


def test_cli_internal_errors_exit_two(tmp_path, capsys, clean_env):
    clean_env.chdir(tmp_path)
    (tmp_path / "broken.json").write_text("{}", encoding="utf-8")
    code, payload = invoke_json(capsys, "run", "broken.json")
    assert code == 2
    assert payload["error"]["code"] == "InternalError"

    code, _, err = invoke(capsys, "run", "broken.json")
    assert code == 2
    assert err.startswith("error:")


def test_cli_config_layering(tmp_path, capsys, clean_env):
    clean_env.chdir(tmp_path)
    root = tmp_path / "store"
    root.mkdir()
    (tmp_path / "conf.json").write_text(
        json.dumps({"catalog_path": str(tmp_path / "from_file.ndjson")}), encoding="utf-8"
    )

    # flags override the config file
    code, _ = invoke_json(
        capsys, "--config", "conf.json", "--catalog", str(tmp_path / "from_flag.ndjson"),
        "platforms", "add", "local", "--storage-root", str(root),
    )
    assert code == 0
    assert (tmp_path / "from_flag.ndjson").exists()
    assert not (tmp_path / "from_file.ndjson").exists()

    # environment overrides both
    clean_env.setenv("GYP_CATALOG", str(tmp_path / "from_env.ndjson"))
    code, _ = invoke_json(
        capsys, "--config", "conf.json", "--catalog", str(tmp_path / "from_flag2.ndjson"),
        "platforms", "add", "edge", "--storage-root", str(root),
    )
    assert code == 0
    assert (tmp_path / "from_env.ndjson").exists()
    assert not (tmp_path / "from_flag2.ndjson").exists()

    clean_env.setenv("GYP_WORKERS", "not-a-number")
    code, payload = invoke_json(capsys, "platforms", "list")
    assert code == 1
    assert payload["error"]["code"] == "InvalidConfig"
