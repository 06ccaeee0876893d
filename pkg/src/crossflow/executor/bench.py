"""Desk-scale scaling benchmark on synthetic radar-like CSV shards.

Generates deterministic shard directories, runs a fixed
read -> dedup -> filter -> store pipeline on both backends across
growing file counts, and reports mean/stddev wall times plus a linear
fit per backend. File parsing happens once per size, outside the timed
region, so the numbers compare pure execution.
"""

from __future__ import annotations

import json
import math
import os
import random
import statistics
import time
from dataclasses import dataclass, field

from ..model.graph import DataflowGraph, parse_dataflow
from ..model.schema import Schema
from .base import FragmentOutcome
from .dataset import InMemoryDataset, read_dataset, write_csv
from .partitioned import PartitionedBackend
from .runner import compute_peak_live_tuples, execute_in_memory
from .single import SingleBackend

RADAR_SCHEMA = Schema.of(
    ("station", "string"), ("x", "float64"), ("y", "float64"), ("dbz", "float64")
)
_STATIONS = ("guaratiba", "sumare", "mendanha", "gericino", "itaipu", "santacruz")


def generate_files(base_dir: str, n_files: int, rows_per_file: int, seed: int = 7) -> str:
    """Create (or reuse) a shard directory of synthetic radar readings;
    content is a pure function of (file index, rows, seed)."""
    out_dir = os.path.join(base_dir, f"radar_{n_files}x{rows_per_file}_s{seed}")
    os.makedirs(out_dir, exist_ok=True)
    for i in range(n_files):
        path = os.path.join(out_dir, f"shard_{i:03d}.csv")
        if os.path.exists(path):
            continue
        rng = random.Random(seed * 1_000_003 + i)
        rows = []
        for _ in range(rows_per_file):
            rows.append(
                (
                    _STATIONS[rng.randrange(len(_STATIONS))],
                    round(rng.uniform(0.0, 100.0), 1),
                    round(rng.uniform(0.0, 100.0), 1),
                    round(rng.uniform(0.0, 60.0), 2),
                )
            )
        write_csv(path, InMemoryDataset(RADAR_SCHEMA, rows), sort=False)
    return out_dir


def pipeline_graph() -> DataflowGraph:
    doc = [
        {"GID": "df-bench", "description": "radar ingest benchmark"},
        {"node_id": "n1", "operator": "source", "function_alias": "source",
         "input": ["radar_in"], "output": ["raw"], "params": {}},
        {"node_id": "n2", "operator": "dedup", "function_alias": "dedup",
         "input": ["raw"], "output": ["deduped"], "params": {"keys": ["station", "x", "y"]}},
        {"node_id": "n3", "operator": "filter", "function_alias": "filter",
         "input": ["deduped"], "output": ["strong"], "params": {"predicate": "dbz >= 20.0"}},
        {"node_id": "n4", "operator": "sink", "function_alias": "sink",
         "input": ["strong", "bench_out.csv"], "output": [], "params": {}},
    ]
    return parse_dataflow(json.dumps(doc))


def linear_fit(xs: list, ys: list) -> tuple[float, float, float]:
    """(slope, intercept, r_squared) of an ordinary least squares line."""
    n = len(xs)
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    sxx = math.fsum((x - mean_x) ** 2 for x in xs)
    sxy = math.fsum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx if sxx else 0.0
    intercept = mean_y - slope * mean_x
    ss_res = math.fsum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = math.fsum((y - mean_y) ** 2 for y in ys)
    r2 = 1.0 - ss_res / ss_tot if ss_tot else 1.0
    return slope, intercept, r2


@dataclass
class BenchmarkReport:
    measurements: list  # {backend, n_files, mean_s, stddev_s, peak_live_tuples}
    samples: list  # {backend, n_files, rep, wall_s}
    slopes: dict  # backend -> seconds per file
    intercepts: dict
    r_squared: dict
    workers: int
    rows_per_file: int
    note: str = (
        "backends have no per-invocation environment setup cost; timings "
        "cover operator execution only (file parsing excluded)"
    )

    def to_json(self) -> dict:
        return {
            "measurements": list(self.measurements),
            "samples": list(self.samples),
            "slopes": dict(self.slopes),
            "intercepts": dict(self.intercepts),
            "r_squared": dict(self.r_squared),
            "workers": self.workers,
            "rows_per_file": self.rows_per_file,
            "note": self.note,
        }

    def csv_text(self) -> str:
        lines = ["backend,n_files,rep,wall_s"]
        for s in self.samples:
            lines.append(f"{s['backend']},{s['n_files']},{s['rep']},{s['wall_s']:.6f}")
        return "\n".join(lines) + "\n"


def _execute_once(graph, entry, backend) -> tuple[float, int]:
    started = time.perf_counter()
    outcome: FragmentOutcome = execute_in_memory(graph, dict(entry), backend)
    wall = time.perf_counter() - started
    out_conn_rows: dict = {}
    order = []
    for m in outcome.measures:
        out_conn_rows.update(m.out_conn_rows)
        order.append(m.node_id)
    peak, _ = compute_peak_live_tuples(graph, order, out_conn_rows)
    return wall, peak


def run_benchmark(
    n_files_list=(10, 20, 30, 40, 50, 60, 70),
    rows_per_file: int = 10_000,
    repetitions: int = 5,
    workers: int = 8,
    base_dir: str | None = None,
    seed: int = 7,
) -> BenchmarkReport:
    base_dir = base_dir or os.path.join(".", "bench_data")
    graph = pipeline_graph()
    single = SingleBackend()
    partitioned = PartitionedBackend(workers=workers)
    measurements = []
    samples = []
    try:
        for n in n_files_list:
            shard_dir = generate_files(base_dir, n, rows_per_file, seed)
            data = read_dataset(shard_dir, RADAR_SCHEMA)
            entry = {"radar_in": data}
            for backend in (single, partitioned):
                walls = []
                peak = 0
                for rep in range(repetitions):
                    wall, peak = _execute_once(graph, entry, backend)
                    walls.append(wall)
                    samples.append(
                        {"backend": backend.kind, "n_files": n, "rep": rep + 1, "wall_s": wall}
                    )
                measurements.append(
                    {
                        "backend": backend.kind,
                        "n_files": n,
                        "mean_s": math.fsum(walls) / len(walls),
                        "stddev_s": statistics.pstdev(walls) if len(walls) > 1 else 0.0,
                        "peak_live_tuples": peak,
                    }
                )
    finally:
        partitioned.close()

    slopes = {}
    intercepts = {}
    r_squared = {}
    for kind in ("single", "partitioned"):
        points = [(m["n_files"], m["mean_s"]) for m in measurements if m["backend"] == kind]
        slope, intercept, r2 = linear_fit([p[0] for p in points], [p[1] for p in points])
        slopes[kind] = slope
        intercepts[kind] = intercept
        r_squared[kind] = r2
    return BenchmarkReport(
        measurements=measurements,
        samples=samples,
        slopes=slopes,
        intercepts=intercepts,
        r_squared=r_squared,
        workers=workers,
        rows_per_file=rows_per_file,
    )
