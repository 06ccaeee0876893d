"""Plan execution: datasets, operator kernels, backends, coordinator."""

from .base import FragmentOutcome, NodeMeasure
from .bench import BenchmarkReport, generate_files, linear_fit, run_benchmark
from .dataset import (
    InMemoryDataset,
    infer_schema,
    mean_string_widths,
    read_csv,
    read_dataset,
    row_sort_key,
    shard_paths,
    stable_hash,
    write_csv,
)
from .learner import MODEL_KIND, RIDGE, ModelArtifact, fit_ols
from .partitioned import PartitionedBackend
from .runner import (
    RunResult,
    close_backends,
    compute_peak_live_tuples,
    ensure_dataflow_registered,
    execute_in_memory,
    get_backend,
    run,
)
from .single import SingleBackend
from . import ops

__all__ = [
    "BenchmarkReport",
    "FragmentOutcome",
    "InMemoryDataset",
    "MODEL_KIND",
    "ModelArtifact",
    "NodeMeasure",
    "PartitionedBackend",
    "RIDGE",
    "RunResult",
    "SingleBackend",
    "close_backends",
    "compute_peak_live_tuples",
    "ensure_dataflow_registered",
    "execute_in_memory",
    "fit_ols",
    "generate_files",
    "get_backend",
    "infer_schema",
    "linear_fit",
    "mean_string_widths",
    "ops",
    "read_csv",
    "read_dataset",
    "row_sort_key",
    "run",
    "run_benchmark",
    "shard_paths",
    "stable_hash",
    "write_csv",
]
