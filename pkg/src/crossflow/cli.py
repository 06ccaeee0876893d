"""Command-line entry point for the full artifact lifecycle.

One binary covers register -> optimize -> schedule -> run -> query.
Every subcommand exits 0 on success, 1 on a user error (bad arguments,
unknown GID, malformed input), and 2 on an internal failure. With
``--json`` each command prints a single stable-keyed JSON object; without
it, human-readable tables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .catalog import (
    CHANGE_FLAGS,
    Catalog,
    ChangeSet,
    PlatformDescriptor,
)
from .config import Config, load_config
from .errors import EngineError, InvalidGraph, InvalidMetadata, UsageError
from .executor.bench import run_benchmark
from .executor.dataset import infer_schema, mean_string_widths, read_dataset
from .executor.runner import close_backends, run
from .kgraph import DEFAULT_RULES, build_facts, evaluate, parse_program, parse_query, query
from .model.functions import builtin_functions
from .model.graph import (
    attach_payloads,
    bind,
    dataflow_from_json,
    dataflow_to_json,
    parse_dataflow,
    validate,
)
from .model.schema import Schema
from .optimizer import annotate, rewrite
from .provenance import OperatorStats, Provenance
from .scheduler import ScheduledPlan, schedule


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports bad usage as a catchable error."""

    def error(self, message):
        raise UsageError(message)


# -- small input helpers ---------------------------------------------------


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _read_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _write_text(path: str, text: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _parse_pairs(items, flag: str) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"{flag} expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        out[name] = value
    return out


def _parse_params(items) -> dict:
    """--param values are JSON when they parse as JSON, else raw strings."""
    out = {}
    for name, value in _parse_pairs(items, "--param").items():
        try:
            out[name] = json.loads(value)
        except json.JSONDecodeError:
            out[name] = value
    return out


def _parse_schema_spec(spec: str) -> Schema:
    pairs = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise UsageError(f"--schema expects name:type entries, got {part!r}")
        name, type_name = part.split(":", 1)
        pairs.append([name.strip(), type_name.strip()])
    if not pairs:
        raise UsageError("--schema is empty")
    return Schema.from_json(pairs)


def _open_catalog(config: Config) -> Catalog:
    return Catalog(
        config.catalog_path,
        default_platform=config.default_platform,
        replication_threshold=config.replication_threshold,
    )


class _FallbackStats:
    """Provenance-derived stats when samples exist, config defaults otherwise."""

    def __init__(self, provenance: Provenance | None, config: Config):
        self.provenance = provenance
        self.config = config

    def derive_stats(self, alias: str) -> OperatorStats:
        if self.provenance is not None:
            stats = self.provenance.derive_stats(alias)
            if stats.sample_count > 0:
                return stats
        return OperatorStats(
            function_alias=alias,
            mean_selectivity=self.config.default_selectivity,
            mean_cost_per_tuple=self.config.default_cost_per_tuple,
            sample_count=0,
        )


def _flow_document(flow_ref: str, catalog: Catalog):
    """The dataflow JSON behind a file path or a registered dataflow GID."""
    if os.path.exists(flow_ref):
        return _read_json(flow_ref)
    record = catalog.get(flow_ref)
    if record is not None and record.kind == "dataflow" and record.metadata.get("document"):
        return record.metadata["document"]
    raise UsageError(f"{flow_ref} is neither a readable file nor a registered dataflow GID")


def _load_graph(args, catalog: Catalog):
    """Parse the flow document and bind it when bindings are available.

    Returns (graph, was_bound). A document that already carries a binding
    header is re-resolved against the catalog so payload schemas exist.
    """
    doc = _flow_document(args.flow, catalog)
    graph = dataflow_from_json(doc)
    bindings = _parse_pairs(getattr(args, "bind", None), "--bind")
    params = _parse_params(getattr(args, "param", None))
    if bindings or params:
        merged_bindings = dict(graph.binding or {})
        merged_bindings.update(bindings)
        merged_params = dict(graph.param_values or {})
        merged_params.update(params)
        return bind(graph, merged_bindings, merged_params, catalog, builtin_functions()), True
    if graph.binding is not None:
        return attach_payloads(graph, catalog), True
    return graph, False


def _apply_platforms_file(catalog: Catalog, path: str | None) -> dict:
    """Register platforms/bandwidth from a JSON file; existing entries stay."""
    if path is None:
        return {"added": [], "bandwidth_set": 0}
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise UsageError(f"{path} must hold a JSON object")
    added = []
    for entry in doc.get("platforms", []):
        try:
            descriptor = PlatformDescriptor.from_json(entry)
        except TypeError as exc:
            raise InvalidMetadata(f"bad platform entry in {path}: {exc}") from None
        if catalog.store.get("platform", descriptor.platform_id) is None:
            catalog.register_platform(descriptor)
            added.append(descriptor.platform_id)
    links = 0
    for entry in doc.get("bandwidth", []):
        if not isinstance(entry, (list, tuple)) or len(entry) != 3:
            raise InvalidMetadata(f"bandwidth entries in {path} must be [src, dst, mbps]")
        src, dst, mbps = entry
        catalog.set_bandwidth(str(src), str(dst), float(mbps))
        links += 1
    return {"added": added, "bandwidth_set": links}


def _render_table(headers: list, rows: list) -> str:
    cells = [[str(c) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    for row in cells:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines)


# -- register --------------------------------------------------------------


def _cmd_register_dataset(args, config: Config):
    catalog = _open_catalog(config)
    platform_id = args.platform_id or config.default_platform
    platform = catalog.platform(platform_id)
    abs_path = args.path if os.path.isabs(args.path) else os.path.join(platform.storage_root, args.path)

    if args.schema:
        schema = _parse_schema_spec(args.schema)
    else:
        schema = infer_schema(abs_path)
        if schema is None:
            raise InvalidMetadata(
                f"cannot infer a schema from {abs_path}; pass --schema name:type,..."
            )

    metadata = {"schema": schema.to_json(), "format": args.format, "location": args.path}
    try:
        dataset = read_dataset(abs_path, schema)
        metadata["rows"] = len(dataset)
        metadata["mean_string_widths"] = mean_string_widths(dataset)
    except EngineError:
        if not args.schema:
            raise
        # declared-schema registration of data that is not locally readable

    gid = catalog.register_artifact(
        "dataset",
        args.name,
        domain=args.domain,
        metadata=metadata,
        locations=[{"platform_id": platform_id, "path": args.path}],
        bucket=args.bucket,
    )
    payload = {
        "gid": gid,
        "kind": "dataset",
        "name": args.name,
        "schema": schema.to_json(),
        "rows": metadata.get("rows"),
        "bucket": args.bucket or "landing",
        "platform_id": platform_id,
    }
    return payload, f"registered dataset {gid} ({args.name})"


def _cmd_register_dataflow(args, config: Config):
    catalog = _open_catalog(config)
    doc = _read_json(args.flow)
    graph = dataflow_from_json(doc)
    report = validate(graph, builtin_functions())
    if not report.ok:
        raise InvalidGraph(str(report))
    name = args.name or graph.description or os.path.basename(args.flow)
    gid = catalog.register_artifact(
        "dataflow",
        name,
        domain=args.domain,
        metadata={"document": dataflow_to_json(graph)},
    )
    payload = {"gid": gid, "kind": "dataflow", "name": name, "nodes": len(graph.nodes)}
    return payload, f"registered dataflow {gid} ({name})"


# -- platforms -------------------------------------------------------------


def _cmd_platforms_add(args, config: Config):
    catalog = _open_catalog(config)
    descriptor = PlatformDescriptor(
        platform_id=args.platform_id,
        cpu_cores=args.cores,
        gpus=args.gpus,
        relative_speed=args.speed,
        storage_root=args.storage_root,
        executor_kind=args.executor,
    )
    catalog.register_platform(descriptor)
    return descriptor.to_json(), f"registered platform {args.platform_id}"


def _cmd_platforms_list(args, config: Config):
    catalog = _open_catalog(config)
    platforms = [p.to_json() for p in catalog.platforms()]
    bandwidth = [
        {"src": src, "dst": dst, "mbps": mbps}
        for (src, dst), mbps in sorted(catalog.bandwidth().entries.items())
    ]
    payload = {"platforms": platforms, "bandwidth": bandwidth}
    lines = [
        _render_table(
            ["platform", "cores", "gpus", "speed", "executor", "storage_root"],
            [
                [p["platform_id"], p["cpu_cores"], p["gpus"], p["relative_speed"], p["executor_kind"], p["storage_root"]]
                for p in platforms
            ],
        )
    ]
    if bandwidth:
        lines.append("")
        lines.append(
            _render_table(
                ["src", "dst", "MB/s"],
                [[b["src"], b["dst"], b["mbps"]] for b in bandwidth],
            )
        )
    return payload, "\n".join(lines)


def _cmd_platforms_link(args, config: Config):
    catalog = _open_catalog(config)
    catalog.set_bandwidth(args.src, args.dst, args.mbps)
    if args.symmetric:
        catalog.set_bandwidth(args.dst, args.src, args.mbps)
    payload = {"src": args.src, "dst": args.dst, "mbps": args.mbps, "symmetric": args.symmetric}
    return payload, f"bandwidth {args.src} -> {args.dst}: {args.mbps} MB/s"


# -- promote ---------------------------------------------------------------


def _cmd_promote(args, config: Config):
    catalog = _open_catalog(config)
    record = catalog.promote_dataset(args.gid, args.to)
    payload = {"gid": record.gid, "bucket": record.bucket}
    return payload, f"{record.gid} -> {record.bucket}"


# -- optimize / schedule / run / pipeline ----------------------------------


def _rewrite_flags(args, config: Config) -> tuple[bool, bool]:
    pushdown = config.enable_pushdown and not getattr(args, "no_pushdown", False)
    reorder = config.enable_reorder and not getattr(args, "no_reorder", False)
    return pushdown, reorder


def _optimize_graph(graph, catalog: Catalog, config: Config, pushdown: bool, reorder: bool):
    stats = _FallbackStats(Provenance(catalog), config)
    annotations = annotate(graph, stats)
    rewritten, trace = rewrite(
        graph, annotations, builtin_functions(), pushdown=pushdown, reorder=reorder
    )
    if rewritten is not graph:
        annotations = annotate(rewritten, stats)
    return rewritten, trace, annotations, stats


def _cmd_optimize(args, config: Config):
    catalog = _open_catalog(config)
    graph, _ = _load_graph(args, catalog)
    pushdown, reorder = _rewrite_flags(args, config)
    rewritten, trace, _, _ = _optimize_graph(graph, catalog, config, pushdown, reorder)
    document = dataflow_to_json(rewritten)
    payload = {"document": document, "trace": trace.to_json(), "steps": len(trace.steps)}
    if args.out:
        _write_text(args.out, json.dumps(document, indent=2) + "\n")
        payload["out"] = os.path.abspath(args.out)
        human = f"{len(trace.steps)} rewrite step(s); wrote {args.out}"
    else:
        human_lines = [
            f"{step['rule']}: {', '.join(step['before'])} -> {', '.join(step['after'])}"
            for step in trace.to_json()
        ]
        human_lines.append(json.dumps(document, indent=2))
        human = "\n".join(human_lines)
    return payload, human


def _plan_summary(plan: ScheduledPlan) -> str:
    rows = [
        [
            f.fragment_id,
            f.role,
            plan.assignment.placement.get(f.fragment_id, "-"),
            ", ".join(f.node_ids) or "-",
        ]
        for f in plan.fragments
    ]
    lines = [_render_table(["fragment", "role", "platform", "nodes"], rows)]
    lines.append(f"total cost: {plan.breakdown.total:.6f} s")
    return "\n".join(lines)


def _cmd_schedule(args, config: Config):
    catalog = _open_catalog(config)
    _apply_platforms_file(catalog, args.platforms)
    graph, bound = _load_graph(args, catalog)
    if not bound:
        raise UsageError("dataflow is abstract; pass --bind name=gid (and --param name=value)")
    stats = _FallbackStats(Provenance(catalog), config)
    plan = schedule(graph, catalog, stats_provider=stats, exhaustive=args.exhaustive)
    payload = plan.to_json()
    if args.out:
        _write_text(args.out, plan.dumps() + "\n")
        human = f"plan for {graph.gid}: {len(plan.fragments)} fragment(s); wrote {args.out}"
    else:
        human = _plan_summary(plan)
    return payload, human


def _run_payload(result) -> dict:
    return {
        "run_id": result.run_id,
        "status": result.status,
        "outputs": dict(sorted(result.outputs.items())),
        "output_paths": dict(sorted(result.output_paths.items())),
        "sink_rows": dict(sorted(result.sink_rows.items())),
        "wall_time": result.wall_time,
        "peak_live_tuples": result.peak_live_tuples,
    }


def _run_human(result) -> str:
    lines = []
    if result.run_id:
        lines.append(f"run {result.run_id}: {result.status}")
    else:
        lines.append(f"run (unrecorded): {result.status}")
    for nid, gid in sorted(result.outputs.items()):
        path = result.output_paths.get(nid, "")
        lines.append(f"  {nid}: {gid}  {path}")
    lines.append(f"  wall time {result.wall_time:.3f} s, peak live tuples {result.peak_live_tuples}")
    return "\n".join(lines)


def _cmd_run(args, config: Config):
    catalog = _open_catalog(config)
    plan = ScheduledPlan.loads(_read_text(args.plan))
    result = run(
        plan,
        catalog,
        backend=args.backend,
        workers=config.workers,
        record=not args.no_record,
    )
    return _run_payload(result), _run_human(result)


def _cmd_pipeline(args, config: Config):
    catalog = _open_catalog(config)
    _apply_platforms_file(catalog, args.platforms)
    graph, bound = _load_graph(args, catalog)
    if not bound:
        raise UsageError("dataflow is abstract; pass --bind name=gid (and --param name=value)")
    if args.no_rewrite:
        trace_json: list = []
        stats = _FallbackStats(Provenance(catalog), config)
        annotations = annotate(graph, stats)
        rewritten = graph
    else:
        pushdown, reorder = _rewrite_flags(args, config)
        rewritten, trace, annotations, stats = _optimize_graph(
            graph, catalog, config, pushdown, reorder
        )
        trace_json = trace.to_json()
    plan = schedule(
        rewritten, catalog, stats_provider=stats,
        exhaustive=args.exhaustive, annotations=annotations,
    )
    result = run(
        plan,
        catalog,
        backend=args.backend,
        workers=config.workers,
        record=not args.no_record,
    )
    payload = _run_payload(result)
    payload["rewrite_trace"] = trace_json
    payload["placement"] = dict(sorted(plan.assignment.placement.items()))
    payload["estimated_cost"] = plan.breakdown.total
    human = "\n".join([_plan_summary(plan), _run_human(result)])
    return payload, human


# -- kg --------------------------------------------------------------------


def _evaluated_facts(args, config: Config):
    catalog = _open_catalog(config)
    provenance = Provenance(catalog)
    rules_text = DEFAULT_RULES
    if getattr(args, "rules", None):
        rules_text = rules_text + "\n" + _read_text(args.rules)
    rules, extra_facts = parse_program(rules_text)
    base = build_facts(catalog, provenance)
    for atom in extra_facts:
        base.add(atom.predicate, *[t.value for t in atom.terms])
    return evaluate(base, rules, max_depth=args.depth)


def _cmd_kg_eval(args, config: Config):
    fb = _evaluated_facts(args, config)
    derived = sorted(fb.derived)
    counts: dict = {}
    for predicate, _ in fb.all_facts():
        counts[predicate] = counts.get(predicate, 0) + 1
    payload = {
        "facts": len(fb.facts),
        "derived": len(fb.derived),
        "by_predicate": dict(sorted(counts.items())),
        "derived_facts": [[p, list(terms)] for p, terms in derived],
    }
    human = _render_table(
        ["predicate", "facts"], [[p, n] for p, n in sorted(counts.items())]
    )
    return payload, human


def _cmd_kg_query(args, config: Config):
    atoms = parse_query(args.query)
    fb = _evaluated_facts(args, config)
    bindings = query(fb, atoms)
    bindings = sorted(bindings, key=lambda b: json.dumps(b, sort_keys=True))
    payload = {"query": args.query, "bindings": bindings, "count": len(bindings)}
    if not bindings:
        return payload, "no results"
    variables = sorted({v for b in bindings for v in b})
    rows = [[b.get(v, "") for v in variables] for b in bindings]
    return payload, _render_table(variables, rows)


# -- prov ------------------------------------------------------------------


def _cmd_prov_export(args, config: Config):
    catalog = _open_catalog(config)
    document = Provenance(catalog).export_prov(args.gid)
    if args.out:
        _write_text(args.out, json.dumps(document, indent=2, sort_keys=True) + "\n")
        return document, f"wrote {args.out}"
    return document, json.dumps(document, indent=2, sort_keys=True)


def _cmd_prov_stats(args, config: Config):
    catalog = _open_catalog(config)
    provenance = Provenance(catalog)
    aliases = args.alias or sorted(builtin_functions())
    table = provenance.stats_table(aliases)
    payload = {
        "stats": {
            alias: {
                "mean_selectivity": s.mean_selectivity,
                "mean_cost_per_tuple": s.mean_cost_per_tuple,
                "sample_count": s.sample_count,
                "per_platform": dict(sorted(s.per_platform.items())),
            }
            for alias, s in sorted(table.items())
        }
    }
    rows = [
        [alias, f"{s.mean_selectivity:.4f}", f"{s.mean_cost_per_tuple:.3e}", s.sample_count]
        for alias, s in sorted(table.items())
    ]
    return payload, _render_table(["function", "selectivity", "cost/tuple (s)", "samples"], rows)


# -- models / classify-change ---------------------------------------------


def _cmd_models_select(args, config: Config):
    catalog = _open_catalog(config)
    schema = _parse_schema_spec(args.schema)
    ranked = catalog.select_models(args.task, args.domain, schema, args.k)
    payload = {"models": [{"gid": gid, "score": score} for gid, score in ranked]}
    if not ranked:
        return payload, "no models registered"
    rows = [[gid, f"{score:.4f}"] for gid, score in ranked]
    return payload, _render_table(["model", "score"], rows)


def _cmd_classify_change(args, config: Config):
    catalog = _open_catalog(config)
    flags = [f.strip() for f in args.flags.split(",") if f.strip()]
    unknown = [f for f in flags if f not in CHANGE_FLAGS]
    if unknown:
        raise UsageError(
            f"unknown change flag(s) {', '.join(unknown)}; valid: {', '.join(CHANGE_FLAGS)}"
        )
    change = ChangeSet(**{f: True for f in flags})
    outcome = catalog.classify_change(args.gid, change)
    payload = {"gid": args.gid, "flags": sorted(flags), "classification": outcome}
    return payload, outcome


# -- bench -----------------------------------------------------------------


def _cmd_bench(args, config: Config):
    try:
        n_files = [int(p) for p in args.files.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"--files expects comma-separated integers, got {args.files!r}") from None
    if not n_files:
        raise UsageError("--files is empty")
    report = run_benchmark(
        n_files_list=n_files,
        rows_per_file=args.rows,
        repetitions=args.reps,
        workers=config.workers or 8,
        base_dir=args.dir,
        seed=args.seed,
    )
    payload = report.to_json()
    if args.out:
        _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    lines = [
        _render_table(
            ["backend", "files", "mean (s)", "stddev (s)"],
            [
                [m["backend"], m["n_files"], f"{m['mean_s']:.4f}", f"{m['stddev_s']:.4f}"]
                for m in report.measurements
            ],
        )
    ]
    for backend in sorted(report.slopes):
        lines.append(
            f"{backend}: slope {report.slopes[backend]:.6f} s/file, "
            f"R^2 {report.r_squared[backend]:.4f}"
        )
    return payload, "\n".join(lines)


# -- parser ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="crossflow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--catalog", help="catalog file path (GYP_CATALOG overrides)")
    parser.add_argument("--platform", help="default platform id")
    parser.add_argument("--workers", type=int, help="partitioned-backend worker count (GYP_WORKERS overrides)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("register", help="register an artifact")
    reg = p.add_subparsers(dest="artifact_kind", required=True, parser_class=_Parser)
    d = reg.add_parser("dataset", help="register a dataset location")
    d.add_argument("name")
    d.add_argument("--path", required=True, help="file or shard directory, relative to the platform root")
    d.add_argument("--platform-id", help="hosting platform (default: configured platform)")
    d.add_argument("--schema", help="name:type,... (inferred from the file when omitted)")
    d.add_argument("--domain")
    d.add_argument("--format", default="csv")
    d.add_argument("--bucket", choices=("landing", "staging", "curated"))
    d.set_defaults(handler=_cmd_register_dataset)
    f = reg.add_parser("dataflow", help="register a dataflow document")
    f.add_argument("flow", help="dataflow JSON file")
    f.add_argument("--name")
    f.add_argument("--domain")
    f.set_defaults(handler=_cmd_register_dataflow)

    p = sub.add_parser("platforms", help="manage execution platforms")
    plat = p.add_subparsers(dest="platform_command", required=True, parser_class=_Parser)
    a = plat.add_parser("add", help="register a platform")
    a.add_argument("platform_id")
    a.add_argument("--storage-root", required=True)
    a.add_argument("--cores", type=int, default=1)
    a.add_argument("--gpus", type=int, default=0)
    a.add_argument("--speed", type=float, default=1.0)
    a.add_argument("--executor", choices=("single", "partitioned"), default="single")
    a.set_defaults(handler=_cmd_platforms_add)
    ls = plat.add_parser("list", help="list platforms and bandwidth")
    ls.set_defaults(handler=_cmd_platforms_list)
    ln = plat.add_parser("link", help="set inter-platform bandwidth")
    ln.add_argument("src")
    ln.add_argument("dst")
    ln.add_argument("--mbps", type=float, required=True)
    ln.add_argument("--symmetric", action="store_true")
    ln.set_defaults(handler=_cmd_platforms_link)

    p = sub.add_parser("promote", help="move a dataset to the next bucket")
    p.add_argument("gid")
    p.add_argument("--to", required=True, choices=("staging", "curated"))
    p.set_defaults(handler=_cmd_promote)

    p = sub.add_parser("optimize", help="rewrite a dataflow")
    p.add_argument("flow", help="dataflow JSON file or registered dataflow GID")
    p.add_argument("--bind", action="append", metavar="NAME=GID")
    p.add_argument("--param", action="append", metavar="NAME=VALUE")
    p.add_argument("--no-pushdown", action="store_true")
    p.add_argument("--no-reorder", action="store_true")
    p.add_argument("--out", "-o")
    p.set_defaults(handler=_cmd_optimize)

    p = sub.add_parser("schedule", help="fragment and place a dataflow")
    p.add_argument("flow", help="dataflow JSON file or registered dataflow GID")
    p.add_argument("--bind", action="append", metavar="NAME=GID")
    p.add_argument("--param", action="append", metavar="NAME=VALUE")
    p.add_argument("--platforms", help="JSON file of platforms/bandwidth to register")
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--out", "-o")
    p.set_defaults(handler=_cmd_schedule)

    p = sub.add_parser("run", help="execute a scheduled plan")
    p.add_argument("plan", help="plan JSON file from `schedule`")
    p.add_argument("--backend", choices=("single", "partitioned"))
    p.add_argument("--no-record", action="store_true")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("pipeline", help="optimize + schedule + run")
    p.add_argument("flow", help="dataflow JSON file or registered dataflow GID")
    p.add_argument("--bind", action="append", metavar="NAME=GID")
    p.add_argument("--param", action="append", metavar="NAME=VALUE")
    p.add_argument("--platforms", help="JSON file of platforms/bandwidth to register")
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--no-rewrite", action="store_true")
    p.add_argument("--backend", choices=("single", "partitioned"))
    p.add_argument("--no-record", action="store_true")
    p.set_defaults(handler=_cmd_pipeline)

    p = sub.add_parser("kg", help="knowledge-graph queries")
    kg = p.add_subparsers(dest="kg_command", required=True, parser_class=_Parser)
    e = kg.add_parser("eval", help="derive all facts")
    e.add_argument("--rules", help="extra rule file")
    e.add_argument("--depth", type=int, default=64)
    e.set_defaults(handler=_cmd_kg_eval)
    q = kg.add_parser("query", help="run a query, e.g. '?- is_activity(A).'")
    q.add_argument("query")
    q.add_argument("--rules", help="extra rule file")
    q.add_argument("--depth", type=int, default=64)
    q.set_defaults(handler=_cmd_kg_query)

    p = sub.add_parser("prov", help="provenance queries")
    prov = p.add_subparsers(dest="prov_command", required=True, parser_class=_Parser)
    x = prov.add_parser("export", help="export the upstream graph of a GID")
    x.add_argument("gid")
    x.add_argument("--out", "-o")
    x.set_defaults(handler=_cmd_prov_export)
    s = prov.add_parser("stats", help="operator statistics from recorded runs")
    s.add_argument("alias", nargs="*")
    s.set_defaults(handler=_cmd_prov_stats)

    p = sub.add_parser("models", help="model registry queries")
    m = p.add_subparsers(dest="models_command", required=True, parser_class=_Parser)
    msel = m.add_parser("select", help="rank models for a task")
    msel.add_argument("--task", required=True)
    msel.add_argument("--domain")
    msel.add_argument("--schema", required=True, help="name:type,... of the request data")
    msel.add_argument("-k", type=int, default=3)
    msel.set_defaults(handler=_cmd_models_select)

    p = sub.add_parser("classify-change", help="NewModel or NewVersion for a change set")
    p.add_argument("gid")
    p.add_argument("--flags", required=True, help="comma-separated change flags")
    p.set_defaults(handler=_cmd_classify_change)

    p = sub.add_parser("bench", help="scaling benchmark of both backends")
    p.add_argument("--files", default="10,20,30,40,50,60,70")
    p.add_argument("--rows", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--dir", help="directory for generated input shards")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", "-o")
    p.set_defaults(handler=_cmd_bench)

    return parser


def _resolve_config(args) -> Config:
    flags = {
        "catalog_path": args.catalog,
        "default_platform": args.platform,
        "workers": args.workers if getattr(args, "workers", None) is not None else None,
    }
    return load_config(args.config, flags)


def _emit_error(code: str, message: str, json_mode: bool):
    if json_mode:
        print(json.dumps({"error": {"code": code, "message": message}}, sort_keys=True))
    else:
        print(f"error: {message}", file=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_mode = "--json" in argv
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        config = _resolve_config(args)
        payload, human = args.handler(args, config)
        print(json.dumps(payload, indent=2, sort_keys=True) if args.json else human)
        return 0
    except EngineError as exc:
        _emit_error(exc.code, str(exc), json_mode)
        return 1
    except Exception as exc:  # noqa: BLE001 - the 0/1/2 contract needs a catch-all
        _emit_error("InternalError", f"{type(exc).__name__}: {exc}", json_mode)
        return 2
    finally:
        close_backends()


if __name__ == "__main__":
    sys.exit(main())
