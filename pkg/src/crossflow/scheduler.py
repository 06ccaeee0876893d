"""Fragmenting a dataflow and assigning fragments to platforms.

Fragmentation traverses from the sources forward, cutting (a) where a
binary operator merges subgraphs whose data lives on different
platforms and (b) before a train operator whose data's platform lacks
the GPUs it needs. Assignment minimizes total execution plus transfer
seconds; a locality-seeded greedy pass refined by hill climbing is the
default, with full enumeration available for small instances. Transfer
fragments (synthetic send/receive pairs) are added for every
inter-fragment edge that crosses platforms.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

from .catalog import BandwidthMatrix, Catalog, PlatformDescriptor
from .errors import (
    IncompleteBandwidthMatrix,
    InfeasibleAssignment,
    NoFeasiblePlatform,
    UnplacedInput,
)
from .model.graph import DataflowGraph, dataflow_from_json, dataflow_to_json
from .model.schema import row_width_bytes
from .optimizer import Cardinalities, RewriteAnnotation

MODEL_TRANSFER_BYTES = 4096.0  # serialized linear models are tiny
DEFAULT_TRAIN_GPUS = 1
_HILL_CLIMB_ROUNDS = 200


@dataclass(frozen=True)
class Fragment:
    fragment_id: str
    kind: str  # "compute" | "transfer"
    node_ids: tuple
    entry_gids: tuple = ()  # ((placeholder, gid), ...) bound inputs read here
    entry_connectors: tuple = ()  # connectors arriving from other fragments
    exit_connectors: tuple = ()  # connectors leaving to other fragments
    contains_train: bool = False
    # transfer-fragment fields
    connector: str | None = None
    from_fragment: str | None = None
    to_fragment: str | None = None
    from_platform: str | None = None
    to_platform: str | None = None

    @property
    def role(self) -> str:
        if self.kind == "transfer":
            return "transfer"
        return "train" if self.contains_train else "compute"

    def to_json(self) -> dict:
        return {
            "fragment_id": self.fragment_id,
            "kind": self.kind,
            "node_ids": list(self.node_ids),
            "entry_gids": [list(x) for x in self.entry_gids],
            "entry_connectors": list(self.entry_connectors),
            "exit_connectors": list(self.exit_connectors),
            "contains_train": self.contains_train,
            "connector": self.connector,
            "from_fragment": self.from_fragment,
            "to_fragment": self.to_fragment,
            "from_platform": self.from_platform,
            "to_platform": self.to_platform,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Fragment":
        return cls(
            fragment_id=obj["fragment_id"],
            kind=obj["kind"],
            node_ids=tuple(obj["node_ids"]),
            entry_gids=tuple(tuple(x) for x in obj.get("entry_gids", [])),
            entry_connectors=tuple(obj.get("entry_connectors", [])),
            exit_connectors=tuple(obj.get("exit_connectors", [])),
            contains_train=obj.get("contains_train", False),
            connector=obj.get("connector"),
            from_fragment=obj.get("from_fragment"),
            to_fragment=obj.get("to_fragment"),
            from_platform=obj.get("from_platform"),
            to_platform=obj.get("to_platform"),
        )


@dataclass
class CostBreakdown:
    execution: dict = field(default_factory=dict)  # fragment_id -> seconds
    transfer: dict = field(default_factory=dict)  # edge label -> seconds

    @property
    def total(self) -> float:
        return sum(self.execution.values()) + sum(self.transfer.values())

    def to_json(self) -> dict:
        return {
            "execution": dict(self.execution),
            "transfer": dict(self.transfer),
            "total": self.total,
        }


@dataclass
class Assignment:
    placement: dict  # fragment_id -> platform_id
    total_cost: float
    feasible: bool
    diagnostic: str | None = None

    def to_json(self) -> dict:
        return {
            "placement": dict(self.placement),
            "total_cost": self.total_cost,
            "feasible": self.feasible,
            "diagnostic": self.diagnostic,
        }


# -- fragmentation --------------------------------------------------------


def _gpus_required(node) -> int:
    value = node.params.get("gpus", DEFAULT_TRAIN_GPUS)
    return int(value)


def fragment(
    graph: DataflowGraph,
    placements: dict[str, str],
    platforms: list[PlatformDescriptor],
    gpu_required: int | None = None,
) -> list[Fragment]:
    """Structural cut of the dataflow into compute fragments.

    `placements` maps every bound input GID to the platform holding it.
    Transfer fragments are not created here; they depend on the final
    assignment (a binary merge may be co-located with one side)."""
    binding = graph.binding or {}
    by_id = {p.platform_id: p for p in platforms}
    for n in graph.nodes:
        if n.operator != "source":
            continue
        for in_name in n.inputs:
            gid = binding.get(in_name)
            if gid is not None and gid not in placements:
                raise UnplacedInput(gid)

    # propagate each connector's data platform forward; None = undecided
    conn_home: dict[str, str | None] = {}
    cut_edges: set[tuple[str, str]] = set()  # (producer, consumer)
    for nid in graph.topological_order():
        node = graph.node(nid)
        if node.operator == "source":
            for in_name, out_name in zip(node.inputs, node.outputs):
                gid = binding.get(in_name)
                conn_home[out_name] = placements.get(gid) if gid else None
            continue
        in_conns = graph.dataset_inputs(node)
        homes = [conn_home.get(c) for c in in_conns]
        decided = {h for h in homes if h is not None}
        home: str | None
        if len(decided) > 1:
            # different platforms meet at this operator: cut all sides
            for e in graph.edges:
                if e.consumer == nid:
                    cut_edges.add((e.producer, nid))
            home = None
        else:
            home = next(iter(decided)) if decided else None
        if node.operator == "train":
            needed = gpu_required if gpu_required is not None else _gpus_required(node)
            platform = by_id.get(home) if home else None
            if platform is None or platform.gpus < needed:
                for e in graph.edges:
                    if e.consumer == nid:
                        cut_edges.add((e.producer, nid))
                home = None
        for c in node.outputs:
            conn_home[c] = home

    # connected components over non-cut edges
    parent: dict[str, str] = {n.node_id: n.node_id for n in graph.nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for e in graph.edges:
        if (e.producer, e.consumer) not in cut_edges:
            union(e.producer, e.consumer)

    topo = graph.topological_order()
    topo_index = {nid: i for i, nid in enumerate(topo)}
    groups: dict[str, list[str]] = {}
    for nid in topo:
        groups.setdefault(find(nid), []).append(nid)
    ordered_groups = sorted(groups.values(), key=lambda g: min(topo_index[n] for n in g))

    frag_of_node: dict[str, str] = {}
    fragments: list[Fragment] = []
    for i, members in enumerate(ordered_groups, start=1):
        fid = f"f{i}"
        for nid in members:
            frag_of_node[nid] = fid
    for i, members in enumerate(ordered_groups, start=1):
        fid = f"f{i}"
        entry_gids = []
        contains_train = False
        for nid in members:
            node = graph.node(nid)
            if node.operator == "train":
                contains_train = True
            if node.operator == "source":
                for in_name in node.inputs:
                    gid = binding.get(in_name)
                    if gid is not None:
                        entry_gids.append((in_name, gid))
        entry_conns = []
        exit_conns = []
        for e in graph.edges:
            if frag_of_node[e.producer] != frag_of_node[e.consumer]:
                if frag_of_node[e.consumer] == fid and e.out_conn not in entry_conns:
                    entry_conns.append(e.out_conn)
                if frag_of_node[e.producer] == fid and e.out_conn not in exit_conns:
                    exit_conns.append(e.out_conn)
        fragments.append(
            Fragment(
                fragment_id=fid,
                kind="compute",
                node_ids=tuple(sorted(members, key=lambda n: topo_index[n])),
                entry_gids=tuple(entry_gids),
                entry_connectors=tuple(entry_conns),
                exit_connectors=tuple(exit_conns),
                contains_train=contains_train,
            )
        )
    return fragments


# -- cost model -----------------------------------------------------------


@dataclass
class CostModel:
    graph: DataflowGraph
    fragments: list
    platforms: list
    bandwidth: BandwidthMatrix
    cards: Cardinalities
    annotations: dict  # node_id -> RewriteAnnotation
    gid_rows: dict  # gid -> rows
    gid_bytes: dict  # gid -> bytes
    gid_platforms: dict  # gid -> [platform_id, ...] (locations incl. replicas)

    def __post_init__(self):
        self.by_id = {p.platform_id: p for p in self.platforms}
        self.frag_by_id = {f.fragment_id: f for f in self.fragments}
        self.frag_of_node = {}
        for f in self.fragments:
            for nid in f.node_ids:
                self.frag_of_node[nid] = f.fragment_id
        self.inter_edges = []  # (from_frag, to_frag, connector)
        seen = set()
        for e in self.graph.edges:
            fp = self.frag_of_node[e.producer]
            fc = self.frag_of_node[e.consumer]
            if fp != fc and (fp, fc, e.out_conn) not in seen:
                seen.add((fp, fc, e.out_conn))
                self.inter_edges.append((fp, fc, e.out_conn))

    def connector_bytes(self, conn: str) -> float:
        rows = self.cards.connector_rows.get(conn, 0.0)
        payload = (self.graph.payloads or {}).get(conn)
        if payload is None or payload.kind != "dataset" or payload.schema is None:
            return MODEL_TRANSFER_BYTES if rows <= 1 else rows * 64.0
        return rows * row_width_bytes(payload.schema)

    def execution_cost(self, fragment_id: str, platform_id: str) -> float:
        f = self.frag_by_id[fragment_id]
        speed = self.by_id[platform_id].relative_speed
        total = 0.0
        for nid in f.node_ids:
            ann = self.annotations[nid]
            total += ann.cost_per_tuple / speed * self.cards.node_in.get(nid, 0.0)
        return total

    def train_feasible(self, fragment_id: str, platform_id: str) -> bool:
        f = self.frag_by_id[fragment_id]
        if not f.contains_train:
            return True
        platform = self.by_id[platform_id]
        for nid in f.node_ids:
            node = self.graph.node(nid)
            if node.operator == "train" and platform.gpus < _gpus_required(node):
                return False
        return True

    def feasible_platforms(self, fragment_id: str) -> list[str]:
        return sorted(
            p.platform_id
            for p in self.platforms
            if self.train_feasible(fragment_id, p.platform_id)
        )

    def load_cost(self, fragment_id: str, platform_id: str) -> dict[str, float]:
        """Transfer seconds for each bound input read by this fragment,
        zero when a location (primary or replica) is already local."""
        out = {}
        f = self.frag_by_id[fragment_id]
        for placeholder, gid in f.entry_gids:
            sites = self.gid_platforms.get(gid, [])
            if not sites:
                raise UnplacedInput(gid)
            if platform_id in sites:
                continue
            nbytes = self.gid_bytes.get(gid, 0.0)
            best = min(nbytes / 1e6 / self.bandwidth.get(src, platform_id) for src in sites)
            out[f"load:{gid}->{fragment_id}"] = best
        return out

    def evaluate(self, placement: dict[str, str]) -> CostBreakdown | None:
        """Full cost of a placement; None when a train fragment sits on
        a GPU-poor platform."""
        breakdown = CostBreakdown()
        for f in self.fragments:
            p = placement[f.fragment_id]
            if not self.train_feasible(f.fragment_id, p):
                return None
            breakdown.execution[f.fragment_id] = self.execution_cost(f.fragment_id, p)
            breakdown.transfer.update(self.load_cost(f.fragment_id, p))
        for src_frag, dst_frag, conn in self.inter_edges:
            p_src = placement[src_frag]
            p_dst = placement[dst_frag]
            if p_src == p_dst:
                continue
            nbytes = self.connector_bytes(conn)
            seconds = nbytes / 1e6 / self.bandwidth.get(p_src, p_dst)
            breakdown.transfer[f"{src_frag}->{dst_frag}:{conn}"] = seconds
        return breakdown

    def fragment_order(self) -> list[str]:
        """Fragments in dependency order (producer before consumer)."""
        ids = [f.fragment_id for f in self.fragments]
        preds: dict[str, set[str]] = {fid: set() for fid in ids}
        for src, dst, _ in self.inter_edges:
            preds[dst].add(src)
        order = []
        remaining = list(ids)
        while remaining:
            ready = [fid for fid in remaining if preds[fid] <= set(order)]
            if not ready:  # pragma: no cover - fragment DAG mirrors node DAG
                ready = remaining[:]
            order.append(ready[0])
            remaining.remove(ready[0])
        return order


def _entry_bytes_by_platform(model: CostModel, fragment_id: str, placed: dict[str, str]) -> dict[str, float]:
    f = model.frag_by_id[fragment_id]
    weights: dict[str, float] = {}
    for _, gid in f.entry_gids:
        nbytes = model.gid_bytes.get(gid, 0.0)
        for site in model.gid_platforms.get(gid, []):
            weights[site] = weights.get(site, 0.0) + nbytes
    for src_frag, dst_frag, conn in model.inter_edges:
        if dst_frag != fragment_id or src_frag not in placed:
            continue
        weights[placed[src_frag]] = weights.get(placed[src_frag], 0.0) + model.connector_bytes(conn)
    return weights


def assign(
    fragments: list[Fragment],
    platforms: list[PlatformDescriptor],
    bandwidth: BandwidthMatrix,
    cards: Cardinalities,
    annotations: dict[str, RewriteAnnotation],
    graph: DataflowGraph,
    gid_rows: dict | None = None,
    gid_bytes: dict | None = None,
    gid_platforms: dict | None = None,
    exhaustive: bool = False,
) -> tuple[Assignment, CostBreakdown | None]:
    """Place every compute fragment on a platform minimizing execution
    plus transfer seconds."""
    model = CostModel(
        graph=graph,
        fragments=fragments,
        platforms=platforms,
        bandwidth=bandwidth,
        cards=cards,
        annotations=annotations,
        gid_rows=gid_rows or {},
        gid_bytes=gid_bytes or {},
        gid_platforms=gid_platforms or {},
    )
    for f in fragments:
        if not model.feasible_platforms(f.fragment_id):
            return (
                Assignment({}, math.inf, False, f"no platform satisfies the GPU needs of {f.fragment_id}"),
                None,
            )
    if exhaustive:
        placement = _assign_exhaustive(model)
    else:
        placement = _assign_heuristic(model)
    breakdown = model.evaluate(placement)
    return Assignment(placement, breakdown.total, True), breakdown


def _assign_exhaustive(model: CostModel) -> dict[str, str]:
    ids = [f.fragment_id for f in model.fragments]
    best: tuple | None = None
    for combo in itertools.product(*(model.feasible_platforms(fid) for fid in ids)):
        placement = dict(zip(ids, combo))
        breakdown = model.evaluate(placement)
        if breakdown is None:
            continue
        key = (breakdown.total, combo)
        if best is None or key < best[0]:
            best = (key, placement)
    if best is None:  # pragma: no cover - guarded by feasible_platforms
        raise NoFeasiblePlatform("no feasible assignment exists")
    return best[1]


def _assign_heuristic(model: CostModel) -> dict[str, str]:
    order = model.fragment_order()
    placement: dict[str, str] = {}

    def seed_cost(fid: str, p: str) -> float:
        total = model.execution_cost(fid, p) + sum(model.load_cost(fid, p).values())
        for src_frag, dst_frag, conn in model.inter_edges:
            if dst_frag == fid and src_frag in placement and placement[src_frag] != p:
                total += model.connector_bytes(conn) / 1e6 / model.bandwidth.get(placement[src_frag], p)
        return total

    # preferred site of each train fragment, ignoring transfers
    train_pref: dict[str, str] = {}
    for f in model.fragments:
        if f.contains_train:
            feasible = model.feasible_platforms(f.fragment_id)
            train_pref[f.fragment_id] = min(
                feasible, key=lambda p: (model.execution_cost(f.fragment_id, p), p)
            )

    downstream_train: dict[str, str | None] = {}
    succs: dict[str, list[str]] = {fid: [] for fid in order}
    for src, dst, _ in model.inter_edges:
        succs[src].append(dst)

    def nearest_train(fid: str, seen=None) -> str | None:
        seen = seen or set()
        if fid in seen:
            return None
        seen.add(fid)
        if model.frag_by_id[fid].contains_train:
            return fid
        for nxt in sorted(succs[fid]):
            found = nearest_train(nxt, seen)
            if found:
                return found
        return None

    for fid in order:
        downstream_train[fid] = nearest_train(fid)

    for fid in order:
        f = model.frag_by_id[fid]
        feasible = model.feasible_platforms(fid)
        incoming = [src for src, dst, _ in model.inter_edges if dst == fid]
        if f.contains_train:
            placement[fid] = min(feasible, key=lambda p: (seed_cost(fid, p), p))
        elif len(incoming) >= 2:
            # a fragment headed by a binary merge: one of the input
            # sites, or the site the downstream training will use
            candidates = {placement[src] for src in incoming if src in placement}
            train_fid = downstream_train.get(fid)
            if train_fid:
                candidates.add(train_pref[train_fid])
            candidates = [p for p in sorted(candidates) if p in feasible] or feasible
            placement[fid] = min(candidates, key=lambda p: (seed_cost(fid, p), p))
        else:
            weights = _entry_bytes_by_platform(model, fid, placement)
            weights = {p: w for p, w in weights.items() if p in feasible}
            if weights:
                top = max(weights.values())
                placement[fid] = min(p for p, w in weights.items() if w == top)
            else:
                placement[fid] = min(feasible, key=lambda p: (seed_cost(fid, p), p))

    # local search: single-fragment moves until no strict improvement
    current = model.evaluate(placement)
    for _ in range(_HILL_CLIMB_ROUNDS):
        best_move = None
        for fid in order:
            for p in model.feasible_platforms(fid):
                if p == placement[fid]:
                    continue
                trial = dict(placement)
                trial[fid] = p
                outcome = model.evaluate(trial)
                if outcome is not None and outcome.total < current.total - 1e-15:
                    if best_move is None or outcome.total < best_move[0]:
                        best_move = (outcome.total, fid, p, outcome)
        if best_move is None:
            break
        _, fid, p, current = best_move
        placement[fid] = p
    return placement


# -- materialization ------------------------------------------------------


@dataclass
class ScheduledPlan:
    graph: DataflowGraph
    fragments: list  # compute + transfer fragments
    assignment: Assignment
    breakdown: CostBreakdown
    cards: Cardinalities
    jobs: list  # per-fragment job specs in dependency order

    def to_json(self) -> dict:
        return {
            "dataflow": dataflow_to_json(self.graph),
            "fragments": [f.to_json() for f in self.fragments],
            "assignment": self.assignment.to_json(),
            "cost": self.breakdown.to_json(),
            "estimates": self.cards.to_json(),
            "jobs": list(self.jobs),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScheduledPlan":
        cost = obj["cost"]
        return cls(
            graph=dataflow_from_json(obj["dataflow"]),
            fragments=[Fragment.from_json(f) for f in obj["fragments"]],
            assignment=Assignment(
                placement=dict(obj["assignment"]["placement"]),
                total_cost=obj["assignment"]["total_cost"],
                feasible=obj["assignment"]["feasible"],
                diagnostic=obj["assignment"].get("diagnostic"),
            ),
            breakdown=CostBreakdown(dict(cost["execution"]), dict(cost["transfer"])),
            cards=Cardinalities.from_json(obj["estimates"]),
            jobs=list(obj["jobs"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "ScheduledPlan":
        return cls.from_json(json.loads(text))


def materialize(
    graph: DataflowGraph,
    fragments: list[Fragment],
    assignment: Assignment,
    breakdown: CostBreakdown,
    cards: Cardinalities,
    platforms: list[PlatformDescriptor],
) -> ScheduledPlan:
    """Expand an assignment into an executable plan: transfer fragments
    for platform-crossing edges, per-fragment job specs, dependencies."""
    if not assignment.feasible:
        raise InfeasibleAssignment(assignment.diagnostic or "assignment is infeasible")
    by_id = {p.platform_id: p for p in platforms}
    frag_of_node = {}
    for f in fragments:
        for nid in f.node_ids:
            frag_of_node[nid] = f.fragment_id

    all_fragments = list(fragments)
    placement = dict(assignment.placement)
    transfer_index = 0
    crossing: dict[tuple[str, str, str], str] = {}
    for e in graph.edges:
        fp = frag_of_node[e.producer]
        fc = frag_of_node[e.consumer]
        if fp == fc:
            continue
        p_src = placement[fp]
        p_dst = placement[fc]
        if p_src == p_dst:
            continue
        key = (fp, fc, e.out_conn)
        if key in crossing:
            continue
        transfer_index += 1
        tid = f"t{transfer_index}"
        crossing[key] = tid
        all_fragments.append(
            Fragment(
                fragment_id=tid,
                kind="transfer",
                node_ids=(f"send:{e.out_conn}", f"recv:{e.out_conn}"),
                connector=e.out_conn,
                from_fragment=fp,
                to_fragment=fc,
                from_platform=p_src,
                to_platform=p_dst,
            )
        )
        placement[tid] = p_dst

    deps: dict[str, list[str]] = {f.fragment_id: [] for f in all_fragments}
    for e in graph.edges:
        fp = frag_of_node[e.producer]
        fc = frag_of_node[e.consumer]
        if fp == fc:
            continue
        tid = crossing.get((fp, fc, e.out_conn))
        if tid:
            if fp not in deps[tid]:
                deps[tid].append(fp)
            if tid not in deps[fc]:
                deps[fc].append(tid)
        elif fp not in deps[fc]:
            deps[fc].append(fp)

    order = []
    remaining = [f.fragment_id for f in all_fragments]
    while remaining:
        ready = [fid for fid in remaining if all(d in order for d in deps[fid])]
        order.append(ready[0])
        remaining.remove(ready[0])

    jobs = []
    frag_by_id = {f.fragment_id: f for f in all_fragments}
    for fid in order:
        f = frag_by_id[fid]
        platform = by_id[placement[fid]]
        job = {
            "fragment_id": fid,
            "role": f.role,
            "platform_id": platform.platform_id,
            "backend": platform.executor_kind,
            "depends_on": list(deps[fid]),
        }
        if f.kind == "transfer":
            job["staging"] = {
                "connector": f.connector,
                "from_platform": f.from_platform,
                "to_platform": f.to_platform,
            }
        else:
            job["node_ids"] = list(f.node_ids)
            job["inputs"] = [list(x) for x in f.entry_gids]
        jobs.append(job)

    final_assignment = Assignment(placement, assignment.total_cost, True)
    return ScheduledPlan(
        graph=graph,
        fragments=all_fragments,
        assignment=final_assignment,
        breakdown=breakdown,
        cards=cards,
        jobs=jobs,
    )


# -- one-call convenience -------------------------------------------------


def gid_size_info(catalog: Catalog, graph: DataflowGraph) -> tuple[dict, dict, dict, dict]:
    """(input_sizes, gid_rows, gid_bytes, gid_platforms) for every bound
    input of `graph`, from catalog metadata."""
    from .model.schema import Schema

    input_sizes: dict[str, float] = {}
    gid_rows: dict[str, float] = {}
    gid_bytes: dict[str, float] = {}
    gid_platforms: dict[str, list] = {}
    for placeholder, gid in (graph.binding or {}).items():
        record = catalog.get(gid)
        if record is None:
            continue
        if record.kind == "model":
            rows = 1.0
            nbytes = MODEL_TRANSFER_BYTES
        else:
            rows = float(record.metadata.get("rows", 0))
            schema = Schema.from_json(record.metadata["schema"])
            widths = record.metadata.get("mean_string_widths") or {}
            nbytes = rows * row_width_bytes(schema, widths)
        input_sizes[placeholder] = rows
        gid_rows[gid] = rows
        gid_bytes[gid] = nbytes
        gid_platforms[gid] = [loc["platform_id"] for loc in record.locations]
    return input_sizes, gid_rows, gid_bytes, gid_platforms


def schedule(
    graph: DataflowGraph,
    catalog: Catalog,
    stats_provider=None,
    input_sizes: dict | None = None,
    exhaustive: bool = False,
    annotations: dict | None = None,
) -> ScheduledPlan:
    """fragment + assign + materialize against the catalog's registry."""
    from .optimizer import annotate, estimate_cardinalities

    platforms = catalog.platforms()
    if len(platforms) > 1:
        bandwidth = catalog.require_complete_bandwidth()
    else:
        bandwidth = catalog.bandwidth()
    sizes, gid_rows, gid_bytes, gid_platforms = gid_size_info(catalog, graph)
    if input_sizes:
        sizes.update(input_sizes)
    placements = {gid: sites[0] for gid, sites in gid_platforms.items() if sites}
    if annotations is None:
        annotations = annotate(graph, stats_provider)
    cards = estimate_cardinalities(graph, annotations, sizes)
    fragments = fragment(graph, placements, platforms)
    result, breakdown = assign(
        fragments,
        platforms,
        bandwidth,
        cards,
        annotations,
        graph,
        gid_rows=gid_rows,
        gid_bytes=gid_bytes,
        gid_platforms=gid_platforms,
        exhaustive=exhaustive,
    )
    if not result.feasible:
        raise NoFeasiblePlatform(result.diagnostic or "infeasible")
    return materialize(graph, fragments, result, breakdown, cards, platforms)
