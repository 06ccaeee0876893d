"""GID-indexed artifact registry with platforms, versioning, and buckets.

All state lives in one `LogStore` file: artifact records, the platform
registry, the bandwidth matrix, access counters, and (written by the
provenance layer) run and lineage records. A GID is assigned from a
persisted sequence and never reused, even after deletion.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields as dc_fields
from datetime import datetime, timezone

from .errors import (
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
from .model.schema import Schema
from .store import LogStore

ARTIFACT_KINDS = ("dataset", "model", "function", "dataflow")
BUCKETS = ("landing", "staging", "curated")
EXECUTOR_KINDS = ("single", "partitioned")

_GID_PREFIX = {"dataset": "ds", "model": "md", "function": "fn", "dataflow": "df", "run": "r"}

# fields of a ChangeSet that force a fresh model rather than a version bump
NEW_MODEL_FLAGS = (
    "algorithm_changed",
    "architecture_changed",
    "problem_definition_changed",
    "domain_changed",
)
NEW_VERSION_FLAGS = (
    "hyperparameters_changed",
    "training_data_changed",
    "training_process_changed",
    "minor_refactor",
)
CHANGE_FLAGS = NEW_VERSION_FLAGS + NEW_MODEL_FLAGS


@dataclass(frozen=True)
class ChangeSet:
    hyperparameters_changed: bool = False
    training_data_changed: bool = False
    training_process_changed: bool = False
    minor_refactor: bool = False
    algorithm_changed: bool = False
    architecture_changed: bool = False
    problem_definition_changed: bool = False
    domain_changed: bool = False

    def any_set(self) -> bool:
        return any(getattr(self, f.name) for f in dc_fields(self))


def classify(change: ChangeSet) -> str:
    """NewModel when any inductive-bias-level flag is set, else NewVersion."""
    if not change.any_set():
        raise EmptyChangeSet("no change flags set")
    if any(getattr(change, name) for name in NEW_MODEL_FLAGS):
        return "NewModel"
    return "NewVersion"


@dataclass(frozen=True)
class PlatformDescriptor:
    platform_id: str
    cpu_cores: int = 1
    gpus: int = 0
    relative_speed: float = 1.0
    storage_root: str = "."
    executor_kind: str = "single"

    def __post_init__(self):
        if self.relative_speed <= 0:
            raise InvalidMetadata("relative_speed must be positive")
        if self.executor_kind not in EXECUTOR_KINDS:
            raise InvalidMetadata(f"executor_kind must be one of {EXECUTOR_KINDS}")

    def to_json(self) -> dict:
        return {
            "platform_id": self.platform_id,
            "cpu_cores": self.cpu_cores,
            "gpus": self.gpus,
            "relative_speed": self.relative_speed,
            "storage_root": self.storage_root,
            "executor_kind": self.executor_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PlatformDescriptor":
        return cls(**obj)


@dataclass
class BandwidthMatrix:
    """MB/s for each ordered platform pair; self-transfer is free."""

    entries: dict = field(default_factory=dict)  # (src, dst) -> MB/s

    def get(self, src: str, dst: str) -> float:
        if src == dst:
            return math.inf
        value = self.entries.get((src, dst))
        if value is None:
            raise IncompleteBandwidthMatrix(f"no bandwidth for {src!r} -> {dst!r}")
        return value

    def covers(self, platform_ids: list[str]) -> bool:
        for a in platform_ids:
            for b in platform_ids:
                if a != b and (a, b) not in self.entries:
                    return False
        return True


@dataclass
class ArtifactRecord:
    gid: str
    kind: str
    name: str
    domain: str | None
    version: int
    version_of: str | None
    created_at: str
    metadata: dict
    locations: list  # [{"platform_id", "path", "replica": bool}]
    bucket: str | None = None  # datasets only

    def to_json(self) -> dict:
        return {
            "type": "artifact",
            "key": self.gid,
            "gid": self.gid,
            "kind": self.kind,
            "name": self.name,
            "domain": self.domain,
            "version": self.version,
            "version_of": self.version_of,
            "created_at": self.created_at,
            "metadata": self.metadata,
            "locations": self.locations,
            "bucket": self.bucket,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ArtifactRecord":
        return cls(
            gid=obj["gid"],
            kind=obj["kind"],
            name=obj["name"],
            domain=obj.get("domain"),
            version=obj["version"],
            version_of=obj.get("version_of"),
            created_at=obj["created_at"],
            metadata=obj.get("metadata") or {},
            locations=obj.get("locations") or [],
            bucket=obj.get("bucket"),
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class Catalog:
    def __init__(self, path: str, default_platform: str = "local", replication_threshold: int = 3):
        self.store = LogStore(path)
        self.default_platform = default_platform
        self.replication_threshold = replication_threshold

    # -- gid sequence ----------------------------------------------------

    def _next_gid(self, kind: str) -> str:
        seq = self.store.get("seq", "gid")
        n = (seq["value"] if seq else 0) + 1
        self.store.put({"type": "seq", "key": "gid", "value": n})
        return f"{_GID_PREFIX[kind]}-{n:06d}"

    # -- platforms -------------------------------------------------------

    def register_platform(self, descriptor: PlatformDescriptor) -> str:
        if self.store.get("platform", descriptor.platform_id) is not None:
            raise DuplicateId(f"platform {descriptor.platform_id!r} already registered")
        rec = descriptor.to_json()
        rec.update({"type": "platform", "key": descriptor.platform_id})
        self.store.put(rec)
        return descriptor.platform_id

    def platforms(self) -> list[PlatformDescriptor]:
        out = []
        for rec in self.store.records("platform"):
            obj = {k: v for k, v in rec.items() if k not in ("type", "key")}
            out.append(PlatformDescriptor.from_json(obj))
        return out

    def platform(self, platform_id: str) -> PlatformDescriptor:
        rec = self.store.get("platform", platform_id)
        if rec is None:
            raise UnknownPlatform(platform_id)
        obj = {k: v for k, v in rec.items() if k not in ("type", "key")}
        return PlatformDescriptor.from_json(obj)

    def set_bandwidth(self, src: str, dst: str, mbps: float):
        self.platform(src)
        self.platform(dst)
        if mbps <= 0:
            raise InvalidMetadata("bandwidth must be positive MB/s")
        self.store.put({"type": "bandwidth", "key": f"{src}->{dst}", "src": src, "dst": dst, "mbps": mbps})

    def bandwidth(self) -> BandwidthMatrix:
        entries = {}
        for rec in self.store.records("bandwidth"):
            entries[(rec["src"], rec["dst"])] = rec["mbps"]
        return BandwidthMatrix(entries)

    def require_complete_bandwidth(self):
        ids = [p.platform_id for p in self.platforms()]
        matrix = self.bandwidth()
        for a in ids:
            for b in ids:
                if a != b and (a, b) not in matrix.entries:
                    raise IncompleteBandwidthMatrix(f"no bandwidth for {a!r} -> {b!r}")
        return matrix

    # -- artifacts -------------------------------------------------------

    def register_artifact(
        self,
        kind: str,
        name: str,
        domain: str | None = None,
        metadata: dict | None = None,
        locations: list | None = None,
        bucket: str | None = None,
        version_of: str | None = None,
        created_at: str | None = None,
    ) -> str:
        if kind not in ARTIFACT_KINDS:
            raise InvalidMetadata(f"kind must be one of {ARTIFACT_KINDS}")
        metadata = dict(metadata or {})
        locations = [dict(loc) for loc in (locations or [])]

        for loc in locations:
            if "platform_id" not in loc or "path" not in loc:
                raise InvalidMetadata("location needs platform_id and path")
            if self.store.get("platform", loc["platform_id"]) is None:
                raise UnknownPlatform(loc["platform_id"])
            loc.setdefault("replica", False)

        if kind == "dataset":
            if "schema" not in metadata:
                raise InvalidMetadata("schema")
            if "format" not in metadata:
                raise InvalidMetadata("format")
            if not locations:
                raise InvalidMetadata("location")
            Schema.from_json(metadata["schema"])  # validate shape
            if bucket is None:
                bucket = "landing"
            if bucket not in BUCKETS:
                raise InvalidMetadata(f"bucket must be one of {BUCKETS}")
        elif kind == "model":
            for key in ("task", "learning_scope"):
                if key not in metadata:
                    raise InvalidMetadata(key)
            bucket = None
        elif kind == "function":
            # functions are shareable across domains, so they carry none
            domain = None
            bucket = None
        else:
            bucket = None

        version = 1
        if version_of is not None:
            parent = self.get(version_of)
            if parent is None:
                raise UnknownGid(version_of)
            if parent.kind != kind:
                raise InvalidMetadata(f"version_of references a {parent.kind}, not a {kind}")
            version = parent.version + 1

        gid = self._next_gid(kind)
        if kind == "dataflow" and isinstance(metadata.get("document"), list) and metadata["document"]:
            # the stored document must carry the catalog-issued GID
            document = json.loads(json.dumps(metadata["document"]))
            if isinstance(document[0], dict):
                document[0]["GID"] = gid
            metadata["document"] = document
        record = ArtifactRecord(
            gid=gid,
            kind=kind,
            name=name,
            domain=domain,
            version=version,
            version_of=version_of,
            created_at=created_at or _now(),
            metadata=metadata,
            locations=locations,
            bucket=bucket,
        )
        self.store.put(record.to_json())
        if kind == "dataflow":
            # prospective provenance stub: intent to run, before any run exists
            self.store.put(
                {
                    "type": "prospective",
                    "key": gid,
                    "dataflow": gid,
                    "registered_at": record.created_at,
                }
            )
        return gid

    def get(self, gid: str) -> ArtifactRecord | None:
        rec = self.store.get("artifact", gid)
        return ArtifactRecord.from_json(rec) if rec else None

    def require(self, gid: str) -> ArtifactRecord:
        record = self.get(gid)
        if record is None:
            raise UnknownGid(gid)
        return record

    def artifacts(self, kind: str | None = None) -> list[ArtifactRecord]:
        out = [ArtifactRecord.from_json(r) for r in self.store.records("artifact")]
        if kind is not None:
            out = [r for r in out if r.kind == kind]
        return out

    def delete(self, gid: str):
        self.require(gid)
        self.store.delete("artifact", gid)

    def update_artifact(self, record: ArtifactRecord):
        self.store.put(record.to_json())

    # -- versioning ------------------------------------------------------

    def classify_change(self, gid: str, change: ChangeSet) -> str:
        record = self.require(gid)
        if record.kind != "model":
            raise NotAModel(f"{gid} is a {record.kind}")
        return classify(change)

    def version_chain(self, gid: str) -> list[str]:
        chain = [gid]
        record = self.require(gid)
        seen = {gid}
        while record.version_of:
            nxt = record.version_of
            if nxt in seen:  # defensive: the chain is acyclic by construction
                break
            chain.append(nxt)
            seen.add(nxt)
            record = self.require(nxt)
        return chain

    # -- buckets ---------------------------------------------------------

    def promote_dataset(self, gid: str, to: str) -> ArtifactRecord:
        record = self.require(gid)
        if record.kind != "dataset":
            raise NotADataset(f"{gid} is a {record.kind}")
        if to not in BUCKETS:
            raise IllegalTransition(f"unknown bucket {to!r}")
        allowed = {"landing": "staging", "staging": "curated"}
        if allowed.get(record.bucket) != to:
            raise IllegalTransition(f"{record.bucket} -> {to}")
        previous = record.bucket
        record.bucket = to
        self.store.put(record.to_json())
        self.store.put(
            {
                "type": "event",
                "key": f"promotion:{gid}:{to}",
                "event": "promotion",
                "gid": gid,
                "from": previous,
                "to": to,
                "at": _now(),
            }
        )
        return record

    # -- model selection -------------------------------------------------

    def select_models(self, task: str, domain: str, input_schema: Schema, k: int) -> list[tuple[str, float]]:
        """Rank models by metadata similarity with the request.

        Score is the unweighted mean of three components in [0, 1]:
        exact domain match, exact task match, and Jaccard overlap of
        attribute names between the request schema and the schema of the
        model's training dataset.
        """
        if k < 1:
            raise InvalidMetadata("k must be >= 1")
        request_names = set(input_schema.names())
        scored = []
        for record in self.artifacts("model"):
            domain_match = 1.0 if record.domain == domain else 0.0
            task_match = 1.0 if record.metadata.get("task") == task else 0.0
            overlap = 0.0
            train_gid = record.metadata.get("training_dataset")
            if train_gid:
                train = self.get(train_gid)
                if train is not None and "schema" in train.metadata:
                    train_names = set(Schema.from_json(train.metadata["schema"]).names())
                    union = request_names | train_names
                    if union:
                        overlap = len(request_names & train_names) / len(union)
            score = (domain_match + task_match + overlap) / 3.0
            scored.append((record.gid, score, record.created_at))
        scored.sort(key=lambda t: (-t[1], _reverse_text(t[2]), t[0]))
        return [(gid, score) for gid, score, _ in scored[:k]]

    # -- replication -----------------------------------------------------

    def note_access(self, gid: str, from_platform: str) -> bool:
        """Count a read of `gid` issued from `from_platform`; create a
        replica there once remote accesses exceed the threshold. Returns
        True when this call created a replica."""
        record = self.require(gid)
        if record.kind != "dataset":
            return False
        local = {loc["platform_id"] for loc in record.locations}
        if from_platform in local:
            return False
        key = f"{gid}:{from_platform}"
        counter = self.store.get("access", key)
        count = (counter["count"] if counter else 0) + 1
        self.store.put({"type": "access", "key": key, "gid": gid, "platform_id": from_platform, "count": count})
        if count > self.replication_threshold:
            primary = record.locations[0]["path"]
            base = os.path.basename(str(primary).rstrip("/")) or record.gid
            record.locations.append(
                {"platform_id": from_platform, "path": f"replicas/{record.gid}/{base}", "replica": True}
            )
            self.store.put(record.to_json())
            self.store.put({"type": "access", "key": key, "gid": gid, "platform_id": from_platform, "count": 0})
            self.store.put(
                {
                    "type": "event",
                    "key": f"replication:{gid}:{from_platform}",
                    "event": "replication",
                    "gid": gid,
                    "platform_id": from_platform,
                    "at": _now(),
                }
            )
            return True
        return False

    def decay_access(self, amount: int = 1):
        """Age all access counters; evict replicas whose counter
        reached zero (the periodic access-pattern analysis)."""
        for rec in list(self.store.records("access")):
            new_count = max(0, rec["count"] - amount)
            if new_count != rec["count"]:
                updated = dict(rec)
                updated["count"] = new_count
                self.store.put(updated)
            if new_count == 0:
                record = self.get(rec["gid"])
                if record is None:
                    continue
                kept = [
                    loc
                    for loc in record.locations
                    if not (loc.get("replica") and loc["platform_id"] == rec["platform_id"])
                ]
                if len(kept) != len(record.locations):
                    record.locations = kept
                    self.store.put(record.to_json())

    # -- misc ------------------------------------------------------------

    def sniff_schema(self, path: str) -> Schema | None:
        """Infer a schema for a literal path under the default platform's
        storage root (or an absolute path). None when unreadable."""
        try:
            root = self.platform(self.default_platform).storage_root
        except UnknownPlatform:
            root = "."
        candidate = path if os.path.isabs(path) else os.path.join(root, path)
        if not os.path.exists(candidate):
            return None
        from .executor.dataset import infer_schema  # deferred: executor imports catalog types

        try:
            return infer_schema(candidate)
        except Exception:
            return None

    def compact(self):
        self.store.compact()

    def dump(self) -> str:
        return self.store.dump()


def _reverse_text(text: str) -> tuple:
    """Sort key that orders text descending inside an ascending sort."""
    return tuple(-ord(c) for c in text)
