"""Exception hierarchy shared by all engine modules.

Every error carries a stable ``code`` string (used verbatim in CLI output)
so failures are machine-matchable regardless of message wording.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for user-facing engine errors."""

    code = "EngineError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)

    def __str__(self) -> str:
        base = super().__str__()
        return f"{self.code}: {base}" if base and base != self.code else self.code


def _make(name: str, code: str | None = None, doc: str = "") -> type:
    cls = type(name, (EngineError,), {"code": code or name, "__doc__": doc or name})
    return cls


# dataflow model / parsing
MalformedJson = _make("MalformedJson", doc="Dataflow document is not valid JSON or misses required keys.")
UnknownOperator = _make("UnknownOperator")
DuplicateNodeId = _make("DuplicateNodeId")
DanglingConnector = _make("DanglingConnector", doc="Connector name produced by more than one node.")
MissingBinding = _make("MissingBinding")
UnknownGid = _make("UnknownGid")
SchemaMismatch = _make("SchemaMismatch")
MissingParam = _make("MissingParam")
InvalidGraph = _make("InvalidGraph")

# predicate language (codes follow the published operation contract)
PredicateSyntaxError = _make("PredicateSyntaxError", code="SyntaxError")
UnknownColumn = _make("UnknownColumn")
PredicateTypeError = _make("PredicateTypeError", code="TypeError")

# catalog
UnknownPlatform = _make("UnknownPlatform")
InvalidMetadata = _make("InvalidMetadata")
EmptyChangeSet = _make("EmptyChangeSet")
NotAModel = _make("NotAModel")
NotADataset = _make("NotADataset")
IllegalTransition = _make("IllegalTransition")
DuplicateId = _make("DuplicateId")
IncompleteBandwidthMatrix = _make("IncompleteBandwidthMatrix")

# provenance
UnknownDataflow = _make("UnknownDataflow")
UnknownNode = _make("UnknownNode")

# knowledge graph
UnsafeRule = _make("UnsafeRule")
DepthExceeded = _make("DepthExceeded")
UnknownPredicate = _make("UnknownPredicate")

# optimizer / scheduler
MissingSourceSize = _make("MissingSourceSize")
UnplacedInput = _make("UnplacedInput")
NoFeasiblePlatform = _make("NoFeasiblePlatform")
InfeasibleAssignment = _make("InfeasibleAssignment")

# cli / config
InvalidConfig = _make("InvalidConfig")
UsageError = _make("UsageError")

# executor
MissingInput = _make("MissingInput")
FunctionFailure = _make("FunctionFailure")
SchemaViolation = _make("SchemaViolation")
CastError = _make("CastError")
UnknownKey = _make("UnknownKey")
SingularSystem = _make("SingularSystem")
