"""Dataset schemas: ordered, typed attribute lists.

Attribute order is significant (positional I/O); names are unique and
nonempty. Supported types: int64, float64, string, bool, timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from ..errors import InvalidMetadata

ATTRIBUTE_TYPES = ("int64", "float64", "string", "bool", "timestamp")

# fixed widths used for transfer-byte estimation; strings use an observed
# or default mean width (see scheduler.row_width)
TYPE_WIDTH_BYTES = {"int64": 8, "float64": 8, "timestamp": 8, "bool": 1}
DEFAULT_STRING_WIDTH = 16.0


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        seen = set()
        for attr in self.attributes:
            if not attr.name:
                raise InvalidMetadata("schema attribute with empty name")
            if attr.name in seen:
                raise InvalidMetadata(f"duplicate schema attribute {attr.name!r}")
            if attr.type not in ATTRIBUTE_TYPES:
                raise InvalidMetadata(f"unknown attribute type {attr.type!r} for {attr.name!r}")
            seen.add(attr.name)

    @staticmethod
    def of(*pairs: tuple[str, str]) -> "Schema":
        return Schema(tuple(Attribute(n, t) for n, t in pairs))

    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def has(self, name: str) -> bool:
        return any(a.name == name for a in self.attributes)

    def type_of(self, name: str) -> str:
        for a in self.attributes:
            if a.name == name:
                return a.type
        raise KeyError(name)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(name)

    def to_json(self) -> list[list[str]]:
        return [[a.name, a.type] for a in self.attributes]

    @staticmethod
    def from_json(obj) -> "Schema":
        return Schema(tuple(Attribute(n, t) for n, t in obj))


def parse_value(text: str, attr_type: str):
    """Parse one CSV cell into its Python value. Strict: raises ValueError."""
    if attr_type == "string":
        return text
    if attr_type == "int64":
        return int(text)
    if attr_type == "float64":
        return float(text)
    if attr_type == "bool":
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"not a bool: {text!r}")
    if attr_type == "timestamp":
        return datetime.fromisoformat(text)
    raise ValueError(f"unknown type {attr_type!r}")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def value_to_json(value):
    if isinstance(value, datetime):
        return {"$ts": value.isoformat()}
    return value


def value_from_json(value):
    if isinstance(value, dict) and "$ts" in value:
        return datetime.fromisoformat(value["$ts"])
    return value


def row_width_bytes(schema: Schema, string_widths: dict | None = None) -> float:
    """Estimated bytes per row: fixed widths per type, strings at their
    observed mean width when known."""
    total = 0.0
    for attr in schema.attributes:
        if attr.type == "string":
            total += (string_widths or {}).get(attr.name, DEFAULT_STRING_WIDTH)
        else:
            total += TYPE_WIDTH_BYTES[attr.type]
    return total
