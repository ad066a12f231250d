"""Classified findings shared by the parsers, the validator and the inference loop."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable


class ErrorCategory(str, Enum):
    # Declaration order is the reporting order.
    INVALID_FORMAT = "InvalidFormat"
    UNKNOWN_FUNCTION = "UnknownFunction"
    INVALID_PARAMETER = "InvalidParameter"
    CONNECTION_ERROR = "ConnectionError"
    TOPOLOGICAL_GAP = "TopologicalGap"
    CYCLE_OR_UNREACHABLE = "CycleOrUnreachable"

    @property
    def rank(self) -> int:
        return list(ErrorCategory).index(self)


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Location:
    node: str | None = None
    port: str | None = None
    param: str | None = None
    line: int | None = None
    column: int | None = None

    def sort_key(self) -> tuple:
        return (
            self.node or "",
            self.port or "",
            self.param or "",
            self.line or 0,
            self.column or 0,
        )

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, doc: dict[str, Any] | None) -> Location | None:
        return cls(**doc) if doc else None

    def __str__(self) -> str:
        parts = []
        if self.node:
            ref = self.node
            if self.port:
                ref += f".{self.port}"
            if self.param:
                ref += f"[{self.param}]"
            parts.append(ref)
        if self.line is not None:
            parts.append(f"{self.line}:{self.column or 1}")
        return " @ ".join(parts)


@dataclass(frozen=True)
class Diagnostic:
    category: ErrorCategory
    message: str
    location: Location | None = None
    severity: Severity = Severity.ERROR

    def __post_init__(self) -> None:
        if not self.message:
            raise ValueError("diagnostic message must be nonempty")

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def sort_key(self) -> tuple:
        loc = self.location.sort_key() if self.location else ()
        return (self.category.rank, loc, self.severity.value, self.message)

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category.value,
            "severity": self.severity.value,
            "location": self.location.to_dict() if self.location else None,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> Diagnostic:
        return cls(
            ErrorCategory(doc["category"]),
            doc["message"],
            Location.from_dict(doc.get("location")),
            Severity(doc.get("severity", "error")),
        )

    def __str__(self) -> str:
        where = f" at {self.location}" if self.location and str(self.location) else ""
        return f"{self.severity.value}: {self.category.value}{where}: {self.message}"


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=Diagnostic.sort_key)


def is_executable(diags: Iterable[Diagnostic]) -> bool:
    """True iff no diagnostic has error severity."""
    return not any(d.is_error for d in diags)
