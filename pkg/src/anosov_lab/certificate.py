"""Machine-checkable verdicts shared by the certifying routines."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

SCHEMA_VERSION = "1.0"

CERTIFIED = "certified"
FALSIFIED = "falsified"
INCONCLUSIVE = "inconclusive"
STATUSES = (CERTIFIED, FALSIFIED, INCONCLUSIVE)


def _clean(value: Any) -> Any:
    """Make numpy scalars and non-finite floats JSON friendly."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        try:
            value = value.item()
        except (ValueError, AttributeError):
            value = value.tolist()
            return _clean(value)
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


@dataclass
class Certificate:
    """Verdict plus the constants and witnesses that justify it.

    ``constants`` holds any of ``lambda``, ``c``, ``eta``, ``alpha``,
    ``min_angle`` and ``C``; ``witnesses`` lists concrete failing (or
    tightest) samples.
    """

    kind: str
    status: str
    constants: dict[str, Any] = field(default_factory=dict)
    residuals: dict[str, Any] = field(default_factory=dict)
    witnesses: list[dict[str, Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    failure: str | None = None
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    @property
    def falsified(self) -> bool:
        return self.status == FALSIFIED

    def to_dict(self) -> dict[str, Any]:
        return _clean(
            {
                "schema_version": self.schema_version,
                "kind": self.kind,
                "status": self.status,
                "constants": self.constants,
                "residuals": self.residuals,
                "witnesses": self.witnesses,
                "notes": self.notes,
                "failure": self.failure,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Certificate":
        return cls(
            kind=data["kind"],
            status=data["status"],
            constants=dict(data.get("constants", {})),
            residuals=dict(data.get("residuals", {})),
            witnesses=list(data.get("witnesses", [])),
            notes=list(data.get("notes", [])),
            failure=data.get("failure"),
            schema_version=data.get("schema_version", SCHEMA_VERSION),
        )
