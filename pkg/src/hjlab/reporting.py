"""Small shared report object returned by every check_* operation.

Checks never raise on a failed inequality; they return a CheckReport with
`passed` set and enough measured numbers to reconstruct the verdict.
"""

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckReport:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "details": _plain(self.details),
            "rows": _plain(self.rows),
            "notes": self.notes,
        }

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}"


def _plain(obj: Any):
    # make numpy scalars/arrays JSON friendly
    import numpy as np

    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
