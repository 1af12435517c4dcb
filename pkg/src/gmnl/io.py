"""Reading and writing the shared JSON objects, dispatched on their ``kind`` field."""

from __future__ import annotations

import json
from pathlib import Path

from .expressions import BellExpression, ComposedInequality
from .oracle import VertexSet
from .scenario import Behavior, DensityMatrix, MeasurementSet, PureState

READERS = {
    "behavior": Behavior.from_dict,
    "bell_expression": BellExpression.from_dict,
    "composed_inequality": ComposedInequality.from_dict,
    "pure_state": PureState.from_dict,
    "density_matrix": DensityMatrix.from_dict,
    "measurement_set": MeasurementSet.from_dict,
    "ns_vertices": VertexSet.from_dict,
}


class FormatError(ValueError):
    pass


def from_dict(data: dict):
    if not isinstance(data, dict) or "kind" not in data:
        raise FormatError("JSON object without a 'kind' field")
    try:
        reader = READERS[data["kind"]]
    except KeyError:
        raise FormatError(f"unknown kind {data['kind']!r}") from None
    try:
        return reader(data)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed {data['kind']}: {exc}") from exc


def load(path: str | Path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return from_dict(data)


def dump(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
