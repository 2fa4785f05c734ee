"""Structured metric results and their JSON encoding.

Non-finite floats have no JSON literal, so ``+inf``/``-inf`` are written as
the strings ``"+inf"``/``"-inf"`` and NaN (an undefined value) as ``null``.
Keys are sorted so identical results always serialise to identical bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, MetricReport):
        return to_jsonable(obj.to_dict())
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj: Any, pretty: bool = False) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2 if pretty else None,
                      allow_nan=False)


@dataclass
class MetricReport:
    kind: str
    results: Dict[str, Any]
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": self.params, "results": self.results}

    def to_json(self, pretty: bool = False) -> str:
        return dumps(self, pretty)
