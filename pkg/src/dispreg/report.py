"""Canonical report serialization.

Reports are JSON with sorted keys and two-space indentation; float values
keep their shortest round-trip representation, so a report produced from
identical computations is identical byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

SCHEMA = "dispreg-report/1"

__all__ = ["SCHEMA", "canonical_json", "write_report", "read_report"]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(payload: dict) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_report(payload: dict, path) -> None:
    body = dict(payload)
    body.setdefault("schema", SCHEMA)
    Path(path).write_text(canonical_json(body), encoding="utf-8")


def read_report(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None
    if not isinstance(payload, dict) or "schema" not in payload:
        raise DataError(f"{path} is not a report file (missing schema stamp)")
    return payload
