"""Canonical NDJSON record codec.

One record per line, UTF-8, no whitespace between tokens. The same
encoding is used on the TCP wire, in the HTTP bodies, and in the log
files, so byte-identical golden files can be shared across all three.

Canonical form rules:
  - object keys keep their build order (records are built key-ordered),
  - floats with an exact integer value are written as integers
    ("ts":3600, not "ts":3600.0),
  - other floats use repr (shortest round-trip form),
  - no NaN/Infinity (rejected on encode).
"""
from __future__ import annotations

import json
import math
from datetime import datetime, timedelta, timezone
from typing import Any


class WireError(ValueError):
    """Malformed record: bad JSON, wrong shape, or non-finite number."""


def _canonical(value: Any) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise WireError("non-finite number in record")
        if value == int(value) and abs(value) < 2**53:
            return int(value)
        return value
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def encode(record: dict[str, Any]) -> str:
    """Serialize one record to its canonical single-line form (no newline)."""
    return json.dumps(_canonical(record), ensure_ascii=True, separators=(",", ":"))


def encode_line(record: dict[str, Any]) -> str:
    return encode(record) + "\n"


def decode(line: str) -> dict[str, Any]:
    """Parse one record line. Raises WireError on anything malformed."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"bad record line: {exc}") from None
    if not isinstance(obj, dict):
        raise WireError("record is not an object")
    return obj


# Wall-clock strings are derived from simulated time against a fixed epoch
# so that two runs of the same manifest produce byte-identical records.

def parse_epoch(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def wall_time(epoch: datetime, sim_time: float) -> str:
    """ISO-8601 UTC string for epoch + sim_time seconds, 'Z' suffix.

    Seconds precision for integral instants, milliseconds otherwise.
    """
    t = epoch + timedelta(seconds=sim_time)
    if t.microsecond == 0:
        return t.strftime("%Y-%m-%dT%H:%M:%SZ")
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"
