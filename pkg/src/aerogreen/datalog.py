"""Append-only run log, one canonical JSON record per line.

Files rotate per simulated day (`ghlog-<day>.ndjson`). Records carry a
gap-free global sequence number so replay can prove completeness; a
partial trailing record (interrupted run) is dropped with a warning,
while damage anywhere else is a hard error.

Record shape: {"seq": n, "ts": sim_seconds, "kind": k, "body": {...}}
with kind one of reading | actuation | alert | command | energy | event.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Any, Iterable, Iterator

from . import wire

log = logging.getLogger(__name__)

KINDS = ("reading", "actuation", "alert", "command", "energy", "event")

_FILE_RE = re.compile(r"^ghlog-(\d+)\.ndjson$")

_READING_QUANTITIES = {"temp", "rh", "lux", "spectrum", "volume", "flow", "disease"}
_ACTUATION_QUANTITIES = {"actuators", "pumps"}


class ReplayError(Exception):
    """Log damaged before the tail; carries the last good sequence number."""

    def __init__(self, message: str, last_good_seq: int) -> None:
        super().__init__(message)
        self.last_good_seq = last_good_seq


def kind_for_topic(topic: str) -> str:
    """Log taxonomy for published frames, derived from the topic."""
    _, subject, quantity = topic.split("/", 2)
    if subject == "alert":
        return "alert"
    if subject == "config":
        return "event"
    if quantity.startswith("energy"):
        return "energy"
    if quantity in _ACTUATION_QUANTITIES:
        return "actuation"
    if quantity in _READING_QUANTITIES:
        return "reading"
    return "event"


class DataLog:
    """Single-writer appender with per-simulated-day rotation."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._seq = 0
        self._day: int | None = None
        self._fh = None

    def append(self, sim_time: float, kind: str, body: dict[str, Any]) -> int:
        if kind not in KINDS:
            raise ValueError(f"unknown log kind {kind!r}")
        day = int(sim_time // 86400)
        if self._fh is None or day != self._day:
            self._rotate(day)
        record = {"seq": self._seq, "ts": sim_time, "kind": kind, "body": body}
        self._fh.write(wire.encode_line(record))
        seq = self._seq
        self._seq += 1
        return seq

    def _rotate(self, day: int) -> None:
        if self._fh is not None:
            self._fh.close()
        path = self.directory / f"ghlog-{day}.ndjson"
        self._fh = path.open("a", encoding="utf-8")
        self._day = day

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "DataLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def log_files(directory: str | Path) -> list[Path]:
    """Rotation files in simulated-day order."""
    out = []
    for path in Path(directory).iterdir():
        m = _FILE_RE.match(path.name)
        if m:
            out.append((int(m.group(1)), path))
    return [p for _, p in sorted(out)]


def replay(source: str | Path) -> Iterator[dict[str, Any]]:
    """Yield records in sequence order from a log file or directory.

    A malformed final line is treated as an interrupted write and
    skipped with a warning. Malformed or out-of-sequence records
    anywhere earlier raise ReplayError naming the last good seq.
    """
    source = Path(source)
    files = log_files(source) if source.is_dir() else [source]
    lines: list[tuple[Path, str]] = []
    for path in files:
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    lines.append((path, line))
    expected = 0
    for i, (path, line) in enumerate(lines):
        try:
            record = wire.decode(line)
            seq = record["seq"]
        except (wire.WireError, KeyError):
            if i == len(lines) - 1:
                log.warning("dropping truncated trailing record in %s", path.name)
                return
            raise ReplayError(
                f"corrupt record in {path.name}", last_good_seq=expected - 1
            ) from None
        if seq != expected:
            raise ReplayError(
                f"sequence gap in {path.name}: expected {expected}, found {seq}",
                last_good_seq=expected - 1,
            )
        expected += 1
        yield record


def _snapshots(records: Iterable[dict[str, Any]]) -> list[tuple[float, dict[str, float], float]]:
    out = []
    for rec in records:
        if rec.get("kind") != "energy":
            continue
        body = rec.get("body", {})
        if "by_device" not in body:
            continue  # published total frames share the kind; skip them
        out.append((float(rec["ts"]), body["by_device"], float(body["total"])))
    return out


def energy_report(
    source: str | Path | Iterable[dict[str, Any]],
    t_from: float,
    t_to: float,
) -> dict[str, Any]:
    """kWh per device consumed in [t_from, t_to], from energy snapshots.

    Values between snapshots interpolate linearly; a range outside the
    snapshot extent is clamped to it (flagged in the result). The total
    is the fixed-order sum of the per-device figures.
    """
    if t_from > t_to:
        raise ValueError("t_from must be <= t_to")
    if isinstance(source, (str, Path)):
        source = replay(source)
    snaps = _snapshots(source)
    if not snaps:
        raise ValueError("log contains no energy snapshots")
    lo, hi = snaps[0][0], snaps[-1][0]
    clamped = t_from < lo or t_to > hi
    a = min(max(t_from, lo), hi)
    b = min(max(t_to, lo), hi)

    def value_at(t: float, device: str) -> float:
        prev = snaps[0]
        for snap in snaps:
            if snap[0] == t:
                return snap[1][device]
            if snap[0] > t:
                t0, v0 = prev[0], prev[1][device]
                t1, v1 = snap[0], snap[1][device]
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            prev = snap
        return snaps[-1][1][device]

    devices = list(snaps[0][1].keys())
    by_device = {d: value_at(b, d) - value_at(a, d) for d in devices}
    return {
        "from": t_from,
        "to": t_to,
        "by_device": by_device,
        "total": sum(by_device.values()),
        "clamped": clamped,
    }
