"""Topic broker: retained last values, live fan-out, history, commands.

Topics follow gh/<subject>/<quantity> with subjects zone<k>, box<k>,
tank<k>, plant<k>, config, and alert. Subscription patterns may replace
whole segments with `*`.

One lock serializes publishes; retained update, history append, datalog
forward, and subscriber fan-out all happen inside it, which is what
makes the snapshot-then-live handover gap-free and duplicate-free and
keeps replay order identical to delivery order. Subscribers buffer up
to `queue_limit` frames; one that falls further behind is cut loose
with an overflow notice rather than stalling the broker.
"""
from __future__ import annotations

import re
import threading
from collections import deque
from typing import Any, Callable, Iterable

from . import wire
from .datalog import DataLog, kind_for_topic

_SUBJECT_RE = re.compile(r"^(zone\d+|box\d+|tank\d+|plant\d+|config|alert)$")
_QUANTITY_RE = re.compile(r"^[a-z][a-z0-9_]*$")

QUEUE_LIMIT = 1024

OVERFLOW_NOTICE = {"t": "err", "reason": "overflow"}


class TelemetryError(ValueError):
    """Malformed topic, pattern, or frame."""


def topic_valid(topic: str) -> bool:
    parts = topic.split("/")
    return (
        len(parts) == 3
        and parts[0] == "gh"
        and bool(_SUBJECT_RE.match(parts[1]))
        and bool(_QUANTITY_RE.match(parts[2]))
    )


def pattern_valid(pattern: str) -> bool:
    parts = pattern.split("/")
    if len(parts) != 3:
        return False
    head, subject, quantity = parts
    if head not in ("gh", "*"):
        return False
    if subject != "*" and not _SUBJECT_RE.match(subject):
        return False
    if quantity != "*" and not _QUANTITY_RE.match(quantity):
        return False
    return True


def topic_matches(pattern: str, topic: str) -> bool:
    """`*` matches exactly one whole segment."""
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    if len(p_parts) != len(t_parts):
        return False
    return all(p == "*" or p == t for p, t in zip(p_parts, t_parts))


class Subscription:
    """Bounded frame queue handed to one subscriber."""

    def __init__(self, pattern: str, limit: int = QUEUE_LIMIT) -> None:
        self.pattern = pattern
        self.limit = limit
        self._queue: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self.overflowed = False

    def _offer(self, frame: dict[str, Any]) -> None:
        # Called under the broker lock, in publish order.
        with self._cond:
            if self._closed:
                return
            if len(self._queue) >= self.limit:
                self._queue.clear()
                self._queue.append(dict(OVERFLOW_NOTICE))
                self.overflowed = True
                self._closed = True
            else:
                self._queue.append(frame)
            self._cond.notify()

    def get(self, timeout: float | None = None) -> dict[str, Any] | None:
        """Next frame in delivery order; None once closed and drained."""
        with self._cond:
            while not self._queue:
                if self._closed:
                    return None
                if not self._cond.wait(timeout=timeout):
                    return None
            return self._queue.popleft()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed


class Broker:
    def __init__(self, datalog: DataLog | None = None,
                 wall_epoch: str = "2021-06-01T00:00:00Z") -> None:
        self._lock = threading.Lock()
        self._retained: dict[str, dict[str, Any]] = {}
        self._history: dict[str, list[dict[str, Any]]] = {}
        self._subs: list[Subscription] = []
        self._datalog = datalog
        self._epoch = wire.parse_epoch(wall_epoch)
        self.rejected_frames = 0
        # Operator command plumbing: multi-producer queue toward the
        # engine tick, plus completion events for synchronous callers.
        self._commands: deque = deque()
        self._results: dict[str, dict[str, Any]] = {}
        self._done: dict[str, threading.Event] = {}
        self._resolve_hooks: dict[str, Callable[[dict[str, Any]], None]] = {}

    # ---- publishing ------------------------------------------------------

    def make_frame(self, topic: str, sim_time: float, value: Any, unit: str) -> dict[str, Any]:
        return {
            "t": "pub",
            "topic": topic,
            "ts": sim_time,
            "wall": wire.wall_time(self._epoch, sim_time),
            "v": value,
            "u": unit,
        }

    def publish(self, topic: str, sim_time: float, value: Any, unit: str) -> dict[str, Any]:
        if not topic_valid(topic):
            with self._lock:
                self.rejected_frames += 1
            raise TelemetryError(f"malformed topic {topic!r}")
        frame = self.make_frame(topic, sim_time, value, unit)
        with self._lock:
            self._retained[topic] = frame
            self._history.setdefault(topic, []).append(frame)
            if self._datalog is not None:
                self._datalog.append(sim_time, kind_for_topic(topic), frame)
            for sub in self._subs:
                if topic_matches(sub.pattern, topic):
                    sub._offer(frame)
            self._subs = [s for s in self._subs if not s.closed]
        return frame

    def restore(self, records: Iterable[dict[str, Any]]) -> int:
        """Rebuild retained state and history from replayed log records.

        Only published frames (body.t == "pub") participate; no fan-out
        and no re-logging. Returns the number of frames restored.
        """
        n = 0
        with self._lock:
            for rec in records:
                body = rec.get("body", {})
                if body.get("t") != "pub":
                    continue
                self._retained[body["topic"]] = body
                self._history.setdefault(body["topic"], []).append(body)
                n += 1
        return n

    # ---- queries ---------------------------------------------------------

    def retained(self, topic: str) -> dict[str, Any] | None:
        with self._lock:
            return self._retained.get(topic)

    def snapshot(self) -> list[dict[str, Any]]:
        """All retained frames, topic-sorted for stable output."""
        with self._lock:
            return [self._retained[t] for t in sorted(self._retained)]

    def history(self, topic: str, t_from: float, t_to: float) -> list[dict[str, Any]]:
        if t_from > t_to:
            raise TelemetryError("history range: from must be <= to")
        with self._lock:
            frames = self._history.get(topic, [])
            return [f for f in frames if t_from <= f["ts"] <= t_to]

    # ---- subscriptions ---------------------------------------------------

    def subscribe(self, pattern: str, limit: int = QUEUE_LIMIT) -> Subscription:
        if not pattern_valid(pattern):
            raise TelemetryError(f"invalid pattern {pattern!r}")
        sub = Subscription(pattern, limit)
        with self._lock:
            # snapshot and registration are atomic with publishes: no
            # frame can slip between the retained scan and going live
            for topic in sorted(self._retained):
                if topic_matches(pattern, topic):
                    sub._offer(self._retained[topic])
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.close()
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    # ---- commands --------------------------------------------------------

    def submit_command(
        self,
        kind: str,
        payload: dict[str, Any],
        command_id: str,
        on_resolve: Callable[[dict[str, Any]], None] | None = None,
    ) -> threading.Event:
        """Queue a command for the engine; the event fires on resolution."""
        done = threading.Event()
        with self._lock:
            if command_id in self._done or command_id in self._results:
                raise TelemetryError(f"duplicate command id {command_id!r}")
            self._done[command_id] = done
            if on_resolve is not None:
                self._resolve_hooks[command_id] = on_resolve
            self._commands.append(
                {"kind": kind, "payload": payload, "id": command_id}
            )
        return done

    def take_commands(self) -> list[dict[str, Any]]:
        """Drain the queue; called by the engine once per control tick."""
        with self._lock:
            out = list(self._commands)
            self._commands.clear()
        return out

    def resolve_command(self, command_id: str, result: dict[str, Any]) -> None:
        with self._lock:
            self._results[command_id] = result
            done = self._done.pop(command_id, None)
            hook = self._resolve_hooks.pop(command_id, None)
        if done is not None:
            done.set()
        if hook is not None:
            hook(result)

    def command_result(self, command_id: str) -> dict[str, Any] | None:
        with self._lock:
            return self._results.get(command_id)
