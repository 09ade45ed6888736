"""Raw input events and the JSONL event-log format.

A log is UTF-8 JSONL, one event object per line.  Blank lines separate
recording sessions.  Recognized fields: ``t`` (int ms), ``kind``, ``key``,
``button``, ``dy``, ``x``, ``y``, ``app``, ``win`` ([x, y, w, h]) and
``shot`` (path to a stored screen image).  Unknown fields are ignored.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

log = logging.getLogger(__name__)

KEY_DOWN = "key_down"
KEY_UP = "key_up"
MOUSE_DOWN = "mouse_down"
MOUSE_UP = "mouse_up"
SCROLL = "scroll"

EVENT_KINDS = frozenset({KEY_DOWN, KEY_UP, MOUSE_DOWN, MOUSE_UP, SCROLL})
MOUSE_BUTTONS = frozenset({"left", "right", "middle"})


class MalformedLogError(ValueError):
    """Raised when an event log violates the format contract."""


@dataclass(frozen=True)
class InputEvent:
    """One timestamped device event with foreground-window metadata."""

    timestamp_ms: int
    kind: str
    cursor: tuple[int, int]
    app_id: str
    window_rect: tuple[int, int, int, int]
    key_code: str | None = None
    button: str | None = None
    scroll_delta: int | None = None
    screenshot_ref: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise MalformedLogError(f"unknown event kind {self.kind!r}")
        if self.kind in (KEY_DOWN, KEY_UP) and not self.key_code:
            raise MalformedLogError(f"{self.kind} event without key_code")
        if self.kind in (MOUSE_DOWN, MOUSE_UP):
            if self.button not in MOUSE_BUTTONS:
                raise MalformedLogError(f"{self.kind} event with button {self.button!r}")
        if self.kind == SCROLL and self.scroll_delta is None:
            raise MalformedLogError("scroll event without dy")
        w, h = self.window_rect[2], self.window_rect[3]
        if w <= 0 or h <= 0:
            raise MalformedLogError(f"degenerate window rect {self.window_rect}")


def event_from_json(obj: dict) -> InputEvent:
    """Build an :class:`InputEvent` from one decoded JSONL object."""
    try:
        t = int(obj["t"])
        kind = str(obj["kind"])
        x, y = int(obj["x"]), int(obj["y"])
        app = str(obj["app"])
        win = obj["win"]
    except KeyError as exc:
        raise MalformedLogError(f"missing required field {exc.args[0]!r}") from None
    if not (isinstance(win, (list, tuple)) and len(win) == 4):
        raise MalformedLogError(f"win must be [x, y, w, h], got {win!r}")
    dy = obj.get("dy")
    return InputEvent(
        timestamp_ms=t,
        kind=kind,
        cursor=(x, y),
        app_id=app,
        window_rect=(int(win[0]), int(win[1]), int(win[2]), int(win[3])),
        key_code=obj.get("key"),
        button=obj.get("button"),
        scroll_delta=None if dy is None else int(dy),
        screenshot_ref=obj.get("shot"),
    )


def event_to_json(event: InputEvent) -> dict:
    obj: dict = {
        "t": event.timestamp_ms,
        "kind": event.kind,
        "x": event.cursor[0],
        "y": event.cursor[1],
        "app": event.app_id,
        "win": list(event.window_rect),
    }
    if event.key_code is not None:
        obj["key"] = event.key_code
    if event.button is not None:
        obj["button"] = event.button
    if event.scroll_delta is not None:
        obj["dy"] = event.scroll_delta
    if event.screenshot_ref is not None:
        obj["shot"] = event.screenshot_ref
    return obj


def parse_sessions(lines: Iterable[str], *, strict: bool = False) -> list[list[InputEvent]]:
    """Parse JSONL lines into sessions (blank-line separated).

    Malformed lines are rejected: skipped with a warning by default,
    raised as :class:`MalformedLogError` when ``strict``.  Timestamps
    must be nondecreasing within a session; violations always reject
    the whole log.
    """
    sessions: list[list[InputEvent]] = []
    current: list[InputEvent] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            if current:
                sessions.append(current)
                current = []
            continue
        try:
            event = event_from_json(json.loads(line))
        except (json.JSONDecodeError, MalformedLogError, TypeError, ValueError) as exc:
            if strict:
                raise MalformedLogError(f"line {lineno}: {exc}") from None
            log.warning("rejecting malformed log line %d: %s", lineno, exc)
            continue
        if current and event.timestamp_ms < current[-1].timestamp_ms:
            raise MalformedLogError(
                f"line {lineno}: timestamp {event.timestamp_ms} out of order "
                f"(previous {current[-1].timestamp_ms})"
            )
        current.append(event)
    if current:
        sessions.append(current)
    return sessions


def read_sessions(path: str | Path, *, strict: bool = False) -> list[list[InputEvent]]:
    """Read an event log file into per-session event lists."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sessions(fh, strict=strict)


def write_sessions(sessions: Iterable[Iterable[InputEvent]], fh: TextIO) -> None:
    """Write sessions as JSONL with blank-line separators."""
    first = True
    for session in sessions:
        if not first:
            fh.write("\n")
        first = False
        for event in session:
            fh.write(json.dumps(event_to_json(event), sort_keys=True) + "\n")


def write_log(sessions: Iterable[Iterable[InputEvent]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_sessions(sessions, fh)
