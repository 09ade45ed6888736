"""Conversion of raw input-event streams into discrete user actions.

A user action is either a non-modifier keystroke together with the set of
modifier keys held at that instant, a click on an identified interactive
area (a patch id), a generic mouse click, or a coalesced scroll.  Modifier
presses and releases on their own emit nothing.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .events import (
    KEY_DOWN,
    KEY_UP,
    MOUSE_DOWN,
    SCROLL,
    InputEvent,
    MalformedLogError,
)

log = logging.getLogger(__name__)

# Canonical modifier order; left/right variants of a modifier are merged.
MODIFIER_ORDER = ("CTRL", "SHIFT", "ALT", "META")

_MODIFIER_ALIASES = {
    "CTRL": "CTRL", "CONTROL": "CTRL", "LCTRL": "CTRL", "RCTRL": "CTRL",
    "SHIFT": "SHIFT", "LSHIFT": "SHIFT", "RSHIFT": "SHIFT",
    "ALT": "ALT", "LALT": "ALT", "RALT": "ALT", "ALTGR": "ALT",
    "META": "META", "WIN": "META", "CMD": "META", "SUPER": "META",
    "LMETA": "META", "RMETA": "META", "LWIN": "META", "RWIN": "META",
}

KEYSTROKE = "key"
BUTTON_CLICK = "button"
GENERIC_CLICK = "click"
SCROLL_ACTION = "scroll"

# Coalescing window for consecutive same-direction scroll events.
SCROLL_COALESCE_MS = 200

PAD_INDEX = 0
UNK_INDEX = 1
PAD_LABEL = "<PAD>"
UNK_LABEL = "<UNK>"


def normalize_key(key_code: str) -> str:
    """Uppercase a symbolic key name, stripping left/right suffixes."""
    name = key_code.strip().upper()
    if name == "+":  # keeps the modifier+key label grammar unambiguous
        return "PLUS"
    if name.endswith(("_L", "_R")) and name[:-2] in _MODIFIER_ALIASES:
        name = name[:-2]
    return _MODIFIER_ALIASES.get(name, name)


def is_modifier(key_code: str) -> bool:
    return normalize_key(key_code) in MODIFIER_ORDER


@dataclass(frozen=True)
class UserAction:
    """Identity of one discrete user action.

    Hashable and timestamp-free so that equal actions compare equal; the
    time an action was taken travels alongside in :class:`TakenAction`.
    """

    kind: str
    key: str | None = None
    modifiers: frozenset[str] = frozenset()
    patch_id: int | None = None
    button: str | None = None
    direction: str | None = None

    @staticmethod
    def keystroke(key: str, modifiers: Iterable[str] = ()) -> "UserAction":
        mods = frozenset(normalize_key(m) for m in modifiers)
        key = normalize_key(key)
        if key in MODIFIER_ORDER:
            raise ValueError(f"{key} is a modifier, not a keystroke")
        return UserAction(kind=KEYSTROKE, key=key, modifiers=mods)

    @staticmethod
    def button_click(patch_id: int, button: str = "left") -> "UserAction":
        return UserAction(kind=BUTTON_CLICK, patch_id=int(patch_id), button=button)

    @staticmethod
    def generic_click(button: str = "left") -> "UserAction":
        return UserAction(kind=GENERIC_CLICK, button=button)

    @staticmethod
    def scroll(direction: str) -> "UserAction":
        if direction not in ("up", "down"):
            raise ValueError(f"scroll direction must be up/down, got {direction!r}")
        return UserAction(kind=SCROLL_ACTION, direction=direction)

    @property
    def label(self) -> str:
        """Canonical human-readable label, parseable by :func:`action_from_label`."""
        if self.kind == KEYSTROKE:
            mods = [m for m in MODIFIER_ORDER if m in self.modifiers]
            return "+".join(mods + [self.key or ""])
        if self.kind == BUTTON_CLICK:
            return f"click:{self.button}@patch/{self.patch_id}"
        if self.kind == GENERIC_CLICK:
            return f"click:{self.button}"
        return f"scroll:{self.direction}"

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.label


def action_from_label(label: str) -> UserAction:
    """Inverse of :attr:`UserAction.label`."""
    if label.startswith("scroll:"):
        return UserAction.scroll(label.split(":", 1)[1])
    if label.startswith("click:"):
        rest = label.split(":", 1)[1]
        if "@patch/" in rest:
            button, pid = rest.split("@patch/", 1)
            return UserAction.button_click(int(pid), button)
        return UserAction.generic_click(rest)
    parts = label.split("+")
    if not parts or not parts[-1]:
        raise ValueError(f"unparseable action label {label!r}")
    return UserAction.keystroke(parts[-1], parts[:-1])


@dataclass(frozen=True)
class TakenAction:
    """A user action as it occurred in a log: identity plus timing/source."""

    action: UserAction
    timestamp_ms: int
    event: InputEvent


PatchResolver = Callable[[InputEvent], "int | None"]


def tokenize_taken(
    events: Sequence[InputEvent],
    patch_resolver: PatchResolver | None = None,
) -> list[TakenAction]:
    """Tokenize one session of timestamp-ordered events.

    One keystroke action is emitted per non-modifier key_down (auto-repeat
    included), carrying the modifiers held at that instant.  mouse_down
    events become ButtonClick when ``patch_resolver`` identifies an
    interactive area, GenericClick otherwise.  Consecutive same-direction
    scroll events within ``SCROLL_COALESCE_MS`` coalesce into one action.
    """
    actions: list[TakenAction] = []
    held_modifiers: set[str] = set()
    down_keys: set[str] = set()
    last_scroll: tuple[str, int] | None = None  # (direction, last event ms)
    last_t: int | None = None

    for event in events:
        if last_t is not None and event.timestamp_ms < last_t:
            raise MalformedLogError(
                f"out-of-order timestamp {event.timestamp_ms} after {last_t}"
            )
        last_t = event.timestamp_ms
        if event.kind != SCROLL:
            last_scroll = None

        if event.kind == KEY_DOWN:
            key = normalize_key(event.key_code or "")
            if key in MODIFIER_ORDER:
                held_modifiers.add(key)
                continue
            down_keys.add(key)
            actions.append(
                TakenAction(
                    UserAction(kind=KEYSTROKE, key=key, modifiers=frozenset(held_modifiers)),
                    event.timestamp_ms,
                    event,
                )
            )
        elif event.kind == KEY_UP:
            key = normalize_key(event.key_code or "")
            if key in MODIFIER_ORDER:
                held_modifiers.discard(key)
            elif key in down_keys:
                down_keys.discard(key)
            else:
                log.debug("ignoring key_up without matching key_down: %s", key)
        elif event.kind == MOUSE_DOWN:
            patch_id = patch_resolver(event) if patch_resolver is not None else None
            if patch_id is None:
                action = UserAction(kind=GENERIC_CLICK, button=event.button)
            else:
                action = UserAction(kind=BUTTON_CLICK, patch_id=int(patch_id), button=event.button)
            actions.append(TakenAction(action, event.timestamp_ms, event))
        elif event.kind == SCROLL:
            delta = event.scroll_delta or 0
            if delta == 0:
                continue
            direction = "up" if delta > 0 else "down"
            if (
                last_scroll is not None
                and last_scroll[0] == direction
                and event.timestamp_ms - last_scroll[1] <= SCROLL_COALESCE_MS
            ):
                last_scroll = (direction, event.timestamp_ms)
                continue
            last_scroll = (direction, event.timestamp_ms)
            actions.append(
                TakenAction(UserAction(kind=SCROLL_ACTION, direction=direction), event.timestamp_ms, event)
            )
        # mouse_up events carry no action of their own

    return actions


def tokenize_events(
    events: Sequence[InputEvent],
    patch_resolver: PatchResolver | None = None,
) -> list[UserAction]:
    """Tokenize a session, returning action identities only."""
    return [taken.action for taken in tokenize_taken(events, patch_resolver)]


@dataclass(frozen=True)
class ContextFeatures:
    """System-state features observed alongside one action.

    ``app_index`` is None for apps outside the vocabulary (encoded as an
    all-zero one-hot).  ``elapsed_bucket`` quantizes the time since the
    previous action into multiples of 10 s, capped at 30 s.
    """

    app_index: int | None
    n_apps: int
    rel_x: float
    rel_y: float
    elapsed_bucket: int

    @property
    def app_onehot(self) -> np.ndarray:
        vec = np.zeros(self.n_apps)
        if self.app_index is not None:
            vec[self.app_index] = 1.0
        return vec

    def to_vector(self) -> np.ndarray:
        """Concatenated [app one-hot | rel_x | rel_y | elapsed_bucket]."""
        return np.concatenate(
            [self.app_onehot, [self.rel_x, self.rel_y, float(self.elapsed_bucket)]]
        )


def relative_position(event: InputEvent) -> tuple[float, float]:
    """Cursor position as window fractions, clamped to [0, 1]."""
    wx, wy, ww, wh = event.window_rect
    rel_x = min(max((event.cursor[0] - wx) / ww, 0.0), 1.0)
    rel_y = min(max((event.cursor[1] - wy) / wh, 0.0), 1.0)
    return rel_x, rel_y


def elapsed_bucket(prev_timestamp_ms: int | None, timestamp_ms: int) -> int:
    """Time since the previous action in 10 s buckets, capped at 30 s."""
    if prev_timestamp_ms is None:
        return 0
    elapsed_s = max(timestamp_ms - prev_timestamp_ms, 0) / 1000.0
    return min(int(elapsed_s // 10), 3)


def encode_context(
    action: UserAction,
    prev_timestamp_ms: int | None,
    event: InputEvent,
    app_vocab: dict[str, int],
) -> ContextFeatures:
    """Encode the system state for an action from its source event."""
    rel_x, rel_y = relative_position(event)
    return ContextFeatures(
        app_index=app_vocab.get(event.app_id),
        n_apps=len(app_vocab),
        rel_x=rel_x,
        rel_y=rel_y,
        elapsed_bucket=elapsed_bucket(prev_timestamp_ms, event.timestamp_ms),
    )


def contexts_for(taken: Sequence[TakenAction], app_vocab: dict[str, int]) -> list[ContextFeatures]:
    """Encode context features for a tokenized session."""
    out = []
    prev_t: int | None = None
    for ta in taken:
        out.append(encode_context(ta.action, prev_t, ta.event, app_vocab))
        prev_t = ta.timestamp_ms
    return out


def build_app_vocab(sessions: Iterable[Iterable[InputEvent]]) -> dict[str, int]:
    """Dense app_id -> index map over every app observed, sorted for determinism."""
    apps = sorted({e.app_id for session in sessions for e in session})
    return {app: i for i, app in enumerate(apps)}


@dataclass
class ActionVocabulary:
    """Bijection between retained user actions and dense indices.

    Index 0 is PAD (window warm-up padding), index 1 is UNK (unseen or
    filtered-out actions).  ButtonClick actions are retained only when
    their patch was clicked at least ``min_click_count`` times; rarer
    interactive areas encode as UNK.
    """

    index_of: dict[UserAction, int]
    action_of: dict[int, UserAction]
    app_index_of: dict[str, int]
    min_click_count: int = 6
    _digest: str | None = field(default=None, repr=False)

    DEFAULT_MIN_CLICK_COUNT = 6

    @property
    def size(self) -> int:
        """Total number of indices including PAD and UNK."""
        return len(self.index_of) + 2

    @property
    def n_apps(self) -> int:
        return len(self.app_index_of)

    def __len__(self) -> int:
        return self.size

    def encode(self, action: UserAction) -> int:
        return self.index_of.get(action, UNK_INDEX)

    def decode(self, index: int) -> UserAction:
        try:
            return self.action_of[index]
        except KeyError:
            raise KeyError(f"index {index} is reserved or out of range") from None

    def labels(self) -> list[str]:
        """Retained action labels in index order (excludes PAD/UNK)."""
        return [self.action_of[i].label for i in range(2, self.size)]

    def digest(self) -> str:
        """Stable content hash, used to pair checkpoints with vocabularies."""
        if self._digest is None:
            payload = json.dumps(
                {
                    "actions": self.labels(),
                    "apps": sorted(self.app_index_of, key=self.app_index_of.get),
                    "min_click_count": self.min_click_count,
                },
                sort_keys=True,
            ).encode("utf-8")
            object.__setattr__(self, "_digest", hashlib.sha256(payload).hexdigest())
        return self._digest

    def to_json(self) -> dict:
        return {
            "actions": self.labels(),
            "apps": sorted(self.app_index_of, key=self.app_index_of.get),
            "min_click_count": self.min_click_count,
        }

    @staticmethod
    def from_json(obj: dict) -> "ActionVocabulary":
        actions = [action_from_label(lbl) for lbl in obj["actions"]]
        index_of = {a: i + 2 for i, a in enumerate(actions)}
        action_of = {i + 2: a for i, a in enumerate(actions)}
        apps = {app: i for i, app in enumerate(obj.get("apps", []))}
        return ActionVocabulary(
            index_of=index_of,
            action_of=action_of,
            app_index_of=apps,
            min_click_count=int(obj.get("min_click_count", ActionVocabulary.DEFAULT_MIN_CLICK_COUNT)),
        )


def build_vocabulary(
    actions: Iterable[UserAction],
    patch_click_counts: dict[int, int] | None = None,
    min_click_count: int = ActionVocabulary.DEFAULT_MIN_CLICK_COUNT,
    app_vocab: dict[str, int] | None = None,
) -> ActionVocabulary:
    """Build the retained-action vocabulary from an observed corpus.

    Every distinct keystroke, generic click, and scroll observed at least
    once is retained.  A ButtonClick is retained iff its patch's click
    count is at least ``min_click_count``.  When ``patch_click_counts`` is
    None, counts are derived from occurrences in ``actions``.

    Index assignment sorts canonical labels, so the result is independent
    of corpus order and duplication.
    """
    actions = list(actions)
    if patch_click_counts is None:
        patch_click_counts = {}
        for a in actions:
            if a.kind == BUTTON_CLICK and a.patch_id is not None:
                patch_click_counts[a.patch_id] = patch_click_counts.get(a.patch_id, 0) + 1

    retained: set[UserAction] = set()
    for a in actions:
        if a.kind == BUTTON_CLICK:
            if patch_click_counts.get(a.patch_id, 0) >= min_click_count:
                retained.add(a)
        else:
            retained.add(a)

    ordered = sorted(retained, key=lambda a: a.label)
    index_of = {a: i + 2 for i, a in enumerate(ordered)}
    action_of = {i + 2: a for i, a in enumerate(ordered)}
    return ActionVocabulary(
        index_of=index_of,
        action_of=action_of,
        app_index_of=dict(app_vocab or {}),
        min_click_count=min_click_count,
    )


def encode_action(action: UserAction, vocab: ActionVocabulary) -> int:
    """Dense index of an action; UNK for anything outside the vocabulary."""
    return vocab.encode(action)
