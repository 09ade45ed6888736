from __future__ import annotations

import numpy as np
import pytest

from actioncast.events import InputEvent

DEFAULT_WINDOW = (0, 0, 100, 100)


def make_event(
    t: int,
    kind: str,
    key: str | None = None,
    button: str | None = None,
    dy: int | None = None,
    cursor: tuple[int, int] = (50, 50),
    app: str = "app",
    window: tuple[int, int, int, int] = DEFAULT_WINDOW,
    shot: str | None = None,
) -> InputEvent:
    return InputEvent(
        timestamp_ms=t,
        kind=kind,
        key_code=key,
        button=button,
        scroll_delta=dy,
        cursor=cursor,
        app_id=app,
        window_rect=window,
        screenshot_ref=shot,
    )


def key_script(pairs: list[tuple[str, str]], start_t: int = 0, step_ms: int = 10):
    """Build key events from (key, 'd'|'u') pairs."""
    events = []
    for i, (key, updown) in enumerate(pairs):
        kind = "key_down" if updown == "d" else "key_up"
        events.append(make_event(start_t + i * step_ms, kind, key=key))
    return events


def fig_golden_events():
    """The modifier-combination walkthrough: C H I CTRL+C CTRL+V SPACE CTRL+ALT+DEL."""
    return key_script(
        [
            ("C", "d"), ("C", "u"),
            ("H", "d"), ("H", "u"),
            ("I", "d"), ("I", "u"),
            ("CTRL", "d"), ("C", "d"), ("C", "u"), ("V", "d"), ("V", "u"), ("CTRL", "u"),
            ("SPACE", "d"), ("SPACE", "u"),
            ("CTRL", "d"), ("ALT", "d"), ("DEL", "d"),
            ("DEL", "u"), ("ALT", "u"), ("CTRL", "u"),
        ]
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_patch(rng: np.random.Generator, h: int, w: int):
    from actioncast.patches import ImagePatch

    return ImagePatch(pixels=rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def button_profile():
    """Small button-heavy workflow: clicks dominate, so vocabularies retain
    every button and top-k predictions reliably contain ButtonClicks."""
    from actioncast.synth import WorkflowProfile

    scene = {
        "canvas": [400, 300],
        "window": [30, 30, 340, 240],
        "buttons": [
            {"id": 0, "rect": [20, 20, 60, 30], "color": [196, 150, 110], "glyph_seed": 21},
            {"id": 1, "rect": [110, 20, 54, 34], "color": [120, 150, 200], "glyph_seed": 22},
            {"id": 2, "rect": [200, 20, 66, 28], "color": [150, 196, 120], "glyph_seed": 23},
        ],
    }
    return WorkflowProfile.from_json(
        {
            "name": "buttons3",
            "states": ["one", "two", "three"],
            "transition": [[0.1, 0.9, 0.0], [0.0, 0.1, 0.9], [0.9, 0.0, 0.1]],
            "emissions": [
                [0.7, 0.0, 0.0, 0.2, 0.1, 0.0],
                [0.0, 0.7, 0.0, 0.0, 0.2, 0.1],
                [0.0, 0.0, 0.7, 0.1, 0.0, 0.2],
            ],
            "templates": [
                {"type": "button", "id": 0},
                {"type": "button", "id": 1},
                {"type": "button", "id": 2},
                {"type": "key", "key": "A", "mods": ["CTRL"]},
                {"type": "key", "key": "B"},
                {"type": "scroll", "dir": "down"},
            ],
            "apps": ["tool", "tool", "tool"],
            "dwell": [0.4, 0.4, 0.4],
            "noise": 0.0,
            "scenes": {"tool": scene},
        }
    )
