"""Regenerates the bundled workflow profiles under src/actioncast/profiles/.

The benchmark profile is an 8-state workflow over 40 distinct actions in
4 applications; emissions are state-disjoint so the chain's Bayes top-1
accuracy is well identified by the observed action stream.
"""

from __future__ import annotations

import json
from pathlib import Path

PROFILES_DIR = Path(__file__).resolve().parent.parent / "src" / "actioncast" / "profiles"


def key(k, *mods):
    return {"type": "key", "key": k, "mods": list(mods)}


def button(i):
    return {"type": "button", "id": i}


def scroll(direction):
    return {"type": "scroll", "dir": direction}


def click(btn):
    return {"type": "click", "button": btn}


def scene(window, buttons):
    colors = [
        (196, 150, 110),
        (150, 196, 120),
        (120, 150, 200),
        (200, 120, 150),
        (170, 170, 120),
        (120, 180, 180),
        (205, 170, 140),
    ]
    return {
        "canvas": [1024, 768],
        "window": list(window),
        "background": [228, 228, 232],
        "desktop": [64, 70, 80],
        "buttons": [
            {
                "id": bid,
                "rect": list(rect),
                "color": list(colors[bid % len(colors)]),
                "glyph_seed": 1000 + bid,
            }
            for bid, rect in buttons
        ],
    }


def make_benchmark():
    states = ["editor", "ide", "browser", "music", "terminal", "files", "email", "chat"]
    apps = ["code", "code", "web", "web", "term", "term", "mail", "mail"]
    per_state_templates = [
        [key("S", "CTRL"), key("Z", "CTRL"), key("F", "CTRL"), key("TAB"), button(0)],
        [key("F5"), key("F10"), key("B", "CTRL"), key("P", "CTRL", "SHIFT"), button(1)],
        [key("T", "CTRL"), key("W", "CTRL"), key("ENTER"), scroll("down"), button(10)],
        [key("SPACE"), key("RIGHT", "CTRL"), key("LEFT", "CTRL"), scroll("up"), button(11)],
        [key("C", "CTRL"), key("UP"), key("R", "CTRL"), key("L", "CTRL"), click("right")],
        [key("DOWN"), key("DEL"), key("F2"), key("BACKSPACE"), button(20)],
        [key("ENTER", "CTRL"), key("N", "CTRL"), key("ESC"), key("PGDN"), button(30)],
        [key("K", "CTRL", "ALT"), key("ENTER", "SHIFT"), key("PGUP"), click("middle"), button(31)],
    ]
    templates = [t for group in per_state_templates for t in group]
    assert len(templates) == 40
    labels = set()
    for t in templates:
        labels.add(json.dumps(t, sort_keys=True))
    assert len(labels) == 40, "templates must be distinct"

    n = len(states)
    transition = [[0.0] * n for _ in range(n)]
    for i in range(n):
        transition[i][(i + 1) % n] = 0.65
        transition[i][i] = 0.20
        transition[i][(i + 2) % n] = 0.10
        transition[i][(i + 5) % n] = 0.05

    emissions = [[0.0] * 40 for _ in range(n)]
    weights = [0.45, 0.25, 0.15, 0.10, 0.05]
    for s in range(n):
        for j, w in enumerate(weights):
            emissions[s][s * 5 + j] = w

    scenes = {
        "code": scene(
            (60, 50, 760, 540),
            [(0, (30, 24, 66, 30)), (1, (130, 24, 54, 34))],
        ),
        "web": scene(
            (120, 70, 800, 560),
            [(10, (40, 30, 80, 28)), (11, (160, 30, 50, 26))],
        ),
        "term": scene(
            (80, 90, 700, 480),
            [(20, (36, 28, 60, 32))],
        ),
        "mail": scene(
            (100, 60, 780, 520),
            [(30, (44, 26, 72, 30)), (31, (150, 26, 46, 36))],
        ),
    }

    return {
        "name": "benchmark",
        "states": states,
        "transition": transition,
        "emissions": emissions,
        "templates": templates,
        "apps": apps,
        "dwell": [1.0] * n,
        "noise": 0.1,
        "scenes": scenes,
    }


def make_cycle3():
    return {
        "name": "cycle3",
        "states": ["a", "b", "c"],
        "transition": [[0, 1, 0], [0, 0, 1], [1, 0, 0]],
        "emissions": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "templates": [key("A"), key("B"), key("C")],
        "apps": ["app", "app", "app"],
        "dwell": [0.4, 0.4, 0.4],
        "noise": 0.0,
        "scenes": {},
    }


def make_uniform8():
    return {
        "name": "uniform8",
        "states": ["s"],
        "transition": [[1.0]],
        "emissions": [[0.125] * 8],
        "templates": [key(k) for k in "QWERTYUI"],
        "apps": ["app"],
        "dwell": [0.4],
        "noise": 0.0,
        "scenes": {},
    }


def main():
    PROFILES_DIR.mkdir(parents=True, exist_ok=True)
    for name, profile in (
        ("benchmark", make_benchmark()),
        ("cycle3", make_cycle3()),
        ("uniform8", make_uniform8()),
    ):
        path = PROFILES_DIR / f"{name}.json"
        path.write_text(json.dumps(profile, indent=1) + "\n", encoding="utf-8")
        print("wrote", path)


if __name__ == "__main__":
    main()
