"""Synthetic user sessions with known ground truth.

A workflow profile is an order-1 Markov chain over named states; each
state emits action templates (keystrokes, button clicks, scrolls) inside
a per-state application.  Profiles double as benchmark generators: the
chain's Bayes-optimal top-1 accuracy is computable by filtering, which
gives trained forecasters a hard reference to be measured against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import InputEvent, KEY_DOWN, KEY_UP, MOUSE_DOWN, MOUSE_UP, SCROLL
from .patches import DetectorBox, ImagePatch
from .tokenizer import UserAction

_ROW_SUM_TOL = 1e-9
# Keeps consecutive scroll actions from coalescing back into one.
_MIN_DELAY_MS = 250
_BASE_TIMESTAMP_MS = 1_700_000_000_000

GLYPH_COLOR = (40, 40, 45)
_RING_PX = 3  # background ring inside a detector rect, absorbs crop jitter


class ProfileError(ValueError):
    """Raised when a workflow profile or scene fails validation."""


@dataclass(frozen=True)
class SceneButton:
    id: int
    rect: tuple[int, int, int, int]  # window-relative, includes the ring
    color: tuple[int, int, int]
    glyph_seed: int


@dataclass
class SyntheticScene:
    """Geometry and styling of one application window's widgets."""

    canvas: tuple[int, int]
    window: tuple[int, int, int, int]
    buttons: list[SceneButton]
    background: tuple[int, int, int] = (228, 228, 232)
    desktop: tuple[int, int, int] = (64, 70, 80)

    def __post_init__(self) -> None:
        ww, wh = self.window[2], self.window[3]
        seen: set[int] = set()
        for b in self.buttons:
            x, y, w, h = b.rect
            if b.id in seen:
                raise ProfileError(f"duplicate button id {b.id}")
            seen.add(b.id)
            if x < 0 or y < 0 or x + w > ww or y + h > wh:
                raise ProfileError(f"button {b.id} rect {b.rect} outside window {ww}x{wh}")

    def button_by_id(self, button_id: int) -> SceneButton:
        for b in self.buttons:
            if b.id == button_id:
                return b
        raise ProfileError(f"no button {button_id} in scene")

    def screen_boxes(self, window_at: tuple[int, int] | None = None) -> list[DetectorBox]:
        """Ground-truth detector boxes in screen coordinates."""
        wx, wy = (self.window[0], self.window[1]) if window_at is None else window_at
        return [
            DetectorBox(rect=(wx + b.rect[0], wy + b.rect[1], b.rect[2], b.rect[3]))
            for b in self.buttons
        ]

    @staticmethod
    def from_json(obj: dict) -> "SyntheticScene":
        return SyntheticScene(
            canvas=tuple(obj["canvas"]),
            window=tuple(obj["window"]),
            buttons=[
                SceneButton(
                    id=int(b["id"]),
                    rect=tuple(b["rect"]),
                    color=tuple(b.get("color", (140, 170, 205))),
                    glyph_seed=int(b.get("glyph_seed", b["id"])),
                )
                for b in obj.get("buttons", [])
            ],
            background=tuple(obj.get("background", (228, 228, 232))),
            desktop=tuple(obj.get("desktop", (64, 70, 80))),
        )

    def to_json(self) -> dict:
        return {
            "canvas": list(self.canvas),
            "window": list(self.window),
            "background": list(self.background),
            "desktop": list(self.desktop),
            "buttons": [
                {
                    "id": b.id,
                    "rect": list(b.rect),
                    "color": list(b.color),
                    "glyph_seed": b.glyph_seed,
                }
                for b in self.buttons
            ],
        }


def _template_action(template: dict) -> UserAction:
    kind = template["type"]
    if kind == "key":
        return UserAction.keystroke(template["key"], template.get("mods", ()))
    if kind == "button":
        return UserAction.button_click(template["id"], template.get("button", "left"))
    if kind == "click":
        return UserAction.generic_click(template.get("button", "left"))
    if kind == "scroll":
        return UserAction.scroll(template["dir"])
    raise ProfileError(f"unknown template type {kind!r}")


_DEFAULT_WINDOW = (100, 80, 800, 500)


@dataclass
class WorkflowProfile:
    """Markov workflow over states emitting action templates."""

    name: str
    states: list[str]
    transition: np.ndarray
    emissions: np.ndarray  # (n_states, n_templates)
    templates: list[dict]
    apps: list[str]  # per-state foreground app
    dwell: list[float]  # per-state mean inter-action delay, seconds
    noise: float = 0.0
    scenes: dict[str, SyntheticScene] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.states)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.emissions = np.asarray(self.emissions, dtype=np.float64)
        if self.transition.shape != (n, n):
            raise ProfileError(f"transition must be {n}x{n}, got {self.transition.shape}")
        if self.emissions.shape != (n, len(self.templates)):
            raise ProfileError("emissions shape does not match states x templates")
        if len(self.apps) != n or len(self.dwell) != n:
            raise ProfileError("apps and dwell must have one entry per state")
        for label, matrix in (("transition", self.transition), ("emissions", self.emissions)):
            if (matrix < 0).any():
                raise ProfileError(f"{label} has negative entries")
            bad = np.abs(matrix.sum(axis=1) - 1.0) > _ROW_SUM_TOL
            if bad.any():
                raise ProfileError(f"{label} rows {np.nonzero(bad)[0].tolist()} do not sum to 1")
        if not 0.0 <= self.noise <= 1.0:
            raise ProfileError(f"noise must be in [0, 1], got {self.noise}")
        seen_buttons: set[int] = set()
        for scene in self.scenes.values():
            for b in scene.buttons:
                if b.id in seen_buttons:
                    raise ProfileError(f"button id {b.id} reused across scenes")
                seen_buttons.add(b.id)
        for template in self.templates:
            action = _template_action(template)  # validates shape
            if template["type"] == "button":
                if not any(
                    b.id == template["id"] for s in self.scenes.values() for b in s.buttons
                ):
                    raise ProfileError(f"button template {template['id']} has no scene button")
            del action

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def actions(self) -> list[UserAction]:
        return [_template_action(t) for t in self.templates]

    def window_for(self, app: str) -> tuple[int, int, int, int]:
        scene = self.scenes.get(app)
        return scene.window if scene is not None else _DEFAULT_WINDOW

    def compatible_templates(self, state: int) -> list[int]:
        """Templates a noise action may draw from in this state's app.

        Button templates require their button to exist in the state's
        scene; everything else is always available.
        """
        app = self.apps[state]
        scene = self.scenes.get(app)
        out = []
        for i, t in enumerate(self.templates):
            if t["type"] == "button":
                if scene is None or not any(b.id == t["id"] for b in scene.buttons):
                    continue
            out.append(i)
        return out

    def is_irreducible(self) -> bool:
        """Strong connectivity of the positive-probability transition graph."""
        n = self.n_states
        adj = self.transition > 0

        def reachable(mat: np.ndarray) -> bool:
            seen = {0}
            stack = [0]
            while stack:
                s = stack.pop()
                for nxt in np.nonzero(mat[s])[0]:
                    if int(nxt) not in seen:
                        seen.add(int(nxt))
                        stack.append(int(nxt))
            return len(seen) == n

        return reachable(adj) and reachable(adj.T)

    # -- serialization ----------------------------------------------------

    @staticmethod
    def from_json(obj: dict) -> "WorkflowProfile":
        return WorkflowProfile(
            name=obj.get("name", "profile"),
            states=list(obj["states"]),
            transition=np.asarray(obj["transition"], dtype=np.float64),
            emissions=np.asarray(obj["emissions"], dtype=np.float64),
            templates=list(obj["templates"]),
            apps=list(obj["apps"]),
            dwell=[float(d) for d in obj["dwell"]],
            noise=float(obj.get("noise", 0.0)),
            scenes={
                app: SyntheticScene.from_json(s) for app, s in obj.get("scenes", {}).items()
            },
        )

    @staticmethod
    def load(path: str | Path) -> "WorkflowProfile":
        return WorkflowProfile.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "states": self.states,
            "transition": self.transition.tolist(),
            "emissions": self.emissions.tolist(),
            "templates": self.templates,
            "apps": self.apps,
            "dwell": self.dwell,
            "noise": self.noise,
            "scenes": {app: s.to_json() for app, s in self.scenes.items()},
        }


def bundled_profile_path(name: str) -> Path:
    """Path of a profile shipped with the package (e.g. 'benchmark')."""
    return Path(__file__).parent / "profiles" / f"{name}.json"


def load_profile(name_or_path: str | Path) -> WorkflowProfile:
    path = Path(name_or_path)
    if not path.exists():
        bundled = bundled_profile_path(str(name_or_path))
        if bundled.exists():
            path = bundled
        else:
            raise FileNotFoundError(f"no profile file or bundled profile {name_or_path!r}")
    return WorkflowProfile.load(path)


# -- event synthesis ---------------------------------------------------------


def _free_point(scene: SyntheticScene | None, window: tuple[int, int, int, int]) -> tuple[int, int]:
    """A window point guaranteed not to hit any button (for generic clicks)."""
    wx, wy, ww, wh = window
    candidates = [
        (wx + 8, wy + wh - 8),
        (wx + ww - 8, wy + wh - 8),
        (wx + 8, wy + 8),
        (wx + ww // 2, wy + wh - 8),
    ]
    if scene is None:
        return candidates[0]
    boxes = scene.screen_boxes()
    for point in candidates:
        if all(not b.contains(*point) for b in boxes):
            return point
    raise ProfileError("scene leaves no free spot for generic clicks")


class _SessionBuilder:
    def __init__(self, profile: WorkflowProfile, rng: np.random.Generator) -> None:
        self.profile = profile
        self.rng = rng
        self.events: list[InputEvent] = []
        self.t = _BASE_TIMESTAMP_MS

    def _emit(self, **kwargs) -> None:
        self.events.append(InputEvent(timestamp_ms=self.t, **kwargs))
        self.t += 8

    def add_action(self, template: dict, state: int) -> UserAction:
        profile = self.profile
        app = profile.apps[state]
        window = profile.window_for(app)
        scene = profile.scenes.get(app)
        wx, wy, ww, wh = window
        common = dict(app_id=app, window_rect=window)
        kind = template["type"]

        if kind == "key":
            cx = wx + ww // 2 + int(self.rng.integers(-ww // 5, ww // 5 + 1))
            cy = wy + wh // 2 + int(self.rng.integers(-wh // 5, wh // 5 + 1))
            cursor = (cx, cy)
            mods = [m.upper() for m in template.get("mods", ())]
            for mod in mods:
                self._emit(kind=KEY_DOWN, key_code=mod, cursor=cursor, **common)
            self._emit(kind=KEY_DOWN, key_code=template["key"], cursor=cursor, **common)
            self._emit(kind=KEY_UP, key_code=template["key"], cursor=cursor, **common)
            for mod in reversed(mods):
                self._emit(kind=KEY_UP, key_code=mod, cursor=cursor, **common)
        elif kind == "button":
            if scene is None:
                raise ProfileError(f"state {state} has no scene for button template")
            button = scene.button_by_id(template["id"])
            bx, by, bw, bh = button.rect
            jx = int(self.rng.integers(-max(bw // 6, 1), max(bw // 6, 1) + 1))
            jy = int(self.rng.integers(-max(bh // 6, 1), max(bh // 6, 1) + 1))
            cursor = (wx + bx + bw // 2 + jx, wy + by + bh // 2 + jy)
            mouse = template.get("button", "left")
            self._emit(kind=MOUSE_DOWN, button=mouse, cursor=cursor, **common)
            self._emit(kind=MOUSE_UP, button=mouse, cursor=cursor, **common)
        elif kind == "click":
            cursor = _free_point(scene, window)
            mouse = template.get("button", "left")
            self._emit(kind=MOUSE_DOWN, button=mouse, cursor=cursor, **common)
            self._emit(kind=MOUSE_UP, button=mouse, cursor=cursor, **common)
        elif kind == "scroll":
            cursor = (wx + ww // 2, wy + wh // 2)
            delta = 3 if template["dir"] == "up" else -3
            self._emit(kind=SCROLL, scroll_delta=delta, cursor=cursor, **common)
        else:  # unreachable after profile validation
            raise ProfileError(f"unknown template type {kind!r}")
        return _template_action(template)


def generate_session(
    profile: WorkflowProfile,
    length: int,
    seed: int,
) -> tuple[list[InputEvent], list[UserAction]]:
    """Simulate one session; returns (events, ground-truth actions).

    Deterministic for a given (profile, length, seed).  The emitted
    events tokenize back to exactly the ground-truth sequence when clicks
    are resolved by scene geometry (see :func:`geometry_resolver`).
    """
    if length < 1:
        raise ProfileError("length must be >= 1")
    rng = np.random.default_rng(seed)
    builder = _SessionBuilder(profile, rng)
    truth: list[UserAction] = []
    state = int(rng.integers(profile.n_states))
    for step in range(length):
        if step > 0:
            state = int(rng.choice(profile.n_states, p=profile.transition[state]))
            delay = rng.exponential(profile.dwell[state])
            builder.t += max(_MIN_DELAY_MS, int(round(delay * 1000)))
        if profile.noise > 0 and rng.random() < profile.noise:
            compat = profile.compatible_templates(state)
            template = profile.templates[compat[int(rng.integers(len(compat)))]]
        else:
            template = profile.templates[int(rng.choice(len(profile.templates), p=profile.emissions[state]))]
        truth.append(builder.add_action(template, state))
    return builder.events, truth


def scenes_resolver(scenes: dict[str, SyntheticScene]):
    """Patch resolver using scene geometry as ground truth (no vision).

    Resolves a mouse_down to the id of the smallest scene button under
    the cursor, using the event's own window rect for placement.
    """
    from .patches import select_clicked_region

    def resolve(event: InputEvent) -> int | None:
        scene = scenes.get(event.app_id)
        if scene is None:
            return None
        wx, wy = event.window_rect[0], event.window_rect[1]
        boxes = scene.screen_boxes(window_at=(wx, wy))
        box = select_clicked_region(boxes, event.cursor)
        if box is None:
            return None
        for button, b in zip(scene.buttons, boxes):
            if b is box:
                return button.id
        return None

    return resolve


def geometry_resolver(profile: WorkflowProfile):
    """Ground-truth patch resolver for a profile's scenes."""
    return scenes_resolver(profile.scenes)


def load_scenes(path: str | Path) -> dict[str, SyntheticScene]:
    """Load an app -> scene mapping from a scenes file or a profile file."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    mapping = obj.get("scenes", obj)
    return {app: SyntheticScene.from_json(s) for app, s in mapping.items()}


# -- oracle accuracy ---------------------------------------------------------


@dataclass
class OracleResult:
    accuracy: float
    stderr: float
    steps: int


def oracle_accuracy(
    profile: WorkflowProfile,
    steps: int = 200_000,
    seed: int = 1234,
) -> OracleResult:
    """Monte-Carlo top-1 accuracy of the Bayes-optimal predictor.

    The predictor knows the profile and filters a belief over workflow
    states from the observed (action, app) stream; before every step it
    predicts the most likely next action.  This is an upper bound for
    any model trained on the same observables.
    """
    if steps < 100_000:
        raise ValueError("need at least 1e5 steps for a stable estimate")
    if not profile.is_irreducible():
        raise ProfileError("profile transition chain is reducible")

    rng = np.random.default_rng(seed)
    n_states = profile.n_states
    n_templates = len(profile.templates)
    noise = profile.noise

    per_state = np.zeros((n_states, n_templates))
    for s in range(n_states):
        noise_dist = np.zeros(n_templates)
        compat = profile.compatible_templates(s)
        noise_dist[compat] = 1.0 / len(compat)
        per_state[s] = (1.0 - noise) * profile.emissions[s] + noise * noise_dist
    app_ids = list(profile.apps)

    transition = profile.transition
    belief = np.full(n_states, 1.0 / n_states)
    state = int(rng.integers(n_states))
    correct = 0
    total = 0

    def sample_action(s: int) -> int:
        return int(rng.choice(n_templates, p=per_state[s]))

    action = sample_action(state)
    belief = _belief_update(belief, None, action, app_ids[state], per_state, app_ids)
    for _ in range(steps):
        state = int(rng.choice(n_states, p=transition[state]))
        predicted = int(np.argmax((belief @ transition) @ per_state))
        action = sample_action(state)
        correct += int(predicted == action)
        total += 1
        belief = _belief_update(belief, transition, action, app_ids[state], per_state, app_ids)
    accuracy = correct / total
    stderr = math.sqrt(accuracy * (1.0 - accuracy) / total)
    return OracleResult(accuracy=accuracy, stderr=stderr, steps=total)


def _belief_update(
    belief: np.ndarray,
    transition: np.ndarray | None,
    action: int,
    app: str,
    per_state: np.ndarray,
    app_ids: list[str],
) -> np.ndarray:
    prior = belief if transition is None else belief @ transition
    likelihood = per_state[:, action] * np.array([1.0 if a == app else 0.0 for a in app_ids])
    posterior = prior * likelihood
    total = posterior.sum()
    if total <= 0:  # impossible observation; reset to uniform
        return np.full(len(belief), 1.0 / len(belief))
    return posterior / total


def marginal_baseline(train_actions: list[int], val_targets: list[int]) -> float:
    """Accuracy of always predicting the training corpus's modal action."""
    if not train_actions or not val_targets:
        return 0.0
    values, counts = np.unique(np.asarray(train_actions), return_counts=True)
    mode = int(values[np.argmax(counts)])
    hits = sum(1 for t in val_targets if t == mode)
    return hits / len(val_targets)


# -- scene rendering ---------------------------------------------------------


def _glyph_pattern(seed: int) -> np.ndarray:
    pattern = np.random.default_rng(seed).integers(0, 2, size=(5, 5), dtype=np.int64)
    if not pattern.any():
        pattern[2, 2] = 1
    return pattern


def render_scene(
    scene: SyntheticScene,
    window_at: tuple[int, int] | None = None,
) -> tuple[ImagePatch, list[DetectorBox]]:
    """Rasterize a scene; returns the screenshot and ground-truth boxes.

    Deterministic.  Buttons are flat rects with a darker border and a
    seeded glyph pattern, ringed by background pixels inside the detector
    rect so jittered crops still align exactly during matching.
    """
    cw, ch = scene.canvas
    wx, wy = (scene.window[0], scene.window[1]) if window_at is None else window_at
    ww, wh = scene.window[2], scene.window[3]
    if wx < 0 or wy < 0 or wx + ww > cw or wy + wh > ch:
        raise ProfileError(f"window at {(wx, wy)} exceeds canvas {cw}x{ch}")

    canvas = np.empty((ch, cw, 3), dtype=np.uint8)
    canvas[:] = scene.desktop
    canvas[wy : wy + wh, wx : wx + ww] = scene.background

    for button in scene.buttons:
        bx, by, bw, bh = button.rect
        x0, y0 = wx + bx + _RING_PX, wy + by + _RING_PX
        fw, fh = bw - 2 * _RING_PX, bh - 2 * _RING_PX
        if fw < 4 or fh < 4:
            raise ProfileError(f"button {button.id} too small for rendering")
        face = np.array(button.color, dtype=np.int64)
        border = np.clip(face - 60, 0, 255).astype(np.uint8)
        canvas[y0 : y0 + fh, x0 : x0 + fw] = border
        canvas[y0 + 1 : y0 + fh - 1, x0 + 1 : x0 + fw - 1] = button.color
        # Glyph cells scale into the face interior.
        pattern = _glyph_pattern(button.glyph_seed)
        gx, gy = x0 + 2, y0 + 2
        gw, gh = fw - 4, fh - 4
        for row in range(5):
            for col in range(5):
                if not pattern[row, col]:
                    continue
                cy0 = gy + row * gh // 5
                cy1 = gy + (row + 1) * gh // 5
                cx0 = gx + col * gw // 5
                cx1 = gx + (col + 1) * gw // 5
                canvas[cy0:cy1, cx0:cx1] = GLYPH_COLOR

    screenshot = ImagePatch(pixels=canvas)
    return screenshot, scene.screen_boxes(window_at=(wx, wy))
