"""Cursor attraction toward predicted click targets.

Predicted buttons act as gravity sources whose mass is the prediction
confidence; cursor motion is perturbed toward them with an inverse-square
law softened near the center.  A magnitude clamp and an optional dead
zone inside target rects guarantee the pull can never trap the cursor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class AttractionTarget:
    center: tuple[float, float]
    rect: tuple[float, float, float, float]
    confidence: float

    def __post_init__(self) -> None:
        if self.confidence < 0:
            raise ValueError("confidence must be >= 0")
        if self.rect[2] <= 0 or self.rect[3] <= 0:
            raise ValueError(f"degenerate target rect {self.rect}")

    def contains(self, x: float, y: float) -> bool:
        rx, ry, rw, rh = self.rect
        return rx <= x <= rx + rw and ry <= y <= ry + rh


@dataclass(frozen=True)
class FieldConfig:
    gain: float = 40.0  # px^3: pull of a confidence-1 target at unit distance
    softening_px: float = 20.0
    max_pull_px: float = 8.0
    dead_zone: bool = True

    def __post_init__(self) -> None:
        if self.gain <= 0 or self.softening_px <= 0 or self.max_pull_px <= 0:
            raise ValueError("gain, softening_px and max_pull_px must be positive")


def pull_at(
    pos: tuple[float, float],
    targets: Sequence[AttractionTarget],
    cfg: FieldConfig = FieldConfig(),
) -> tuple[float, float]:
    """Displacement the field applies at a cursor position.

    Sum over targets of gain * confidence / (d^2 + softening^2) toward
    each center; zero inside any target rect when the dead zone is on;
    total magnitude clamped to max_pull_px.
    """
    x, y = pos
    if cfg.dead_zone and any(t.contains(x, y) for t in targets):
        return (0.0, 0.0)
    dx = 0.0
    dy = 0.0
    soft2 = cfg.softening_px * cfg.softening_px
    for t in targets:
        ux = t.center[0] - x
        uy = t.center[1] - y
        d = math.hypot(ux, uy)
        if d == 0.0:  # at the center the direction is undefined
            continue
        strength = cfg.gain * t.confidence / (d * d + soft2)
        dx += strength * ux / d
        dy += strength * uy / d
    magnitude = math.hypot(dx, dy)
    if magnitude > cfg.max_pull_px:
        scale = cfg.max_pull_px / magnitude
        dx *= scale
        dy *= scale
    return (dx, dy)


def apply_motion(
    raw_from: tuple[float, float],
    raw_to: tuple[float, float],
    targets: Sequence[AttractionTarget],
    cfg: FieldConfig = FieldConfig(),
    screen: tuple[int, int] | None = None,
) -> tuple[float, float]:
    """Adjusted cursor position for a raw movement ending at ``raw_to``.

    ``raw_from`` is kept for parity with pointer-motion hooks; the law
    only perturbs the destination.  When ``screen`` (w, h) is given the
    result is clamped to it.
    """
    del raw_from
    dx, dy = pull_at(raw_to, targets, cfg)
    x, y = raw_to[0] + dx, raw_to[1] + dy
    if screen is not None:
        x = min(max(x, 0.0), float(screen[0] - 1))
        y = min(max(y, 0.0), float(screen[1] - 1))
    return (x, y)


def sample_grid(
    origin: tuple[float, float],
    size: tuple[int, int],
    step_px: float,
    targets: Sequence[AttractionTarget],
    cfg: FieldConfig = FieldConfig(),
) -> list[list[tuple[float, float]]]:
    """Pull vectors sampled on a grid, row-major from the origin."""
    nx, ny = size
    if nx < 1 or ny < 1 or step_px <= 0:
        raise ValueError("grid size must be >= 1x1 with positive step")
    rows = []
    for j in range(ny):
        row = []
        for i in range(nx):
            row.append(pull_at((origin[0] + i * step_px, origin[1] + j * step_px), targets, cfg))
        rows.append(row)
    return rows
