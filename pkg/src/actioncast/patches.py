"""Identification of clicked interactive areas via image-patch matching.

Every clicked widget is identified by a small RGB crop of the screen.
Crops are rescaled to 96 DPI, deduplicated against a persistent database
by normalized cross-correlation (with a few pixels of margin to absorb
extraction jitter), and cheap width/height/mean-color features prune the
expensive correlations.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

# Defaults chosen for high dedup precision; all tunable via config.
DEFAULT_NCC_THRESHOLD = 0.97
DEFAULT_MARGIN_PX = 4
DEFAULT_SIZE_TOL_PX = 6
DEFAULT_COLOR_TOL = 12.0  # mean-color tolerance on the 0..255 scale

_VAR_EPS = 1e-9


@dataclass(frozen=True)
class ImagePatch:
    """An RGB image with its DPI. ``pixels`` is (h, w, 3) uint8."""

    pixels: np.ndarray
    dpi: int = 96

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be (h, w, 3), got {px.shape}")
        if self.dpi <= 0:
            raise ValueError("dpi must be positive")
        object.__setattr__(self, "pixels", px)

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PatchFeatures:
    """Cheap prefilter features: size and per-channel mean color."""

    width_px: int
    height_px: int
    mean_rgb: tuple[float, float, float]

    @staticmethod
    def of(patch: ImagePatch) -> "PatchFeatures":
        means = patch.pixels.reshape(-1, 3).mean(axis=0)
        return PatchFeatures(
            width_px=patch.width_px,
            height_px=patch.height_px,
            mean_rgb=(float(means[0]), float(means[1]), float(means[2])),
        )


@dataclass(frozen=True)
class DetectorBox:
    """Output contract of a widget detector: a screen rect and its kind."""

    rect: tuple[int, int, int, int]
    kind: str = "button"

    def __post_init__(self) -> None:
        if self.rect[2] <= 0 or self.rect[3] <= 0:
            raise ValueError(f"degenerate detector box {self.rect}")

    def contains(self, x: int, y: int) -> bool:
        bx, by, bw, bh = self.rect
        return bx <= x <= bx + bw and by <= y <= by + bh

    @property
    def area(self) -> int:
        return self.rect[2] * self.rect[3]


def select_clicked_region(boxes: list[DetectorBox], cursor: tuple[int, int]) -> DetectorBox | None:
    """Smallest box containing the cursor (inclusive edges); list order breaks ties."""
    x, y = cursor
    best: DetectorBox | None = None
    for box in boxes:
        if box.contains(x, y) and (best is None or box.area < best.area):
            best = box
    return best


def normalize_dpi(patch: ImagePatch, source_dpi: int) -> ImagePatch:
    """Rescale a patch to the default 96 DPI with bilinear interpolation.

    Output dimensions are round(dim * 96 / source_dpi) with a 1 px floor.
    A patch already at 96 DPI is returned bit-identical.
    """
    if source_dpi <= 0:
        raise ValueError("source_dpi must be positive")
    if source_dpi == 96:
        return ImagePatch(pixels=patch.pixels, dpi=96)
    scale = 96.0 / source_dpi
    h, w = patch.pixels.shape[:2]
    out_h = max(1, round(h * scale))
    out_w = max(1, round(w * scale))
    resized = _bilinear_resize(patch.pixels, out_h, out_w)
    return ImagePatch(pixels=resized, dpi=96)


def _bilinear_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center-aligned bilinear resampling with edge clamping."""
    in_h, in_w = pixels.shape[:2]
    src = pixels.astype(np.float64)
    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _window_sums(planes: np.ndarray, th: int, tw: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window sums of (h, w, 3) planes and their squares.

    Uses integral images; integer-valued inputs stay exact in float64
    (well under 2**53).
    """
    pad = ((1, 0), (1, 0), (0, 0))
    ii = np.pad(planes, pad).cumsum(axis=0).cumsum(axis=1)
    ii2 = np.pad(planes * planes, pad).cumsum(axis=0).cumsum(axis=1)

    def box(integral: np.ndarray) -> np.ndarray:
        return (
            integral[th:, tw:]
            - integral[:-th, tw:]
            - integral[th:, :-tw]
            + integral[:-th, :-tw]
        )

    return box(ii), box(ii2)


def ncc(template: ImagePatch, image: ImagePatch) -> np.ndarray:
    """Normalized cross-correlation map of a template over an image.

    For every placement of the template inside the image, computes the
    Pearson correlation between the mean-centered template and the
    mean-centered image window, per channel, averaged over channels.
    Output shape is (image.h - template.h + 1, image.w - template.w + 1)
    with values clamped to [-1, 1].  Cells where a channel has zero
    variance in the template or the window take 0 from that channel
    (no-match), never NaN.
    """
    t = template.pixels.astype(np.float64)
    img = image.pixels.astype(np.float64)
    th, tw = t.shape[:2]
    ih, iw = img.shape[:2]
    if th > ih or tw > iw:
        raise ValueError(f"template {th}x{tw} does not fit image {ih}x{iw}")

    n = th * tw
    out_h, out_w = ih - th + 1, iw - tw + 1
    t0 = t - t.mean(axis=(0, 1))  # centered per channel
    tt = (t0 * t0).sum(axis=(0, 1))
    win_sum, win_sumsq = _window_sums(img, th, tw)
    win_var = win_sumsq - win_sum * win_sum / n
    # Σ T̃·W == Σ T̃·(W - mean(W)) because Σ T̃ = 0, so a plain
    # cross-correlation with the centered template is the numerator.
    # Direct sliding windows win for the small maps of patch-vs-patch
    # dedup; FFT wins for full-screen localization.
    if out_h * out_w * n > 262_144:
        num = fftconvolve(img, t0[::-1, ::-1, :], mode="valid", axes=(0, 1))
    else:
        img_cf = np.ascontiguousarray(img.transpose(2, 0, 1))
        t0_cf = np.ascontiguousarray(t0.transpose(2, 0, 1))
        windows = np.lib.stride_tricks.sliding_window_view(img_cf, (th, tw), axis=(1, 2))
        num = np.einsum("cijkl,ckl->cij", windows, t0_cf).transpose(1, 2, 0)
    denom = np.sqrt(np.maximum(tt * win_var, 0.0))
    valid = (tt > _VAR_EPS) & (win_var > _VAR_EPS)
    per_channel = np.where(valid, num / np.where(valid, denom, 1.0), 0.0)
    return np.clip(per_channel.mean(axis=2), -1.0, 1.0)


def prefilter_compatible(
    a: PatchFeatures,
    b: PatchFeatures,
    size_tol_px: int = DEFAULT_SIZE_TOL_PX,
    color_tol: float = DEFAULT_COLOR_TOL,
) -> bool:
    """Cheap compatibility test that prunes NCC comparisons."""
    if abs(a.width_px - b.width_px) > size_tol_px:
        return False
    if abs(a.height_px - b.height_px) > size_tol_px:
        return False
    dmean = max(abs(ac - bc) for ac, bc in zip(a.mean_rgb, b.mean_rgb))
    return dmean <= color_tol


def _pad_edge(pixels: np.ndarray, margin: int) -> np.ndarray:
    return np.pad(pixels, ((margin, margin), (margin, margin), (0, 0)), mode="edge")


def match_correlation(a: ImagePatch, b: ImagePatch, margin_px: int = DEFAULT_MARGIN_PX) -> float:
    """Best correlation of two patches with margin-extended search.

    The larger patch (by area) is padded by ``margin_px`` on all sides,
    replicating edge pixels, and the smaller patch slides over it.
    """
    if a.height_px * a.width_px >= b.height_px * b.width_px:
        large, small = a, b
    else:
        large, small = b, a
    padded = ImagePatch(pixels=_pad_edge(large.pixels, margin_px), dpi=large.dpi)
    if small.height_px > padded.height_px or small.width_px > padded.width_px:
        return -1.0
    return float(ncc(small, padded).max())


@dataclass
class PatchEntry:
    patch: ImagePatch
    features: PatchFeatures
    click_count: int
    created_ms: int


class PatchDb:
    """Persistent, deduplicated collection of interactive-area patches.

    Matching functions are pure; mutation goes through a lock so that
    resolve-or-insert is atomic under concurrent clicks.  Disk layout is
    a directory holding ``manifest.json`` plus one binary PPM per patch.
    """

    def __init__(
        self,
        threshold: float = DEFAULT_NCC_THRESHOLD,
        margin_px: int = DEFAULT_MARGIN_PX,
        size_tol_px: int = DEFAULT_SIZE_TOL_PX,
        color_tol: float = DEFAULT_COLOR_TOL,
    ) -> None:
        self.threshold = threshold
        self.margin_px = margin_px
        self.size_tol_px = size_tol_px
        self.color_tol = color_tol
        self.entries: dict[int, PatchEntry] = {}
        self.next_id = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def click_counts(self) -> dict[int, int]:
        return {pid: e.click_count for pid, e in self.entries.items()}

    def _scan_order(self) -> list[int]:
        # Most-used entries first; id breaks ties for determinism.
        return sorted(self.entries, key=lambda pid: (-self.entries[pid].click_count, pid))

    def match(self, candidate: ImagePatch) -> int | None:
        """First entry whose margin-extended correlation reaches the threshold."""
        features = PatchFeatures.of(candidate)
        for pid in self._scan_order():
            entry = self.entries[pid]
            if not prefilter_compatible(features, entry.features, self.size_tol_px, self.color_tol):
                continue
            if match_correlation(candidate, entry.patch, self.margin_px) >= self.threshold:
                return pid
        return None

    def insert(self, patch: ImagePatch, created_ms: int | None = None) -> int:
        """Insert a patch known to be new; returns its fresh id."""
        with self._lock:
            return self._insert_locked(patch, created_ms)

    def _insert_locked(self, patch: ImagePatch, created_ms: int | None) -> int:
        pid = self.next_id
        self.next_id += 1
        self.entries[pid] = PatchEntry(
            patch=patch,
            features=PatchFeatures.of(patch),
            click_count=1,
            created_ms=int(time.time() * 1000) if created_ms is None else created_ms,
        )
        return pid

    def resolve_or_insert(self, patch: ImagePatch, created_ms: int | None = None) -> int:
        """Match against the db, inserting a new entry on miss; counts the click."""
        with self._lock:
            pid = self.match(patch)
            if pid is None:
                return self._insert_locked(patch, created_ms)
            self.entries[pid].click_count += 1
            return pid

    # -- persistence -----------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = []
        for pid in sorted(self.entries):
            entry = self.entries[pid]
            filename = f"{pid}.ppm"
            write_ppm(entry.patch, directory / filename)
            manifest.append(
                {
                    "id": pid,
                    "file": filename,
                    "w": entry.patch.width_px,
                    "h": entry.patch.height_px,
                    "mean_rgb": list(entry.features.mean_rgb),
                    "clicks": entry.click_count,
                    "created_ms": entry.created_ms,
                }
            )
        tmp = directory / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
        os.replace(tmp, directory / "manifest.json")

    @classmethod
    def load(cls, directory: str | Path, **kwargs) -> "PatchDb":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        db = cls(**kwargs)
        for item in manifest:
            patch = read_ppm(directory / item["file"])
            db.entries[item["id"]] = PatchEntry(
                patch=patch,
                features=PatchFeatures.of(patch),
                click_count=item["clicks"],
                created_ms=item["created_ms"],
            )
        db.next_id = max(db.entries, default=-1) + 1
        return db


def locate_on_screen(
    patch: ImagePatch,
    screenshot: ImagePatch,
    threshold: float = DEFAULT_NCC_THRESHOLD,
) -> list[tuple[int, int, float]]:
    """All places a patch appears on a screenshot.

    Local maxima of the correlation map with score >= threshold,
    non-maximum-suppressed so no two returned patch rects overlap more
    than 50 %, sorted by descending score.  Returned coordinates are the
    top-left corner of the placement.
    """
    corr = ncc(patch, screenshot)
    h, w = corr.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = corr
    neighborhood = np.stack(
        [padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
         for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    ).max(axis=0)
    peak_mask = (corr >= threshold) & (corr >= neighborhood)
    ys, xs = np.nonzero(peak_mask)
    candidates = sorted(
        ((int(x), int(y), float(corr[y, x])) for y, x in zip(ys, xs)),
        key=lambda m: (-m[2], m[1], m[0]),
    )

    ph, pw = patch.height_px, patch.width_px
    area = ph * pw
    kept: list[tuple[int, int, float]] = []
    for x, y, score in candidates:
        overlaps = False
        for kx, ky, _ in kept:
            ox = max(0, min(x + pw, kx + pw) - max(x, kx))
            oy = max(0, min(y + ph, ky + ph) - max(y, ky))
            if ox * oy > 0.5 * area:
                overlaps = True
                break
        if not overlaps:
            kept.append((x, y, score))
    return kept


# -- PPM (P6) serialization ----------------------------------------------


def write_ppm(patch: ImagePatch, path: str | Path) -> None:
    """Write a patch as a binary P6 PPM with maxval 255."""
    header = f"P6\n{patch.width_px} {patch.height_px}\n255\n".encode("ascii")
    Path(path).write_bytes(header + patch.pixels.tobytes())


def read_ppm(path: str | Path) -> ImagePatch:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6" or fields[3] != b"255":
        raise ValueError(f"unsupported PPM header {fields!r}")
    w, h = int(fields[1]), int(fields[2])
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return ImagePatch(pixels=pixels.reshape(h, w, 3).copy())


# -- click resolution pipeline ---------------------------------------------


@dataclass
class ClickResolver:
    """Resolves mouse_down events to patch ids through the vision pipeline.

    ``detector`` maps (screenshot, event) to the interactive-area boxes
    on screen (production backends may ignore the event; the synthetic
    ground-truth backend uses its window rect).  ``load_screenshot`` maps
    an event's screenshot_ref to pixels.  The smallest detected box
    containing the cursor is cropped, rescaled to 96 DPI and deduplicated
    through the database.
    """

    db: PatchDb
    detector: "callable"
    load_screenshot: "callable"
    source_dpi: int = 96
    unresolved: int = field(default=0, init=False)

    def __call__(self, event) -> int | None:
        if event.screenshot_ref is None:
            return None
        screenshot = self.load_screenshot(event.screenshot_ref)
        boxes = self.detector(screenshot, event)
        box = select_clicked_region(boxes, event.cursor)
        if box is None:
            self.unresolved += 1
            return None
        patch = crop(screenshot, box.rect)
        patch = normalize_dpi(patch, self.source_dpi)
        return self.db.resolve_or_insert(patch, created_ms=event.timestamp_ms)


def crop(image: ImagePatch, rect: tuple[int, int, int, int]) -> ImagePatch:
    """Crop a rect (clamped to the image bounds) out of an image."""
    x, y, w, h = rect
    ih, iw = image.pixels.shape[:2]
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(iw, x + w), min(ih, y + h)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"crop rect {rect} outside image {iw}x{ih}")
    return ImagePatch(pixels=image.pixels[y0:y1, x0:x1].copy(), dpi=image.dpi)
