import type { Prediction } from "./types.js";
import type { Chip, ViewModel } from "./state.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderChips(chips: Chip[]): string {
  if (chips.length === 0) {
    return `<div class="timeline empty">no actions yet</div>`;
  }
  const parts = chips.map((chip) => {
    const classes = ["chip", chip.kind];
    if (chip.flag) {
      classes.push(chip.flag);
    }
    const mark = chip.flag === "correct" ? " ✓" : chip.flag === "incorrect" ? " ✗" : "";
    const synthetic = chip.kind === "whatif" ? `<span class="tag">what-if</span>` : "";
    return `<span class="${classes.join(" ")}">${escapeHtml(chip.label)}${mark}${synthetic}</span>`;
  });
  return `<div class="timeline">${parts.join("")}</div>`;
}

export function renderPredictions(predictions: Prediction[]): string {
  const rows = predictions.map((p, rank) => {
    const pct = (p.prob * 100).toFixed(1);
    const thumb = p.patch_ref
      ? `<canvas class="thumb" data-patch="${escapeHtml(p.patch_ref)}" width="24" height="16"></canvas>`
      : "";
    return (
      `<div class="prediction-row" data-rank="${rank}" data-prob="${pct}">` +
      `${thumb}<span class="label">${escapeHtml(p.action)}</span>` +
      `<span class="bar"><span class="fill" style="width:${pct}%"></span></span>` +
      `<span class="pct">${pct}%</span></div>`
    );
  });
  return `<div class="predictions">${rows.join("")}</div>`;
}

export function renderBanner(view: ViewModel): string {
  if (!view.banner) {
    return "";
  }
  return `<div class="banner">${escapeHtml(view.banner)}</div>`;
}

export function renderStatus(view: ViewModel): string {
  if (view.sessionId === null) {
    return `<div class="status">no session</div>`;
  }
  return `<div class="status">position ${view.cursor} / ${view.length}${view.eof ? " (end)" : ""}</div>`;
}

/** Options for the what-if picker; the vocabulary endpoint never lists PAD/UNK. */
export function renderPickerOptions(actions: string[]): string {
  return actions
    .map((label) => `<option value="${escapeHtml(label)}">${escapeHtml(label)}</option>`)
    .join("");
}

export function renderGallery(patchRefs: string[]): string {
  if (patchRefs.length === 0) {
    return `<div class="gallery empty">no clicked patches yet</div>`;
  }
  const cells = patchRefs.map(
    (ref) =>
      `<figure class="patch"><canvas data-patch="${escapeHtml(ref)}" width="48" height="32"></canvas>` +
      `<figcaption>${escapeHtml(ref.split("/").pop() ?? ref)}</figcaption></figure>`,
  );
  return `<div class="gallery">${cells.join("")}</div>`;
}

/** Patch references visible in the timeline and the current forecast. */
export function collectPatchRefs(view: ViewModel): string[] {
  const refs = new Set<string>();
  for (const p of view.predictions) {
    if (p.patch_ref) {
      refs.add(p.patch_ref);
    }
  }
  for (const chip of view.chips) {
    const match = chip.label.match(/@patch\/(\d+)$/);
    if (match) {
      refs.add(`/v1/patches/${match[1]}.ppm`);
    }
  }
  return [...refs].sort();
}

/** The full explorer surface as one HTML string (DOM-free, snapshot-friendly). */
export function renderApp(view: ViewModel): string {
  return (
    `<section class="replay">${renderStatus(view)}${renderBanner(view)}${renderChips(view.chips)}</section>` +
    `<section class="forecast">${renderPredictions(view.predictions)}</section>` +
    `<section class="patches">${renderGallery(collectPatchRefs(view))}</section>`
  );
}
