import type { FieldBody } from "./types.js";

export interface Arrow {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  magnitude: number;
}

/**
 * Turns a field response into drawable arrow segments.
 *
 * Each grid point gets a segment from the sample position along the API's
 * pull vector; rendered length is the vector scaled by `scale`, so arrow
 * length stays proportional to pull magnitude.
 */
export function arrowSegments(field: FieldBody, scale = 6): Arrow[] {
  const [ox, oy] = field.origin;
  const arrows: Arrow[] = [];
  field.vectors.forEach(([dx, dy], index) => {
    const i = index % field.nx;
    const j = Math.floor(index / field.nx);
    const x = ox + i * field.step;
    const y = oy + j * field.step;
    arrows.push({
      x1: x,
      y1: y,
      x2: x + dx * scale,
      y2: y + dy * scale,
      magnitude: Math.hypot(dx, dy),
    });
  });
  return arrows;
}

export function renderFieldNotice(field: FieldBody): string {
  if (field.vectors.length > 0) {
    return "";
  }
  const reason = field.reason ?? "no data";
  return `<div class="field-notice">field unavailable: ${reason}</div>`;
}

/** Draws the overlay: arrows plus red target outlines with confidence labels. */
export function drawField(
  ctx: CanvasRenderingContext2D,
  field: FieldBody,
  scale = 6,
  zoom = 1,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.save();
  ctx.scale(zoom, zoom);

  ctx.strokeStyle = "rgba(40, 90, 200, 0.85)";
  ctx.fillStyle = "rgba(40, 90, 200, 0.85)";
  ctx.lineWidth = 1;
  for (const arrow of arrowSegments(field, scale)) {
    ctx.beginPath();
    ctx.moveTo(arrow.x1, arrow.y1);
    ctx.lineTo(arrow.x2, arrow.y2);
    ctx.stroke();
    const angle = Math.atan2(arrow.y2 - arrow.y1, arrow.x2 - arrow.x1);
    const head = 3;
    ctx.beginPath();
    ctx.moveTo(arrow.x2, arrow.y2);
    ctx.lineTo(arrow.x2 - head * Math.cos(angle - 0.5), arrow.y2 - head * Math.sin(angle - 0.5));
    ctx.lineTo(arrow.x2 - head * Math.cos(angle + 0.5), arrow.y2 - head * Math.sin(angle + 0.5));
    ctx.fill();
  }

  ctx.strokeStyle = "red";
  ctx.fillStyle = "red";
  ctx.lineWidth = 2;
  ctx.font = "11px sans-serif";
  for (const target of field.targets) {
    const [x, y, w, h] = target.rect;
    ctx.strokeRect(x, y, w, h);
    ctx.fillText(`${(target.confidence * 100).toFixed(0)}%`, x, y - 3);
  }
  ctx.restore();
}
