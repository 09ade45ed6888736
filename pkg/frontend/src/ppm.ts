/** Decoder for the binary PPM (P6, maxval 255) patches the service serves. */

export interface DecodedImage {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

export function decodePpm(bytes: Uint8Array): DecodedImage {
  const fields: string[] = [];
  let pos = 0;
  while (fields.length < 4) {
    while (pos < bytes.length && isSpace(bytes[pos])) {
      pos += 1;
    }
    if (bytes[pos] === 0x23) {
      // comment line
      while (pos < bytes.length && bytes[pos] !== 0x0a) {
        pos += 1;
      }
      continue;
    }
    const start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) {
      pos += 1;
    }
    fields.push(String.fromCharCode(...bytes.subarray(start, pos)));
  }
  if (fields[0] !== "P6" || fields[3] !== "255") {
    throw new Error(`unsupported PPM header: ${fields.join(" ")}`);
  }
  pos += 1; // single whitespace after maxval
  const width = Number(fields[1]);
  const height = Number(fields[2]);
  const expected = width * height * 3;
  const pixels = bytes.subarray(pos, pos + expected);
  if (pixels.length < expected) {
    throw new Error("truncated PPM payload");
  }
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i += 1) {
    rgba[i * 4] = pixels[i * 3];
    rgba[i * 4 + 1] = pixels[i * 3 + 1];
    rgba[i * 4 + 2] = pixels[i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x0a || byte === 0x0d || byte === 0x09;
}

/** Paints a decoded patch onto a canvas, scaling to fit. */
export function paintPatch(canvas: HTMLCanvasElement, image: DecodedImage): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const off = document.createElement("canvas");
  off.width = image.width;
  off.height = image.height;
  off.getContext("2d")!.putImageData(new ImageData(image.rgba, image.width, image.height), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}
