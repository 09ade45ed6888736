import { HttpApiClient } from "./api.js";
import { drawField, renderFieldNotice } from "./fieldview.js";
import { decodePpm, paintPatch } from "./ppm.js";
import { renderApp, renderPickerOptions } from "./render.js";
import { ExplorerStore } from "./state.js";

const api = new HttpApiClient();
const patchCache = new Map<string, ReturnType<typeof decodePpm>>();

const root = document.getElementById("app")!;
const pathInput = document.getElementById("log-path") as HTMLInputElement;
const loadButton = document.getElementById("load") as HTMLButtonElement;
const nextButton = document.getElementById("next") as HTMLButtonElement;
const resetButton = document.getElementById("reset") as HTMLButtonElement;
const picker = document.getElementById("picker") as HTMLSelectElement;
const insertButton = document.getElementById("insert") as HTMLButtonElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const fieldToggle = document.getElementById("field-toggle") as HTMLInputElement;
const fieldCanvas = document.getElementById("field-canvas") as HTMLCanvasElement;
const fieldNotice = document.getElementById("field-notice")!;

const store = new ExplorerStore(api, render);

function render(): void {
  const view = store.view();
  root.innerHTML = renderApp(view);
  nextButton.disabled = view.sessionId === null || view.eof || view.busy;
  resetButton.disabled = view.sessionId === null || view.busy;
  insertButton.disabled = view.sessionId === null || view.busy;
  undoButton.disabled = view.sessionId === null || view.busy;
  hydratePatches();
  if (fieldToggle.checked) {
    void refreshField();
  }
}

function hydratePatches(): void {
  for (const canvas of root.querySelectorAll<HTMLCanvasElement>("canvas[data-patch]")) {
    const ref = canvas.dataset.patch!;
    const cached = patchCache.get(ref);
    if (cached) {
      paintPatch(canvas, cached);
      continue;
    }
    api
      .patchBytes(ref)
      .then((bytes) => {
        const decoded = decodePpm(bytes);
        patchCache.set(ref, decoded);
        paintPatch(canvas, decoded);
      })
      .catch(() => {
        /* patch may be gone; thumbnail stays blank */
      });
  }
}

async function refreshField(): Promise<void> {
  const view = store.view();
  if (view.sessionId === null) {
    return;
  }
  try {
    const field = await api.field(view.sessionId, { ox: 0, oy: 0, nx: 24, ny: 18, step: 20 });
    fieldNotice.innerHTML = renderFieldNotice(field);
    const ctx = fieldCanvas.getContext("2d");
    if (ctx) {
      drawField(ctx, field, 6, fieldCanvas.width / (24 * 20));
    }
  } catch (error) {
    fieldNotice.textContent = `field error: ${(error as Error).message}`;
  }
}

loadButton.addEventListener("click", () => {
  void store
    .load({ actions: pathInput.value })
    .catch((error) => {
      fieldNotice.textContent = `load failed: ${(error as Error).message}`;
    })
    .then(loadVocab);
});

async function loadVocab(): Promise<void> {
  try {
    const vocab = await api.vocab();
    picker.innerHTML = renderPickerOptions(vocab.actions);
  } catch {
    picker.innerHTML = "";
  }
}

nextButton.addEventListener("click", () => void store.step().catch(() => {}));
resetButton.addEventListener("click", () => void store.reset().catch(() => {}));
insertButton.addEventListener("click", () => {
  if (picker.value) {
    void store.whatif(picker.value).catch(() => {});
  }
});
undoButton.addEventListener("click", () => void store.undoWhatif().catch(() => {}));
fieldToggle.addEventListener("change", () => {
  fieldCanvas.style.display = fieldToggle.checked ? "block" : "none";
  if (fieldToggle.checked) {
    void refreshField();
  } else {
    fieldNotice.innerHTML = "";
  }
});

render();
