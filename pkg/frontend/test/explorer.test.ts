import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { arrowSegments, renderFieldNotice } from "../src/fieldview.js";
import { decodePpm } from "../src/ppm.js";
import {
  collectPatchRefs,
  renderApp,
  renderChips,
  renderPickerOptions,
  renderPredictions,
} from "../src/render.js";
import { ExplorerStore } from "../src/state.js";
import type {
  ApiClient,
  FieldBody,
  GridSpec,
  PredictBody,
  SessionBody,
  VocabBody,
} from "../src/types.js";

const fixture = JSON.parse(
  readFileSync(fileURLToPath(new URL("./fixtures/replay.json", import.meta.url)), "utf-8"),
);

/** Serves the recorded API responses in replay order. */
class FixtureApi implements ApiClient {
  stepIndex = 0;

  async createSession(): Promise<SessionBody> {
    return structuredClone(fixture.session);
  }

  async step(): Promise<SessionBody> {
    const body = fixture.steps[this.stepIndex] ?? { ...fixture.steps.at(-1), eof: true, taken: undefined };
    this.stepIndex += 1;
    return structuredClone(body);
  }

  async whatif(_id: string, action: string): Promise<SessionBody> {
    expect(action).toBe(fixture.whatif_action);
    return structuredClone(fixture.whatif_insert);
  }

  async undoWhatif(): Promise<SessionBody> {
    return structuredClone(fixture.whatif_undo);
  }

  async reset(): Promise<SessionBody> {
    return structuredClone({ ...fixture.session, cursor: 0 });
  }

  async predict(): Promise<PredictBody> {
    return structuredClone(fixture.predict_initial);
  }

  async field(_id: string, _grid: GridSpec): Promise<FieldBody> {
    return structuredClone(fixture.field);
  }

  async vocab(): Promise<VocabBody> {
    return structuredClone(fixture.vocab);
  }

  async patchBytes(ref: string): Promise<Uint8Array> {
    const hex: string | undefined = fixture.patches_hex[ref];
    if (!hex) {
      throw new Error(`no recorded patch ${ref}`);
    }
    return Uint8Array.from(hex.match(/.{2}/g)!.map((b: string) => parseInt(b, 16)));
  }
}

async function loadedStore(): Promise<ExplorerStore> {
  const store = new ExplorerStore(new FixtureApi());
  await store.load({ actions: "fixture" });
  return store;
}

describe("session replay against recorded responses", () => {
  it("stepping 20 times shows exactly the fixture's taken actions", async () => {
    const store = await loadedStore();
    for (let i = 0; i < 20; i += 1) {
      await store.step();
    }
    const labels = store.view().chips.map((c) => c.label);
    const expected = fixture.steps.slice(0, 20).map((s: any) => s.taken.action);
    expect(labels).toEqual(expected);
  });

  it("shows five prediction rows per step, matching the recorded API responses", async () => {
    const store = await loadedStore();
    for (let i = 0; i < 20; i += 1) {
      await store.step();
      const view = store.view();
      const recorded = fixture.steps[i].predictions;
      expect(view.predictions.length).toBe(5);
      expect(view.predictions.map((p) => [p.action, p.prob])).toEqual(
        recorded.map((p: any) => [p.action, p.prob]),
      );
    }
  });

  it("flags correctness consistently with the top-1 comparison", async () => {
    const store = await loadedStore();
    const expectedFlags: string[] = [];
    let panelTop = fixture.predict_initial.predictions[0].action;
    for (let i = 0; i < 20; i += 1) {
      const taken = fixture.steps[i].taken.action;
      expectedFlags.push(panelTop === taken ? "correct" : "incorrect");
      panelTop = fixture.steps[i].predictions[0].action;
      await store.step();
    }
    const flags = store.view().chips.map((c) => c.flag);
    expect(flags).toEqual(expectedFlags);
    expect(new Set(flags).size).toBeGreaterThan(1); // fixture contains both outcomes
  });

  it("what-if insert then undo restores the exact prior view", async () => {
    const store = await loadedStore();
    for (let i = 0; i < 20; i += 1) {
      await store.step();
    }
    const before = renderApp(store.view());

    await store.whatif(fixture.whatif_action);
    const during = renderApp(store.view());
    expect(during).not.toEqual(before);
    expect(during).toContain("what-if");

    await store.undoWhatif();
    expect(renderApp(store.view())).toEqual(before);
  });

  it("marks end of session and reports eof", async () => {
    const store = await loadedStore();
    for (let i = 0; i < fixture.steps.length + 1; i += 1) {
      await store.step();
    }
    const view = store.view();
    expect(view.eof).toBe(true);
    expect(view.banner).toBe("End of session");
  });

  it("reset clears the timeline", async () => {
    const store = await loadedStore();
    await store.step();
    await store.step();
    await store.reset();
    const view = store.view();
    expect(view.cursor).toBe(0);
    expect(view.chips).toEqual([]);
  });
});

describe("request serialization", () => {
  it("never overlaps step/what-if requests", async () => {
    let active = 0;
    let maxActive = 0;
    const api = new FixtureApi();
    const originalStep = api.step.bind(api);
    api.step = async () => {
      active += 1;
      maxActive = Math.max(maxActive, active);
      await new Promise((resolve) => setTimeout(resolve, 5));
      const body = await originalStep();
      active -= 1;
      return body;
    };
    const store = new ExplorerStore(api);
    await store.load({ actions: "fixture" });
    await Promise.all([store.step(), store.step(), store.step()]);
    expect(maxActive).toBe(1);
    expect(store.view().chips.length).toBe(3);
  });
});

describe("rendering invariants", () => {
  it("probability bars are ordered and sum to at most 100%", () => {
    for (const step of fixture.steps) {
      const html = renderPredictions(step.predictions);
      const widths = [...html.matchAll(/width:([0-9.]+)%/g)].map((m) => Number(m[1]));
      expect(widths.length).toBe(step.predictions.length);
      const sorted = [...widths].sort((a, b) => b - a);
      expect(widths).toEqual(sorted);
      expect(widths.reduce((a, b) => a + b, 0)).toBeLessThanOrEqual(100.0 + 1e-9);
    }
  });

  it("button-action rows carry patch thumbnails", () => {
    const withButtons = fixture.steps.find((s: any) =>
      s.predictions.some((p: any) => p.patch_ref),
    );
    const html = renderPredictions(withButtons.predictions);
    expect(html).toContain('data-patch="/v1/patches/');
  });

  it("what-if chips are visibly marked synthetic", () => {
    const html = renderChips([
      { label: "CTRL+C", kind: "taken", flag: "correct" },
      { label: "CTRL+V", kind: "whatif", flag: null },
    ]);
    expect(html).toContain('class="chip taken correct"');
    expect(html).toContain('class="chip whatif"');
    expect(html).toContain("what-if");
  });

  it("picker lists the vocabulary without PAD/UNK", () => {
    const html = renderPickerOptions(fixture.vocab.actions);
    const count = (html.match(/<option/g) ?? []).length;
    expect(count).toBe(fixture.vocab.size - 2);
    expect(html).not.toContain("&lt;PAD&gt;");
    expect(html).not.toContain("&lt;UNK&gt;");
  });

  it("collects patch refs from chips and predictions", () => {
    const refs = collectPatchRefs({
      sessionId: "s",
      cursor: 1,
      length: 2,
      eof: false,
      chips: [{ label: "click:left@patch/3", kind: "taken", flag: null }],
      predictions: [{ action: "click:left@patch/7", prob: 0.5, patch_ref: "/v1/patches/7.ppm" }],
      banner: null,
      busy: false,
    });
    expect(refs).toEqual(["/v1/patches/3.ppm", "/v1/patches/7.ppm"]);
  });

  it("escapes markup in action labels", () => {
    const html = renderChips([{ label: "<script>", kind: "taken", flag: null }]);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("field overlay", () => {
  it("arrow segments equal the API vectors, scaled", () => {
    const field = fixture.field as FieldBody;
    const arrows = arrowSegments(field, 6);
    expect(arrows.length).toBe(field.vectors.length);
    arrows.forEach((arrow, index) => {
      const [dx, dy] = field.vectors[index];
      expect(arrow.x2 - arrow.x1).toBeCloseTo(dx * 6, 9);
      expect(arrow.y2 - arrow.y1).toBeCloseTo(dy * 6, 9);
      expect(arrow.magnitude).toBeCloseTo(Math.hypot(dx, dy), 9);
    });
  });

  it("grid positions follow origin and step", () => {
    const field = fixture.field as FieldBody;
    const arrows = arrowSegments(field, 1);
    const second = arrows[1];
    expect(second.x1).toBeCloseTo(field.origin[0] + field.step, 9);
    expect(second.y1).toBeCloseTo(field.origin[1], 9);
  });

  it("empty field renders a notice", () => {
    const empty: FieldBody = {
      origin: [0, 0],
      step: 10,
      nx: 0,
      ny: 0,
      vectors: [],
      targets: [],
      reason: "no_located_targets",
      elapsed_ms: 0,
    };
    expect(renderFieldNotice(empty)).toContain("no_located_targets");
    expect(renderFieldNotice(fixture.field)).toBe("");
  });
});

describe("ppm decoding", () => {
  it("decodes the recorded patches", async () => {
    const api = new FixtureApi();
    for (const ref of Object.keys(fixture.patches_hex)) {
      const image = decodePpm(await api.patchBytes(ref));
      expect(image.width).toBeGreaterThan(10);
      expect(image.height).toBeGreaterThan(10);
      expect(image.rgba.length).toBe(image.width * image.height * 4);
      expect(image.rgba[3]).toBe(255);
    }
  });

  it("rejects non-P6 payloads", () => {
    expect(() => decodePpm(new TextEncoder().encode("P3\n1 1\n255\n0 0 0"))).toThrow();
  });
});
