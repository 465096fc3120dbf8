// Application wiring: case picking, view mounting, gesture dispatch,
// image canvas with heatmap overlay and drag-to-annotate.

import { ApiClient } from "./api.js";
import {
  acceptProposalGesture,
  annotateGesture,
  confirmGesture,
  dragAddGesture,
  dragRemoveGesture,
  normalizeSelection,
  refineGesture,
  regroupGesture,
} from "./gestures.js";
import {
  Handlers,
  renderDiagnosisView,
  renderEvidenceView,
  renderHeatmapPicker,
  renderRegionOverlay,
} from "./render.js";
import { SessionStore } from "./store.js";
import type { CaseSummary, Grid } from "./types.js";

const api = new ApiClient("");

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const schema = await api.getSchema();
  const cases = await api.listCases();
  const store = new SessionStore(api, schema);

  const picker = document.createElement("div");
  picker.className = "case-picker";
  picker.append("Case: ");
  const select = document.createElement("select");
  for (const summary of cases) {
    const option = document.createElement("option");
    option.value = summary.case_id;
    option.textContent = summary.case_id;
    select.append(option);
  }
  const openBtn = document.createElement("button");
  openBtn.textContent = "Open";
  openBtn.addEventListener("click", async () => {
    await store.open(select.value);
    mountSession(root, store, cases.find((c) => c.case_id === select.value)!);
  });
  picker.append(select, openBtn);
  root.append(picker);
}

function mountSession(
  root: HTMLElement,
  store: SessionStore,
  summary: CaseSummary,
): void {
  root.querySelector(".session")?.remove();
  const wrap = document.createElement("div");
  wrap.className = "session";
  const imageView = document.createElement("section");
  imageView.className = "image-view";
  const evidenceMount = document.createElement("div");
  const diagnosisMount = document.createElement("div");
  wrap.append(imageView, evidenceMount, diagnosisMount);
  root.append(wrap);

  let activeHeatmap: string | null = null;
  const heatmapCache = new Map<string, Grid>();

  const handlers: Handlers = {
    refine: (conceptId, stateId) =>
      void store.send(refineGesture(store.nextSeq(), conceptId, stateId)),
    confirm: (conceptId) =>
      void store.send(confirmGesture(store.nextSeq(), conceptId)),
    acceptProposal: (evidenceId, stateId) =>
      void store.send(acceptProposalGesture(store.nextSeq(), evidenceId, stateId)),
    addHypothesis: (label) =>
      void store.send(dragAddGesture(store.nextSeq(), label)),
    removeHypothesis: (label) =>
      void store.send(dragRemoveGesture(store.nextSeq(), label)),
    regroup: (hypothesis, conceptId, group) =>
      void store.send(regroupGesture(store.nextSeq(), hypothesis, conceptId, group)),
    finalize: (label) => void finalizeWithConfirm(store, label),
    selectHypothesis: (label) => store.selectHypothesis(label),
    toggleHeatmap: (conceptId) => {
      activeHeatmap = conceptId;
      renderImage();
    },
  };

  function renderImage(): void {
    imageView.replaceChildren();
    imageView.append(
      renderHeatmapPicker(store, handlers, summary.heatmap_concepts, activeHeatmap));
    const frame = document.createElement("div");
    frame.className = "image-frame";
    frame.style.position = "relative";
    const img = document.createElement("img");
    img.src = store.api.imageUrl(store.state.case_id);
    img.alt = store.state.case_id;
    img.draggable = false;
    frame.append(img);
    if (activeHeatmap) {
      void drawHeatmap(frame, store.state.case_id, activeHeatmap);
    }
    frame.append(renderRegionOverlay(store, handlers));
    attachAnnotationDrawing(frame, store);
    imageView.append(frame);
  }

  async function drawHeatmap(
    frame: HTMLElement, caseId: string, conceptId: string,
  ): Promise<void> {
    let grid = heatmapCache.get(conceptId);
    if (!grid) {
      try {
        grid = await store.api.fetchHeatmap(caseId, conceptId);
      } catch {
        return;
      }
      heatmapCache.set(conceptId, grid);
    }
    const canvas = document.createElement("canvas");
    canvas.className = "heatmap-overlay";
    canvas.width = grid.cols;
    canvas.height = grid.rows;
    canvas.style.position = "absolute";
    canvas.style.inset = "0";
    canvas.style.width = "100%";
    canvas.style.height = "100%";
    canvas.style.pointerEvents = "none";
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const image = ctx.createImageData(grid.cols, grid.rows);
    for (let i = 0; i < grid.values.length; i++) {
      image.data[i * 4] = 255;
      image.data[i * 4 + 1] = 64;
      image.data[i * 4 + 2] = 0;
      image.data[i * 4 + 3] = Math.round(grid.values[i] * 160);
    }
    ctx.putImageData(image, 0, 0);
    frame.append(canvas);
  }

  function attachAnnotationDrawing(frame: HTMLElement, s: SessionStore): void {
    let start: { x: number; y: number } | null = null;
    let rubber: HTMLElement | null = null;
    frame.addEventListener("mousedown", (ev) => {
      const rect = frame.getBoundingClientRect();
      start = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
      rubber = document.createElement("div");
      rubber.className = "rubber-band";
      rubber.style.position = "absolute";
      rubber.style.border = "1px dashed #9c27b0";
      frame.append(rubber);
    });
    frame.addEventListener("mousemove", (ev) => {
      if (!start || !rubber) return;
      const rect = frame.getBoundingClientRect();
      const x = ev.clientX - rect.left;
      const y = ev.clientY - rect.top;
      rubber.style.left = `${Math.min(start.x, x)}px`;
      rubber.style.top = `${Math.min(start.y, y)}px`;
      rubber.style.width = `${Math.abs(x - start.x)}px`;
      rubber.style.height = `${Math.abs(y - start.y)}px`;
    });
    frame.addEventListener("mouseup", (ev) => {
      if (!start) return;
      const rect = frame.getBoundingClientRect();
      const selection = {
        x: start.x,
        y: start.y,
        width: ev.clientX - rect.left - start.x,
        height: ev.clientY - rect.top - start.y,
      };
      start = null;
      rubber?.remove();
      rubber = null;
      const box = normalizeSelection(selection, rect.width, rect.height);
      if (box) void s.send(annotateGesture(s.nextSeq(), box));
    });
  }

  function renderAll(): void {
    renderImage();
    evidenceMount.replaceChildren(renderEvidenceView(store, handlers));
    diagnosisMount.replaceChildren(renderDiagnosisView(store, handlers));
  }

  store.subscribe(renderAll);
  renderAll();
}

async function finalizeWithConfirm(store: SessionStore, label: string): Promise<void> {
  const ready = store.acceptance.available && store.acceptance.label === label;
  if (ready) {
    await store.finalize(label, false);
    return;
  }
  const score = store.state.scores[label] ?? 0;
  const go = window.confirm(
    `${label} scores ${score.toFixed(3)}, below the acceptance threshold ` +
    `${store.state.delta}. Finalize anyway?`);
  if (go) await store.finalize(label, true);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot();
}
