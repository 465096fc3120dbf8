// DOM renderers for the three views. Pure functions of the store plus a
// handler bundle; main.ts re-renders whole views from store notifications.

import { ANNOTATION_COLOR, PROPOSAL_COLOR, dotColor, statusColor } from "./colors.js";
import type { SessionStore } from "./store.js";
import type { AttributionGroup, EvidenceItemW, HypothesisW, RegionW } from "./types.js";

export interface Handlers {
  refine(conceptId: string, stateId: string): void;
  confirm(conceptId: string): void;
  acceptProposal(evidenceId: string, stateId?: string): void;
  addHypothesis(label: string): void;
  removeHypothesis(label: string): void;
  regroup(hypothesis: string, conceptId: string, group: AttributionGroup): void;
  finalize(label: string): void;
  selectHypothesis(label: string | null): void;
  toggleHeatmap(conceptId: string | null): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function conceptName(store: SessionStore, conceptId: string): string {
  const concept = store.schema.concepts.find((c) => c.id === conceptId);
  return concept?.name || conceptId;
}

function conceptStates(store: SessionStore, conceptId: string): string[] {
  return store.schema.concepts.find((c) => c.id === conceptId)?.states ?? [];
}

// -- image view ----------------------------------------------------------------

export function renderRegionOverlay(
  store: SessionStore,
  handlers: Handlers,
): HTMLElement {
  const layer = el("div", { class: "region-layer", "data-role": "regions" });
  for (const region of store.state.annotations) {
    layer.append(regionBox(region, ANNOTATION_COLOR, "annotation"));
  }
  for (const proposal of store.state.proposals) {
    if (!proposal.region) continue;
    const box = regionBox(proposal.region, PROPOSAL_COLOR, "proposal");
    box.dataset.evidenceId = proposal.evidence_id;
    box.title = `${proposal.concept_id}: ${proposal.state_id}`;
    box.append(proposalPopup(store, handlers, proposal));
    layer.append(box);
  }
  return layer;
}

function regionBox(region: RegionW, color: string, kind: string): HTMLElement {
  const box = el("div", { class: `region region-${kind}` });
  box.style.position = "absolute";
  box.style.left = `${region.x * 100}%`;
  box.style.top = `${region.y * 100}%`;
  box.style.width = `${region.width * 100}%`;
  box.style.height = `${region.height * 100}%`;
  box.style.border = `2px solid ${color}`;
  return box;
}

function proposalPopup(
  store: SessionStore,
  handlers: Handlers,
  proposal: EvidenceItemW,
): HTMLElement {
  const select = el("select", { class: "proposal-state" }) as HTMLSelectElement;
  for (const state of conceptStates(store, proposal.concept_id)) {
    const option = el("option", { value: state }, state) as HTMLOptionElement;
    option.selected = state === proposal.state_id;
    select.append(option);
  }
  const accept = el("button", { class: "accept-proposal" }, "Accept");
  accept.addEventListener("click", () =>
    handlers.acceptProposal(
      proposal.evidence_id,
      select.value === proposal.state_id ? undefined : select.value,
    ));
  return el(
    "div",
    { class: "proposal-popup" },
    el("span", {},
       `${conceptName(store, proposal.concept_id)} — proposed evidence `,
       el("em", {}, proposal.state_id),
       ` (confidence ${proposal.probability.toFixed(2)})`),
    select,
    accept,
  );
}

export function renderHeatmapPicker(
  store: SessionStore,
  handlers: Handlers,
  heatmapConcepts: string[],
  active: string | null,
): HTMLElement {
  const picker = el("div", { class: "heatmap-picker" }, "Heatmap: ");
  const none = el("button", { class: active === null ? "on" : "" }, "off");
  none.addEventListener("click", () => handlers.toggleHeatmap(null));
  picker.append(none);
  for (const conceptId of heatmapConcepts) {
    const btn = el("button", { class: active === conceptId ? "on" : "" },
                   conceptName(store, conceptId));
    btn.addEventListener("click", () =>
      handlers.toggleHeatmap(active === conceptId ? null : conceptId));
    picker.append(btn);
  }
  return picker;
}

// -- evidence view ---------------------------------------------------------------

export function renderEvidenceView(
  store: SessionStore,
  handlers: Handlers,
): HTMLElement {
  const view = el("section", { class: "evidence-view", "data-role": "evidence" });
  view.append(el("h2", {}, "Evidence"));
  const banner = store.banner;
  if (banner) view.append(el("div", { class: "banner" }, banner));

  const list = el("ul", { class: "evidence-list" });
  for (const item of store.state.evidence) {
    list.append(evidenceRow(store, handlers, item));
  }
  view.append(list);

  const selected = store.selectedHypothesis;
  if (selected && store.attributions[selected]) {
    view.append(renderAttributionGroups(store, handlers, selected));
  } else {
    view.append(el("p", { class: "hint" },
                   "Select a diagnosis to see supporting and contradicting evidence."));
  }
  return view;
}

function evidenceRow(
  store: SessionStore,
  handlers: Handlers,
  item: EvidenceItemW,
): HTMLElement {
  const chip = el("span", { class: `chip chip-${item.status}` }, item.status);
  chip.style.backgroundColor = statusColor(item.status);
  const row = el(
    "li",
    { class: "evidence-row", "data-concept": item.concept_id },
    el("span", { class: "concept" }, conceptName(store, item.concept_id)),
    el("span", { class: "state" }, item.state_id),
    el("span", { class: "prob" }, item.probability.toFixed(2)),
    chip,
  );
  if (item.status === "ai_proposed") {
    const confirm = el("button", { class: "confirm" }, "Confirm");
    confirm.addEventListener("click", () => handlers.confirm(item.concept_id));
    row.append(confirm);
  }
  row.append(refineControl(store, handlers, item.concept_id, item.state_id));
  return row;
}

function refineControl(
  store: SessionStore,
  handlers: Handlers,
  conceptId: string,
  currentState: string,
): HTMLElement {
  const wrap = el("span", { class: "refine-wrap" });
  const button = el("button", { class: "refine" }, "Refine");
  button.addEventListener("click", () => {
    if (wrap.querySelector("select")) return;
    const select = el("select", { class: "refine-select" }) as HTMLSelectElement;
    for (const state of conceptStates(store, conceptId)) {
      const option = el("option", { value: state }, state) as HTMLOptionElement;
      option.selected = state === currentState;
      select.append(option);
    }
    const apply = el("button", { class: "refine-apply" }, "Apply");
    apply.addEventListener("click", () => handlers.refine(conceptId, select.value));
    wrap.append(select, apply);
  });
  wrap.append(button);
  return wrap;
}

function renderAttributionGroups(
  store: SessionStore,
  handlers: Handlers,
  hypothesis: string,
): HTMLElement {
  const groups: AttributionGroup[] = ["supporting", "contradicting", "neutral"];
  const wrap = el("div", { class: "attribution", "data-role": "attribution" });
  wrap.append(el("h3", {}, `Evidence for ${hypothesis}`));
  for (const group of groups) {
    const bucket = el("div", {
      class: `attr-group attr-${group}`,
      "data-group": group,
    });
    bucket.append(el("h4", {}, group));
    for (const entry of store.attributions[hypothesis] ?? []) {
      if (entry.group !== group) continue;
      const dot = el("span", { class: "dot" }, "●");
      dot.style.color = entry.verified
        ? statusColor("user_confirmed")
        : statusColor("ai_proposed");
      const rowEl = el(
        "div",
        { class: "attr-entry", draggable: "true", "data-concept": entry.concept_id },
        dot,
        el("span", {}, ` ${conceptName(store, entry.concept_id)}=${entry.state_id} `),
        el("span", { class: "magnitude" }, entry.magnitude.toFixed(3)),
      );
      rowEl.addEventListener("dragstart", (ev) => {
        (ev as DragEvent).dataTransfer?.setData("text/concept", entry.concept_id);
      });
      const remove = el("button", { class: "attr-remove" }, "x");
      remove.title = "Move to neutral";
      remove.addEventListener("click", () =>
        handlers.regroup(hypothesis, entry.concept_id, "neutral"));
      rowEl.append(remove);
      bucket.append(rowEl);
    }
    bucket.addEventListener("dragover", (ev) => ev.preventDefault());
    bucket.addEventListener("drop", (ev) => {
      ev.preventDefault();
      const conceptId = (ev as DragEvent).dataTransfer?.getData("text/concept");
      if (conceptId) handlers.regroup(hypothesis, conceptId, group);
    });
    wrap.append(bucket);
  }
  return wrap;
}

// -- diagnosis view ---------------------------------------------------------------

export function renderDiagnosisView(
  store: SessionStore,
  handlers: Handlers,
): HTMLElement {
  const view = el("section", { class: "diagnosis-view", "data-role": "diagnosis" });
  view.append(el("h2", {}, "Diagnosis"));

  if (store.finalized && store.state.accepted) {
    view.append(el("div", { class: "accepted", "data-role": "accepted" },
                   `Final diagnosis: ${store.state.accepted}`));
  }

  const yours = el("div", { class: "your-diagnosis", "data-role": "your-diagnosis" });
  yours.append(el("h3", {}, "Your Diagnosis"));
  for (const entry of store.candidates()) {
    yours.append(hypothesisCard(store, handlers, entry));
  }
  yours.addEventListener("dragover", (ev) => ev.preventDefault());
  yours.addEventListener("drop", (ev) => {
    ev.preventDefault();
    const label = (ev as DragEvent).dataTransfer?.getData("text/diagnosis");
    if (label) handlers.addHypothesis(label);
  });

  const others = el("div", { class: "other-diagnosis", "data-role": "other-diagnosis" });
  others.append(el("h3", {}, "Other Diagnosis"));
  for (const label of store.otherDiagnoses()) {
    const row = el(
      "div",
      { class: "other-entry", draggable: "true", "data-label": label },
      el("span", {}, label),
      el("span", { class: "score" },
         ` ${(store.state.scores[label] ?? 0).toFixed(3)}`),
    );
    row.addEventListener("dragstart", (ev) => {
      (ev as DragEvent).dataTransfer?.setData("text/diagnosis", label);
    });
    others.append(row);
  }
  others.addEventListener("dragover", (ev) => ev.preventDefault());
  others.addEventListener("drop", (ev) => {
    ev.preventDefault();
    const label = (ev as DragEvent).dataTransfer?.getData("text/candidate");
    if (label) handlers.removeHypothesis(label);
  });

  view.append(yours, others);
  return view;
}

function hypothesisCard(
  store: SessionStore,
  handlers: Handlers,
  entry: HypothesisW,
): HTMLElement {
  const card = el("div", {
    class: "hypothesis-card" +
      (store.selectedHypothesis === entry.diagnosis_label ? " selected" : ""),
    draggable: "true",
    "data-label": entry.diagnosis_label,
  });
  card.addEventListener("dragstart", (ev) => {
    (ev as DragEvent).dataTransfer?.setData("text/candidate", entry.diagnosis_label);
  });
  const title = el("span", { class: "label" }, entry.diagnosis_label);
  title.addEventListener("click", () =>
    handlers.selectHypothesis(
      store.selectedHypothesis === entry.diagnosis_label
        ? null
        : entry.diagnosis_label));
  card.append(title);

  if (entry.newly_appeared) {
    card.append(el("span", { class: "badge-new", "data-role": "badge" }, "new"));
  }

  const bar = el("div", { class: "score-bar" });
  const fill = el("div", { class: "score-fill" });
  fill.style.width = `${(entry.score * 100).toFixed(1)}%`;
  bar.append(fill);
  card.append(bar, el("span", { class: "score" }, entry.score.toFixed(3)));

  const dots = el("span", { class: "evidence-dots" });
  for (const item of store.state.evidence) {
    const dot = el("span", { class: "dot", "data-status": item.status }, "●");
    dot.style.color = dotColor(item.status);
    dot.title = `${item.concept_id}=${item.state_id} (${item.status})`;
    dots.append(dot);
  }
  card.append(dots);

  const finalize = el("button", { class: "finalize" }, "Finalize") as HTMLButtonElement;
  finalize.disabled = store.finalized;
  if (store.acceptance.available && store.acceptance.label === entry.diagnosis_label) {
    finalize.classList.add("ready");
  }
  finalize.addEventListener("click", () => handlers.finalize(entry.diagnosis_label));
  card.append(finalize);
  return card;
}
