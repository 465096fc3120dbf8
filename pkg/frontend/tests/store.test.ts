import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionStore } from "../src/store.js";
import type {
  EventDiff,
  EvidenceItemW,
  HypothesisW,
  SchemaResponse,
  SessionResponse,
  StateW,
} from "../src/types.js";

const schema: SchemaResponse = {
  schema_hash: "x",
  concepts: [
    { id: "pigment_network", name: "Pigment Network", states: ["absent", "typical", "atypical"] },
    { id: "streaks", name: "Streaks", states: ["absent", "regular", "irregular"] },
  ],
  diagnoses: ["nevus", "melanoma"],
  delta_default: 0.8,
  tau_e_default: 0.5,
};

function evidence(concept: string, state: string, status = "ai_proposed"): EvidenceItemW {
  return {
    evidence_id: `ev-0-${concept}`,
    concept_id: concept,
    state_id: state,
    probability: 0.8,
    status: status as EvidenceItemW["status"],
    region: null,
    created_at_step: 0,
  };
}

function hypothesis(label: string, score: number, extra: Partial<HypothesisW> = {}): HypothesisW {
  return {
    diagnosis_label: label,
    score,
    in_conformal_set: true,
    origin: "ai_retrieved",
    excluded_by_user: false,
    newly_appeared: false,
    ...extra,
  };
}

function initialState(): StateW {
  return {
    session_id: "s1",
    case_id: "c1",
    t: 0,
    delta: 0.8,
    evidence: [evidence("pigment_network", "typical"), evidence("streaks", "absent")],
    archived_evidence: [],
    proposals: [],
    annotations: [],
    hypotheses: [hypothesis("nevus", 0.7)],
    scores: { nevus: 0.7, melanoma: 0.3 },
    weight_overlay: {},
    accepted: null,
    acceptance_available: false,
  };
}

function snapshot(): SessionResponse {
  return {
    session_id: "s1",
    case_id: "c1",
    t: 0,
    state: initialState(),
    attributions: { nevus: [] },
    acceptance: { available: false, label: null, score: null },
    finalized: false,
  };
}

function makeStore(): SessionStore {
  const store = new SessionStore(new ApiClient("http://unused"), schema);
  store.adoptSnapshot(snapshot());
  return store;
}

describe("diff application", () => {
  it("replaces evidence per concept and archives the old item", () => {
    const store = makeStore();
    const refined = {
      ...evidence("streaks", "irregular", "user_refined"),
      evidence_id: "ev-1-streaks",
      created_at_step: 1,
    };
    const diff: EventDiff = {
      session_id: "s1",
      event_id: "e1",
      t: 1,
      changed_evidence: [refined],
      archived_evidence: [evidence("streaks", "absent")],
      new_proposals: [],
      closed_proposals: [],
      changed_hypotheses: [
        hypothesis("nevus", 0.2),
        hypothesis("melanoma", 0.75, { newly_appeared: true }),
      ],
      new_annotations: [],
      scores: { nevus: 0.2, melanoma: 0.75 },
      attributions: { nevus: [], melanoma: [] },
      acceptance: { available: false, label: null, score: null },
      accepted: null,
      finalized: false,
    };
    store.applyDiff(diff);
    expect(store.state.t).toBe(1);
    expect(store.state.evidence).toHaveLength(2);
    const streaks = store.state.evidence.find((e) => e.concept_id === "streaks")!;
    expect(streaks.state_id).toBe("irregular");
    expect(streaks.status).toBe("user_refined");
    expect(store.state.archived_evidence).toHaveLength(1);
    // hypotheses merged and kept in schema diagnosis order
    expect(store.state.hypotheses.map((h) => h.diagnosis_label))
      .toEqual(["nevus", "melanoma"]);
    expect(store.state.hypotheses[1].newly_appeared).toBe(true);
    expect(store.state.scores.melanoma).toBe(0.75);
  });

  it("adds and closes proposals", () => {
    const store = makeStore();
    const proposal = {
      ...evidence("pigment_network", "typical"),
      evidence_id: "prop-1-0",
      created_at_step: 1,
    };
    const base = {
      session_id: "s1",
      changed_evidence: [],
      archived_evidence: [],
      changed_hypotheses: [],
      new_annotations: [],
      scores: { nevus: 0.7, melanoma: 0.3 },
      attributions: { nevus: [] },
      acceptance: { available: false, label: null, score: null },
      accepted: null,
      finalized: false,
    };
    store.applyDiff({
      ...base, event_id: "e1", t: 1,
      new_proposals: [proposal], closed_proposals: [],
      new_annotations: [{ x: 0.1, y: 0.1, width: 0.2, height: 0.2, author: "user" }],
    } as EventDiff);
    expect(store.state.proposals).toHaveLength(1);
    expect(store.state.annotations).toHaveLength(1);
    store.applyDiff({
      ...base, event_id: "e2", t: 2,
      new_proposals: [], closed_proposals: ["prop-1-0"],
    } as EventDiff);
    expect(store.state.proposals).toHaveLength(0);
  });

  it("clears a selected hypothesis that stops being a candidate", () => {
    const store = makeStore();
    store.selectHypothesis("nevus");
    store.applyDiff({
      session_id: "s1",
      event_id: "e1",
      t: 1,
      changed_evidence: [],
      archived_evidence: [],
      new_proposals: [],
      closed_proposals: [],
      changed_hypotheses: [hypothesis("nevus", 0.7, { excluded_by_user: true })],
      new_annotations: [],
      scores: { nevus: 0.7, melanoma: 0.3 },
      attributions: {},
      acceptance: { available: false, label: null, score: null },
      accepted: null,
      finalized: false,
    });
    expect(store.selectedHypothesis).toBeNull();
    expect(store.candidates()).toHaveLength(0);
    expect(store.otherDiagnoses()).toEqual(["nevus", "melanoma"]);
  });
});
