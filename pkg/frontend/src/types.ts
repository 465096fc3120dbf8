// Wire types mirroring the server's canonical JSON encodings.

export type EvidenceStatus =
  | "ai_proposed"
  | "user_confirmed"
  | "user_refined"
  | "user_added";

export type AttributionGroup = "supporting" | "contradicting" | "neutral";

export type EventKind =
  | "RefineEvidence"
  | "ConfirmEvidence"
  | "AnnotateRegion"
  | "AcceptProposedEvidence"
  | "AddHypothesis"
  | "RemoveHypothesis"
  | "RegroupEvidence"
  | "Finalize";

export interface RegionW {
  x: number;
  y: number;
  width: number;
  height: number;
  author: "user" | "ai";
}

export interface EvidenceItemW {
  evidence_id: string;
  concept_id: string;
  state_id: string;
  probability: number;
  status: EvidenceStatus;
  region: RegionW | null;
  created_at_step: number;
}

export interface HypothesisW {
  diagnosis_label: string;
  score: number;
  in_conformal_set: boolean;
  origin: "ai_retrieved" | "user_added";
  excluded_by_user: boolean;
  newly_appeared: boolean;
}

export interface StateW {
  session_id: string;
  case_id: string;
  t: number;
  delta: number;
  evidence: EvidenceItemW[];
  archived_evidence: EvidenceItemW[];
  proposals: EvidenceItemW[];
  annotations: RegionW[];
  hypotheses: HypothesisW[];
  scores: Record<string, number>;
  weight_overlay: Record<string, Record<string, string>>;
  accepted: string | null;
  acceptance_available: boolean;
}

export interface AttributionW {
  concept_id: string;
  state_id: string;
  weight: number;
  contribution: number;
  magnitude: number;
  group: AttributionGroup;
  verified: boolean;
}

export interface AcceptanceW {
  available: boolean;
  label: string | null;
  score: number | null;
}

export interface SessionResponse {
  session_id: string;
  case_id: string;
  t: number;
  state: StateW;
  attributions: Record<string, AttributionW[]>;
  acceptance: AcceptanceW;
  finalized: boolean;
}

export interface EventDiff {
  session_id: string;
  event_id: string;
  t: number;
  changed_evidence: EvidenceItemW[];
  archived_evidence: EvidenceItemW[];
  new_proposals: EvidenceItemW[];
  closed_proposals: string[];
  changed_hypotheses: HypothesisW[];
  new_annotations: RegionW[];
  scores: Record<string, number>;
  attributions: Record<string, AttributionW[]>;
  acceptance: AcceptanceW;
  accepted: string | null;
  finalized: boolean;
}

export interface ConceptW {
  id: string;
  name: string;
  states: string[];
}

export interface SchemaResponse {
  schema_hash: string;
  concepts: ConceptW[];
  diagnoses: string[];
  delta_default: number;
  tau_e_default: number;
}

export interface CaseSummary {
  case_id: string;
  image_available: boolean;
  heatmap_concepts: string[];
}

export interface EventRequest {
  seq: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

export interface Grid {
  rows: number;
  cols: number;
  // row-major values normalized to [0, 1]
  values: Float64Array;
}
