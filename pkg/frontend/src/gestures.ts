// Pure gesture -> event mapping. Every user gesture produces exactly one
// event; these builders are the only place the UI constructs event bodies.

import type { AttributionGroup, EventRequest } from "./types.js";

export interface PixelBox {
  x: number;
  y: number;
  width: number;
  height: number;
}

export function refineGesture(
  seq: number,
  conceptId: string,
  stateId: string,
): EventRequest {
  return {
    seq,
    kind: "RefineEvidence",
    payload: { concept_id: conceptId, state_id: stateId },
  };
}

export function confirmGesture(seq: number, conceptId: string): EventRequest {
  return { seq, kind: "ConfirmEvidence", payload: { concept_id: conceptId } };
}

export function annotateGesture(
  seq: number,
  box: { x: number; y: number; width: number; height: number },
): EventRequest {
  return { seq, kind: "AnnotateRegion", payload: { ...box } };
}

export function acceptProposalGesture(
  seq: number,
  evidenceId: string,
  stateId?: string,
): EventRequest {
  const payload: Record<string, unknown> = { evidence_id: evidenceId };
  if (stateId !== undefined) payload.state_id = stateId;
  return { seq, kind: "AcceptProposedEvidence", payload };
}

export function dragAddGesture(seq: number, label: string): EventRequest {
  return { seq, kind: "AddHypothesis", payload: { label } };
}

export function dragRemoveGesture(seq: number, label: string): EventRequest {
  return { seq, kind: "RemoveHypothesis", payload: { label } };
}

export function regroupGesture(
  seq: number,
  hypothesis: string,
  conceptId: string,
  group: AttributionGroup,
): EventRequest {
  return {
    seq,
    kind: "RegroupEvidence",
    payload: { hypothesis, concept_id: conceptId, group },
  };
}

/**
 * Convert a drag selection in element pixels to normalized image
 * coordinates, clamped to the unit square. Returns null for degenerate
 * selections (no area after clamping).
 */
export function normalizeSelection(
  selection: PixelBox,
  imageWidth: number,
  imageHeight: number,
): { x: number; y: number; width: number; height: number } | null {
  if (imageWidth <= 0 || imageHeight <= 0) return null;
  const x0 = Math.max(0, Math.min(selection.x, selection.x + selection.width));
  const y0 = Math.max(0, Math.min(selection.y, selection.y + selection.height));
  const x1 = Math.min(imageWidth, Math.max(selection.x, selection.x + selection.width));
  const y1 = Math.min(imageHeight, Math.max(selection.y, selection.y + selection.height));
  const width = (x1 - x0) / imageWidth;
  const height = (y1 - y0) / imageHeight;
  if (width <= 0 || height <= 0) return null;
  return { x: x0 / imageWidth, y: y0 / imageHeight, width, height };
}
