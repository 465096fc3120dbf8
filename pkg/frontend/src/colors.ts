// Evidence provenance colors. The mapping is total: every status the server
// can emit has exactly one color, checked by the tests.

import type { EvidenceStatus } from "./types.js";

export const STATUS_COLORS: Record<EvidenceStatus, string> = {
  ai_proposed: "#9e9e9e", // grey: AI-extracted, not yet verified by the user
  user_confirmed: "#1e88e5", // blue: user confirmed the AI's evidence
  user_refined: "#1565c0", // blue: user replaced the asserted state
  user_added: "#0d47a1", // blue: user accepted a region proposal
};

export const ANNOTATION_COLOR = "#9c27b0"; // purple: user-drawn regions
export const PROPOSAL_COLOR = "#e53935"; // red: AI-proposed regions

export function statusColor(status: EvidenceStatus): string {
  const color = STATUS_COLORS[status];
  if (!color) throw new Error(`no color defined for status ${status}`);
  return color;
}

/** Blue for user-verified evidence dots, grey otherwise. */
export function dotColor(status: EvidenceStatus): string {
  return status === "ai_proposed" ? STATUS_COLORS.ai_proposed
    : STATUS_COLORS.user_confirmed;
}
