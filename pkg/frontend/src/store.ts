// Client-side session store. The server is the single source of truth:
// the store only folds server responses (full snapshots or event diffs)
// into the rendered copy and enforces one in-flight mutation at a time.

import { ApiClient, ConflictError } from "./api.js";
import type {
  AcceptanceW,
  AttributionW,
  EventDiff,
  EventRequest,
  SchemaResponse,
  SessionResponse,
  StateW,
} from "./types.js";

export type Listener = () => void;

export class SessionStore {
  state!: StateW;
  attributions: Record<string, AttributionW[]> = {};
  acceptance: AcceptanceW = { available: false, label: null, score: null };
  finalized = false;
  selectedHypothesis: string | null = null;
  banner: string | null = null;
  busy = false;

  private listeners: Listener[] = [];

  constructor(
    public api: ApiClient,
    public schema: SchemaResponse,
  ) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  get sessionId(): string {
    return this.state.session_id;
  }

  /** The seq the next event must carry. */
  nextSeq(): number {
    return this.state.t + 1;
  }

  async open(caseId: string): Promise<void> {
    this.adoptSnapshot(await this.api.createSession(caseId));
  }

  async refresh(): Promise<void> {
    this.adoptSnapshot(await this.api.getSession(this.sessionId));
  }

  adoptSnapshot(snapshot: SessionResponse): void {
    this.state = snapshot.state;
    this.attributions = snapshot.attributions;
    this.acceptance = snapshot.acceptance;
    this.finalized = snapshot.finalized;
    if (this.selectedHypothesis &&
        !(this.selectedHypothesis in snapshot.attributions)) {
      this.selectedHypothesis = null;
    }
    this.notify();
  }

  /**
   * Send one gesture's event. On conflict the session is refreshed and the
   * gesture is dropped with a banner; the user re-issues it against the
   * fresh state. Network failures only raise the banner.
   */
  async send(event: EventRequest): Promise<EventDiff | null> {
    if (this.busy || this.finalized) return null;
    this.busy = true;
    this.notify();
    try {
      const diff = await this.api.postEvent(this.sessionId, event);
      this.applyDiff(diff);
      this.banner = null;
      return diff;
    } catch (err) {
      if (err instanceof ConflictError) {
        this.banner = "Session moved on elsewhere; refreshed. Please retry.";
        await this.refresh();
      } else {
        this.banner = `Request failed: ${(err as Error).message}`;
      }
      return null;
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  async finalize(label: string, override: boolean): Promise<boolean> {
    if (this.busy || this.finalized) return false;
    this.busy = true;
    this.notify();
    try {
      this.adoptSnapshot(await this.api.finalize(this.sessionId, label, override));
      this.banner = null;
      return true;
    } catch (err) {
      this.banner = `Finalize failed: ${(err as Error).message}`;
      return false;
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  applyDiff(diff: EventDiff): void {
    const state = this.state;
    state.t = diff.t;
    for (const item of diff.changed_evidence) {
      const at = state.evidence.findIndex(
        (e) => e.concept_id === item.concept_id);
      if (at >= 0) state.evidence[at] = item;
      else state.evidence.push(item);
    }
    // keep schema concept order after inserts
    const order = new Map(this.schema.concepts.map((c, i) => [c.id, i]));
    state.evidence.sort(
      (a, b) => (order.get(a.concept_id) ?? 0) - (order.get(b.concept_id) ?? 0));
    state.archived_evidence.push(...diff.archived_evidence);
    state.proposals = state.proposals.filter(
      (p) => !diff.closed_proposals.includes(p.evidence_id));
    state.proposals.push(...diff.new_proposals);
    for (const entry of diff.changed_hypotheses) {
      const at = state.hypotheses.findIndex(
        (h) => h.diagnosis_label === entry.diagnosis_label);
      if (at >= 0) state.hypotheses[at] = entry;
      else state.hypotheses.push(entry);
    }
    const diagOrder = new Map(this.schema.diagnoses.map((d, i) => [d, i]));
    state.hypotheses.sort(
      (a, b) =>
        (diagOrder.get(a.diagnosis_label) ?? 0) -
        (diagOrder.get(b.diagnosis_label) ?? 0));
    state.annotations.push(...diff.new_annotations);
    state.scores = diff.scores;
    state.accepted = diff.accepted;
    state.acceptance_available = diff.acceptance.available;
    this.attributions = diff.attributions;
    this.acceptance = diff.acceptance;
    this.finalized = diff.finalized;
    if (this.selectedHypothesis && !(this.selectedHypothesis in diff.attributions)) {
      this.selectedHypothesis = null;
    }
    this.notify();
  }

  candidates() {
    return this.state.hypotheses.filter((h) => !h.excluded_by_user);
  }

  otherDiagnoses(): string[] {
    const current = new Set(this.candidates().map((h) => h.diagnosis_label));
    return this.schema.diagnoses.filter((d) => !current.has(d));
  }

  selectHypothesis(label: string | null): void {
    this.selectedHypothesis = label;
    this.notify();
  }
}
