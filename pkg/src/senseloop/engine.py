"""The iterative evidence/hypothesis loop.

Owns session state transitions: AI evidence extraction at step zero,
conformal hypothesis retrieval, rescoring after each human intervention, the
acceptance-threshold rule, and deterministic replay of persisted event logs.
Every function is pure: a state plus an event yields a new state, identical
across live application and replay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .conformal import ConformalCalibration, retrieve_hypotheses
from .domain import (
    Case,
    EventKind,
    EvidenceItem,
    EvidenceStatus,
    HypothesisEntry,
    HypothesisOrigin,
    InterventionEvent,
    RegionAnnotation,
    RegionAuthor,
    SensemakingState,
    can_transition,
)
from .errors import (
    CorruptLogError,
    EventValidationError,
    OutOfOrderEventError,
    SchemaMismatchError,
    SessionFinalizedError,
    ThresholdNotMetError,
    UnknownConceptError,
    UnknownHypothesisError,
)
from .schema import ConceptSchema
from .scoring import ModelWeights, assemble_vector, score

DELTA_DEFAULT = 0.8
TAU_E_DEFAULT = 0.5
PROPOSAL_TOP_K = 3


@dataclass(frozen=True)
class SessionConfig:
    """Per-session loop parameters."""

    delta: float = DELTA_DEFAULT
    tau_e: float = TAU_E_DEFAULT

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 < self.tau_e <= 1.0:
            raise ValueError(f"tau_e must be in (0, 1], got {self.tau_e}")


@dataclass(frozen=True)
class SessionContext:
    """Fixed inputs of one session: the case plus the scoring artifacts.

    `heatmaps` maps concept ids to 2-D grids when precomputed saliency assets
    exist for the case; region proposals use them when present.
    """

    case: Case
    weights: ModelWeights
    calibration: ConformalCalibration
    schema: ConceptSchema
    config: SessionConfig = field(default_factory=SessionConfig)
    heatmaps: Optional[Mapping[str, np.ndarray]] = None

    def __post_init__(self):
        self.weights.check_schema(self.schema)
        if self.calibration.schema_hash != self.schema.schema_hash:
            raise SchemaMismatchError("calibration does not match session schema")


@dataclass(frozen=True)
class RegionProposal:
    """One ranked suggestion tied to an annotated region."""

    concept_id: str
    state_id: str
    confidence: float


def extract_evidence(
    case: Case, schema: ConceptSchema, tau_e: float = TAU_E_DEFAULT, step: int = 0
) -> tuple[EvidenceItem, ...]:
    """Propose one evidence item per concept whose top state clears tau_e.

    Concepts below the threshold yield nothing; they stay available as raw
    information for later refinement.
    """
    items = []
    for concept in schema.concepts:
        probs = case.concept_probs[concept.concept_id]
        best_state = max(concept.states, key=lambda s: probs[s])
        if probs[best_state] >= tau_e:
            items.append(EvidenceItem(
                evidence_id=f"ev-{step}-{concept.concept_id}",
                concept_id=concept.concept_id,
                state_id=best_state,
                probability=float(probs[best_state]),
                status=EvidenceStatus.AI_PROPOSED,
                created_at_step=step,
            ))
    return tuple(items)


def _score_map(ctx: SessionContext, x: np.ndarray) -> dict[str, float]:
    probs = score(ctx.weights, x)
    return {label: float(probs[i]) for i, label in enumerate(ctx.schema.diagnoses)}


def _ordered_hypotheses(
    schema: ConceptSchema, entries: Iterable[HypothesisEntry]
) -> tuple[HypothesisEntry, ...]:
    by_label = {h.diagnosis_label: h for h in entries}
    return tuple(by_label[lab] for lab in schema.diagnoses if lab in by_label)


def init_session(
    ctx: SessionContext, session_id: str
) -> SensemakingState:
    """Step zero: extract evidence, retrieve and score the initial hypotheses."""
    evidence = extract_evidence(ctx.case, ctx.schema, ctx.config.tau_e, step=0)
    x = assemble_vector(ctx.case, evidence, ctx.schema)
    scores = _score_map(ctx, x)
    retrieved = retrieve_hypotheses(ctx.calibration, ctx.weights, x, ctx.schema)
    hypotheses = tuple(
        HypothesisEntry(
            diagnosis_label=label,
            score=scores[label],
            in_conformal_set=True,
            origin=HypothesisOrigin.AI_RETRIEVED,
            newly_appeared=False,
        )
        for label in retrieved
    )
    return SensemakingState(
        session_id=session_id,
        case_id=ctx.case.case_id,
        t=0,
        delta=ctx.config.delta,
        evidence=evidence,
        archived_evidence=(),
        proposals=(),
        annotations=(),
        hypotheses=hypotheses,
        scores=scores,
        weight_overlay={},
        accepted=None,
    )


def check_acceptance(state: SensemakingState) -> Optional[tuple[str, float]]:
    """Best non-excluded hypothesis iff it clears the threshold; ties go to
    the earliest diagnosis in schema order."""
    best = state.best_candidate()
    if best is not None and best.score >= state.delta:
        return best.diagnosis_label, best.score
    return None


def _entropy(probs: Sequence[float]) -> float:
    return -sum(p * math.log(p) for p in probs if p > 0.0)


def _mass_in_box(grid: np.ndarray, region: RegionAnnotation) -> float:
    """Sum of grid values inside the region, with fractional cell coverage."""
    grid = np.asarray(grid, dtype=float)
    rows, cols = grid.shape
    x_edges = np.arange(cols + 1) / cols
    y_edges = np.arange(rows + 1) / rows
    ox = np.clip(
        np.minimum(x_edges[1:], region.x + region.width) - np.maximum(x_edges[:-1], region.x),
        0.0, None) * cols
    oy = np.clip(
        np.minimum(y_edges[1:], region.y + region.height) - np.maximum(y_edges[:-1], region.y),
        0.0, None) * rows
    return float(np.outer(oy, ox).ravel() @ grid.ravel())


def propose_region_evidence(
    case: Case,
    region: RegionAnnotation,
    schema: ConceptSchema,
    evidence: Iterable[EvidenceItem] = (),
    heatmaps: Optional[Mapping[str, np.ndarray]] = None,
    top_k: int = PROPOSAL_TOP_K,
) -> list[RegionProposal]:
    """Rank concepts likely to yield evidence inside an annotated region.

    With heatmaps, concepts are ranked by their saliency mass inside the box
    (normalized across concepts so the whole-image box reproduces the global
    mass ranking). Without them, concepts the user has not yet verified are
    ranked by the entropy of their predicted states, most uncertain first.
    """
    ranked: list[tuple[float, int, str]] = []
    if heatmaps:
        masses = {
            cid: _mass_in_box(grid, region)
            for cid, grid in heatmaps.items()
            if schema.has_concept(cid)
        }
        total = sum(masses.values())
        if total <= 0.0:
            return []
        for i, concept in enumerate(schema.concepts):
            if concept.concept_id in masses:
                ranked.append((masses[concept.concept_id] / total, i, concept.concept_id))
    else:
        verified = {e.concept_id for e in evidence if e.verified}
        for i, concept in enumerate(schema.concepts):
            if concept.concept_id in verified:
                continue
            probs = [case.concept_probs[concept.concept_id][s] for s in concept.states]
            ranked.append((_entropy(probs) / math.log(len(concept.states)), i, concept.concept_id))
    ranked.sort(key=lambda item: (-item[0], item[1]))
    proposals = []
    for confidence, _, concept_id in ranked[:top_k]:
        concept = schema.concept(concept_id)
        probs = case.concept_probs[concept_id]
        best_state = max(concept.states, key=lambda s: probs[s])
        proposals.append(RegionProposal(concept_id, best_state, float(confidence)))
    return proposals


def _retrieval_update(
    ctx: SessionContext,
    evidence: tuple[EvidenceItem, ...],
    hypotheses: tuple[HypothesisEntry, ...],
) -> tuple[dict[str, float], tuple[HypothesisEntry, ...]]:
    """Rescore and widen the hypothesis set after an evidence change.

    Membership never shrinks: existing entries get fresh scores and
    conformal-set flags, genuinely new retrieved labels join flagged as
    newly appeared.
    """
    x = assemble_vector(ctx.case, evidence, ctx.schema)
    scores = _score_map(ctx, x)
    retrieved = set(retrieve_hypotheses(ctx.calibration, ctx.weights, x, ctx.schema))
    known = {h.diagnosis_label for h in hypotheses}
    updated = [
        replace(
            h,
            score=scores[h.diagnosis_label],
            in_conformal_set=h.diagnosis_label in retrieved,
            newly_appeared=False,
        )
        for h in hypotheses
    ]
    for label in ctx.schema.diagnoses:
        if label in retrieved and label not in known:
            updated.append(HypothesisEntry(
                diagnosis_label=label,
                score=scores[label],
                in_conformal_set=True,
                origin=HypothesisOrigin.AI_RETRIEVED,
                newly_appeared=True,
            ))
    return scores, _ordered_hypotheses(ctx.schema, updated)


def _require_concept(ctx: SessionContext, concept_id) -> str:
    if not isinstance(concept_id, str) or not ctx.schema.has_concept(concept_id):
        raise UnknownConceptError(f"unknown concept {concept_id!r}")
    return concept_id


def _require_payload(event: InterventionEvent, *keys: str) -> list:
    values = []
    for key in keys:
        if key not in event.payload:
            raise EventValidationError(
                f"{event.kind.value} payload missing {key!r}")
        values.append(event.payload[key])
    return values


def _apply_refine(state: SensemakingState, event: InterventionEvent,
                  ctx: SessionContext) -> SensemakingState:
    concept_id, state_id = _require_payload(event, "concept_id", "state_id")
    _require_concept(ctx, concept_id)
    concept = ctx.schema.concept(concept_id)
    if state_id not in concept.states:
        raise EventValidationError(
            f"concept {concept_id!r} has no state {state_id!r}")
    t = state.t + 1
    new_item = EvidenceItem(
        evidence_id=f"ev-{t}-{concept_id}",
        concept_id=concept_id,
        state_id=state_id,
        probability=1.0,
        status=EvidenceStatus.USER_REFINED,
        created_at_step=t,
    )
    old = state.active_evidence_for(concept_id)
    evidence = tuple(e for e in state.evidence if e.concept_id != concept_id) + (new_item,)
    evidence = _ordered_evidence(ctx.schema, evidence)
    archived = state.archived_evidence + ((old,) if old else ())
    scores, hypotheses = _retrieval_update(ctx, evidence, state.hypotheses)
    return replace(state, t=t, evidence=evidence, archived_evidence=archived,
                   hypotheses=hypotheses, scores=scores)


def _apply_confirm(state: SensemakingState, event: InterventionEvent,
                   ctx: SessionContext) -> SensemakingState:
    (concept_id,) = _require_payload(event, "concept_id")
    _require_concept(ctx, concept_id)
    item = state.active_evidence_for(concept_id)
    if item is None:
        raise EventValidationError(
            f"no active evidence for concept {concept_id!r} to confirm")
    if not can_transition(item.status, EvidenceStatus.USER_CONFIRMED):
        raise EventValidationError(
            f"cannot confirm evidence in status {item.status.value!r}")
    confirmed = replace(item, status=EvidenceStatus.USER_CONFIRMED)
    evidence = tuple(confirmed if e.evidence_id == item.evidence_id else e
                     for e in state.evidence)
    scores, hypotheses = _retrieval_update(ctx, evidence, state.hypotheses)
    return replace(state, t=state.t + 1, evidence=evidence,
                   hypotheses=hypotheses, scores=scores)


def _apply_annotate(state: SensemakingState, event: InterventionEvent,
                    ctx: SessionContext) -> SensemakingState:
    x, y, width, height = _require_payload(event, "x", "y", "width", "height")
    try:
        region = RegionAnnotation(x=x, y=y, width=width, height=height,
                                  author=RegionAuthor.USER)
    except (TypeError, ValueError) as exc:
        raise EventValidationError(f"bad region: {exc}") from exc
    t = state.t + 1
    suggestions = propose_region_evidence(
        ctx.case, region, ctx.schema, state.evidence, ctx.heatmaps)
    proposal_items = tuple(
        EvidenceItem(
            evidence_id=f"prop-{t}-{rank}",
            concept_id=p.concept_id,
            state_id=p.state_id,
            probability=p.confidence,
            status=EvidenceStatus.AI_PROPOSED,
            region=replace(region, author=RegionAuthor.AI),
            created_at_step=t,
        )
        for rank, p in enumerate(suggestions)
    )
    return replace(state, t=t,
                   annotations=state.annotations + (region,),
                   proposals=state.proposals + proposal_items)


def _apply_accept_proposal(state: SensemakingState, event: InterventionEvent,
                           ctx: SessionContext) -> SensemakingState:
    (evidence_id,) = _require_payload(event, "evidence_id")
    proposal = next((p for p in state.proposals if p.evidence_id == evidence_id), None)
    if proposal is None:
        raise EventValidationError(f"no open proposal {evidence_id!r}")
    state_id = event.payload.get("state_id", proposal.state_id)
    concept = ctx.schema.concept(proposal.concept_id)
    if state_id not in concept.states:
        raise EventValidationError(
            f"concept {proposal.concept_id!r} has no state {state_id!r}")
    t = state.t + 1
    accepted_item = EvidenceItem(
        evidence_id=f"ev-{t}-{proposal.concept_id}",
        concept_id=proposal.concept_id,
        state_id=state_id,
        probability=1.0,
        status=EvidenceStatus.USER_ADDED,
        region=proposal.region,
        created_at_step=t,
    )
    old = state.active_evidence_for(proposal.concept_id)
    evidence = tuple(e for e in state.evidence if e.concept_id != proposal.concept_id)
    evidence = _ordered_evidence(ctx.schema, evidence + (accepted_item,))
    archived = state.archived_evidence + ((old,) if old else ())
    proposals = tuple(p for p in state.proposals if p.evidence_id != evidence_id)
    scores, hypotheses = _retrieval_update(ctx, evidence, state.hypotheses)
    return replace(state, t=t, evidence=evidence, archived_evidence=archived,
                   proposals=proposals, hypotheses=hypotheses, scores=scores)


def _current_retrieved(ctx: SessionContext, state: SensemakingState) -> set[str]:
    x = assemble_vector(ctx.case, state.evidence, ctx.schema)
    return set(retrieve_hypotheses(ctx.calibration, ctx.weights, x, ctx.schema))


def _apply_add_hypothesis(state: SensemakingState, event: InterventionEvent,
                          ctx: SessionContext) -> SensemakingState:
    (label,) = _require_payload(event, "label")
    if label not in ctx.schema.diagnoses:
        raise UnknownHypothesisError(f"unknown diagnosis {label!r}")
    existing = next((h for h in state.hypotheses if h.diagnosis_label == label), None)
    if existing is not None and not existing.excluded_by_user:
        raise EventValidationError(f"{label!r} is already a candidate")
    in_set = label in _current_retrieved(ctx, state)
    if existing is not None:
        entry = replace(existing, excluded_by_user=False,
                        origin=HypothesisOrigin.USER_ADDED,
                        score=state.scores[label], in_conformal_set=in_set)
    else:
        entry = HypothesisEntry(
            diagnosis_label=label,
            score=state.scores[label],
            in_conformal_set=in_set,
            origin=HypothesisOrigin.USER_ADDED,
            newly_appeared=False,
        )
    others = tuple(h for h in state.hypotheses if h.diagnosis_label != label)
    return replace(state, t=state.t + 1,
                   hypotheses=_ordered_hypotheses(ctx.schema, others + (entry,)))


def _apply_remove_hypothesis(state: SensemakingState, event: InterventionEvent,
                             ctx: SessionContext) -> SensemakingState:
    (label,) = _require_payload(event, "label")
    existing = next((h for h in state.hypotheses if h.diagnosis_label == label), None)
    if existing is None or existing.excluded_by_user:
        raise UnknownHypothesisError(f"{label!r} is not a current candidate")
    hypotheses = tuple(
        replace(h, excluded_by_user=True) if h.diagnosis_label == label else h
        for h in state.hypotheses
    )
    return replace(state, t=state.t + 1, hypotheses=hypotheses)


def _apply_regroup(state: SensemakingState, event: InterventionEvent,
                   ctx: SessionContext) -> SensemakingState:
    label, concept_id, group = _require_payload(event, "hypothesis", "concept_id", "group")
    if label not in ctx.schema.diagnoses:
        raise UnknownHypothesisError(f"unknown diagnosis {label!r}")
    _require_concept(ctx, concept_id)
    if group not in {"supporting", "contradicting", "neutral"}:
        raise EventValidationError(f"unknown attribution group {group!r}")
    overlay = {h: dict(m) for h, m in state.weight_overlay.items()}
    overlay.setdefault(label, {})[concept_id] = group
    return replace(state, t=state.t + 1, weight_overlay=overlay)


def _apply_finalize(state: SensemakingState, event: InterventionEvent,
                    ctx: SessionContext) -> SensemakingState:
    (label,) = _require_payload(event, "label")
    override = bool(event.payload.get("override", False))
    entry = next((h for h in state.hypotheses
                  if h.diagnosis_label == label and not h.excluded_by_user), None)
    if entry is None:
        raise UnknownHypothesisError(f"{label!r} is not a current candidate")
    if entry.score < state.delta and not override:
        raise ThresholdNotMetError(
            f"score {entry.score:.4f} for {label!r} is below delta {state.delta} "
            f"and no override was given")
    return replace(state, t=state.t + 1, accepted=label)


_HANDLERS = {
    EventKind.REFINE_EVIDENCE: _apply_refine,
    EventKind.CONFIRM_EVIDENCE: _apply_confirm,
    EventKind.ANNOTATE_REGION: _apply_annotate,
    EventKind.ACCEPT_PROPOSED_EVIDENCE: _apply_accept_proposal,
    EventKind.ADD_HYPOTHESIS: _apply_add_hypothesis,
    EventKind.REMOVE_HYPOTHESIS: _apply_remove_hypothesis,
    EventKind.REGROUP_EVIDENCE: _apply_regroup,
    EventKind.FINALIZE: _apply_finalize,
}


def _ordered_evidence(
    schema: ConceptSchema, items: tuple[EvidenceItem, ...]
) -> tuple[EvidenceItem, ...]:
    by_concept = {e.concept_id: e for e in items}
    return tuple(by_concept[c.concept_id] for c in schema.concepts
                 if c.concept_id in by_concept)


def apply_event(
    state: SensemakingState,
    event: InterventionEvent,
    ctx: SessionContext,
) -> SensemakingState:
    """Advance the session by one step. Raises instead of mutating on any
    invalid event; the input state is never changed."""
    if state.finalized:
        raise SessionFinalizedError(
            f"session {state.session_id!r} already finalized as {state.accepted!r}")
    if event.session_id != state.session_id:
        raise EventValidationError(
            f"event for session {event.session_id!r} applied to {state.session_id!r}")
    if event.seq != state.t + 1:
        raise OutOfOrderEventError(
            f"expected seq {state.t + 1}, got {event.seq}")
    new_state = _HANDLERS[event.kind](state, event, ctx)
    assert new_state.t == state.t + 1
    return new_state


def replay(
    ctx: SessionContext,
    session_id: str,
    events: Sequence[InterventionEvent | dict],
) -> SensemakingState:
    """Rebuild session state from the ordered event log.

    Produces the identical state (byte-identical canonical JSON) to live
    application of the same events.
    """
    state = init_session(ctx, session_id)
    for raw in events:
        if isinstance(raw, InterventionEvent):
            event = raw
        else:
            try:
                event = InterventionEvent.from_dict(raw)
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptLogError(f"unreadable event record: {exc}") from exc
        if event.session_id != session_id:
            raise CorruptLogError(
                f"log for {session_id!r} contains event for {event.session_id!r}")
        state = apply_event(state, event, ctx)
    return state
