"""Domain values for diagnostic review sessions.

Everything here is an immutable value with a canonical JSON encoding; all
behaviour beyond validation lives in the engine and scorer modules. Canonical
JSON fixes field names and uses sorted keys so two equal values always
serialize to identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .errors import CaseValidationError
from .schema import ConceptSchema

PROB_SUM_TOL = 1e-6


class EvidenceStatus(str, Enum):
    AI_PROPOSED = "ai_proposed"
    USER_CONFIRMED = "user_confirmed"
    USER_REFINED = "user_refined"
    USER_ADDED = "user_added"


#: Statuses that count as a user assertion: they force the asserted state to
#: probability one when the concept vector is assembled.
USER_ASSERTED = frozenset(
    {EvidenceStatus.USER_CONFIRMED, EvidenceStatus.USER_REFINED, EvidenceStatus.USER_ADDED}
)


class HypothesisOrigin(str, Enum):
    AI_RETRIEVED = "ai_retrieved"
    USER_ADDED = "user_added"


class RegionAuthor(str, Enum):
    USER = "user"
    AI = "ai"


class EventKind(str, Enum):
    REFINE_EVIDENCE = "RefineEvidence"
    CONFIRM_EVIDENCE = "ConfirmEvidence"
    ANNOTATE_REGION = "AnnotateRegion"
    ACCEPT_PROPOSED_EVIDENCE = "AcceptProposedEvidence"
    ADD_HYPOTHESIS = "AddHypothesis"
    REMOVE_HYPOTHESIS = "RemoveHypothesis"
    REGROUP_EVIDENCE = "RegroupEvidence"
    FINALIZE = "Finalize"


class AttributionGroup(str, Enum):
    SUPPORTING = "supporting"
    CONTRADICTING = "contradicting"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class ValidationIssue:
    """One violated invariant; validation collects all of them."""

    code: str  # MissingConcept | UnknownConcept | MissingState | UnknownState |
    #            ProbabilityNotNormalized | ProbabilityOutOfRange | UnknownDiagnosis
    message: str
    concept_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "concept_id": self.concept_id}


@dataclass(frozen=True)
class RegionAnnotation:
    """Axis-aligned box in normalized image coordinates (unit square)."""

    x: float
    y: float
    width: float
    height: float
    author: RegionAuthor

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("region width and height must be positive")
        if not (0.0 <= self.x and 0.0 <= self.y):
            raise ValueError("region origin must be inside the unit square")
        if self.x + self.width > 1.0 + 1e-12 or self.y + self.height > 1.0 + 1e-12:
            raise ValueError("region must lie fully inside the unit square")

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "width": self.width,
            "height": self.height,
            "author": self.author.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionAnnotation":
        return cls(
            x=d["x"], y=d["y"], width=d["width"], height=d["height"],
            author=RegionAuthor(d["author"]),
        )


@dataclass(frozen=True)
class Case:
    """Raw per-case information: image reference and concept-state probabilities."""

    case_id: str
    image_ref: str
    concept_probs: dict[str, dict[str, float]]
    true_diagnosis: Optional[str] = None
    heatmap_refs: Optional[dict[str, str]] = None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "image_ref": self.image_ref,
            "concept_probs": {c: dict(s) for c, s in self.concept_probs.items()},
            "true_diagnosis": self.true_diagnosis,
            "heatmap_refs": dict(self.heatmap_refs) if self.heatmap_refs else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Case":
        return cls(
            case_id=d["case_id"],
            image_ref=d["image_ref"],
            concept_probs={c: dict(s) for c, s in d["concept_probs"].items()},
            true_diagnosis=d.get("true_diagnosis"),
            heatmap_refs=dict(d["heatmap_refs"]) if d.get("heatmap_refs") else None,
        )


@dataclass(frozen=True)
class EvidenceItem:
    """One asserted concept state with provenance."""

    evidence_id: str
    concept_id: str
    state_id: str
    probability: float
    status: EvidenceStatus
    region: Optional[RegionAnnotation] = None
    created_at_step: int = 0

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError("evidence probability must lie in [0, 1]")
        if self.created_at_step < 0:
            raise ValueError("created_at_step must be >= 0")

    @property
    def verified(self) -> bool:
        """True once a user has confirmed, refined, or added the item."""
        return self.status in USER_ASSERTED

    def to_dict(self) -> dict:
        return {
            "evidence_id": self.evidence_id,
            "concept_id": self.concept_id,
            "state_id": self.state_id,
            "probability": self.probability,
            "status": self.status.value,
            "region": self.region.to_dict() if self.region else None,
            "created_at_step": self.created_at_step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceItem":
        return cls(
            evidence_id=d["evidence_id"],
            concept_id=d["concept_id"],
            state_id=d["state_id"],
            probability=d["probability"],
            status=EvidenceStatus(d["status"]),
            region=RegionAnnotation.from_dict(d["region"]) if d.get("region") else None,
            created_at_step=d["created_at_step"],
        )


#: Legal in-place status changes. Replacement (refine over an existing item)
#: archives the old item instead of transitioning it.
_STATUS_TRANSITIONS = {
    EvidenceStatus.AI_PROPOSED: {EvidenceStatus.USER_CONFIRMED, EvidenceStatus.USER_REFINED},
    EvidenceStatus.USER_CONFIRMED: set(),
    EvidenceStatus.USER_REFINED: set(),
    EvidenceStatus.USER_ADDED: set(),
}


def can_transition(old: EvidenceStatus, new: EvidenceStatus) -> bool:
    return new in _STATUS_TRANSITIONS[old]


@dataclass(frozen=True)
class HypothesisEntry:
    """One candidate diagnosis with its score and membership flags."""

    diagnosis_label: str
    score: float
    in_conformal_set: bool
    origin: HypothesisOrigin
    excluded_by_user: bool = False
    newly_appeared: bool = False

    def to_dict(self) -> dict:
        return {
            "diagnosis_label": self.diagnosis_label,
            "score": self.score,
            "in_conformal_set": self.in_conformal_set,
            "origin": self.origin.value,
            "excluded_by_user": self.excluded_by_user,
            "newly_appeared": self.newly_appeared,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HypothesisEntry":
        return cls(
            diagnosis_label=d["diagnosis_label"],
            score=d["score"],
            in_conformal_set=d["in_conformal_set"],
            origin=HypothesisOrigin(d["origin"]),
            excluded_by_user=d["excluded_by_user"],
            newly_appeared=d["newly_appeared"],
        )


@dataclass(frozen=True)
class InterventionEvent:
    """One human or system action advancing a session by exactly one step."""

    event_id: str
    session_id: str
    seq: int
    kind: EventKind
    payload: dict[str, Any]
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "session_id": self.session_id,
            "seq": self.seq,
            "kind": self.kind.value,
            "payload": dict(self.payload),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InterventionEvent":
        return cls(
            event_id=d["event_id"],
            session_id=d["session_id"],
            seq=d["seq"],
            kind=EventKind(d["kind"]),
            payload=dict(d.get("payload", {})),
            timestamp=d.get("timestamp", ""),
        )


@dataclass(frozen=True)
class SensemakingState:
    """Complete session state after step t; reconstructable by event replay.

    `evidence` holds the active items (at most one per concept, kept in schema
    concept order); replaced items move to `archived_evidence`. `hypotheses`
    is kept in schema diagnosis order. `scores` always covers the full
    diagnosis vocabulary.
    """

    session_id: str
    case_id: str
    t: int
    delta: float
    evidence: tuple[EvidenceItem, ...]
    archived_evidence: tuple[EvidenceItem, ...]
    proposals: tuple[EvidenceItem, ...]
    annotations: tuple[RegionAnnotation, ...]
    hypotheses: tuple[HypothesisEntry, ...]
    scores: dict[str, float]
    weight_overlay: dict[str, dict[str, str]] = field(default_factory=dict)
    accepted: Optional[str] = None

    @property
    def finalized(self) -> bool:
        return self.accepted is not None

    def active_evidence_for(self, concept_id: str) -> Optional[EvidenceItem]:
        for item in self.evidence:
            if item.concept_id == concept_id:
                return item
        return None

    def candidates(self) -> tuple[HypothesisEntry, ...]:
        """Hypotheses currently reported to the user (exclusions hidden)."""
        return tuple(h for h in self.hypotheses if not h.excluded_by_user)

    def best_candidate(self) -> Optional[HypothesisEntry]:
        """Highest-scoring candidate; ties keep the earliest in schema order."""
        best = None
        for h in self.candidates():
            if best is None or h.score > best.score:
                best = h
        return best

    def acceptance_available(self) -> bool:
        best = self.best_candidate()
        return best is not None and best.score >= self.delta

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "case_id": self.case_id,
            "t": self.t,
            "delta": self.delta,
            "evidence": [e.to_dict() for e in self.evidence],
            "archived_evidence": [e.to_dict() for e in self.archived_evidence],
            "proposals": [p.to_dict() for p in self.proposals],
            "annotations": [a.to_dict() for a in self.annotations],
            "hypotheses": [h.to_dict() for h in self.hypotheses],
            "scores": dict(self.scores),
            "weight_overlay": {h: dict(m) for h, m in self.weight_overlay.items()},
            "accepted": self.accepted,
            "acceptance_available": self.acceptance_available(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensemakingState":
        return cls(
            session_id=d["session_id"],
            case_id=d["case_id"],
            t=d["t"],
            delta=d["delta"],
            evidence=tuple(EvidenceItem.from_dict(e) for e in d["evidence"]),
            archived_evidence=tuple(EvidenceItem.from_dict(e) for e in d["archived_evidence"]),
            proposals=tuple(EvidenceItem.from_dict(p) for p in d["proposals"]),
            annotations=tuple(RegionAnnotation.from_dict(a) for a in d["annotations"]),
            hypotheses=tuple(HypothesisEntry.from_dict(h) for h in d["hypotheses"]),
            scores={k: v for k, v in d["scores"].items()},
            weight_overlay={h: dict(m) for h, m in d.get("weight_overlay", {}).items()},
            accepted=d.get("accepted"),
        )

    def canonical_json(self) -> str:
        """Byte-stable encoding used for replay comparison and hashing."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def case_validation_issues(case: Case, schema: ConceptSchema) -> list[ValidationIssue]:
    """Collect every invariant violation for a case against a schema."""
    issues: list[ValidationIssue] = []
    for concept in schema.concepts:
        cid = concept.concept_id
        probs = case.concept_probs.get(cid)
        if probs is None:
            issues.append(ValidationIssue(
                "MissingConcept", f"no probabilities for concept {cid!r}", cid))
            continue
        for state in concept.states:
            if state not in probs:
                issues.append(ValidationIssue(
                    "MissingState", f"concept {cid!r} missing state {state!r}", cid))
        for state, p in probs.items():
            if state not in concept.states:
                issues.append(ValidationIssue(
                    "UnknownState", f"concept {cid!r} has unknown state {state!r}", cid))
            elif not (0.0 <= p <= 1.0):
                issues.append(ValidationIssue(
                    "ProbabilityOutOfRange",
                    f"concept {cid!r} state {state!r} probability {p} outside [0, 1]", cid))
        known = [p for s, p in probs.items() if s in concept.states]
        if len(known) == len(concept.states):
            total = sum(known)
            if abs(total - 1.0) > PROB_SUM_TOL:
                issues.append(ValidationIssue(
                    "ProbabilityNotNormalized",
                    f"concept {cid!r} probabilities sum to {total:.6f}, expected 1", cid))
    for cid in case.concept_probs:
        if not schema.has_concept(cid):
            issues.append(ValidationIssue(
                "UnknownConcept", f"probabilities given for unknown concept {cid!r}", cid))
    if case.true_diagnosis is not None and case.true_diagnosis not in schema.diagnoses:
        issues.append(ValidationIssue(
            "UnknownDiagnosis", f"unknown diagnosis label {case.true_diagnosis!r}"))
    if case.heatmap_refs:
        for cid in case.heatmap_refs:
            if not schema.has_concept(cid):
                issues.append(ValidationIssue(
                    "UnknownConcept", f"heatmap for unknown concept {cid!r}", cid))
    return issues


def validate_case(case: Case, schema: ConceptSchema) -> Case:
    """Return the case unchanged iff all invariants hold; never repairs."""
    issues = case_validation_issues(case, schema)
    if issues:
        raise CaseValidationError(case.case_id, issues)
    return case
