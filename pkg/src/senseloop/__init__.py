"""Mixed-initiative diagnostic sensemaking: concept-based scoring, conformal
hypothesis retrieval, and event-sourced review sessions."""

__version__ = "0.1.0"

from .schema import Concept, ConceptSchema
from .domain import (
    Case,
    EvidenceItem,
    EvidenceStatus,
    EventKind,
    HypothesisEntry,
    InterventionEvent,
    RegionAnnotation,
    SensemakingState,
    validate_case,
)
from .scoring import ModelWeights, assemble_vector, attribute_evidence, score, train
from .conformal import ConformalCalibration, calibrate, retrieve_hypotheses
from .engine import (
    SessionConfig,
    SessionContext,
    apply_event,
    check_acceptance,
    extract_evidence,
    init_session,
    propose_region_evidence,
    replay,
)

__all__ = [
    "Case",
    "Concept",
    "ConceptSchema",
    "ConformalCalibration",
    "EventKind",
    "EvidenceItem",
    "EvidenceStatus",
    "HypothesisEntry",
    "InterventionEvent",
    "ModelWeights",
    "RegionAnnotation",
    "SensemakingState",
    "SessionConfig",
    "SessionContext",
    "apply_event",
    "assemble_vector",
    "attribute_evidence",
    "calibrate",
    "check_acceptance",
    "extract_evidence",
    "init_session",
    "propose_region_evidence",
    "replay",
    "retrieve_hypotheses",
    "score",
    "train",
    "validate_case",
]
