"""Shared fixture builders and the random-session driver used across suites."""
from __future__ import annotations

import math

import numpy as np

from senseloop.conformal import ConformalCalibration
from senseloop.domain import Case, EventKind, InterventionEvent
from senseloop.engine import SessionConfig, SessionContext, apply_event, init_session
from senseloop.schema import Concept, ConceptSchema
from senseloop.scoring import ModelWeights


def make_schema(n_concepts: int = 3, n_states: int = 3, k: int = 4) -> ConceptSchema:
    return ConceptSchema(
        concepts=tuple(
            Concept(f"concept_{i}", tuple(f"s{j}" for j in range(n_states)))
            for i in range(n_concepts)
        ),
        diagnoses=tuple(f"dx_{i}" for i in range(k)),
    )


def random_case(schema: ConceptSchema, rng: np.random.Generator,
                case_id: str = "case-r") -> Case:
    probs = {}
    for concept in schema.concepts:
        raw = rng.dirichlet(np.ones(len(concept.states)))
        probs[concept.concept_id] = {
            s: float(p) for s, p in zip(concept.states, raw)}
    return Case(case_id=case_id, image_ref=f"images/{case_id}.png",
                concept_probs=probs)


def random_weights(schema: ConceptSchema, rng: np.random.Generator,
                   scale: float = 1.5) -> ModelWeights:
    return ModelWeights(
        W=rng.normal(0, scale, size=(schema.k, schema.d)),
        b=rng.normal(0, 0.5, size=schema.k),
        schema_hash=schema.schema_hash,
        training_meta={"fixture": True},
    )


def fixed_calibration(schema: ConceptSchema, q_hat: float,
                      alpha: float = 0.1, n_cal: int = 100) -> ConformalCalibration:
    return ConformalCalibration(q_hat=q_hat, alpha=alpha, n_cal=n_cal,
                                schema_hash=schema.schema_hash)


def make_context(schema, case, weights, calibration, delta=0.8, tau_e=0.5,
                 heatmaps=None) -> SessionContext:
    return SessionContext(
        case=case, weights=weights, calibration=calibration, schema=schema,
        config=SessionConfig(delta=delta, tau_e=tau_e), heatmaps=heatmaps)


# -- the hypothesis-appearance fixture ----------------------------------------
#
# Hand-built so that before refinement "melanoma" is outside the retrieved set
# and after refining streaks to irregular it enters with a strictly higher
# score. Initial logits (nevus, melanoma, sk) = (1.95, 0.45, 0.65) give
# p(melanoma) ~= 0.149 < 0.25 = 1 - q_hat; after the refinement the logits are
# (1.65, 3.15, 0.35) giving p(melanoma) ~= 0.779 >= 0.25.

def melanoma_fixture():
    schema = ConceptSchema(
        concepts=(
            Concept("pigment_network", ("absent", "typical", "atypical")),
            Concept("streaks", ("absent", "regular", "irregular")),
            Concept("blue_whitish_veil", ("absent", "present")),
        ),
        diagnoses=("nevus", "melanoma", "seborrheic_keratosis"),
    )
    case = Case(
        case_id="lesion-001",
        image_ref="images/lesion-001.png",
        concept_probs={
            "pigment_network": {"absent": 0.1, "typical": 0.8, "atypical": 0.1},
            "streaks": {"absent": 0.6, "regular": 0.3, "irregular": 0.1},
            "blue_whitish_veil": {"absent": 0.9, "present": 0.1},
        },
    )
    W = np.array([
        # pigment: a/t/at | streaks: a/r/i | veil: a/p
        [0.0, 1.5, 0.0,    0.0, 1.0, 0.0,   0.5, 0.0],   # nevus
        [0.0, 0.0, 0.5,    0.0, 0.0, 3.0,   0.0, 1.0],   # melanoma
        [0.8, 0.0, 0.0,    0.5, 0.0, 0.0,   0.3, 0.0],   # seborrheic_keratosis
    ])
    weights = ModelWeights(W=W, b=np.zeros(3), schema_hash=schema.schema_hash,
                           training_meta={"fixture": "melanoma-appearance"})
    calibration = fixed_calibration(schema, q_hat=0.75, alpha=0.1, n_cal=50)
    return schema, case, weights, calibration


# -- random valid event sequences ----------------------------------------------

def _normalized_box(rng) -> dict:
    x, y = rng.uniform(0.0, 0.6, size=2)
    w, h = rng.uniform(0.05, 0.35, size=2)
    return {"x": float(x), "y": float(y), "width": float(w), "height": float(h)}


def random_session(ctx: SessionContext, session_id: str,
                   rng: np.random.Generator, n_events: int,
                   finalize_last: bool = False):
    """Drive a live session with n_events random valid events.

    Returns (events, states) where states[i] is the state after events[:i].
    """
    state = init_session(ctx, session_id)
    events: list[InterventionEvent] = []
    states = [state]
    schema = ctx.schema
    for step in range(1, n_events + 1):
        final_step = finalize_last and step == n_events
        for _ in range(30):  # retry until a valid event kind is drawn
            if final_step:
                candidates = state.candidates()
                if not candidates:
                    break
                label = candidates[int(rng.integers(len(candidates)))].diagnosis_label
                kind, payload = EventKind.FINALIZE, {"label": label, "override": True}
            else:
                kinds = (
                    EventKind.REFINE_EVIDENCE, EventKind.CONFIRM_EVIDENCE,
                    EventKind.ANNOTATE_REGION, EventKind.ACCEPT_PROPOSED_EVIDENCE,
                    EventKind.ADD_HYPOTHESIS, EventKind.REMOVE_HYPOTHESIS,
                    EventKind.REGROUP_EVIDENCE,
                )
                kind = kinds[int(rng.integers(len(kinds)))]
                payload = _payload_for(kind, state, schema, rng)
                if payload is None:
                    continue
            event = InterventionEvent(
                event_id=f"rand-{session_id}-{step}",
                session_id=session_id, seq=step, kind=kind, payload=payload)
            state = apply_event(state, event, ctx)
            events.append(event)
            states.append(state)
            break
        else:
            raise AssertionError("could not draw a valid random event")
        if final_step:
            break
    return events, states


def _payload_for(kind, state, schema, rng):
    if kind == EventKind.REFINE_EVIDENCE:
        concept = schema.concepts[int(rng.integers(len(schema.concepts)))]
        return {"concept_id": concept.concept_id,
                "state_id": concept.states[int(rng.integers(len(concept.states)))]}
    if kind == EventKind.CONFIRM_EVIDENCE:
        confirmable = [e for e in state.evidence if e.status.value == "ai_proposed"]
        if not confirmable:
            return None
        return {"concept_id": confirmable[int(rng.integers(len(confirmable)))].concept_id}
    if kind == EventKind.ANNOTATE_REGION:
        return _normalized_box(rng)
    if kind == EventKind.ACCEPT_PROPOSED_EVIDENCE:
        if not state.proposals:
            return None
        return {"evidence_id":
                state.proposals[int(rng.integers(len(state.proposals)))].evidence_id}
    if kind == EventKind.ADD_HYPOTHESIS:
        current = {h.diagnosis_label for h in state.candidates()}
        absent = [d for d in schema.diagnoses if d not in current]
        if not absent:
            return None
        return {"label": absent[int(rng.integers(len(absent)))]}
    if kind == EventKind.REMOVE_HYPOTHESIS:
        candidates = state.candidates()
        if len(candidates) <= 1:
            return None
        return {"label": candidates[int(rng.integers(len(candidates)))].diagnosis_label}
    if kind == EventKind.REGROUP_EVIDENCE:
        label = schema.diagnoses[int(rng.integers(schema.k))]
        concept = schema.concepts[int(rng.integers(len(schema.concepts)))]
        group = ["supporting", "contradicting", "neutral"][int(rng.integers(3))]
        return {"hypothesis": label, "concept_id": concept.concept_id, "group": group}
    raise AssertionError(f"unhandled kind {kind}")


def entropy(probs) -> float:
    return -sum(p * math.log(p) for p in probs if p > 0)
