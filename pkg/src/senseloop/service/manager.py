"""Session lifecycle on top of the pure engine.

Applies events under a per-session lock (distinct sessions proceed
concurrently), appends each accepted event to the durable log before
acknowledging, and lazily recovers sessions from disk by replay.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from ..conformal import ConformalCalibration
from ..dataio import load_heatmaps
from ..domain import Case, EventKind, InterventionEvent, SensemakingState
from ..engine import (
    SessionConfig,
    SessionContext,
    apply_event,
    check_acceptance,
    init_session,
    replay,
)
from ..errors import CorruptLogError, SenseloopError
from ..schema import ConceptSchema
from ..scoring import ModelWeights, assemble_vector, attribute_evidence
from .store import SessionStore


class NotFoundError(SenseloopError):
    """Referenced case or session does not exist."""


@dataclass
class ServiceBundle:
    """Everything the server loaded at startup."""

    schema: ConceptSchema
    weights: ModelWeights
    calibration: ConformalCalibration
    cases: dict[str, Case]
    defaults: SessionConfig = field(default_factory=SessionConfig)
    _heatmap_cache: dict[str, Optional[dict[str, np.ndarray]]] = field(default_factory=dict)

    def case(self, case_id: str) -> Case:
        try:
            return self.cases[case_id]
        except KeyError:
            raise NotFoundError(f"unknown case {case_id!r}") from None

    def heatmaps(self, case_id: str) -> Optional[dict[str, np.ndarray]]:
        if case_id not in self._heatmap_cache:
            self._heatmap_cache[case_id] = load_heatmaps(self.case(case_id))
        return self._heatmap_cache[case_id]

    def context(self, case_id: str, config: SessionConfig) -> SessionContext:
        return SessionContext(
            case=self.case(case_id),
            weights=self.weights,
            calibration=self.calibration,
            schema=self.schema,
            config=config,
            heatmaps=self.heatmaps(case_id),
        )


@dataclass
class _Runtime:
    ctx: SessionContext
    state: SensemakingState
    lock: threading.Lock = field(default_factory=threading.Lock)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class SessionManager:
    def __init__(self, bundle: ServiceBundle, store: SessionStore):
        self.bundle = bundle
        self.store = store
        self._sessions: dict[str, _Runtime] = {}
        self._registry_lock = threading.Lock()

    def create_session(
        self,
        case_id: str,
        delta: Optional[float] = None,
        tau_e: Optional[float] = None,
    ) -> SensemakingState:
        config = SessionConfig(
            delta=delta if delta is not None else self.bundle.defaults.delta,
            tau_e=tau_e if tau_e is not None else self.bundle.defaults.tau_e,
        )
        ctx = self.bundle.context(case_id, config)
        session_id = uuid.uuid4().hex
        state = init_session(ctx, session_id)
        self.store.create(session_id, {
            "session_id": session_id,
            "case_id": case_id,
            "delta": config.delta,
            "tau_e": config.tau_e,
            "created_at": _now(),
        })
        with self._registry_lock:
            self._sessions[session_id] = _Runtime(ctx=ctx, state=state)
        return state

    def _runtime(self, session_id: str) -> _Runtime:
        with self._registry_lock:
            runtime = self._sessions.get(session_id)
            if runtime is not None:
                return runtime
        if not self.store.exists(session_id):
            raise NotFoundError(f"unknown session {session_id!r}")
        meta, events = self.store.read(session_id)
        if meta.get("session_id") != session_id:
            raise CorruptLogError(f"meta for {session_id!r} names {meta.get('session_id')!r}")
        config = SessionConfig(delta=meta["delta"], tau_e=meta["tau_e"])
        ctx = self.bundle.context(meta["case_id"], config)
        state = replay(ctx, session_id, events)
        runtime = _Runtime(ctx=ctx, state=state)
        with self._registry_lock:
            # another thread may have recovered it first; keep the winner
            return self._sessions.setdefault(session_id, runtime)

    def get_state(self, session_id: str) -> SensemakingState:
        return self._runtime(session_id).state

    def context_for(self, session_id: str) -> SessionContext:
        return self._runtime(session_id).ctx

    def post_event(
        self, session_id: str, seq: Optional[int], kind: EventKind, payload: dict
    ) -> tuple[SensemakingState, SensemakingState, InterventionEvent]:
        """Apply, then durably append, then acknowledge. Invalid events are
        rejected before anything is written.

        `seq=None` means "whatever comes next", decided under the session
        lock; clients doing optimistic concurrency pass an explicit seq.
        """
        runtime = self._runtime(session_id)
        with runtime.lock:
            event = InterventionEvent(
                event_id=uuid.uuid4().hex,
                session_id=session_id,
                seq=runtime.state.t + 1 if seq is None else seq,
                kind=kind,
                payload=payload,
                timestamp=_now(),
            )
            previous = runtime.state
            new_state = apply_event(previous, event, runtime.ctx)
            self.store.append_event(session_id, event.to_dict())
            runtime.state = new_state
            return previous, new_state, event

    def finalize(
        self, session_id: str, label: str, override: bool = False
    ) -> SensemakingState:
        _, state, _ = self.post_event(
            session_id, None, EventKind.FINALIZE,
            {"label": label, "override": override})
        return state


def attribution_payload(ctx: SessionContext, state: SensemakingState) -> dict[str, list[dict]]:
    """Per-candidate attribution lists, overlay and verified flags applied."""
    x = assemble_vector(ctx.case, state.evidence, ctx.schema)
    verified = {e.concept_id: e.verified for e in state.evidence}
    payload = {}
    for entry in state.candidates():
        label = entry.diagnosis_label
        entries = attribute_evidence(
            ctx.weights, x, label, ctx.schema,
            overlay=state.weight_overlay.get(label),
            verified=verified,
        )
        payload[label] = [e.to_dict() for e in entries]
    return payload


def acceptance_payload(state: SensemakingState) -> dict:
    result = check_acceptance(state)
    return {
        "available": result is not None,
        "label": result[0] if result else None,
        "score": result[1] if result else None,
    }


def state_diff(previous: SensemakingState, new: SensemakingState) -> dict:
    """What changed in one step; lists canonical dicts ready for the wire."""
    prev_evidence = set(previous.evidence)
    prev_hypotheses = set(previous.hypotheses)
    prev_proposals = {p.evidence_id for p in previous.proposals}
    return {
        "t": new.t,
        "changed_evidence": [e.to_dict() for e in new.evidence
                             if e not in prev_evidence],
        "archived_evidence": [e.to_dict() for e in
                              new.archived_evidence[len(previous.archived_evidence):]],
        "new_proposals": [p.to_dict() for p in new.proposals
                          if p.evidence_id not in prev_proposals],
        "closed_proposals": sorted(
            prev_proposals - {p.evidence_id for p in new.proposals}),
        "changed_hypotheses": [h.to_dict() for h in new.hypotheses
                               if h not in prev_hypotheses],
        "new_annotations": [a.to_dict() for a in
                            new.annotations[len(previous.annotations):]],
        "scores": dict(new.scores),
        "acceptance": acceptance_payload(new),
        "accepted": new.accepted,
        "finalized": new.finalized,
    }
