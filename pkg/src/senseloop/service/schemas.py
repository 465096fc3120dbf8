"""Pydantic request/response models for the HTTP surface.

State, evidence, and hypothesis payloads ride as canonical JSON dicts
produced by the domain types; the models here pin the envelope fields.
"""
from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class CreateSessionRequest(BaseModel):
    case_id: str
    delta: Optional[float] = None
    tau_e: Optional[float] = None


class EventRequest(BaseModel):
    seq: int
    kind: str
    payload: dict[str, Any] = Field(default_factory=dict)


class FinalizeRequest(BaseModel):
    label: str
    override: bool = False


class AcceptanceInfo(BaseModel):
    available: bool
    label: Optional[str] = None
    score: Optional[float] = None


class SessionResponse(BaseModel):
    session_id: str
    case_id: str
    t: int
    state: dict[str, Any]
    attributions: dict[str, list[dict[str, Any]]]
    acceptance: AcceptanceInfo
    finalized: bool


class EventDiffResponse(BaseModel):
    session_id: str
    event_id: str
    t: int
    changed_evidence: list[dict[str, Any]]
    archived_evidence: list[dict[str, Any]]
    new_proposals: list[dict[str, Any]]
    closed_proposals: list[str]
    changed_hypotheses: list[dict[str, Any]]
    new_annotations: list[dict[str, Any]]
    scores: dict[str, float]
    attributions: dict[str, list[dict[str, Any]]]
    acceptance: AcceptanceInfo
    accepted: Optional[str] = None
    finalized: bool


class CaseSummary(BaseModel):
    case_id: str
    image_available: bool
    heatmap_concepts: list[str]


class SchemaResponse(BaseModel):
    schema_hash: str
    concepts: list[dict[str, Any]]
    diagnoses: list[str]
    delta_default: float
    tau_e_default: float
