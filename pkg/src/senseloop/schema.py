"""Concept schema: the ordered vocabulary of concepts, their states, and diagnoses.

Orderings are part of the schema identity: the concatenated concept-state
vector layout and all tie-breaking rules follow the order declared here, and
the schema hash pins that order.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property

from .errors import DuplicateIdError, SchemaError


@dataclass(frozen=True)
class Concept:
    """One observable concept with two or more named states."""

    concept_id: str
    states: tuple[str, ...]
    name: str = ""

    def __post_init__(self):
        if not self.concept_id:
            raise SchemaError("concept id must be non-empty")
        if len(self.states) < 2:
            raise SchemaError(f"concept {self.concept_id!r} needs >= 2 states")
        if len(set(self.states)) != len(self.states):
            raise DuplicateIdError(f"concept {self.concept_id!r} repeats a state name")

    def to_dict(self) -> dict:
        return {"id": self.concept_id, "name": self.name, "states": list(self.states)}

    @classmethod
    def from_dict(cls, d: dict) -> "Concept":
        return cls(concept_id=d["id"], states=tuple(d["states"]), name=d.get("name", ""))


@dataclass(frozen=True)
class ConceptSchema:
    """Ordered concepts and diagnosis labels for one deployment."""

    concepts: tuple[Concept, ...]
    diagnoses: tuple[str, ...]

    def __post_init__(self):
        if not self.concepts:
            raise SchemaError("schema needs at least one concept")
        ids = [c.concept_id for c in self.concepts]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("duplicate concept id in schema")
        if len(self.diagnoses) < 2:
            raise SchemaError("schema needs at least 2 diagnoses")
        if len(set(self.diagnoses)) != len(self.diagnoses):
            raise DuplicateIdError("duplicate diagnosis label in schema")

    @property
    def d(self) -> int:
        """Total state count: the scorer's input dimension."""
        return sum(len(c.states) for c in self.concepts)

    @property
    def k(self) -> int:
        return len(self.diagnoses)

    @cached_property
    def _offsets(self) -> dict[str, int]:
        offsets, pos = {}, 0
        for c in self.concepts:
            offsets[c.concept_id] = pos
            pos += len(c.states)
        return offsets

    @cached_property
    def _by_id(self) -> dict[str, Concept]:
        return {c.concept_id: c for c in self.concepts}

    def concept(self, concept_id: str) -> Concept:
        try:
            return self._by_id[concept_id]
        except KeyError:
            raise SchemaError(f"unknown concept {concept_id!r}") from None

    def has_concept(self, concept_id: str) -> bool:
        return concept_id in self._by_id

    def block_slice(self, concept_id: str) -> slice:
        """Index range of this concept's states in the concatenated vector."""
        start = self._offsets[self.concept(concept_id).concept_id]
        return slice(start, start + len(self.concept(concept_id).states))

    def state_index(self, concept_id: str, state_id: str) -> int:
        concept = self.concept(concept_id)
        try:
            return self._offsets[concept_id] + concept.states.index(state_id)
        except ValueError:
            raise SchemaError(
                f"unknown state {state_id!r} for concept {concept_id!r}"
            ) from None

    def diagnosis_index(self, label: str) -> int:
        try:
            return self.diagnoses.index(label)
        except ValueError:
            raise SchemaError(f"unknown diagnosis {label!r}") from None

    @cached_property
    def schema_hash(self) -> str:
        """sha256 over the canonical encoding; stable across runs and platforms."""
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()

    def to_dict(self) -> dict:
        return {
            "concepts": [c.to_dict() for c in self.concepts],
            "diagnoses": list(self.diagnoses),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConceptSchema":
        return cls(
            concepts=tuple(Concept.from_dict(c) for c in d["concepts"]),
            diagnoses=tuple(d["diagnoses"]),
        )
