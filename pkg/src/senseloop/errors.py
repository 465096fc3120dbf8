"""Exception hierarchy shared across the package.

Service and CLI layers map these onto HTTP statuses and exit codes, so new
error types should subclass one of the existing families.
"""
from __future__ import annotations


class SenseloopError(Exception):
    """Base class for all package errors."""


# -- schema / domain ----------------------------------------------------------

class SchemaError(SenseloopError):
    """Schema structurally invalid (empty states, bad field, ...)."""


class DuplicateIdError(SchemaError):
    """Concept ids, state names, or diagnosis labels collide."""


class CaseValidationError(SenseloopError):
    """A case violated one or more schema invariants.

    Carries every violation found, not just the first.
    """

    def __init__(self, case_id: str, issues):
        self.case_id = case_id
        self.issues = list(issues)
        detail = "; ".join(i.message for i in self.issues)
        super().__init__(f"case {case_id!r} invalid: {detail}")


class SchemaMismatchError(SenseloopError):
    """Artifacts built against different schema hashes were combined."""


# -- scoring ------------------------------------------------------------------

class DimensionMismatchError(SenseloopError):
    """Vector or weight dimensions disagree with the schema."""


class ConflictingEvidenceError(SenseloopError):
    """Two active evidence items assert states for the same concept."""


class UnknownLabelError(SenseloopError):
    """A diagnosis label is not part of the schema."""


class UnknownConceptError(SenseloopError):
    """A concept id is not part of the schema."""


class UnknownHypothesisError(SenseloopError):
    """A hypothesis label is unknown or not a current candidate."""


class EmptyDatasetError(SenseloopError):
    """Training requires at least one example."""


class NonfiniteLossError(SenseloopError):
    """Training loss became non-finite; inputs are broken or the learning
    rate is far too high."""


# -- conformal ----------------------------------------------------------------

class EmptyCalibrationSetError(SenseloopError):
    """Calibration requires at least one held-out example."""


class AlphaOutOfRangeError(SenseloopError):
    """Miscoverage level must lie strictly between 0 and 1."""


# -- engine / sessions --------------------------------------------------------

class EngineError(SenseloopError):
    """Base class for event-application failures."""


class OutOfOrderEventError(EngineError):
    """Event sequence number does not continue the session log."""


class SessionFinalizedError(EngineError):
    """No events may follow a successful finalize."""


class ThresholdNotMetError(EngineError):
    """Finalize without override while the score is below the threshold."""


class EventValidationError(EngineError):
    """Event payload is malformed or not applicable to the current state."""


class CorruptLogError(EngineError):
    """Persisted event log cannot be parsed or replayed."""


# -- io -----------------------------------------------------------------------

class ParseError(SenseloopError):
    """Input file is syntactically or structurally malformed."""


class EmptyInputError(SenseloopError):
    """An operation received an empty collection it cannot work on."""
