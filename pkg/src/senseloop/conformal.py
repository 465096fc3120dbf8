"""Split-conformal hypothesis retrieval.

Calibrates a nonconformity threshold on held-out examples (nonconformity of
an example is one minus the predicted probability of its true label) and
retrieves, for any new vector, every diagnosis whose nonconformity stays
within that threshold. Retrieved sets are never empty: when nothing passes,
the argmax label is returned alone.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AlphaOutOfRangeError,
    EmptyCalibrationSetError,
    ParseError,
    SchemaMismatchError,
)
from .schema import ConceptSchema
from .scoring import ModelWeights, score, score_batch

CALIBRATION_FORMAT = "senseloop-calibration-v1"


@dataclass(frozen=True)
class ConformalCalibration:
    """Calibrated retrieval threshold; q_hat is +inf when the finite-sample
    quantile index overflows the calibration set (all labels retrieved)."""

    q_hat: float
    alpha: float
    n_cal: int
    schema_hash: str

    def to_dict(self) -> dict:
        return {
            "format": CALIBRATION_FORMAT,
            "q_hat": None if math.isinf(self.q_hat) else self.q_hat,
            "alpha": self.alpha,
            "n_cal": self.n_cal,
            "schema_hash": self.schema_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConformalCalibration":
        if d.get("format") != CALIBRATION_FORMAT:
            raise ParseError(f"unsupported calibration format {d.get('format')!r}")
        q_hat = d["q_hat"]
        return cls(
            q_hat=math.inf if q_hat is None else float(q_hat),
            alpha=float(d["alpha"]),
            n_cal=int(d["n_cal"]),
            schema_hash=d["schema_hash"],
        )


def save_calibration(calibration: ConformalCalibration, path: str | Path) -> None:
    Path(path).write_text(json.dumps(calibration.to_dict(), indent=2, sort_keys=True))


def load_calibration(
    path: str | Path, schema: Optional[ConceptSchema] = None
) -> ConformalCalibration:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"calibration file {path}: {exc}") from exc
    calibration = ConformalCalibration.from_dict(data)
    if schema is not None and calibration.schema_hash != schema.schema_hash:
        raise SchemaMismatchError(
            f"calibration built for schema {calibration.schema_hash[:12]}..., "
            f"got {schema.schema_hash[:12]}...")
    return calibration


def quantile_index(n: int, alpha: float) -> int:
    """1-based rank ceil((n+1)(1-alpha)), computed exactly."""
    return math.ceil(Fraction(n + 1) * (1 - Fraction(alpha)))


def calibrate(
    weights: ModelWeights,
    cal_set: Sequence[tuple[np.ndarray, str]],
    alpha: float,
    schema: ConceptSchema,
) -> ConformalCalibration:
    """Compute the nonconformity threshold on a held-out calibration set."""
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRangeError(f"alpha must be in (0, 1), got {alpha}")
    if len(cal_set) == 0:
        raise EmptyCalibrationSetError("calibration set is empty")
    weights.check_schema(schema)
    X = np.stack([np.asarray(x, dtype=float) for x, _ in cal_set])
    y = np.array([schema.diagnosis_index(label) for _, label in cal_set])
    probs = score_batch(weights, X)
    scores = np.sort(1.0 - probs[np.arange(len(y)), y])
    n = len(scores)
    rank = quantile_index(n, alpha)
    q_hat = math.inf if rank > n else float(scores[rank - 1])
    return ConformalCalibration(
        q_hat=q_hat, alpha=alpha, n_cal=n, schema_hash=schema.schema_hash)


def retrieve_hypotheses(
    calibration: ConformalCalibration,
    weights: ModelWeights,
    x: np.ndarray,
    schema: ConceptSchema,
) -> tuple[str, ...]:
    """Diagnoses whose nonconformity is within q_hat, in schema order.

    Falls back to the singleton argmax label when no diagnosis qualifies, so
    the result is never empty.
    """
    if calibration.schema_hash != schema.schema_hash:
        raise SchemaMismatchError(
            f"calibration built for schema {calibration.schema_hash[:12]}..., "
            f"got {schema.schema_hash[:12]}...")
    weights.check_schema(schema)
    probs = score(weights, x)
    retrieved = tuple(
        label for i, label in enumerate(schema.diagnoses)
        if 1.0 - probs[i] <= calibration.q_hat
    )
    if not retrieved:
        retrieved = (schema.diagnoses[int(np.argmax(probs))],)
    return retrieved
