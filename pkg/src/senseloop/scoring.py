"""Linear diagnosis head over concept-state vectors.

Covers vector assembly (user assertions override model probabilities),
softmax scoring, full-batch gradient-descent training of the head, and the
per-hypothesis supporting/contradicting evidence breakdown derived from the
head's weights.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .domain import USER_ASSERTED, AttributionGroup, Case, EvidenceItem
from .errors import (
    ConflictingEvidenceError,
    DimensionMismatchError,
    EmptyDatasetError,
    NonfiniteLossError,
    ParseError,
    SchemaMismatchError,
    UnknownHypothesisError,
    UnknownLabelError,
)
from .schema import ConceptSchema

#: Weights inside (-tau_w, +tau_w) count as neutral in attributions.
TAU_W_DEFAULT = 0.05

WEIGHTS_FORMAT = "senseloop-weights-v1"


@dataclass(frozen=True)
class ModelWeights:
    """Trained head parameters, bound to one schema by hash."""

    W: np.ndarray  # (K, d)
    b: np.ndarray  # (K,)
    schema_hash: str
    training_meta: dict

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise DimensionMismatchError(
                f"weights W{W.shape} and b{b.shape} are inconsistent")
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise ValueError("weights must be finite")

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def check_schema(self, schema: ConceptSchema) -> None:
        if self.schema_hash != schema.schema_hash:
            raise SchemaMismatchError(
                f"weights built for schema {self.schema_hash[:12]}..., "
                f"got {schema.schema_hash[:12]}...")
        if (self.k, self.d) != (schema.k, schema.d):
            raise DimensionMismatchError(
                f"weights are {self.k}x{self.d}, schema needs {schema.k}x{schema.d}")

    def to_dict(self) -> dict:
        return {
            "format": WEIGHTS_FORMAT,
            "schema_hash": self.schema_hash,
            "W": [[float(v) for v in row] for row in self.W],
            "b": [float(v) for v in self.b],
            "training_meta": dict(self.training_meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelWeights":
        if d.get("format") != WEIGHTS_FORMAT:
            raise ParseError(f"unsupported weights format {d.get('format')!r}")
        return cls(
            W=np.array(d["W"], dtype=float),
            b=np.array(d["b"], dtype=float),
            schema_hash=d["schema_hash"],
            training_meta=dict(d.get("training_meta", {})),
        )


def save_weights(weights: ModelWeights, path: str | Path) -> None:
    Path(path).write_text(json.dumps(weights.to_dict(), indent=2, sort_keys=True))


def load_weights(path: str | Path, schema: Optional[ConceptSchema] = None) -> ModelWeights:
    """Load a weights file; refuses files built against a different schema."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"weights file {path}: {exc}") from exc
    weights = ModelWeights.from_dict(data)
    if schema is not None:
        weights.check_schema(schema)
    return weights


def assemble_vector(
    case: Case,
    evidence: Iterable[EvidenceItem],
    schema: ConceptSchema,
) -> np.ndarray:
    """Build the d-dimensional input vector for a case.

    Concepts carrying a user-asserted evidence item get a one-hot block at
    the asserted state; every other concept copies the case probabilities.
    """
    asserted: dict[str, EvidenceItem] = {}
    for item in evidence:
        if item.status not in USER_ASSERTED:
            continue
        if item.concept_id in asserted:
            raise ConflictingEvidenceError(
                f"two active assertions for concept {item.concept_id!r}")
        asserted[item.concept_id] = item

    x = np.zeros(schema.d)
    for concept in schema.concepts:
        block = schema.block_slice(concept.concept_id)
        item = asserted.get(concept.concept_id)
        if item is not None:
            x[block.start + concept.states.index(item.state_id)] = 1.0
        else:
            probs = case.concept_probs[concept.concept_id]
            x[block] = [probs[s] for s in concept.states]
    return x


def validate_vector(x: np.ndarray, schema: ConceptSchema, tol: float = 1e-6) -> np.ndarray:
    """Check per-concept blocks each sum to one."""
    x = np.asarray(x, dtype=float)
    if x.shape != (schema.d,):
        raise DimensionMismatchError(f"vector has shape {x.shape}, expected ({schema.d},)")
    for concept in schema.concepts:
        total = float(x[schema.block_slice(concept.concept_id)].sum())
        if abs(total - 1.0) > tol:
            raise ValueError(
                f"block for {concept.concept_id!r} sums to {total}, expected 1")
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def score(weights: ModelWeights, x: np.ndarray) -> np.ndarray:
    """Diagnosis probabilities softmax(Wx + b); strictly positive, sum to one."""
    x = np.asarray(x, dtype=float)
    if x.shape != (weights.d,):
        raise DimensionMismatchError(
            f"vector has shape {x.shape}, weights need ({weights.d},)")
    return _softmax(weights.W @ x + weights.b)


def score_batch(weights: ModelWeights, X: np.ndarray) -> np.ndarray:
    """Row-wise scores for an (n, d) matrix of vectors."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != weights.d:
        raise DimensionMismatchError(
            f"batch has shape {X.shape}, weights need (n, {weights.d})")
    return _softmax(X @ weights.W.T + weights.b)


def _encode_dataset(
    dataset: Sequence[tuple[np.ndarray, str]], schema: ConceptSchema
) -> tuple[np.ndarray, np.ndarray]:
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset is empty")
    X = np.zeros((len(dataset), schema.d))
    y = np.zeros(len(dataset), dtype=int)
    for i, (x, label) in enumerate(dataset):
        x = np.asarray(x, dtype=float)
        if x.shape != (schema.d,):
            raise DimensionMismatchError(
                f"example {i} has shape {x.shape}, expected ({schema.d},)")
        if label not in schema.diagnoses:
            raise UnknownLabelError(f"example {i} has unknown label {label!r}")
        X[i] = x
        y[i] = schema.diagnosis_index(label)
    return X, y


def regularized_loss(W: np.ndarray, b: np.ndarray, X: np.ndarray,
                     y: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus l2 * ||W||^2 (bias unpenalized).

    May return inf/nan for broken inputs or absurd candidate steps; callers
    treat non-finite values as rejected.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        logits = X @ W.T + b
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        ce = -log_probs[np.arange(len(y)), y].mean()
        return float(ce + l2 * (W ** 2).sum())


def _grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray,
          l2: float) -> tuple[np.ndarray, np.ndarray]:
    P = _softmax(X @ W.T + b)
    P[np.arange(len(y)), y] -= 1.0
    grad_W = P.T @ X / len(X) + 2.0 * l2 * W
    grad_b = P.mean(axis=0)
    return grad_W, grad_b


def loss_gradient(
    weights: ModelWeights,
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the regularized cross-entropy over a batch."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(X) == 0:
        raise EmptyDatasetError("gradient needs a non-empty batch")
    if X.ndim != 2 or X.shape[1] != weights.d or len(y) != len(X):
        raise DimensionMismatchError(
            f"batch X{X.shape}/y{y.shape} incompatible with weights "
            f"({weights.k}x{weights.d})")
    return _grad(weights.W, weights.b, X, y, l2)


@dataclass(frozen=True)
class TrainResult:
    weights: ModelWeights
    loss_trace: list[float]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def train(
    dataset: Sequence[tuple[np.ndarray, str]],
    schema: ConceptSchema,
    seed: int = 0,
    epochs: int = 500,
    learning_rate: float = 0.1,
    l2: float = 1e-3,
) -> TrainResult:
    """Fit the head by full-batch gradient descent from zero initialization.

    A step that would increase the loss is rejected and the learning rate is
    halved, so the recorded loss trace is non-increasing. Deterministic for a
    given dataset and hyperparameters.
    """
    X, y = _encode_dataset(dataset, schema)
    K, d = schema.k, schema.d
    W = np.zeros((K, d))
    b = np.zeros(K)
    lr = learning_rate
    current = regularized_loss(W, b, X, y, l2)
    if not math.isfinite(current):
        raise NonfiniteLossError(f"initial loss is {current}; inputs are broken")
    trace = [current]
    for _ in range(epochs):
        grad_W, grad_b = _grad(W, b, X, y, l2)
        cand_W = W - lr * grad_W
        cand_b = b - lr * grad_b
        cand_loss = regularized_loss(cand_W, cand_b, X, y, l2)
        # nan compares False, so a non-finite candidate is rejected here too
        if cand_loss <= current:
            W, b, current = cand_W, cand_b, cand_loss
        else:
            lr /= 2.0
        trace.append(current)
    meta = {"seed": seed, "epochs": epochs, "learning_rate": learning_rate, "l2": l2}
    return TrainResult(ModelWeights(W, b, schema.schema_hash, meta), trace)


@dataclass(frozen=True)
class AttributionEntry:
    """One concept's active state attributed for a hypothesis."""

    concept_id: str
    state_id: str
    weight: float
    contribution: float
    magnitude: float
    group: AttributionGroup
    verified: bool

    def to_dict(self) -> dict:
        return {
            "concept_id": self.concept_id,
            "state_id": self.state_id,
            "weight": self.weight,
            "contribution": self.contribution,
            "magnitude": self.magnitude,
            "group": self.group.value,
            "verified": self.verified,
        }


def attribute_evidence(
    weights: ModelWeights,
    x: np.ndarray,
    hypothesis: str,
    schema: ConceptSchema,
    overlay: Optional[Mapping[str, str]] = None,
    verified: Optional[Mapping[str, bool]] = None,
    tau_w: float = TAU_W_DEFAULT,
) -> list[AttributionEntry]:
    """Break a hypothesis score into per-concept evidence groups.

    Uses each concept's active (argmax) state: its head weight decides the
    group, and entries are ranked by |weight * value| with ties kept in
    schema order. A session overlay may override computed groups.
    """
    if hypothesis not in schema.diagnoses:
        raise UnknownHypothesisError(f"unknown hypothesis {hypothesis!r}")
    x = np.asarray(x, dtype=float)
    if x.shape != (weights.d,):
        raise DimensionMismatchError(
            f"vector has shape {x.shape}, weights need ({weights.d},)")
    row = weights.W[schema.diagnosis_index(hypothesis)]
    overlay = overlay or {}
    verified = verified or {}

    entries = []
    for concept in schema.concepts:
        block = schema.block_slice(concept.concept_id)
        j = int(np.argmax(x[block]))
        w = float(row[block.start + j])
        value = float(x[block.start + j])
        if w > tau_w:
            group = AttributionGroup.SUPPORTING
        elif w < -tau_w:
            group = AttributionGroup.CONTRADICTING
        else:
            group = AttributionGroup.NEUTRAL
        override = overlay.get(concept.concept_id)
        if override is not None:
            group = AttributionGroup(override)
        entries.append(AttributionEntry(
            concept_id=concept.concept_id,
            state_id=concept.states[j],
            weight=w,
            contribution=w * value,
            magnitude=abs(w * value),
            group=group,
            verified=bool(verified.get(concept.concept_id, False)),
        ))
    return sorted(entries, key=lambda e: -e.magnitude)
