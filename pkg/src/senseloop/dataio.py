"""Dataset ingestion, deterministic splits, and the synthetic generator.

File layout (all paths relative to one dataset directory):
  schema.json   ordered concepts/states/diagnoses
  cases.csv     case_id, image_path, diagnosis, one column per concept
  probs.json    {case_id: {concept_id: {state_id: p}}}
  images/       optional per-case grayscale PNGs
  heatmaps/     optional <case_id>/<concept_id>.pgm grids

Loading is strict: nothing is renormalized or imputed, and per-case problems
are collected rather than aborting the whole load.
"""
from __future__ import annotations

import csv
import hashlib
import json
import random
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import Case, ValidationIssue, case_validation_issues
from .errors import EmptyInputError, ParseError
from .schema import ConceptSchema

BUNDLED_SCHEMA_PATH = Path(__file__).parent / "data" / "derm7pt_schema.json"

CSV_FIXED_COLUMNS = ("case_id", "image_path", "diagnosis")


def load_schema(path: str | Path) -> ConceptSchema:
    """Parse and validate a schema file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"schema file {path}: {exc}") from exc
    if not isinstance(data, dict) or "concepts" not in data or "diagnoses" not in data:
        raise ParseError(f"schema file {path}: expected concepts and diagnoses")
    try:
        return ConceptSchema.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"schema file {path}: malformed entry: {exc}") from exc


def bundled_schema() -> ConceptSchema:
    """The seven-concept dermoscopy schema shipped with the package."""
    return load_schema(BUNDLED_SCHEMA_PATH)


@dataclass(frozen=True)
class LoadIssue:
    """One rejected case with everything wrong about it."""

    case_id: str
    issues: tuple[ValidationIssue, ...]

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "issues": [i.to_dict() for i in self.issues]}


def load_cases(
    csv_path: str | Path,
    probs_path: str | Path,
    schema: ConceptSchema,
    heatmaps_dir: Optional[str | Path] = None,
) -> tuple[list[Case], list[LoadIssue]]:
    """Load cases; invalid rows are reported per case, valid ones returned.

    The CSV supplies labels and asset paths plus ground-truth concept states
    (validated against the schema, not stored); probabilities come from the
    companion JSON file.
    """
    csv_path = Path(csv_path)
    try:
        probs_data = json.loads(Path(probs_path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"probabilities file {probs_path}: {exc}") from exc
    if heatmaps_dir is None:
        heatmaps_dir = csv_path.parent / "heatmaps"
    heatmaps_dir = Path(heatmaps_dir)

    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        expected = list(CSV_FIXED_COLUMNS) + [c.concept_id for c in schema.concepts]
        missing = [col for col in expected if col not in header]
        if missing:
            raise ParseError(f"{csv_path}: missing columns {missing}")
        rows = list(reader)

    cases: list[Case] = []
    problems: list[LoadIssue] = []
    for row in rows:
        case_id = row["case_id"]
        issues: list[ValidationIssue] = []
        for concept in schema.concepts:
            cell = row[concept.concept_id]
            if cell not in concept.states:
                issues.append(ValidationIssue(
                    "UnknownState",
                    f"csv state {cell!r} unknown for concept {concept.concept_id!r}",
                    concept.concept_id))
        probs = probs_data.get(case_id)
        if probs is None:
            issues.append(ValidationIssue(
                "MissingConcept", f"no probabilities recorded for case {case_id!r}"))
            problems.append(LoadIssue(case_id, tuple(issues)))
            continue
        heatmap_refs = _discover_heatmaps(heatmaps_dir, case_id, schema)
        case = Case(
            case_id=case_id,
            image_ref=row["image_path"],
            concept_probs={c: {s: float(p) for s, p in states.items()}
                           for c, states in probs.items()},
            true_diagnosis=row["diagnosis"] or None,
            heatmap_refs=heatmap_refs,
        )
        issues.extend(case_validation_issues(case, schema))
        if issues:
            problems.append(LoadIssue(case_id, tuple(issues)))
        else:
            cases.append(case)
    return cases, problems


def _discover_heatmaps(
    heatmaps_dir: Path, case_id: str, schema: ConceptSchema
) -> Optional[dict[str, str]]:
    case_dir = heatmaps_dir / case_id
    if not case_dir.is_dir():
        return None
    refs = {}
    for concept in schema.concepts:
        path = case_dir / f"{concept.concept_id}.pgm"
        if path.is_file():
            refs[concept.concept_id] = str(path)
    return refs or None


def split(
    cases: Sequence[Case],
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[list[Case], list[Case], list[Case]]:
    """Deterministic disjoint (train, cal, test) partition.

    Calibration and test sizes are the rounded ratios; train takes the
    remainder.
    """
    if len(cases) == 0:
        raise EmptyInputError("cannot split an empty case list")
    r_train, r_cal, r_test = ratios
    if min(ratios) <= 0:
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(cases)
    n_cal = int(n * r_cal + 0.5)
    n_test = int(n * r_test + 0.5)
    n_train = n - n_cal - n_test
    if n_train < 0:
        raise ValueError("rounded calibration/test sizes exceed the dataset")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    shuffled = [cases[i] for i in order]
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_cal],
            shuffled[n_train + n_cal:])


def _planted_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def generate_synthetic(
    seed: int,
    n: int,
    schema: ConceptSchema,
    noise: float,
    weight_scale: float = 2.0,
):
    """Sample a desk-scale dataset from a planted linear model.

    True concept states are uniform; emitted probabilities mix the one-hot
    truth with uniform noise; labels are drawn from the planted model's
    softmax on the clean one-hot vector. The planted weights are returned so
    tests can use them as a ground-truth oracle.

    Returns (cases, planted_weights).
    """
    from .scoring import ModelWeights  # local import to avoid a cycle

    if n < 1:
        raise EmptyInputError("need n >= 1")
    if not 0.0 <= noise < 1.0:
        raise ValueError(f"noise must be in [0, 1), got {noise}")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, weight_scale, size=(schema.k, schema.d))
    b = np.zeros(schema.k)
    planted = ModelWeights(
        W=W, b=b, schema_hash=schema.schema_hash,
        training_meta={"planted": True, "seed": seed, "weight_scale": weight_scale})

    cases = []
    width = max(5, len(str(n)))
    for i in range(n):
        x_true = np.zeros(schema.d)
        concept_probs: dict[str, dict[str, float]] = {}
        for concept in schema.concepts:
            s = len(concept.states)
            true_idx = int(rng.integers(s))
            block = schema.block_slice(concept.concept_id)
            x_true[block.start + true_idx] = 1.0
            probs = np.full(s, noise / s)
            probs[true_idx] += 1.0 - noise
            concept_probs[concept.concept_id] = {
                state: float(probs[j]) for j, state in enumerate(concept.states)}
        label_probs = _planted_softmax(W @ x_true + b)
        label = schema.diagnoses[int(rng.choice(schema.k, p=label_probs))]
        case_id = f"case-{i:0{width}d}"
        cases.append(Case(
            case_id=case_id,
            image_ref=f"images/{case_id}.png",
            concept_probs=concept_probs,
            true_diagnosis=label,
        ))
    return cases, planted


# -- asset encoding -----------------------------------------------------------


def write_pgm(path: str | Path, grid: np.ndarray) -> None:
    """Write a 2-D array as an ASCII (P2) grayscale grid, scaled to 0..255."""
    grid = np.asarray(grid, dtype=float)
    top = float(grid.max())
    scaled = np.zeros_like(grid, dtype=int) if top <= 0 else np.rint(
        grid / top * 255).astype(int)
    rows, cols = grid.shape
    lines = [f"P2\n{cols} {rows}\n255\n"]
    for r in range(rows):
        lines.append(" ".join(str(v) for v in scaled[r]) + "\n")
    Path(path).write_text("".join(lines))


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an ASCII (P2) or binary (P5) grayscale grid as floats in [0, 1]."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"P2":
        tokens = []
        for line in raw.decode("ascii").splitlines():
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
        if len(tokens) < 4:
            raise ParseError(f"{path}: truncated PGM header")
        cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        values = [int(t) for t in tokens[4:]]
        if len(values) != rows * cols:
            raise ParseError(f"{path}: expected {rows * cols} samples, got {len(values)}")
        return np.array(values, dtype=float).reshape(rows, cols) / max(maxval, 1)
    if raw[:2] == b"P5":
        parts = raw.split(maxsplit=4)
        cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
        data = parts[4][:rows * cols]
        return np.frombuffer(data, dtype=np.uint8).astype(float).reshape(
            rows, cols) / max(maxval, 1)
    raise ParseError(f"{path}: not a P2/P5 PGM file")


def write_grayscale_png(path: str | Path, grid: np.ndarray) -> None:
    """Minimal deterministic 8-bit grayscale PNG encoder."""
    grid = np.asarray(grid)
    if grid.dtype != np.uint8:
        top = float(grid.max())
        grid = (np.zeros_like(grid) if top <= 0 else np.rint(
            np.asarray(grid, dtype=float) / top * 255)).astype(np.uint8)
    rows, cols = grid.shape
    raw = b"".join(b"\x00" + grid[r].tobytes() for r in range(rows))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (struct.pack(">I", len(body)) + tag + body
                + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF))

    header = struct.pack(">IIBBBBB", cols, rows, 8, 0, 0, 0, 0)
    payload = (b"\x89PNG\r\n\x1a\n"
               + chunk(b"IHDR", header)
               + chunk(b"IDAT", zlib.compress(raw, 9))
               + chunk(b"IEND", b""))
    Path(path).write_bytes(payload)


def _asset_rng(*parts: str) -> np.random.Generator:
    digest = hashlib.sha256("/".join(parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _gaussian_blob(rng: np.random.Generator, size: int) -> np.ndarray:
    cy, cx = rng.uniform(0.2, 0.8, size=2)
    sigma = rng.uniform(0.08, 0.25)
    ys, xs = np.mgrid[0:size, 0:size] / (size - 1)
    return np.exp(-(((ys - cy) ** 2) + ((xs - cx) ** 2)) / (2 * sigma ** 2))


def write_dataset(
    out_dir: str | Path,
    cases: Sequence[Case],
    schema: ConceptSchema,
    planted=None,
    assets: bool = False,
    image_size: int = 48,
    heatmap_size: int = 16,
) -> None:
    """Write a dataset directory in the documented layout.

    `assets=True` additionally emits per-case grayscale PNGs and per-concept
    PGM heatmaps (synthetic blobs, deterministic per case id).
    """
    from .scoring import save_weights  # local import to avoid a cycle

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "schema.json").write_text(
        json.dumps(schema.to_dict(), indent=2) + "\n")

    probs = {
        case.case_id: {c: dict(states) for c, states in case.concept_probs.items()}
        for case in cases
    }
    (out / "probs.json").write_text(json.dumps(probs, indent=2, sort_keys=True) + "\n")

    with (out / "cases.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(CSV_FIXED_COLUMNS) + [c.concept_id for c in schema.concepts])
        for case in cases:
            truth = []
            for concept in schema.concepts:
                block = case.concept_probs[concept.concept_id]
                truth.append(max(concept.states, key=lambda s: block[s]))
            writer.writerow(
                [case.case_id, case.image_ref, case.true_diagnosis or ""] + truth)

    if planted is not None:
        save_weights(planted, out / "planted_weights.json")

    if assets:
        (out / "images").mkdir(exist_ok=True)
        heatmap_root = out / "heatmaps"
        for case in cases:
            img_rng = _asset_rng(case.case_id, "image")
            texture = img_rng.uniform(0.1, 0.6, size=(image_size, image_size))
            texture += _gaussian_blob(img_rng, image_size)
            write_grayscale_png(out / "images" / f"{case.case_id}.png", texture)
            case_dir = heatmap_root / case.case_id
            case_dir.mkdir(parents=True, exist_ok=True)
            for concept in schema.concepts:
                hm_rng = _asset_rng(case.case_id, concept.concept_id)
                write_pgm(case_dir / f"{concept.concept_id}.pgm",
                          _gaussian_blob(hm_rng, heatmap_size))


def load_heatmaps(case: Case) -> Optional[dict[str, np.ndarray]]:
    """Read the case's referenced heatmap files into arrays, if any."""
    if not case.heatmap_refs:
        return None
    return {cid: read_pgm(path) for cid, path in case.heatmap_refs.items()}
