"""Session-wide fixtures: the synthetic acceptance dataset is built once."""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import make_schema  # noqa: E402

from senseloop.conformal import ConformalCalibration, calibrate  # noqa: E402
from senseloop.dataio import generate_synthetic, split  # noqa: E402
from senseloop.schema import ConceptSchema  # noqa: E402
from senseloop.scoring import ModelWeights, TrainResult, assemble_vector, train  # noqa: E402

ACCEPTANCE_SEED = 42
ACCEPTANCE_N = 3500  # 1000 train + 500 cal + 2000 test
ACCEPTANCE_RATIOS = (1000 / 3500, 500 / 3500, 2000 / 3500)
ACCEPTANCE_ALPHA = 0.1
ACCEPTANCE_NOISE = 0.1


@dataclass(frozen=True)
class TrainedBundle:
    schema: ConceptSchema
    cases: list
    planted: ModelWeights
    train_set: list
    cal_set: list
    test_set: list
    result: TrainResult
    calibration: ConformalCalibration

    @property
    def weights(self) -> ModelWeights:
        return self.result.weights


def _vectors(cases, schema):
    return [(assemble_vector(c, (), schema), c.true_diagnosis) for c in cases]


@pytest.fixture(scope="session")
def trained_bundle() -> TrainedBundle:
    """Seed-42 synthetic dataset with a trained head and calibration."""
    schema = make_schema(n_concepts=7, n_states=3, k=5)
    cases, planted = generate_synthetic(
        seed=ACCEPTANCE_SEED, n=ACCEPTANCE_N, schema=schema, noise=ACCEPTANCE_NOISE)
    train_cases, cal_cases, test_cases = split(cases, ACCEPTANCE_RATIOS, ACCEPTANCE_SEED)
    train_set = _vectors(train_cases, schema)
    cal_set = _vectors(cal_cases, schema)
    test_set = _vectors(test_cases, schema)
    result = train(train_set, schema, seed=ACCEPTANCE_SEED)
    calibration = calibrate(result.weights, cal_set, ACCEPTANCE_ALPHA, schema)
    return TrainedBundle(
        schema=schema, cases=cases, planted=planted,
        train_set=train_set, cal_set=cal_set, test_set=test_set,
        result=result, calibration=calibration)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
