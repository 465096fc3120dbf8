"""Scorer tests: assembly overrides, softmax against hand computation,
gradient against finite differences, training behaviour, attribution order."""
from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import make_schema, random_case, random_weights

from senseloop.dataio import generate_synthetic
from senseloop.domain import (
    AttributionGroup,
    EvidenceItem,
    EvidenceStatus,
)
from senseloop.errors import (
    ConflictingEvidenceError,
    DimensionMismatchError,
    EmptyDatasetError,
    NonfiniteLossError,
    UnknownHypothesisError,
    UnknownLabelError,
)
from senseloop.schema import Concept, ConceptSchema
from senseloop.scoring import (
    ModelWeights,
    assemble_vector,
    attribute_evidence,
    load_weights,
    loss_gradient,
    regularized_loss,
    save_weights,
    score,
    score_batch,
    train,
)


def item(concept, state, status=EvidenceStatus.USER_REFINED, prob=1.0, step=1):
    return EvidenceItem(
        evidence_id=f"ev-{step}-{concept}", concept_id=concept, state_id=state,
        probability=prob, status=status, created_at_step=step)


class TestAssembleVector:
    def setup_method(self):
        self.schema = make_schema(n_concepts=3, n_states=3, k=4)
        rng = np.random.default_rng(11)
        self.case = random_case(self.schema, rng)

    def test_no_evidence_copies_case_probs(self):
        x = assemble_vector(self.case, (), self.schema)
        expected = [self.case.concept_probs[c.concept_id][s]
                    for c in self.schema.concepts for s in c.states]
        assert np.allclose(x, expected)

    def test_ai_proposed_items_do_not_override(self):
        proposed = item("concept_0", "s2", status=EvidenceStatus.AI_PROPOSED, prob=0.5)
        x = assemble_vector(self.case, (proposed,), self.schema)
        assert np.allclose(x, assemble_vector(self.case, (), self.schema))

    def test_refinement_makes_block_one_hot(self):
        x = assemble_vector(self.case, (item("concept_1", "s2"),), self.schema)
        assert list(x[3:6]) == [0.0, 0.0, 1.0]

    def test_two_refinements_on_different_concepts(self):
        # oracle: assemble each block independently, then concatenate
        evidence = (item("concept_0", "s1"), item("concept_2", "s0"))
        x = assemble_vector(self.case, evidence, self.schema)
        blocks = []
        for concept in self.schema.concepts:
            asserted = {e.concept_id: e.state_id for e in evidence}
            if concept.concept_id in asserted:
                blocks.extend(1.0 if s == asserted[concept.concept_id] else 0.0
                              for s in concept.states)
            else:
                blocks.extend(self.case.concept_probs[concept.concept_id][s]
                              for s in concept.states)
        assert np.allclose(x, blocks)
        for concept in self.schema.concepts:
            assert x[self.schema.block_slice(concept.concept_id)].sum() == pytest.approx(1.0)

    def test_conflicting_evidence_rejected(self):
        with pytest.raises(ConflictingEvidenceError):
            assemble_vector(
                self.case, (item("concept_0", "s0"), item("concept_0", "s1")),
                self.schema)


class TestScore:
    def test_zero_weights_uniform(self):
        schema = make_schema(n_concepts=2, n_states=3, k=5)
        weights = ModelWeights(np.zeros((5, 6)), np.zeros(5),
                               schema.schema_hash, {})
        probs = score(weights, np.ones(6) / 3)
        assert np.allclose(probs, 0.2)

    def test_hand_computed_softmax(self):
        # K=3, d=4 fixture; expected values computed with plain math.exp below
        W = np.array([
            [1.0, -0.5, 2.0, 0.0],
            [0.0, 1.5, -1.0, 0.5],
            [-2.0, 0.0, 0.5, 1.0],
        ])
        b = np.array([0.1, -0.2, 0.3])
        x = np.array([0.7, 0.3, 0.4, 0.6])
        schema = ConceptSchema(
            concepts=(Concept("a", ("a0", "a1")), Concept("b", ("b0", "b1"))),
            diagnoses=("d0", "d1", "d2"))
        weights = ModelWeights(W, b, schema.schema_hash, {})
        logits = [
            1.0 * 0.7 - 0.5 * 0.3 + 2.0 * 0.4 + 0.0 * 0.6 + 0.1,
            0.0 * 0.7 + 1.5 * 0.3 - 1.0 * 0.4 + 0.5 * 0.6 - 0.2,
            -2.0 * 0.7 + 0.0 * 0.3 + 0.5 * 0.4 + 1.0 * 0.6 + 0.3,
        ]
        exps = [math.exp(v) for v in logits]
        total = sum(exps)
        expected = [e / total for e in exps]
        assert np.allclose(score(weights, x), expected, atol=1e-12)

    def test_row_permutation_permutes_output(self, rng):
        schema = make_schema(n_concepts=3, n_states=2, k=4)
        weights = random_weights(schema, rng)
        x = rng.uniform(size=schema.d)
        perm = rng.permutation(schema.k)
        permuted = ModelWeights(weights.W[perm], weights.b[perm],
                                schema.schema_hash, {})
        assert np.allclose(score(permuted, x), score(weights, x)[perm])

    def test_normalization_on_random_inputs(self, rng):
        schema = make_schema(n_concepts=4, n_states=3, k=6)
        for _ in range(200):
            weights = random_weights(schema, rng, scale=3.0)
            x = rng.uniform(size=schema.d)
            probs = score(weights, x)
            assert abs(probs.sum() - 1.0) <= 1e-9
            assert (probs > 0).all()

    def test_dimension_mismatch(self):
        schema = make_schema(n_concepts=2, n_states=2, k=3)
        weights = ModelWeights(np.zeros((3, 4)), np.zeros(3), schema.schema_hash, {})
        with pytest.raises(DimensionMismatchError):
            score(weights, np.zeros(5))


class TestGradient:
    def test_zero_weights_balanced_binary_batch_has_zero_bias_gradient(self):
        schema = make_schema(n_concepts=1, n_states=2, k=2)
        weights = ModelWeights(np.zeros((2, 2)), np.zeros(2), schema.schema_hash, {})
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([0, 1])
        _, grad_b = loss_gradient(weights, X, y, l2=0.0)
        assert np.allclose(grad_b, 0.0)

    def test_matches_central_finite_differences(self, rng):
        # oracle: central differences with step 1e-5 on 100 random probes
        schema = make_schema(n_concepts=3, n_states=3, k=4)
        l2 = 1e-3
        step = 1e-5
        checked = 0
        while checked < 100:
            weights = random_weights(schema, rng)
            X = rng.uniform(size=(6, schema.d))
            y = rng.integers(schema.k, size=6)
            grad_W, grad_b = loss_gradient(weights, X, y, l2)
            flat = np.concatenate([grad_W.ravel(), grad_b])
            k = int(rng.integers(flat.size))
            def perturbed(eps):
                vec = np.concatenate([weights.W.ravel(), weights.b])
                vec[k] += eps
                W = vec[:weights.W.size].reshape(weights.W.shape)
                b = vec[weights.W.size:]
                return regularized_loss(W, b, X, y, l2)
            numeric = (perturbed(step) - perturbed(-step)) / (2 * step)
            denom = max(abs(numeric), abs(flat[k]), 1e-8)
            assert abs(numeric - flat[k]) / denom < 1e-4
            checked += 1

    def test_doubling_l2_doubles_penalty_component(self, rng):
        schema = make_schema(n_concepts=2, n_states=3, k=3)
        weights = random_weights(schema, rng)
        X = rng.uniform(size=(5, schema.d))
        y = rng.integers(3, size=5)
        g0, _ = loss_gradient(weights, X, y, l2=0.0)
        g1, _ = loss_gradient(weights, X, y, l2=0.01)
        g2, _ = loss_gradient(weights, X, y, l2=0.02)
        assert np.allclose(g2 - g0, 2 * (g1 - g0), atol=1e-12)

    def test_empty_batch_rejected(self, rng):
        schema = make_schema(n_concepts=2, n_states=2, k=3)
        weights = random_weights(schema, rng)
        with pytest.raises(EmptyDatasetError):
            loss_gradient(weights, np.zeros((0, schema.d)), np.zeros(0, dtype=int), 0.0)


class TestTrain:
    def test_zero_epochs_gives_zero_weights_uniform_predictions(self):
        schema = make_schema(n_concepts=2, n_states=2, k=4)
        dataset = [(np.array([1.0, 0.0, 0.0, 1.0]), "dx_0")]
        result = train(dataset, schema, epochs=0)
        assert np.allclose(result.weights.W, 0.0)
        assert np.allclose(result.weights.b, 0.0)
        assert np.allclose(score(result.weights, dataset[0][0]), 0.25)
        assert result.loss_trace == [pytest.approx(math.log(4))]

    def test_separable_synthetic_reaches_train_accuracy(self):
        # wide-margin planted model makes labels near-deterministic; a larger
        # initial learning rate is safe because bad steps are rejected
        schema = make_schema(n_concepts=4, n_states=3, k=4)
        cases, _ = generate_synthetic(seed=9, n=500, schema=schema, noise=0.0,
                                      weight_scale=20.0)
        dataset = [(assemble_vector(c, (), schema), c.true_diagnosis) for c in cases]
        result = train(dataset, schema, learning_rate=1.0)
        X = np.stack([x for x, _ in dataset])
        y = np.array([schema.diagnosis_index(lab) for _, lab in dataset])
        accuracy = (score_batch(result.weights, X).argmax(axis=1) == y).mean()
        assert accuracy >= 0.95

    def test_loss_trace_non_increasing_and_final_below_initial(self):
        schema = make_schema(n_concepts=3, n_states=3, k=5)
        cases, _ = generate_synthetic(seed=3, n=200, schema=schema, noise=0.2)
        dataset = [(assemble_vector(c, (), schema), c.true_diagnosis) for c in cases]
        # start with an oversized learning rate so the halving rule engages
        result = train(dataset, schema, learning_rate=8.0, epochs=120)
        trace = result.loss_trace
        assert all(a >= b - 1e-12 for a, b in zip(trace, trace[1:]))
        assert trace[-1] <= trace[0]

    def test_large_l2_shrinks_weights_toward_uniform(self):
        schema = make_schema(n_concepts=3, n_states=3, k=4)
        cases, _ = generate_synthetic(seed=5, n=100, schema=schema, noise=0.1)
        dataset = [(assemble_vector(c, (), schema), c.true_diagnosis) for c in cases]
        strong = train(dataset, schema, l2=1e4, epochs=100)
        weak = train(dataset, schema, l2=1e-3, epochs=100)
        assert np.linalg.norm(strong.weights.W) < 1e-2
        assert np.linalg.norm(strong.weights.W) < np.linalg.norm(weak.weights.W)
        probs = score(strong.weights, dataset[0][0])
        assert np.allclose(probs, 1.0 / schema.k, atol=1e-2)

    def test_deterministic(self):
        schema = make_schema(n_concepts=2, n_states=3, k=3)
        cases, _ = generate_synthetic(seed=1, n=50, schema=schema, noise=0.1)
        dataset = [(assemble_vector(c, (), schema), c.true_diagnosis) for c in cases]
        a = train(dataset, schema, epochs=40)
        b = train(dataset, schema, epochs=40)
        assert np.array_equal(a.weights.W, b.weights.W)
        assert a.loss_trace == b.loss_trace

    def test_empty_dataset_rejected(self):
        with pytest.raises(EmptyDatasetError):
            train([], make_schema())

    def test_unknown_label_rejected(self):
        schema = make_schema(n_concepts=2, n_states=2, k=2)
        with pytest.raises(UnknownLabelError):
            train([(np.ones(4) / 2, "not-a-dx")], schema)

    def test_nonfinite_input_raises(self):
        schema = make_schema(n_concepts=2, n_states=2, k=2)
        bad = np.array([np.inf, 0.0, 1.0, 0.0])
        with pytest.raises(NonfiniteLossError):
            train([(bad, "dx_0")], schema)


class TestWeightsFile:
    def test_round_trip(self, tmp_path, rng):
        schema = make_schema()
        weights = random_weights(schema, rng)
        save_weights(weights, tmp_path / "w.json")
        loaded = load_weights(tmp_path / "w.json", schema)
        assert np.array_equal(loaded.W, weights.W)
        assert np.array_equal(loaded.b, weights.b)
        assert loaded.schema_hash == weights.schema_hash

    def test_schema_mismatch_refused(self, tmp_path, rng):
        from senseloop.errors import SchemaMismatchError
        weights = random_weights(make_schema(), rng)
        save_weights(weights, tmp_path / "w.json")
        other = make_schema(n_concepts=4)
        with pytest.raises(SchemaMismatchError):
            load_weights(tmp_path / "w.json", other)


class TestAttribution:
    def setup_method(self):
        self.schema = make_schema(n_concepts=3, n_states=2, k=3)

    def _weights(self, row):
        W = np.zeros((3, 6))
        W[0] = row
        return ModelWeights(W, np.zeros(3), self.schema.schema_hash, {})

    def test_positive_weight_supports(self):
        weights = self._weights([2.0, 0, 0, 0, 0, 0])
        x = np.array([1.0, 0.0, 0.5, 0.5, 0.5, 0.5])
        entries = attribute_evidence(weights, x, "dx_0", self.schema)
        top = entries[0]
        assert top.concept_id == "concept_0"
        assert top.group is AttributionGroup.SUPPORTING
        assert top.magnitude == pytest.approx(2.0)

    def test_zero_weight_neutral(self):
        weights = self._weights([0.0, 0, 0, 0, 0, 0])
        x = np.array([1.0, 0.0, 0.5, 0.5, 0.5, 0.5])
        entries = attribute_evidence(weights, x, "dx_0", self.schema)
        assert all(e.group is AttributionGroup.NEUTRAL for e in entries)

    def test_negative_weight_contradicts(self):
        weights = self._weights([-1.0, 0, 0, 0, 0, 0])
        x = np.array([1.0, 0.0, 0.5, 0.5, 0.5, 0.5])
        entries = attribute_evidence(weights, x, "dx_0", self.schema)
        byc = {e.concept_id: e for e in entries}
        assert byc["concept_0"].group is AttributionGroup.CONTRADICTING

    def test_ranking_matches_brute_force_sort(self, rng):
        # oracle: exhaustively compute |W[h, argmax_j] * x_j| per concept and sort
        schema = make_schema(n_concepts=6, n_states=3, k=4)
        for _ in range(30):
            weights = random_weights(schema, rng)
            case = random_case(schema, rng)
            x = assemble_vector(case, (), schema)
            label = schema.diagnoses[int(rng.integers(schema.k))]
            entries = attribute_evidence(weights, x, label, schema)
            row = weights.W[schema.diagnosis_index(label)]
            expected = []
            for idx, concept in enumerate(schema.concepts):
                block = schema.block_slice(concept.concept_id)
                j = int(np.argmax(x[block]))
                mag = abs(row[block.start + j] * x[block.start + j])
                expected.append((-mag, idx, concept.concept_id))
            expected.sort()
            assert [e.concept_id for e in entries] == [c for _, _, c in expected]

    def test_overlay_overrides_group_only(self):
        weights = self._weights([2.0, 0, -1.0, 0, 0, 0])
        x = np.array([1.0, 0.0, 1.0, 0.0, 0.5, 0.5])
        plain = attribute_evidence(weights, x, "dx_0", self.schema)
        overlaid = attribute_evidence(
            weights, x, "dx_0", self.schema,
            overlay={"concept_0": "contradicting"})
        assert {e.concept_id: e.group for e in overlaid}["concept_0"] \
            is AttributionGroup.CONTRADICTING
        # only the group changed: same order, same magnitudes
        assert [e.concept_id for e in overlaid] == [e.concept_id for e in plain]
        assert [e.magnitude for e in overlaid] == [e.magnitude for e in plain]

    def test_verified_flags_copied(self):
        weights = self._weights([2.0, 0, 0, 0, 0, 0])
        x = np.array([1.0, 0.0, 0.5, 0.5, 0.5, 0.5])
        entries = attribute_evidence(
            weights, x, "dx_0", self.schema, verified={"concept_0": True})
        byc = {e.concept_id: e.verified for e in entries}
        assert byc["concept_0"] is True
        assert byc["concept_1"] is False

    def test_unknown_hypothesis_rejected(self):
        weights = self._weights([0.0] * 6)
        with pytest.raises(UnknownHypothesisError):
            attribute_evidence(weights, np.ones(6) / 2, "nope", self.schema)

    def test_refinement_responsiveness(self):
        # constructed so the refined state's weight dominates the displaced mass
        schema = make_schema(n_concepts=2, n_states=3, k=2)
        W = np.zeros((2, 6))
        W[0, 2] = 2.0  # dx_0 loads only on concept_0 state s2
        weights = ModelWeights(W, np.zeros(2), schema.schema_hash, {})
        case = random_case(schema, np.random.default_rng(3))
        before = score(weights, assemble_vector(case, (), schema))[0]
        refined = assemble_vector(case, (item("concept_0", "s2"),), schema)
        after = score(weights, refined)[0]
        assert case.concept_probs["concept_0"]["s2"] < 1.0
        assert after > before
