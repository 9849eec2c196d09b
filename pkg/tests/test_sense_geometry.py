"""Tests for sense centroids, homonym clustering, and probing classifiers."""

import numpy as np
import pytest

from embgeom.errors import (
    DegenerateClassError,
    DegenerateClustersWarning,
    DimensionError,
    EmptyInputError,
    InsufficientDataError,
    ParseError,
    ZeroVectorError,
)
from embgeom.linalg import Vector
from embgeom.sense_geometry import (
    ProbeConfig,
    ProbeExample,
    ProbeModel,
    SenseInventory,
    ambiguity_flag,
    contextual_shift,
    homonym_separation,
    inventory_report,
    load_probe_model,
    load_probe_tsv,
    load_sense_tsv,
    probe_accuracy,
    probe_predict,
    probe_scores,
    probe_train,
    save_probe_model,
    save_probe_tsv,
    save_sense_tsv,
    sense_centroid,
    sense_distance,
)


class TestSenseCentroid:
    def test_singleton(self):
        v = Vector([1.5, -2.0])
        assert sense_centroid([v]) == v

    def test_midpoint(self):
        assert sense_centroid([[0.0, 2.0], [2.0, 0.0]]) == Vector([1.0, 1.0])

    def test_cancellation(self):
        v = Vector([3.0, -1.0, 2.0])
        occ = [v] * 4 + [-1.0 * v] * 4
        assert sense_centroid(occ) == Vector([0.0, 0.0, 0.0])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(50)
        occ = [rng.normal(size=3) for _ in range(6)]
        a = sense_centroid(occ)
        perm = [occ[i] for i in rng.permutation(6)]
        b = sense_centroid(perm)
        np.testing.assert_allclose(a.components, b.components, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            sense_centroid([])


class TestSenseDistance:
    def test_identity_is_zero(self):
        v = [0.4, 0.6]
        assert sense_distance(v, v) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_is_one(self):
        assert sense_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_hand_value(self):
        assert sense_distance([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
            0.29289, abs=1e-5
        )

    def test_symmetry_and_scale_invariance(self):
        rng = np.random.default_rng(51)
        for _ in range(20):
            a, b = rng.normal(size=4), rng.normal(size=4)
            d = sense_distance(a, b)
            assert d == pytest.approx(sense_distance(b, a), abs=1e-12)
            assert d == pytest.approx(sense_distance(2.5 * a, 0.3 * b), abs=1e-9)
            assert -1e-12 <= d <= 2 + 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVectorError):
            sense_distance([0.0, 0.0], [1.0, 0.0])

    def test_euclidean_flag(self):
        assert sense_distance([0.0, 3.0], [4.0, 0.0], metric="euclidean") == 5.0

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            sense_distance([1.0], [1.0], metric="manhattan")


class TestContextualShift:
    def test_unmodified_embedding(self):
        v = [1.0, 2.0]
        assert contextual_shift(v, v) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal(self):
        assert contextual_shift([1.0, 0.0], [0.0, 1.0]) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_hand_value(self):
        assert contextual_shift([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
            0.29289, abs=1e-5
        )

    def test_euclidean_flag(self):
        assert contextual_shift([0.0, 0.0], [3.0, 4.0], metric="euclidean") == 5.0


class TestHomonymSeparation:
    def axes_case(self):
        occurrences = [[1.0, 0.0]] * 3 + [[0.0, 1.0]] * 3
        token = [0.7, 0.7]
        gold = ["x", "x", "x", "y", "y", "y"]
        return token, occurrences, gold

    def test_hand_geometry(self):
        token, occ, gold = self.axes_case()
        report = homonym_separation(token, occ, gold_labels=gold, seed=0)
        assert report.purity == 1.0
        assert report.betweenness[(0, 1)] is True
        assert len(set(report.assignments[:3])) == 1
        assert len(set(report.assignments[3:])) == 1
        assert report.assignments[0] != report.assignments[3]
        # centroids are the axis points; inter-centroid cosine distance 1
        d = report.pairwise_distances.row(0)[1]
        assert d == pytest.approx(1.0, abs=1e-9)
        for t2c in report.token_to_centroid:
            assert t2c == pytest.approx(1 - 1 / np.sqrt(2), abs=1e-9)

    def test_identical_occurrences_degenerate(self):
        with pytest.warns(DegenerateClustersWarning):
            report = homonym_separation([1.0, 1.0], [[2.0, 1.0]] * 5, seed=0)
        assert report.degenerate
        assert report.pairwise_distances.row(0)[1] == pytest.approx(0.0, abs=1e-9)

    def test_purity_one_on_separated_gold(self):
        rng = np.random.default_rng(52)
        a = rng.normal(size=(20, 4)) * 0.05 + np.array([1.0, 0.0, 0.0, 0.0])
        b = rng.normal(size=(20, 4)) * 0.05 + np.array([0.0, 1.0, 0.0, 0.0])
        occ = np.vstack([a, b]).tolist()
        gold = ["a"] * 20 + ["b"] * 20
        report = homonym_separation([0.5, 0.5, 0.0, 0.0], occ, gold_labels=gold)
        assert report.purity == 1.0

    def test_too_few_occurrences(self):
        with pytest.raises(InsufficientDataError):
            homonym_separation([1.0], [[1.0], [2.0], [3.0]])

    def test_permutation_invariance_up_to_relabeling(self):
        rng = np.random.default_rng(53)
        a = rng.normal(size=(10, 3)) * 0.05 + np.array([1.0, 0.0, 0.0])
        b = rng.normal(size=(10, 3)) * 0.05 + np.array([0.0, 1.0, 0.0])
        occ = np.vstack([a, b])
        perm = rng.permutation(20)
        r1 = homonym_separation([0.5, 0.5, 0.0], occ.tolist(), seed=4)
        r2 = homonym_separation([0.5, 0.5, 0.0], occ[perm].tolist(), seed=4)
        direct = [r1.assignments[i] for i in perm]
        same = [a == b for a, b in zip(direct, r2.assignments)]
        assert all(same) or not any(same)

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(54)
        occ = rng.normal(size=(12, 3)).tolist()
        r1 = homonym_separation([1.0, 0.0, 0.0], occ, seed=9)
        r2 = homonym_separation([1.0, 0.0, 0.0], occ, seed=9)
        assert r1.assignments == r2.assignments
        assert r1.centroids == r2.centroids

    def test_gold_label_length_mismatch(self):
        occ = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.1], [0.1, 1.0]]
        with pytest.raises(DimensionError):
            homonym_separation([1.0, 1.0], occ, gold_labels=["a"])

    def test_three_way_gold_rejected(self):
        occ = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.1], [0.1, 1.0]]
        with pytest.raises(ValueError, match="two-way"):
            homonym_separation([1.0, 1.0], occ, gold_labels=list("abcd"))

    def test_euclidean_metric(self):
        occ = [[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]
        report = homonym_separation([2.5, 2.5], occ, metric="euclidean", seed=1)
        assert report.metric == "euclidean"
        assert report.assignments[0] == report.assignments[1]
        assert report.assignments[2] == report.assignments[3]
        assert report.assignments[0] != report.assignments[2]
        # token midway: closer to each centroid than they are to each other
        assert report.betweenness[(0, 1)] is True

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            homonym_separation([1.0, 0.0], [[1.0], [2.0], [3.0], [4.0]])


class TestInventoryReport:
    def test_centroids_and_distances(self):
        inv = SenseInventory(
            word="bank",
            senses={
                "river": [[0.0, 2.0], [2.0, 0.0]],
                "money": [[0.0, -1.0], [0.0, -3.0]],
            },
        )
        report = inventory_report(inv, token_emb=[1.0, 0.0])
        assert report.names == ("money", "river")
        assert report.centroids[0] == Vector([0.0, -2.0])
        assert report.centroids[1] == Vector([1.0, 1.0])
        m = report.pairwise_distances
        assert m.row(0)[0] == 0.0
        assert m.row(0)[1] == m.row(1)[0]
        assert len(report.token_to_centroid) == 2
        assert (0, 1) in report.betweenness

    def test_single_sense(self):
        inv = SenseInventory(word="w", senses={"only": [[1.0, 1.0]]})
        report = inventory_report(inv)
        assert report.names == ("only",)
        assert report.token_to_centroid is None


class TestSenseInventory:
    def test_empty_sense_rejected(self):
        with pytest.raises(EmptyInputError):
            SenseInventory(word="w", senses={"a": []})

    def test_no_senses_rejected(self):
        with pytest.raises(EmptyInputError):
            SenseInventory(word="w", senses={})

    def test_mixed_dims_rejected(self):
        with pytest.raises(DimensionError):
            SenseInventory(word="w", senses={"a": [[1.0]], "b": [[1.0, 2.0]]})


def separable_points(rng, n=100, noise=0.1):
    a = rng.normal(size=(n, 2)) * noise + np.array([1.0, 0.0])
    b = rng.normal(size=(n, 2)) * noise + np.array([0.0, 1.0])
    examples = [(row.tolist(), {"A"}) for row in a]
    examples += [(row.tolist(), {"B"}) for row in b]
    return examples


class TestProbeTrain:
    def test_separable_accuracy(self):
        rng = np.random.default_rng(55)
        examples = separable_points(rng)
        model = probe_train(examples)
        assert probe_accuracy(model, examples) >= 0.95

    def test_class_order_sorted(self):
        rng = np.random.default_rng(56)
        model = probe_train(separable_points(rng, n=10))
        assert model.classes == ("A", "B")

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateClassError):
            probe_train([([1.0, 0.0], {"A"}), ([0.0, 1.0], {"A"})])

    def test_class_without_negatives_rejected(self):
        with pytest.raises(DegenerateClassError, match="negative"):
            probe_train([([1.0, 0.0], {"A", "B"}), ([0.0, 1.0], {"A"})])

    def test_xor_is_not_linearly_separable(self):
        corners = [
            ([0.0, 0.0], {"A"}),
            ([1.0, 1.0], {"A"}),
            ([0.0, 1.0], {"B"}),
            ([1.0, 0.0], {"B"}),
        ]
        examples = corners * 25
        model = probe_train(examples)
        assert probe_accuracy(model, examples) <= 0.75

    def test_deterministic(self):
        rng = np.random.default_rng(57)
        examples = separable_points(rng, n=20)
        m1 = probe_train(examples, ProbeConfig(seed=3))
        m2 = probe_train(examples, ProbeConfig(seed=3))
        assert m1.weights == m2.weights and m1.biases == m2.biases

    def test_string_labels_rejected(self):
        with pytest.raises(TypeError):
            probe_train([([1.0], "A"), ([0.0], "B")])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ProbeConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            ProbeConfig(epochs=0)


class TestProbePredict:
    def make_model(self):
        # FOOD claimed on x0 > 0.5, ORGANIZATION on x1 > 0.5
        return ProbeModel(
            classes=("FOOD", "ORGANIZATION"),
            weights=(Vector([10.0, 0.0]), Vector([0.0, 10.0])),
            biases=(-5.0, -5.0),
        )

    def test_unreachable_threshold_gives_empty_set(self):
        model = self.make_model()
        for point in ([5.0, 5.0], [1.0, 0.0], [0.0, 0.0]):
            assert probe_predict(model, point, threshold=1.1) == set()

    def test_separable_class_a_predicts_a(self):
        rng = np.random.default_rng(58)
        examples = separable_points(rng)
        model = probe_train(examples)
        a_points = [v for v, labels in examples if labels == {"A"}]
        hits = sum(1 for v in a_points if probe_predict(model, v) == {"A"})
        assert hits / len(a_points) >= 0.95

    def test_boundary_score_included(self):
        # zero weights and bias give sigmoid(0) = 0.5 exactly
        model = ProbeModel(
            classes=("A", "B"),
            weights=(Vector([0.0]), Vector([0.0])),
            biases=(0.0, 0.0),
        )
        assert probe_predict(model, [3.0]) == {"A", "B"}
        assert probe_scores(model, [3.0]) == (0.5, 0.5)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            probe_predict(self.make_model(), [1.0, 2.0, 3.0])


class TestAmbiguityFlag:
    def test_two_classes_true(self):
        model = TestProbePredict().make_model()
        assert probe_predict(model, [1.0, 1.0]) == {"FOOD", "ORGANIZATION"}
        assert ambiguity_flag(model, [1.0, 1.0]) is True

    def test_single_class_false(self):
        model = TestProbePredict().make_model()
        assert probe_predict(model, [1.0, 0.0]) == {"FOOD"}
        assert ambiguity_flag(model, [1.0, 0.0]) is False

    def test_empty_prediction_false(self):
        model = TestProbePredict().make_model()
        assert probe_predict(model, [0.0, 0.0]) == set()
        assert ambiguity_flag(model, [0.0, 0.0]) is False

    def test_equivalence_with_predict_cardinality(self):
        rng = np.random.default_rng(59)
        model = TestProbePredict().make_model()
        for _ in range(50):
            p = rng.uniform(-1, 2, size=2).tolist()
            assert ambiguity_flag(model, p) == (len(probe_predict(model, p)) >= 2)


class TestProbeAccuracy:
    def test_exact_set_match(self):
        model = TestProbePredict().make_model()
        examples = [
            ([1.0, 1.0], {"FOOD", "ORGANIZATION"}),  # predicted both: hit
            ([1.0, 0.0], {"FOOD"}),  # hit
            ([1.0, 0.0], {"FOOD", "ORGANIZATION"}),  # miss: only FOOD predicted
            ([0.0, 0.0], set()),  # hit: empty prediction
        ]
        assert probe_accuracy(model, examples) == 0.75


class TestSenseTsv:
    SAMPLE = (
        b"bank\triver\t1 0\n"
        b"bank\triver\t0.9 0.1\n"
        b"bank\tmoney\t0 1\n"
        b"rock\tstone\t1 1\n"
    )

    def test_load_groups_by_word_and_sense(self):
        inventories = load_sense_tsv(self.SAMPLE)
        assert set(inventories) == {"bank", "rock"}
        bank = inventories["bank"]
        assert set(bank.senses) == {"river", "money"}
        assert len(bank.senses["river"]) == 2
        assert bank.senses["money"][0] == Vector([0.0, 1.0])

    def test_round_trip(self):
        inventories = load_sense_tsv(self.SAMPLE)
        blob = save_sense_tsv(inventories.values())
        again = load_sense_tsv(blob)
        assert set(again) == set(inventories)
        assert again["bank"].senses == inventories["bank"].senses

    def test_wrong_column_count(self):
        with pytest.raises(ParseError, match="line 2"):
            load_sense_tsv(b"bank\triver\t1 0\nbank\triver\n")

    def test_bad_float(self):
        with pytest.raises(ParseError, match="line 1"):
            load_sense_tsv(b"bank\triver\t1 oops\n")

    def test_mixed_dims_rejected(self):
        with pytest.raises(ParseError, match="bank"):
            load_sense_tsv(b"bank\triver\t1 0\nbank\tmoney\t1\n")

    def test_empty_rejected(self):
        with pytest.raises(ParseError):
            load_sense_tsv(b"")


class TestProbeTsv:
    SAMPLE = (
        b"apple\tFOOD\t1 0\n"
        b"apple\tFOOD,ORGANIZATION\t0.5 0.5\n"
        b"filler\t\t0 0\n"
    )

    def test_load(self):
        examples = load_probe_tsv(self.SAMPLE)
        assert examples[0] == ProbeExample("apple", frozenset({"FOOD"}), Vector([1.0, 0.0]))
        assert examples[1].labels == {"FOOD", "ORGANIZATION"}
        assert examples[2].labels == frozenset()

    def test_round_trip(self):
        examples = load_probe_tsv(self.SAMPLE)
        assert load_probe_tsv(save_probe_tsv(examples)) == examples

    def test_wrong_columns(self):
        with pytest.raises(ParseError, match="line 1"):
            load_probe_tsv(b"apple\t1 0\n")


class TestProbeModelPersistence:
    def test_round_trip_identical_predictions(self):
        rng = np.random.default_rng(60)
        examples = separable_points(rng, n=20)
        model = probe_train(examples)
        back = load_probe_model(save_probe_model(model))
        assert back.classes == model.classes
        assert back.weights == model.weights
        assert back.biases == model.biases

    def test_bad_magic(self):
        with pytest.raises(ParseError, match="magic"):
            load_probe_model(b"XXXX" + b"\x00" * 24)

    def test_truncated(self):
        model = TestProbePredict().make_model()
        blob = save_probe_model(model)
        with pytest.raises(ParseError):
            load_probe_model(blob[:-1])
