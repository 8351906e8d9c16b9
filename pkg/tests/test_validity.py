import numpy as np
import pytest

from topiclab.validity import (
    ValidityError,
    allpoints_core_distance,
    classification_metrics,
    dbcv,
    density_separation,
    density_sparseness,
)

from oracles import brute_force_dbcv, _apcd, _dsc_and_internal


def random_instance(rng, n_max=40, dim_max=5, k_max=4):
    """Random labeled instance with well-formed clusters."""
    k = int(rng.integers(2, k_max + 1))
    dim = int(rng.integers(2, dim_max + 1))
    centers = rng.normal(0.0, 5.0, size=(k, dim))
    sizes = rng.integers(3, max(4, n_max // k) + 1, size=k)
    points, labels = [], []
    for c in range(k):
        pts = centers[c] + rng.normal(0.0, rng.uniform(0.2, 1.0), size=(int(sizes[c]), dim))
        points.append(pts)
        labels.extend([c] * int(sizes[c]))
    X = np.vstack(points)
    labels = np.array(labels)
    # sprinkle some noise points
    n_noise = int(rng.integers(0, 4))
    if n_noise:
        X = np.vstack([X, rng.normal(0.0, 10.0, size=(n_noise, dim))])
        labels = np.concatenate([labels, -np.ones(n_noise, dtype=int)])
    return X, labels, dim


class TestAllpointsCoreDistance:
    def test_two_points_distance_two(self):
        pts = np.array([[0.0], [2.0]])
        assert allpoints_core_distance(0, pts, 1) == pytest.approx(2.0, abs=1e-12)

    def test_three_equidistant_points(self):
        # equilateral triangle with side 3, any dim exponent
        d = 3.0
        pts = np.array([[0.0, 0.0], [d, 0.0], [d / 2, d * np.sqrt(3) / 2]])
        for dim in (1, 2, 5):
            assert allpoints_core_distance(0, pts, dim) == pytest.approx(d, rel=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(6, 2))
        for i in range(6):
            got = allpoints_core_distance(i, pts, 2)
            expected = _apcd(i, pts.tolist(), 2)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_singleton_errors(self):
        with pytest.raises(ValidityError):
            allpoints_core_distance(0, np.zeros((1, 2)), 2)


class TestDensitySparseness:
    def test_two_point_cluster_falls_back_to_single_edge(self):
        pts = np.array([[0.0], [2.0]])
        apcd = 2.0   # both points: core distance equals their separation
        assert density_sparseness(pts, 1) == pytest.approx(max(apcd, 2.0), abs=1e-12)

    def test_four_collinear_points_middle_edge(self):
        pts = np.array([[0.0], [1.0], [2.0], [3.0]])
        got = density_sparseness(pts, 1)
        expected, _, _ = _dsc_and_internal(pts.tolist(), 1)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_random_cluster_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            pts = rng.normal(size=(8, 3))
            got = density_sparseness(pts, 3)
            expected, _, _ = _dsc_and_internal(pts.tolist(), 3)
            assert got == pytest.approx(expected, abs=1e-9)

    def test_singleton_errors(self):
        with pytest.raises(ValidityError):
            density_sparseness(np.zeros((1, 2)), 2)


class TestDensitySeparation:
    def test_two_two_point_clusters_use_all_nodes(self):
        a = np.array([[0.0], [1.0]])
        b = np.array([[10.0], [11.0]])
        got = density_separation(a, b, 1)
        # every node is a fallback node; min cross mutual reachability is
        # max(apcd=1, apcd=1, d=9) = 9
        assert got == pytest.approx(9.0, abs=1e-12)

    def test_far_blobs_separation_dominates_sparseness(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.0, 0.1, size=(10, 2))
        b = rng.normal(0.0, 0.1, size=(10, 2)) + 10.0
        sep = density_separation(a, b, 2)
        assert sep > density_sparseness(a, 2)
        assert sep > density_sparseness(b, 2)
        assert sep == pytest.approx(10.0 * np.sqrt(2), rel=0.2)

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 2))
        b = rng.normal(size=(6, 2)) + 4.0
        assert density_separation(a, b, 2) == pytest.approx(
            density_separation(b, a, 2), abs=1e-12
        )


class TestDbcv:
    def test_two_tight_far_blobs_score_high(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(-0.05, 0.05, size=(12, 2))
        b = rng.uniform(-0.05, 0.05, size=(12, 2)) + 10.0
        X = np.vstack([a, b])
        labels = np.array([0] * 12 + [1] * 12)
        report = dbcv(X, labels)
        assert report.score > 0.9
        assert report.score == pytest.approx(brute_force_dbcv(X, labels), abs=1e-9)

    def test_shuffled_labels_score_negative(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(-0.05, 0.05, size=(12, 2))
        b = rng.uniform(-0.05, 0.05, size=(12, 2)) + 10.0
        X = np.vstack([a, b])
        negative = 0
        for seed in range(10):
            labels = np.random.default_rng(seed).permutation([0] * 12 + [1] * 12)
            score = dbcv(X, labels).score
            assert score == pytest.approx(brute_force_dbcv(X, labels), abs=1e-9)
            if score < 0:
                negative += 1
        assert negative >= 8

    def test_single_cluster_errors(self):
        X = np.random.default_rng(6).normal(size=(10, 2))
        with pytest.raises(ValidityError):
            dbcv(X, np.zeros(10, dtype=int))

    def test_singleton_cluster_flagged_with_zero_validity(self):
        rng = np.random.default_rng(7)
        X = np.vstack(
            [rng.normal(0, 0.1, (5, 2)), rng.normal(10, 0.1, (5, 2)), [[20.0, 20.0]]]
        )
        labels = np.array([0] * 5 + [1] * 5 + [2])
        report = dbcv(X, labels)
        assert report.singleton_clusters == [2]
        assert report.per_cluster_validity[2] == 0.0

    def test_noise_dilutes_score(self):
        rng = np.random.default_rng(8)
        a = rng.normal(0, 0.1, (10, 2))
        b = rng.normal(10, 0.1, (10, 2))
        X = np.vstack([a, b])
        labels = np.array([0] * 10 + [1] * 10)
        clean = dbcv(X, labels).score
        noisy_X = np.vstack([X, rng.normal(5, 5, (10, 2))])
        noisy_labels = np.concatenate([labels, -np.ones(10, dtype=int)])
        noisy = dbcv(noisy_X, noisy_labels).score
        assert noisy < clean
        assert dbcv(noisy_X, noisy_labels).n_noise == 10

    def test_scale_invariance(self):
        rng = np.random.default_rng(9)
        X, labels, _ = random_instance(rng)
        base = dbcv(X, labels).score
        for c in (0.01, 3.0, 1000.0):
            assert dbcv(X * c, labels).score == pytest.approx(base, abs=1e-9)

    def test_relabeling_and_permutation_invariance(self):
        rng = np.random.default_rng(10)
        X, labels, _ = random_instance(rng)
        base = dbcv(X, labels).score
        relabeled = np.where(labels >= 0, labels.max() - labels, labels)
        assert dbcv(X, relabeled).score == pytest.approx(base, abs=1e-12)
        perm = rng.permutation(len(X))
        assert dbcv(X[perm], labels[perm]).score == pytest.approx(base, abs=1e-9)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            X, labels, _ = random_instance(rng)
            assert dbcv(X, labels).score == pytest.approx(
                brute_force_dbcv(X, labels), abs=1e-9
            )


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        gold = [0, 1, 2, 1, 0]
        for avg in ("micro", "macro", "weighted"):
            m = classification_metrics(gold, gold, avg)
            assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)

    def test_hand_counted_micro(self):
        m = classification_metrics([0, 1, 1, 1], [0, 0, 1, 1], "micro")
        assert m.precision == m.recall == m.f1 == pytest.approx(0.75)

    def test_single_class_macro_equals_micro(self):
        micro = classification_metrics([3, 3, 3], [3, 3, 3], "micro")
        macro = classification_metrics([3, 3, 3], [3, 3, 3], "macro")
        assert (micro.precision, micro.recall) == (macro.precision, macro.recall)

    def test_predicted_only_class_zeroes_macro_terms(self):
        # class 9 never appears in gold: it still contributes (zero) terms
        # to the macro mean; class 0 keeps recall 1/2
        m = classification_metrics([0, 9], [0, 0], "macro")
        assert m.recall == pytest.approx((0.5 + 0.0) / 2)
        assert m.precision == pytest.approx((1.0 + 0.0) / 2)

    def test_micro_identity_under_single_label(self):
        rng = np.random.default_rng(12)
        gold = rng.integers(0, 4, size=50).tolist()
        pred = rng.integers(0, 4, size=50).tolist()
        m = classification_metrics(pred, gold, "micro")
        assert m.precision == pytest.approx(m.recall)
        assert m.f1 == pytest.approx(m.precision)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            classification_metrics([0], [0, 1])
