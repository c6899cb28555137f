import numpy as np
from testML_BaseTestClass import TestML_BaseTestClass

from costate_fusion.errors import WarmupIncompleteError
from costate_fusion.regimes import (CORRECTIVE, HAZARD, NOMINAL, ModeModel, OnlineModeClusterer, assign_mode,
                                    cluster_online, costate_centroids, extract_features, label_regimes)


def _model(raw_centroids, lam_dim=3):
    raw = np.asarray(raw_centroids, dtype=float)
    return ModeModel(centroids=raw.copy(), counts=np.ones(raw.shape[0]), mean=np.zeros(raw.shape[1]),
                     scale=np.ones(raw.shape[1]), lam_dim=lam_dim)


def _centroid(lam, z):
    lam = np.asarray(lam, dtype=float)
    return np.concatenate([lam, [np.linalg.norm(lam), z]])


class TestFeatures(TestML_BaseTestClass):

    def test_extract_features(self):
        phi = extract_features(np.zeros(3), 0.0, 1.0)
        np.testing.assert_array_equal(phi.as_array(), np.zeros(5))
        phi = extract_features(np.array([3.0, 4.0, 0.0]), 1.0, 2.0)
        self.assertEqual(phi.lambda_norm, 5.0)
        np.testing.assert_array_equal(phi.as_array(), [3, 4, 0, 5, 1])
        lam = self.rng.normal(size=3)
        self.assertEqual(extract_features(lam, 0.5, 0.0).lambda_norm, extract_features(-lam, 0.5, 0.0).lambda_norm)

    def test_extract_features_with_state(self):
        phi = extract_features(np.ones(3), 2.0, 0.0, state=np.arange(6.0))
        self.assertEqual(phi.as_array().shape, (11,))
        np.testing.assert_array_equal(phi.as_array()[5:], np.arange(6.0))


class TestClustering(TestML_BaseTestClass):

    def _two_clouds(self, n=200):
        centers = np.array([[0.0, 0.0, 0.0, 0.0, 1.0], [10.0, -5.0, 2.0, 11.3, 3.0]])
        labels = self.rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        points = centers[labels] + self.rng.normal(0.0, 0.1, size=(n, 5))
        return points, labels

    def test_two_clouds_recovered(self):
        points, labels = self._two_clouds()
        model = cluster_online(points, K=2, warmup=50)
        raw = model.raw_centroids()
        for k in range(2):
            members = points[labels == k]
            dist = np.linalg.norm(raw - members.mean(axis=0), axis=1)
            self.assertLess(dist.min(), 1e-2)
        self.assertEqual(int(model.counts.sum()), points.shape[0])

    def test_clustering_is_deterministic(self):
        points, _ = self._two_clouds()
        first = cluster_online(points, K=2, warmup=50)
        second = cluster_online(points, K=2, warmup=50)
        np.testing.assert_array_equal(first.centroids, second.centroids)
        np.testing.assert_array_equal(first.counts, second.counts)

    def test_single_mode_of_identical_samples(self):
        sample = np.array([1.0, -2.0, 0.5, 2.29, 0.7])
        model = cluster_online([sample] * 10, K=1, warmup=10)
        np.testing.assert_allclose(model.raw_centroids()[0], sample)

    def test_identical_samples_cannot_seed_two_modes(self):
        with self.assertRaises(WarmupIncompleteError):
            cluster_online([np.ones(5)] * 20, K=2, warmup=20)
        with self.assertRaises(WarmupIncompleteError):
            cluster_online([np.ones(5)], K=2)

    def test_online_clusterer_warms_up_then_assigns(self):
        points, _ = self._two_clouds(60)
        clusterer = OnlineModeClusterer(K=2, warmup=20)
        modes = [clusterer.partial_fit(p) for p in points]
        self.assertTrue(all(m is None for m in modes[:19]))
        self.assertTrue(clusterer.ready)
        self.assertTrue(all(m in (0, 1) for m in modes[20:]))

    def test_clusterer_copy_is_independent(self):
        points, _ = self._two_clouds(40)
        clusterer = OnlineModeClusterer(K=2, warmup=20)
        for p in points[:10]:
            clusterer.partial_fit(p)
        other = clusterer.copy()
        for p in points[10:]:
            other.partial_fit(p)
        self.assertFalse(clusterer.ready)
        self.assertTrue(other.ready)

    def test_assign_mode(self):
        model = _model([[-1.0, 0.0], [5.0, 5.0], [1.0, 0.0]], lam_dim=0)
        self.assertEqual(assign_mode(np.array([5.0, 5.0]), model), 1)
        self.assertEqual(assign_mode(np.array([0.0, 0.0]), model), 0)
        for _ in range(50):
            phi = self.rng.normal(0.0, 3.0, size=2)
            brute = min(range(3), key=lambda k: (np.sum((model.centroids[k] - phi) ** 2), k))
            self.assertEqual(assign_mode(phi, model), brute)

    def test_assign_mode_is_invariant_under_standardization(self):
        points, _ = self._two_clouds()
        model = cluster_online(points, K=2, warmup=50)
        for phi in points[:20]:
            direct = int(np.argmin(np.sum((model.raw_centroids() - phi) ** 2 / model.scale ** 2, axis=1)))
            self.assertEqual(assign_mode(phi, model), direct)


class TestLabels(TestML_BaseTestClass):

    def test_label_by_costate_norm(self):
        model = _model([_centroid([0.1, 0, 0], 1.0), _centroid([3, 4, 0], 1.0), _centroid([0, 1.2, 0], 1.0)])
        self.assertEqual(label_regimes(model).labels, [NOMINAL, HAZARD, CORRECTIVE])
        model = _model([_centroid([0, 0, 0], 1.0), _centroid([1, 0, 0], 1.0)])
        self.assertEqual(label_regimes(model).labels, [NOMINAL, HAZARD])

    def test_label_ties_go_to_larger_innovation(self):
        model = _model([_centroid([1, 0, 0], 0.1), _centroid([0, 1, 0], 2.0)])
        labeled = label_regimes(model)
        self.assertEqual(labeled.labels, [NOMINAL, HAZARD])
        self.assertEqual(labeled.hazard_modes(), [1])
        np.testing.assert_array_equal(labeled.centroids, model.centroids)
        self.assertEqual(model.labels, [])

    def test_mode_model_round_trip_through_dict(self):
        model = label_regimes(_model([_centroid([0, 0, 0], 1.0), _centroid([1, 0, 0], 1.0)]))
        restored = ModeModel.from_dict(model.to_dict())
        np.testing.assert_allclose(restored.raw_centroids(), model.raw_centroids())
        self.assertEqual(restored.labels, model.labels)


class TestCoStateCentroids(TestML_BaseTestClass):

    def test_zero_samples_collapse(self):
        centroids = costate_centroids([np.zeros(3)] * 10, K=2)
        self.assertEqual(centroids.K, 1)
        np.testing.assert_array_equal(centroids.lambda_bar, np.zeros((1, 3)))

    def test_two_delta_clouds(self):
        u = np.array([1.0, 0.0, 0.0])
        samples = [u if i % 3 else -u for i in range(30)]
        centroids = costate_centroids(samples, K=2)
        self.assertEqual(centroids.K, 2)
        found = sorted(centroids.lambda_bar[:, 0])
        np.testing.assert_allclose(found, [-1.0, 1.0], atol=1e-12)

    def test_single_centroid_is_mean(self):
        samples = self.rng.normal(size=(25, 3))
        np.testing.assert_allclose(costate_centroids(samples, K=1).lambda_bar[0], samples.mean(axis=0))

    def test_too_few_samples(self):
        with self.assertRaises(WarmupIncompleteError):
            costate_centroids([np.ones(3)], K=2)
