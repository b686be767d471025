import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionlift import evalkit as ek
from motionlift.motion import MotionSeq, default_skeleton, decompose
from motionlift.textgen import HashTextEmbedder


def unit_var_pair(mean):
    # two points with sample (ddof=1) variance exactly 1
    return np.array([[mean - 1 / math.sqrt(2)], [mean + 1 / math.sqrt(2)]])


class TestFid:
    def test_identical_sets_zero(self):
        x = np.random.default_rng(0).standard_normal((40, 6))
        assert ek.fid(x, x).value < 1e-6

    def test_1d_mean_shift_closed_form(self):
        # mu 0 vs 1, both unit variance: (0-1)^2 + 1 + 1 - 2 = 1
        r = ek.fid(unit_var_pair(0.0), unit_var_pair(1.0))
        assert abs(r.value - 1.0) < 1e-9

    def test_1d_variance_gap_closed_form(self):
        # equal means, variances 4 and 1: 4 + 1 - 2*sqrt(4*1) = 1
        a = np.array([[-math.sqrt(2)], [math.sqrt(2)]])
        r = ek.fid(a, unit_var_pair(0.0))
        assert abs(r.value - 1.0) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((30, 5))
        b = rng.standard_normal((30, 5)) + 0.5
        assert abs(ek.fid(a, b).value - ek.fid(b, a).value) < 1e-8

    def test_degenerate_covariance_regularized(self):
        # rank-deficient covariance (constant second channel)
        a = np.column_stack([np.arange(10.0), np.zeros(10)])
        b = a + np.array([1.0, 0.0])
        r = ek.fid(a, b)
        assert r.regularized
        assert np.isfinite(r.value)

    def test_full_rank_not_regularized(self):
        rng = np.random.default_rng(2)
        r = ek.fid(rng.standard_normal((50, 3)), rng.standard_normal((50, 3)))
        assert not r.regularized

    def test_rejects_tiny_sets(self):
        with pytest.raises(ValueError):
            ek.fid(np.zeros((1, 3)), np.zeros((5, 3)))

    @settings(deadline=None, max_examples=25)
    @given(st.integers(0, 10_000))
    def test_never_negative(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((8, 2))
        b = rng.standard_normal((8, 2)) * rng.uniform(0.1, 3)
        assert ek.fid(a, b).value >= 0.0

    def test_multivariate_matches_closed_form(self):
        # diagonal Gaussians: FID = sum_i (dmu_i^2 + (s1_i - s2_i)^2)
        rng = np.random.default_rng(3)
        n = 4000
        s1, s2 = np.array([1.0, 2.0]), np.array([1.5, 0.5])
        dmu = np.array([0.3, -0.2])
        a = rng.standard_normal((n, 2)) * s1
        b = rng.standard_normal((n, 2)) * s2 + dmu
        want_approx = (dmu ** 2).sum() + ((s1 - s2) ** 2).sum()
        assert abs(ek.fid(a, b).value - want_approx) < 0.05


class TestRPrecision:
    def test_matched_orthogonal_features_top1(self):
        f = np.eye(32) * 10.0
        assert ek.r_precision(f, f, 1) == 1.0

    def test_k_equals_pool_always_one(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((32, 4))
        t = rng.standard_normal((32, 4))
        assert ek.r_precision(m, t, 32) == 1.0

    def test_random_features_near_uniform(self):
        rng = np.random.default_rng(7)
        n_pools = 100
        m = rng.standard_normal((32 * n_pools, 8))
        t = rng.standard_normal((32 * n_pools, 8))
        p = ek.r_precision(m, t, 1)
        sigma = math.sqrt((1 / 32) * (31 / 32) / (32 * n_pools))
        assert abs(p - 1 / 32) <= 3 * sigma

    def test_pool_larger_than_set_rejected(self):
        with pytest.raises(ValueError):
            ek.r_precision(np.zeros((8, 2)), np.zeros((8, 2)), 1, pool_size=32)

    def test_topk_monotone_in_k(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((64, 4))
        t = rng.standard_normal((64, 4))
        ps = [ek.r_precision(m, t, k) for k in (1, 2, 3)]
        assert ps[0] <= ps[1] <= ps[2]


class TestMMDist:
    def test_identical_zero(self):
        f = np.random.default_rng(0).standard_normal((10, 3))
        assert ek.mm_dist(f, f) == 0.0

    def test_unit_offset_1d(self):
        assert ek.mm_dist(np.zeros((5, 1)), np.ones((5, 1))) == 1.0

    def test_matches_bruteforce_loop(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((12, 5))
        t = rng.standard_normal((12, 5))
        want = sum(np.linalg.norm(a - b) for a, b in zip(m, t)) / 12
        assert math.isclose(ek.mm_dist(m, t), want, rel_tol=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ek.mm_dist(np.zeros((3, 2)), np.zeros((4, 2)))


class TestDiversity:
    def test_identical_features_zero(self):
        assert ek.diversity(np.ones((12, 3)), 5) == 0.0

    def test_matches_seeded_pairing_oracle(self):
        rng = np.random.default_rng(9)
        f = rng.standard_normal((16, 4))
        got = ek.diversity(f, 6, rng=np.random.default_rng(42))
        perm = np.random.default_rng(42).permutation(16)
        want = np.mean([np.linalg.norm(f[perm[i]] - f[perm[6 + i]])
                        for i in range(6)])
        assert math.isclose(got, want, rel_tol=1e-12)

    def test_deterministic_under_seed(self):
        f = np.random.default_rng(1).standard_normal((20, 3))
        a = ek.diversity(f, 8, rng=np.random.default_rng(5))
        b = ek.diversity(f, 8, rng=np.random.default_rng(5))
        assert a == b

    def test_too_small_set_rejected(self):
        with pytest.raises(ValueError):
            ek.diversity(np.zeros((7, 2)), 4)

    def test_two_clusters_exhaustive(self):
        # 2 points at distance 2; with the seeded permutation the value
        # equals the exhaustive mean over that pairing by construction
        f = np.array([[0.0], [2.0], [0.0], [2.0]])
        got = ek.diversity(f, 2, rng=np.random.default_rng(0))
        perm = np.random.default_rng(0).permutation(4)
        want = np.mean([abs(f[perm[i], 0] - f[perm[2 + i], 0]) for i in range(2)])
        assert got == want


class TestMModality:
    def test_duplicates_zero(self):
        g = np.ones((4, 3))
        assert ek.mmodality([g, g]) == 0.0

    def test_two_generations_distance_d(self):
        g = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert ek.mmodality([g]) == 5.0

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        groups = [rng.standard_normal((n, 4)) for n in (3, 5, 2)]
        want = []
        for g in groups:
            ds = [np.linalg.norm(g[i] - g[j])
                  for i in range(len(g)) for j in range(i + 1, len(g))]
            want.append(np.mean(ds))
        assert math.isclose(ek.mmodality(groups), np.mean(want), rel_tol=1e-12)

    def test_singleton_group_skipped_with_warning(self):
        g = np.array([[0.0], [1.0]])
        with pytest.warns(UserWarning):
            v = ek.mmodality([g, np.array([[9.0]])])
        assert v == 1.0

    def test_all_singletons_rejected(self):
        with pytest.warns(UserWarning):
            with pytest.raises(ValueError):
                ek.mmodality([np.array([[1.0]])])


class TestQmScore:
    def test_formula(self):
        assert math.isclose(ek.qm_score(4.0, 1.0), 0.5)

    def test_zero_fid_is_infinity_marker(self):
        assert ek.qm_score(0.0, 2.0) == math.inf

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            ek.qm_score(-1.0, 1.0)
        with pytest.raises(ValueError):
            ek.qm_score(1.0, -1.0)

    def test_reference_pairs(self):
        # frozen (fid, mmodality, qm) benchmark triples
        for f, m, q in [(0.045, 1.241, 5.251), (0.544, 2.799, 2.268),
                        (0.054, 2.046, 6.155)]:
            assert abs(ek.qm_score(f, m) - q) < 0.001


class TestMpjpe:
    def setup_method(self):
        self.sk = default_skeleton()
        rng = np.random.default_rng(0)
        self.joints = rng.standard_normal((6, self.sk.n_joints, 3))
        self.gt = decompose(self.joints, self.sk)

    def test_identical_zero(self):
        assert ek.mpjpe(self.gt, self.gt, self.sk) == 0.0

    def test_global_offset_cancelled(self):
        shifted = decompose(self.joints + np.array([1.0, 0.0, 0.0]), self.sk)
        assert ek.mpjpe(shifted, self.gt, self.sk) < 1e-12

    def test_single_joint_displacement_hand_value(self):
        j = self.joints.copy()
        j[2, 5] += np.array([0.1, 0.0, 0.0])
        pred = decompose(j, self.sk)
        want = 0.1 / (self.sk.n_joints * 6)
        assert math.isclose(ek.mpjpe(pred, self.gt, self.sk), want,
                            rel_tol=1e-9)

    def test_frame_mismatch_rejected(self):
        short = decompose(self.joints[:3], self.sk)
        with pytest.raises(ValueError):
            ek.mpjpe(short, self.gt, self.sk)


class TestFeatureExtractor:
    def make_corpus(self, n=48, t=12, d=6, rng=None):
        rng = rng or np.random.default_rng(0)
        labels = rng.integers(0, 4, size=n)
        base = rng.standard_normal((4, d)) * 3
        motions = [base[l] + 0.1 * rng.standard_normal((t, d)) for l in labels]
        texts = [["walk", "jump", "turn", "wave"][l] for l in labels]
        return motions, texts, labels

    def test_features_unit_norm_and_shared_width(self):
        ext = ek.FeatureExtractor(motion_dim=6, text_dim=16, width=8)
        motions, texts, _ = self.make_corpus()
        fm = ext.motion_features(motions)
        ft = ext.text_features(HashTextEmbedder(16).embed_batch(texts))
        assert fm.shape == (48, 8) and ft.shape == (48, 8)
        np.testing.assert_allclose(np.linalg.norm(fm, axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(ft, axis=1), 1.0, atol=1e-9)

    def test_deterministic_checksum(self):
        a = ek.FeatureExtractor(6, 16, rng=np.random.default_rng(3))
        b = ek.FeatureExtractor(6, 16, rng=np.random.default_rng(3))
        assert a.checksum() == b.checksum()

    def test_contrastive_training_aligns_pairs(self):
        rng = np.random.default_rng(5)
        motions, texts, labels = self.make_corpus(rng=rng)
        emb = HashTextEmbedder(16)
        te = emb.embed_batch(texts)
        ms = np.stack([ek.FeatureExtractor.motion_stats(m) for m in motions])
        ext = ek.FeatureExtractor(motion_dim=6, text_dim=16, width=8,
                                  rng=np.random.default_rng(0))
        hist = ek.train_feature_extractor(ext, ms, te, steps=200,
                                          rng=np.random.default_rng(1))
        assert hist[-1] < hist[0] * 0.5
        # after training, paired retrieval is far better than chance
        fm = ext.motion_features(motions)
        ft = ext.text_features(te)
        assert ek.r_precision(fm, ft, 3, pool_size=16) > 0.5

    def test_training_deterministic(self):
        motions, texts, _ = self.make_corpus()
        te = HashTextEmbedder(16).embed_batch(texts)
        ms = np.stack([ek.FeatureExtractor.motion_stats(m) for m in motions])
        sums = []
        for _ in range(2):
            ext = ek.FeatureExtractor(6, 16, rng=np.random.default_rng(2))
            ek.train_feature_extractor(ext, ms, te, steps=20,
                                       rng=np.random.default_rng(7))
            sums.append(ext.checksum())
        assert sums[0] == sums[1]
