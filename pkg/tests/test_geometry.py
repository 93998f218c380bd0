import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from traitbench.errors import DataError, DegenerateInputError
from traitbench.geometry import (
    FINGERPRINT_DIM,
    NUM_LANDMARKS,
    PUPIL_TARGET_LEFT,
    PUPIL_TARGET_RIGHT,
    STRUCTURAL_DIM,
    LandmarkSet,
    MeanShape,
    MinutiaSet,
    SimilarityTransform,
    fingerprint_feature,
    mean_shape,
    normalize_landmarks,
    structural_feature,
)


def random_landmarks(seed, spread=120.0, offset=200.0):
    rng = np.random.default_rng(seed)
    return LandmarkSet(points=offset + spread * rng.standard_normal((NUM_LANDMARKS, 2)))


@st.composite
def landmark_sets(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    return random_landmarks(seed)


class TestSimilarityTransform:
    def test_identity(self):
        t = SimilarityTransform.identity()
        pts = np.array([[1.0, 2.0], [3.0, -4.0]])
        assert np.allclose(t.apply(pts), pts)

    @given(
        st.floats(-math.pi, math.pi),
        st.floats(0.1, 10.0),
        st.floats(-100, 100),
        st.floats(-100, 100),
    )
    def test_inverse_composes_to_identity(self, rot, scale, tx, ty):
        t = SimilarityTransform(rotation=rot, scale=scale, translation=(tx, ty))
        composed = t.compose(t.invert())
        pts = np.array([[5.0, -3.0], [0.0, 0.0], [100.0, 42.0]])
        assert np.allclose(composed.apply(pts), pts, atol=1e-9)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            SimilarityTransform(rotation=0.0, scale=0.0, translation=(0.0, 0.0))


class TestNormalizeLandmarks:
    def test_already_canonical_is_identity(self):
        pts = random_landmarks(1).points.copy()
        pts[0] = PUPIL_TARGET_LEFT
        pts[1] = PUPIL_TARGET_RIGHT
        normed, transform = normalize_landmarks(LandmarkSet(points=pts))
        assert np.allclose(normed.points, pts, atol=1e-9)
        assert transform.rotation == pytest.approx(0.0, abs=1e-12)
        assert transform.scale == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(transform.translation, (0.0, 0.0), atol=1e-9)

    def test_pupils_pinned_exactly(self):
        normed, _ = normalize_landmarks(random_landmarks(2))
        assert tuple(normed.points[0]) == PUPIL_TARGET_LEFT
        assert tuple(normed.points[1]) == PUPIL_TARGET_RIGHT

    def test_rotated_scaled_input_normalizes_identically(self):
        raw = random_landmarks(3)
        t = SimilarityTransform(rotation=math.pi / 2, scale=3.0, translation=(0.0, 0.0))
        moved = LandmarkSet(points=t.apply(raw.points))
        a, _ = normalize_landmarks(raw)
        b, _ = normalize_landmarks(moved)
        assert np.allclose(a.points, b.points, atol=1e-9)

    @given(landmark_sets(), st.floats(-math.pi, math.pi), st.floats(0.2, 5.0),
           st.floats(-50, 50), st.floats(-50, 50))
    def test_similarity_invariance(self, lm, rot, scale, tx, ty):
        t = SimilarityTransform(rotation=rot, scale=scale, translation=(tx, ty))
        moved = LandmarkSet(points=t.apply(lm.points))
        a, _ = normalize_landmarks(lm)
        b, _ = normalize_landmarks(moved)
        assert np.allclose(a.points, b.points, atol=1e-9)

    def test_coincident_pupils_rejected(self):
        pts = random_landmarks(4).points.copy()
        pts[1] = pts[0]
        with pytest.raises(DegenerateInputError):
            LandmarkSet(points=pts)

    def test_wrong_point_count_rejected(self):
        with pytest.raises(DataError):
            LandmarkSet(points=np.zeros((20, 2)))


class TestMeanShape:
    def test_single_set_is_itself(self):
        s, _ = normalize_landmarks(random_landmarks(5))
        assert np.allclose(mean_shape([s]).points, s.points)

    def test_two_sets_midpoint(self):
        a, _ = normalize_landmarks(random_landmarks(6))
        b, _ = normalize_landmarks(random_landmarks(7))
        mid = mean_shape([a, b]).points
        assert np.allclose(mid, (a.points + b.points) / 2)

    def test_three_hand_built_sets_exact(self):
        base = random_landmarks(8).points
        sets = [LandmarkSet(points=base + delta) for delta in (0.0, 3.0, 6.0)]
        m = mean_shape(sets)
        assert np.array_equal(m.points, base + 3.0)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            mean_shape([])


class TestStructuralFeature:
    def test_length_is_1134(self):
        s, _ = normalize_landmarks(random_landmarks(9))
        m = MeanShape(points=s.points + 1.0)
        assert structural_feature(s, m).shape == (STRUCTURAL_DIM,)
        assert STRUCTURAL_DIM == 1134

    def test_zero_difference_uses_zero_angle(self):
        s, _ = normalize_landmarks(random_landmarks(10))
        m = MeanShape(points=s.points.copy())
        feat = structural_feature(s, m)
        block1 = feat[:42].reshape(21, 2)
        assert np.array_equal(block1, np.zeros((21, 2)))

    def test_block_layout(self):
        s, _ = normalize_landmarks(random_landmarks(11))
        m = MeanShape(points=random_landmarks(12).points / 10.0)
        feat = structural_feature(s, m)
        p, mp = s.points, m.points
        # block 1: per-point polar difference to the mean
        d0 = p[0] - mp[0]
        assert feat[0] == pytest.approx(np.hypot(*d0))
        assert feat[1] == pytest.approx(math.atan2(d0[1], d0[0]))
        # block 2 row-major: entry (i=2, j=5)
        d = p[2] - mp[5]
        base = 42 + (2 * 21 + 5) * 2
        assert feat[base] == pytest.approx(np.hypot(*d))
        assert feat[base + 1] == pytest.approx(math.atan2(d[1], d[0]))
        # block 3 lexicographic pairs: first entry is |p0 - p1| = 100
        assert feat[42 + 882] == pytest.approx(100.0)

    def test_full_pipeline_similarity_invariance(self):
        raw = random_landmarks(13)
        t = SimilarityTransform(rotation=math.radians(30), scale=2.5, translation=(17.0, -8.0))
        moved = LandmarkSet(points=t.apply(raw.points))
        mean = MeanShape(points=normalize_landmarks(random_landmarks(14))[0].points)
        fa = structural_feature(normalize_landmarks(raw)[0], mean)
        fb = structural_feature(normalize_landmarks(moved)[0], mean)
        assert np.allclose(fa, fb, atol=1e-9)

    @given(landmark_sets())
    def test_distances_nonnegative_and_symmetric(self, lm):
        s, _ = normalize_landmarks(lm)
        m = MeanShape(points=s.points * 0.9)
        block3 = structural_feature(s, m)[42 + 882:]
        assert np.all(block3 >= 0)
        # recompute with the pair order swapped per pair
        iu, ju = np.triu_indices(21, k=1)
        swapped = np.hypot(*(s.points[ju] - s.points[iu]).T)
        assert np.array_equal(block3, swapped)

    @given(landmark_sets())
    def test_triangle_inequality(self, lm):
        s, _ = normalize_landmarks(lm)
        p = s.points
        dist = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)
        for i in range(0, 21, 5):
            for j in range(1, 21, 5):
                for k in range(2, 21, 5):
                    assert dist[i, j] <= dist[i, k] + dist[k, j] + 1e-9


class TestFingerprintFeature:
    def test_zero_minutiae_vector(self):
        m = MinutiaSet(minutiae=np.zeros((16, 3)))
        assert np.array_equal(fingerprint_feature(m), np.zeros(FINGERPRINT_DIM))

    def test_seventeen_minutiae_keeps_sixteen(self):
        rng = np.random.default_rng(0)
        m = MinutiaSet(minutiae=rng.uniform(0, 100, (17, 3)))
        assert fingerprint_feature(m).shape == (48,)

    def test_retention_drops_last_in_canonical_order(self):
        rows = np.column_stack([
            np.arange(17.0),          # x
            np.arange(17.0),          # y: strictly increasing
            np.zeros(17),
        ])
        feat = fingerprint_feature(MinutiaSet(minutiae=rows))
        # sorted by y, the 17th (largest y) is dropped
        assert feat.reshape(16, 3)[:, 1].max() == 15.0

    def test_confidence_retention(self):
        rows = np.column_stack([np.arange(17.0), np.arange(17.0), np.zeros(17)])
        conf = np.zeros(17)
        conf[16] = 1.0  # highest confidence on the last canonical minutia
        feat = fingerprint_feature(MinutiaSet(minutiae=rows, confidence=conf))
        kept_y = feat.reshape(16, 3)[:, 1]
        assert 16.0 in kept_y and 15.0 not in kept_y

    @given(st.integers(0, 1000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        rows = rng.uniform(0, 50, (20, 3))
        base = fingerprint_feature(MinutiaSet(minutiae=rows))
        perm = rng.permutation(20)
        again = fingerprint_feature(MinutiaSet(minutiae=rows[perm]))
        assert np.array_equal(base, again)

    def test_too_few_minutiae_error_names_count(self):
        with pytest.raises(DataError, match="15"):
            fingerprint_feature(MinutiaSet(minutiae=np.zeros((15, 3))))
