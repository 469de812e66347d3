"""특징점 / 아핀 추정 / 정합 연결 테스트"""
import numpy as np
import pytest

from divetrack.core.errors import DegenerateConfigurationError, DomainError, RegistrationError
from divetrack.models.geometry import AffineTransform, Descriptor, Keypoint
from divetrack.models.pipeline import FeatureConfig, RansacConfig
from divetrack.services import registration as reg

from conftest import make_frame, textured_gray

CORNERS_640x480 = np.array([[0, 0], [640, 0], [0, 480], [640, 480]], dtype=np.float64)


def random_affine(rng) -> AffineTransform:
    while True:
        lin = np.eye(2) + rng.uniform(-0.3, 0.3, size=(2, 2))
        if abs(np.linalg.det(lin)) > 0.3:
            break
    t = rng.uniform(-200, 200, size=2)
    return AffineTransform(a=lin[0, 0], b=lin[0, 1], c=lin[1, 0], d=lin[1, 1], tx=t[0], ty=t[1])


def pairs_for(transform: AffineTransform, src: np.ndarray) -> np.ndarray:
    return np.stack([src, transform.apply(src)], axis=1)


def rgb_from_gray(gray: np.ndarray) -> np.ndarray:
    g = np.clip(np.rint(gray), 0, 255).astype(np.uint8)
    return np.repeat(g[:, :, None], 3, axis=2)


class TestKeypoints:
    def test_grayscale_weights(self):
        pixels = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255]]], dtype=np.uint8)
        np.testing.assert_allclose(reg.to_grayscale(pixels), [[76.245, 149.685, 29.07]])

    def test_flat_image_has_no_keypoints(self):
        assert reg.detect_keypoints(np.full((32, 32), 100.0)) == []

    def test_small_raster_rejected(self):
        with pytest.raises(DomainError):
            reg.detect_keypoints(np.zeros((6, 20)))

    def test_square_has_four_corners(self):
        gray = np.zeros((40, 40))
        gray[10:30, 10:30] = 255.0
        kps = reg.detect_keypoints(gray)
        assert len(kps) == 4
        expected = [(9.5, 9.5), (29.5, 9.5), (9.5, 29.5), (29.5, 29.5)]
        for ex, ey in expected:
            assert min(np.hypot(k.x - ex, k.y - ey) for k in kps) <= 1.5

    def test_max_count_and_order(self):
        gray = textured_gray(120, 100, seed=2)
        kps = reg.detect_keypoints(gray, max_count=10)
        assert len(kps) == 10
        scores = [k.score for k in kps]
        assert scores == sorted(scores, reverse=True)

    def test_min_distance(self):
        kps = reg.detect_keypoints(textured_gray(120, 100, seed=4), min_distance_px=6)
        pts = np.array([[k.x, k.y] for k in kps])
        d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
        np.fill_diagonal(d, np.inf)
        # 서브픽셀 보정으로 최대 1픽셀까지 가까워질 수 있음
        assert d.min() > 6 - 1.0

    def test_strong_corner_does_not_starve_faint_texture(self):
        # 약한 배경 질감 + 대비가 큰 사각형 하나
        gray = 120.0 + 0.1 * (textured_gray(200, 160, seed=3, scale=6.0) - 128.0)
        gray[20:50, 20:50] = 255.0
        kps = reg.detect_keypoints(gray)
        away = [k for k in kps if not (10 <= k.x <= 60 and 10 <= k.y <= 60)]
        assert len(kps) >= 60
        assert len(away) >= 50


class TestDescriptors:
    def test_normalised(self, rng):
        gray = rng.uniform(0, 255, size=(20, 20))
        desc = reg.extract_descriptor(gray, Keypoint(x=10, y=10, score=1))
        assert desc.values.shape == (81,)
        assert abs(desc.values.mean()) < 1e-12
        assert np.linalg.norm(desc.values) == pytest.approx(1.0)

    def test_intensity_scaling_invariant(self, rng):
        gray = rng.uniform(0, 100, size=(20, 20))
        kp = Keypoint(x=9, y=9, score=1)
        a = reg.extract_descriptor(gray, kp)
        b = reg.extract_descriptor(gray * 2.0, kp)
        np.testing.assert_array_equal(a.values, b.values)

    def test_flat_patch(self):
        desc = reg.extract_descriptor(np.full((20, 20), 7.0), Keypoint(x=10, y=10, score=1))
        assert desc.flat
        assert not desc.values.any()

    def test_patch_outside_raster(self):
        with pytest.raises(DomainError):
            reg.extract_descriptor(np.zeros((20, 20)), Keypoint(x=2, y=10, score=1))

    def test_describe_drops_border_and_flat(self, rng):
        gray = np.full((30, 30), 50.0)
        gray[15:, :] = rng.uniform(0, 255, size=(15, 30))
        kps = [Keypoint(x=1, y=1, score=1), Keypoint(x=8, y=6, score=1), Keypoint(x=15, y=22, score=1)]
        kept, descs = reg.describe_keypoints(gray, kps)
        assert [(k.x, k.y) for k in kept] == [(15, 22)]
        assert len(descs) == 1


class TestMatching:
    def test_identical_sets(self, rng):
        descs = [Descriptor(values=v / np.linalg.norm(v)) for v in rng.normal(size=(10, 81))]
        matches = reg.match_descriptors(descs, descs)
        assert [(m.index_a, m.index_b) for m in matches] == [(i, i) for i in range(10)]
        assert all(m.distance == 0 for m in matches)

    def test_empty(self):
        assert reg.match_descriptors([], [Descriptor(values=[1.0, 0.0])]) == []

    def test_single_candidate_kept(self):
        matches = reg.match_descriptors([Descriptor(values=[1.0, 0.0])], [Descriptor(values=[0.0, 1.0])])
        assert len(matches) == 1
        assert matches[0].distance == pytest.approx(np.sqrt(2))

    def test_ambiguous_match_rejected(self):
        a = [Descriptor(values=[1.0, 0.0, 0.0])]
        b = [Descriptor(values=[0.0, 1.0, 0.0]), Descriptor(values=[0.0, 0.0, 1.0])]
        assert reg.match_descriptors(a, b) == []


class TestAffineEstimation:
    def test_lsq_recovers_random_affines(self, rng):
        worst = 0.0
        for _ in range(1000):
            t = random_affine(rng)
            src = rng.uniform([0, 0], [640, 480], size=(12, 2))
            est = reg.estimate_affine_lsq(pairs_for(t, src))
            worst = max(worst, est.max_abs_difference(t))
        assert worst <= 1e-9

    def test_lsq_collinear(self):
        src = np.array([[0, 0], [1, 1], [2, 2], [5, 5]], dtype=float)
        with pytest.raises(DegenerateConfigurationError):
            reg.estimate_affine_lsq(pairs_for(AffineTransform.identity(), src))

    def test_lsq_needs_three_pairs(self):
        with pytest.raises(DegenerateConfigurationError):
            reg.estimate_affine_lsq([((0, 0), (1, 1)), ((1, 0), (2, 1))])

    def test_ransac_all_inliers_equals_lsq(self, rng):
        t = random_affine(rng)
        pairs = pairs_for(t, rng.uniform([0, 0], [640, 480], size=(30, 2)))
        est, flags = reg.estimate_affine_ransac(pairs, iterations=50)
        assert all(flags)
        assert est.max_abs_difference(reg.estimate_affine_lsq(pairs)) < 1e-9

    def test_ransac_with_outliers(self, rng):
        t = AffineTransform(a=1.02, b=0.03, c=-0.02, d=0.98, tx=12.5, ty=-7.25)
        src = rng.uniform([0, 0], [640, 480], size=(70, 2))
        inliers = pairs_for(t, src)
        inliers[:, 1, :] += rng.normal(0, 0.3, size=(70, 2))
        outliers = np.stack([rng.uniform([0, 0], [640, 480], size=(30, 2)),
                             rng.uniform([0, 0], [640, 480], size=(30, 2))], axis=1)
        pairs = np.concatenate([inliers, outliers])

        est, flags = reg.estimate_affine_ransac(pairs, iterations=500, inlier_tol_px=2.0, seed=0)
        err = np.hypot(*(est.apply(CORNERS_640x480) - t.apply(CORNERS_640x480)).T)
        assert err.max() < 0.5
        assert sum(flags[:70]) >= 65

        again, flags_again = reg.estimate_affine_ransac(pairs, iterations=500, inlier_tol_px=2.0, seed=0)
        assert again == est
        assert flags_again == flags

    def test_ransac_input_order_irrelevant(self, rng):
        t = random_affine(rng)
        pairs = pairs_for(t, rng.uniform([0, 0], [640, 480], size=(40, 2)))
        pairs[:8, 1, :] += 50.0
        perm = rng.permutation(40)
        a, flags_a = reg.estimate_affine_ransac(pairs, seed=1)
        b, flags_b = reg.estimate_affine_ransac(pairs[perm], seed=1)
        assert a == b
        assert [flags_a[i] for i in perm] == flags_b

    def test_ransac_fails_without_model(self):
        src = np.array([[x, 2 * x] for x in range(10)], dtype=float)
        with pytest.raises(RegistrationError):
            reg.estimate_affine_ransac(pairs_for(AffineTransform.identity(), src))


class TestComposeInvert:
    def test_identity_laws(self, rng):
        t = random_affine(rng)
        identity = AffineTransform.identity()
        assert reg.compose(t, identity) == t
        assert reg.compose(identity, t) == t

    def test_translation_inverse(self):
        inv = reg.invert(AffineTransform.translation(5, -3))
        assert (inv.a, inv.b, inv.c, inv.d, inv.tx, inv.ty) == (1, 0, 0, 1, -5, 3)

    def test_inverse_round_trip(self, rng):
        t = random_affine(rng)
        assert reg.compose(t, reg.invert(t)).max_abs_difference(AffineTransform.identity()) < 1e-9

    def test_composition_order(self):
        scale = AffineTransform(a=2, d=2)
        shift = AffineTransform.translation(1, 0)
        # shift 먼저, scale 나중
        np.testing.assert_allclose(reg.compose(scale, shift).apply([(0, 0)]), [[2, 0]])

    def test_singular(self):
        singular = AffineTransform(a=1, b=2, c=2, d=4)
        with pytest.raises(DegenerateConfigurationError):
            reg.invert(singular)
        with pytest.raises(DegenerateConfigurationError):
            reg.compose(singular, AffineTransform.identity())


class TestChain:
    def test_identical_frames(self):
        pixels = rgb_from_gray(textured_gray(160, 120, seed=5))
        frames = [make_frame(pixels, k) for k in range(4)]
        transforms = reg.chain_to_reference(frames)
        assert len(transforms) == 4
        for t in transforms:
            assert t.max_abs_difference(AffineTransform.identity()) < 1e-6

    def test_translated_crops(self):
        frames = [make_frame(rgb_from_gray(textured_gray(160, 120, seed=6, offset=(5.0 * k, 0.0))), k)
                  for k in range(5)]
        transforms = reg.chain_to_reference(frames, threads=2)
        corners = np.array([[0, 0], [160, 0], [0, 120], [160, 120]], dtype=float)
        for k, t in enumerate(transforms):
            truth = AffineTransform.translation(5.0 * k, 0.0)
            assert np.abs(t.apply(corners) - truth.apply(corners)).max() < 0.5

    def test_thread_count_does_not_change_result(self):
        frames = [make_frame(rgb_from_gray(textured_gray(160, 120, seed=8, offset=(3.0 * k, 2.0 * k))), k)
                  for k in range(4)]
        assert reg.chain_to_reference(frames, threads=1) == reg.chain_to_reference(frames, threads=4)

    def test_failed_pair(self):
        textured = rgb_from_gray(textured_gray(160, 120, seed=9))
        flat = np.full_like(textured, 90)
        frames = [make_frame(textured, 0), make_frame(flat, 1), make_frame(textured, 2)]
        with pytest.raises(RegistrationError) as exc:
            reg.chain_to_reference(frames)
        assert exc.value.frames == [0, 1]

        transforms = reg.chain_to_reference(frames, tolerate_failures=True)
        assert all(t.max_abs_difference(AffineTransform.identity()) < 1e-9 for t in transforms)

    def test_custom_settings(self):
        pixels = rgb_from_gray(textured_gray(160, 120, seed=10))
        frames = [make_frame(pixels, k) for k in range(2)]
        transforms = reg.chain_to_reference(frames, FeatureConfig(max_keypoints=50), RansacConfig(iterations=20))
        assert transforms[1].max_abs_difference(AffineTransform.identity()) < 1e-6


class TestDirectRefinement:
    def test_recovers_subpixel_translation(self):
        source = textured_gray(200, 160, seed=12, scale=6.0, offset=(3.3, 1.8))
        target = textured_gray(200, 160, seed=12, scale=6.0)
        truth = AffineTransform.translation(3.3, 1.8)
        initial = AffineTransform.translation(3.0, 2.0)

        refined = reg.refine_affine_direct(source, target, initial)
        assert refined is not None
        corners = np.array([[0, 0], [200, 0], [0, 160], [200, 160]], dtype=float)
        assert np.abs(refined.apply(corners) - truth.apply(corners)).max() < 0.05

    def test_identical_images_keep_initial(self):
        gray = textured_gray(160, 120, seed=13, scale=6.0)
        refined = reg.refine_affine_direct(gray, gray, AffineTransform.identity())
        assert refined.max_abs_difference(AffineTransform.identity()) < 1e-9

    def test_too_little_overlap(self):
        gray = textured_gray(160, 120, seed=14, scale=6.0)
        assert reg.refine_affine_direct(gray, gray, AffineTransform.translation(150, 110)) is None

    def test_refinement_can_be_disabled(self):
        frames = [make_frame(rgb_from_gray(textured_gray(160, 120, seed=15, scale=6.0, offset=(2.4 * k, 0.0))), k)
                  for k in range(2)]
        on = reg.chain_to_reference(frames)
        off = reg.chain_to_reference(frames, ransac=RansacConfig(refine=False))
        truth = AffineTransform.translation(2.4, 0.0)
        corners = np.array([[0, 0], [160, 0], [0, 120], [160, 120]], dtype=float)
        err_on = np.abs(on[1].apply(corners) - truth.apply(corners)).max()
        assert err_on < 0.1
        assert on[1] != off[1]


class TestSingularEstimate:
    @staticmethod
    def collapsed_features():
        """이전 프레임 특징점이 모두 y=0 직선 위에 있는 대응"""
        grid = [(10.0 + 17.0 * i, 12.0 + 11.0 * j) for i in range(4) for j in range(3)]
        descs = [Descriptor(values=np.eye(len(grid))[i]) for i in range(len(grid))]
        current = [Keypoint(x=x, y=y, score=1.0) for x, y in grid]
        previous = [Keypoint(x=x, y=0.0, score=1.0) for x, _ in grid]
        return (current, descs, None), (previous, descs, None)

    def test_singular_pair_raises_registration_error(self):
        current, previous = self.collapsed_features()
        with pytest.raises(RegistrationError):
            reg.estimate_pair(current, previous, FeatureConfig(), RansacConfig(), 0)

    def test_singular_pair_is_tolerated(self, monkeypatch):
        collapse = AffineTransform(a=1.0, b=0.0, c=0.0, d=0.0, tx=0.0, ty=0.0)
        monkeypatch.setattr(reg, "estimate_affine_ransac",
                            lambda pairs, *args: (collapse, [True] * len(pairs)))
        pixels = rgb_from_gray(textured_gray(160, 120, seed=16))
        frames = [make_frame(pixels, k) for k in range(3)]

        with pytest.raises(RegistrationError) as exc:
            reg.chain_to_reference(frames)
        assert exc.value.frames == [0, 1]

        transforms = reg.chain_to_reference(frames, tolerate_failures=True)
        assert all(t == AffineTransform.identity() for t in transforms)
