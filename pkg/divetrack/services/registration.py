#!/usr/bin/env python3
"""
프레임 정합 모듈
특징점 검출과 매칭으로 연속 프레임 간 아핀 변환을 추정하고,
기준 프레임(0번) 좌표계로 연결합니다.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares
from scipy.spatial.distance import cdist

from ..core.config import (
    DEFAULT_INLIER_TOL_PX, DEFAULT_MATCH_RATIO, DEFAULT_MAX_KEYPOINTS, DEFAULT_MIN_DISTANCE_PX,
    DEFAULT_PATCH_SIZE, DEFAULT_RANSAC_ITERATIONS, DEFAULT_RANSAC_SEED, DIRECT_HUBER_SCALE,
    DIRECT_MARGIN_PX, DIRECT_MAX_EVALUATIONS, DIRECT_MIN_POINTS, DIRECT_SMOOTH_SIGMA,
    DIRECT_STRIDE, HARRIS_K, HARRIS_WINDOW_SIGMA, setup_logging,
)
from ..core.errors import DegenerateConfigurationError, DomainError, RegistrationError
from ..models.frame import Frame
from ..models.geometry import AffineTransform, Descriptor, Keypoint, Match
from ..models.pipeline import FeatureConfig, RansacConfig

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

# ITU-R BT.601 휘도 계수
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)
MIN_RASTER_SIZE = 7
FLAT_VARIANCE = 1e-12
COLLINEAR_TOLERANCE = 1e-10
MIN_SAMPLE_DETERMINANT = 1e-6

PointPairs = Union[np.ndarray, Sequence[Tuple[Tuple[float, float], Tuple[float, float]]]]


def to_grayscale(frame: Union[Frame, np.ndarray]) -> np.ndarray:
    """RGB → 실수 휘도 래스터 (0.299R + 0.587G + 0.114B)"""
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    return pixels.astype(np.float64) @ LUMA_WEIGHTS


def harris_response(gray: np.ndarray, k: float = HARRIS_K) -> np.ndarray:
    """
    Harris 코너 응답

    3×3 Sobel 기울기, 5×5 가우시안 가중 구조 텐서 (σ=1, 반경 2)를 사용합니다.
    """
    ix = ndimage.sobel(gray, axis=1, mode="reflect")
    iy = ndimage.sobel(gray, axis=0, mode="reflect")
    window = dict(sigma=HARRIS_WINDOW_SIGMA, truncate=2.0, mode="reflect")
    sxx = ndimage.gaussian_filter(ix * ix, **window)
    syy = ndimage.gaussian_filter(iy * iy, **window)
    sxy = ndimage.gaussian_filter(ix * iy, **window)
    trace = sxx + syy
    return sxx * syy - sxy * sxy - k * trace * trace


def _subpixel_offset(left: float, centre: float, right: float) -> float:
    """1차원 포물선 꼭짓점 위치 (±0.5로 제한)"""
    denom = left - 2.0 * centre + right
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def detect_keypoints(gray: np.ndarray, max_count: int = DEFAULT_MAX_KEYPOINTS,
                     min_distance_px: int = DEFAULT_MIN_DISTANCE_PX,
                     k: float = HARRIS_K) -> List[Keypoint]:
    """
    Harris 코너 검출

    Parameters:
    -----------
    gray : np.ndarray
        휘도 래스터 (7×7 이상)
    max_count : int
        최대 특징점 수
    min_distance_px : int
        비최대 억제 반경 (픽셀)
    k : float
        Harris 상수

    Returns:
    --------
    List[Keypoint]
        응답 세기 내림차순 특징점 (서브픽셀 보정)
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or gray.shape[0] < MIN_RASTER_SIZE or gray.shape[1] < MIN_RASTER_SIZE:
        raise DomainError(f"특징점 검출에는 7×7 이상의 래스터가 필요합니다: {gray.shape}")
    if max_count < 1:
        return []

    response = harris_response(gray, k)
    peak = float(response.max())
    if not peak > 0:
        return []

    radius = max(int(min_distance_px), 1)
    local_max = ndimage.maximum_filter(response, size=2 * radius + 1, mode="constant", cval=-np.inf)
    candidates = (response == local_max) & (response > 0)
    # 가장자리 한 줄은 서브픽셀 보정이 불가능
    candidates[0, :] = candidates[-1, :] = False
    candidates[:, 0] = candidates[:, -1] = False

    ys, xs = np.nonzero(candidates)
    if ys.size == 0:
        return []
    scores = response[ys, xs]
    order = np.lexsort((xs, ys, -scores))

    # 평탄한 최대값(동점)은 탐욕적 억제로 하나만 남김
    accepted: List[int] = []
    acc_x = np.empty(max_count, dtype=np.float64)
    acc_y = np.empty(max_count, dtype=np.float64)
    limit = float(radius * radius)
    for idx in order:
        x, y = xs[idx], ys[idx]
        n = len(accepted)
        if n:
            d2 = (acc_x[:n] - x) ** 2 + (acc_y[:n] - y) ** 2
            if np.any(d2 <= limit):
                continue
        acc_x[n], acc_y[n] = x, y
        accepted.append(idx)
        if len(accepted) >= max_count:
            break

    height, width = gray.shape
    keypoints = []
    for idx in accepted:
        x, y = int(xs[idx]), int(ys[idx])
        dx = _subpixel_offset(response[y, x - 1], response[y, x], response[y, x + 1])
        dy = _subpixel_offset(response[y - 1, x], response[y, x], response[y + 1, x])
        keypoints.append(Keypoint(
            x=float(min(max(x + dx, 0.0), width - 1)),
            y=float(min(max(y + dy, 0.0), height - 1)),
            score=float(response[y, x]),
        ))
    return keypoints


def _patch_bounds(kp: Keypoint, patch_size: int) -> Tuple[int, int, int]:
    half = patch_size // 2
    cx = int(math.floor(kp.x + 0.5))
    cy = int(math.floor(kp.y + 0.5))
    return cx, cy, half


def patch_fits(gray: np.ndarray, kp: Keypoint, patch_size: int = DEFAULT_PATCH_SIZE) -> bool:
    cx, cy, half = _patch_bounds(kp, patch_size)
    height, width = gray.shape
    return half <= cx < width - half and half <= cy < height - half


def extract_descriptor(gray: np.ndarray, kp: Keypoint, patch_size: int = DEFAULT_PATCH_SIZE) -> Descriptor:
    """
    정규화 밝기 패치 기술자

    patch_size × patch_size 패치를 평균 제거 후 L2 정규화합니다.
    분산이 1e-12 미만이면 전부 0인 기술자(flat)를 돌려줍니다.
    """
    if patch_size < 1 or patch_size % 2 == 0:
        raise DomainError(f"patch_size는 양의 홀수여야 합니다: {patch_size}")
    if not patch_fits(gray, kp, patch_size):
        raise DomainError(f"패치가 래스터를 벗어납니다: ({kp.x:.1f}, {kp.y:.1f})")

    cx, cy, half = _patch_bounds(kp, patch_size)
    patch = np.asarray(gray[cy - half:cy + half + 1, cx - half:cx + half + 1], dtype=np.float64).ravel()
    patch = patch - patch.mean()
    if np.mean(patch * patch) < FLAT_VARIANCE:
        return Descriptor(values=np.zeros(patch.size), flat=True)
    return Descriptor(values=patch / np.linalg.norm(patch), flat=False)


def describe_keypoints(gray: np.ndarray, keypoints: Sequence[Keypoint],
                       patch_size: int = DEFAULT_PATCH_SIZE) -> Tuple[List[Keypoint], List[Descriptor]]:
    """가장자리에 가깝거나 평탄한 특징점을 제외하고 기술자 추출"""
    kept_kps, kept_desc = [], []
    for kp in keypoints:
        if not patch_fits(gray, kp, patch_size):
            continue
        desc = extract_descriptor(gray, kp, patch_size)
        if desc.flat:
            continue
        kept_kps.append(kp)
        kept_desc.append(desc)
    return kept_kps, kept_desc


def match_descriptors(a: Sequence[Descriptor], b: Sequence[Descriptor],
                      ratio: float = DEFAULT_MATCH_RATIO) -> List[Match]:
    """
    비율 검사 + 상호 일관성 매칭

    b에 후보가 하나뿐이면 비교할 두 번째 이웃이 없으므로 비율 검사를 통과한 것으로 봅니다.
    """
    if len(a) == 0 or len(b) == 0:
        return []
    mat_a = np.stack([d.values for d in a])
    mat_b = np.stack([d.values for d in b])
    if mat_a.shape[1] != mat_b.shape[1]:
        raise DomainError(f"기술자 길이가 다릅니다: {mat_a.shape[1]} vs {mat_b.shape[1]}")

    dist = cdist(mat_a, mat_b)
    best_b = np.argmin(dist, axis=1)
    best_a = np.argmin(dist, axis=0)

    matches = []
    for i, j in enumerate(best_b):
        d1 = dist[i, j]
        if dist.shape[1] > 1:
            d2 = np.partition(dist[i], 1)[1]
            if not d1 < ratio * d2:
                continue
        if best_a[j] != i:
            continue
        matches.append(Match(index_a=i, index_b=int(j), distance=float(d1)))
    return matches


def _as_pairs(pairs: PointPairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 2, 2)
    return arr.reshape(-1, 2, 2)


def estimate_affine_lsq(pairs: PointPairs) -> AffineTransform:
    """
    최소제곱 아핀 변환 Σ‖T(p) − p'‖² 최소화

    원점 이동(중심화) 후 선형 부분을 풀어 수치 안정성을 확보합니다.
    """
    arr = _as_pairs(pairs)
    n = arr.shape[0]
    if n < 3:
        raise DegenerateConfigurationError(f"아핀 추정에는 3쌍 이상이 필요합니다: {n}쌍")

    src, dst = arr[:, 0, :], arr[:, 1, :]
    mean_s, mean_d = src.mean(axis=0), dst.mean(axis=0)
    cs, cd = src - mean_s, dst - mean_d

    eig = np.linalg.eigvalsh(cs.T @ cs / n)
    if not eig[1] > 0 or eig[0] <= COLLINEAR_TOLERANCE * eig[1]:
        raise DegenerateConfigurationError("원본 점들이 한 직선 위에 있습니다")

    solution, *_ = np.linalg.lstsq(cs, cd, rcond=None)
    linear = solution.T
    t = mean_d - linear @ mean_s
    return AffineTransform(a=float(linear[0, 0]), b=float(linear[0, 1]),
                           c=float(linear[1, 0]), d=float(linear[1, 1]),
                           tx=float(t[0]), ty=float(t[1]))


def _residuals(transform: AffineTransform, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(transform.apply(src) - dst, axis=1)


def estimate_affine_ransac(pairs: PointPairs, iterations: int = DEFAULT_RANSAC_ITERATIONS,
                           inlier_tol_px: float = DEFAULT_INLIER_TOL_PX,
                           seed: int = DEFAULT_RANSAC_SEED) -> Tuple[AffineTransform, List[bool]]:
    """
    RANSAC 아핀 추정

    Parameters:
    -----------
    pairs : array-like
        ((x, y), (x', y')) 대응점 목록
    iterations : int
        최소 표본(3점) 추출 횟수
    inlier_tol_px : float
        인라이어 허용 재투영 오차
    seed : int
        난수 시드 (정렬된 표준 순서 위에서 추출하므로 입력 순서와 무관)

    Returns:
    --------
    tuple
        (최종 변환, 입력 순서의 인라이어 플래그)
    """
    arr = _as_pairs(pairs)
    n = arr.shape[0]
    if n < 3:
        raise RegistrationError(f"RANSAC에는 3쌍 이상이 필요합니다: {n}쌍")

    # 표준 순서로 정렬 후 추출
    order = np.lexsort((arr[:, 1, 1], arr[:, 1, 0], arr[:, 0, 1], arr[:, 0, 0]))
    sorted_pairs = arr[order]
    src, dst = sorted_pairs[:, 0, :], sorted_pairs[:, 1, :]
    src_h = np.hstack([src, np.ones((n, 1))])

    rng = np.random.default_rng(seed)
    best_count, best_rms, best_inliers = 0, math.inf, None
    for _ in range(iterations):
        sample = rng.choice(n, size=3, replace=False)
        design = src_h[sample]
        if abs(np.linalg.det(design)) < MIN_SAMPLE_DETERMINANT:
            continue
        model = np.linalg.solve(design, dst[sample])
        err = np.linalg.norm(src_h @ model - dst, axis=1)
        inliers = err <= inlier_tol_px
        count = int(np.count_nonzero(inliers))
        if count < 3:
            continue
        rms = float(np.sqrt(np.mean(err[inliers] ** 2)))
        if count > best_count or (count == best_count and rms < best_rms):
            best_count, best_rms, best_inliers = count, rms, inliers

    if best_inliers is None:
        raise RegistrationError(f"인라이어 3개 이상인 모델이 없습니다 ({n}쌍, {iterations}회)")

    try:
        transform = estimate_affine_lsq(sorted_pairs[best_inliers])
    except DegenerateConfigurationError as e:
        raise RegistrationError(f"인라이어 재적합 실패: {e.message}") from e

    final_sorted = _residuals(transform, src, dst) <= inlier_tol_px
    flags = np.zeros(n, dtype=bool)
    flags[order] = final_sorted
    return transform, flags.tolist()


def compose(t1: AffineTransform, t2: AffineTransform) -> AffineTransform:
    """t2 적용 후 t1 적용"""
    for t in (t1, t2):
        if not t.is_invertible:
            raise DegenerateConfigurationError(f"특이 변환입니다 (det={t.determinant:.3e})")
    return AffineTransform(
        a=t1.a * t2.a + t1.b * t2.c,
        b=t1.a * t2.b + t1.b * t2.d,
        c=t1.c * t2.a + t1.d * t2.c,
        d=t1.c * t2.b + t1.d * t2.d,
        tx=t1.a * t2.tx + t1.b * t2.ty + t1.tx,
        ty=t1.c * t2.tx + t1.d * t2.ty + t1.ty,
    )


def invert(t: AffineTransform) -> AffineTransform:
    """역변환"""
    det = t.determinant
    if not t.is_invertible:
        raise DegenerateConfigurationError(f"특이 변환은 역변환이 없습니다 (det={det:.3e})")
    a, b, c, d = t.d / det, -t.b / det, -t.c / det, t.a / det
    return AffineTransform(a=a, b=b, c=c, d=d,
                           tx=-(a * t.tx + b * t.ty),
                           ty=-(c * t.tx + d * t.ty))


def refine_affine_direct(source: np.ndarray, target: np.ndarray, initial: AffineTransform,
                         max_correction_px: float = DEFAULT_INLIER_TOL_PX) -> Optional[AffineTransform]:
    """
    밝기 기반 아핀 보정

    initial(source 좌표 → target 좌표)을 출발점으로 겹치는 영역의 밝기 차이를
    Huber 손실 최소제곱으로 줄입니다. 두 래스터는 같은 가우시안으로 평활한 뒤
    target은 3차 스플라인으로 보간합니다.

    Parameters:
    -----------
    source, target : np.ndarray
        휘도 래스터
    initial : AffineTransform
        특징점 기반 추정값
    max_correction_px : float
        표본 영역에서 허용하는 최대 보정량 (넘으면 보정 포기)

    Returns:
    --------
    AffineTransform 또는 None
        보정된 변환. 겹침이 부족하거나 수렴하지 않으면 None
    """
    src = ndimage.gaussian_filter(np.asarray(source, dtype=np.float64), DIRECT_SMOOTH_SIGMA)
    tgt = ndimage.gaussian_filter(np.asarray(target, dtype=np.float64), DIRECT_SMOOTH_SIGMA)
    src_h, src_w = src.shape
    tgt_h, tgt_w = tgt.shape
    margin = DIRECT_MARGIN_PX

    ys, xs = np.mgrid[margin:src_h - margin:DIRECT_STRIDE, margin:src_w - margin:DIRECT_STRIDE]
    xs = xs.ravel().astype(np.float64)
    ys = ys.ravel().astype(np.float64)
    u0, v0 = initial.apply(np.column_stack([xs, ys])).T
    inside = (u0 >= margin) & (u0 <= tgt_w - 1 - margin) & (v0 >= margin) & (v0 <= tgt_h - 1 - margin)
    if np.count_nonzero(inside) < DIRECT_MIN_POINTS:
        return None
    xs, ys, u0, v0 = xs[inside], ys[inside], u0[inside], v0[inside]
    values = src[ys.astype(np.intp), xs.astype(np.intp)]

    # 보정 파라미터는 중심화·정규화 좌표 기준 (픽셀 단위 변위)
    cx, cy = xs.mean(), ys.mean()
    scale = max(float(np.abs(xs - cx).max()), float(np.abs(ys - cy).max()), 1.0)
    xn, yn = (xs - cx) / scale, (ys - cy) / scale

    coeffs = ndimage.spline_filter(tgt, order=3, mode="mirror")
    grad_y, grad_x = np.gradient(tgt)

    def positions(p):
        return (u0 + p[0] * xn + p[1] * yn + p[2],
                v0 + p[3] * xn + p[4] * yn + p[5])

    def residuals(p):
        u, v = positions(p)
        sampled = ndimage.map_coordinates(coeffs, [v, u], order=3, mode="mirror", prefilter=False)
        return sampled - values

    def jacobian(p):
        u, v = positions(p)
        gx = ndimage.map_coordinates(grad_x, [v, u], order=1, mode="nearest")
        gy = ndimage.map_coordinates(grad_y, [v, u], order=1, mode="nearest")
        return np.column_stack([gx * xn, gx * yn, gx, gy * xn, gy * yn, gy])

    result = least_squares(residuals, np.zeros(6), jac=jacobian, loss="huber",
                           f_scale=DIRECT_HUBER_SCALE, max_nfev=DIRECT_MAX_EVALUATIONS)
    # status 0은 평가 횟수 소진 (마지막 반복값도 비용이 줄어든 값)
    if result.status < 0 or not np.all(np.isfinite(result.x)):
        return None
    p = result.x
    # 정규화 좌표의 변위는 |xn|, |yn| ≤ 1 영역에서 최대 |선형항| 합 + |이동항|
    correction = max(abs(p[0]) + abs(p[1]) + abs(p[2]), abs(p[3]) + abs(p[4]) + abs(p[5]))
    if not correction <= max_correction_px:
        return None

    return AffineTransform(
        a=initial.a + p[0] / scale, b=initial.b + p[1] / scale,
        c=initial.c + p[3] / scale, d=initial.d + p[4] / scale,
        tx=initial.tx + p[2] - (p[0] * cx + p[1] * cy) / scale,
        ty=initial.ty + p[5] - (p[3] * cx + p[4] * cy) / scale,
    )


def _frame_features(frame: Frame, features: FeatureConfig):
    gray = to_grayscale(frame)
    keypoints = detect_keypoints(gray, features.max_keypoints, features.min_distance_px)
    kept, descriptors = describe_keypoints(gray, keypoints, features.patch_size)
    return kept, descriptors, gray.astype(np.float32)


def estimate_pair(current, previous, features: FeatureConfig, ransac: RansacConfig,
                  pair_seed: int) -> Tuple[AffineTransform, int, int]:
    """
    현재 프레임 → 이전 프레임 변환 추정

    current, previous는 (특징점, 기술자, 휘도 래스터) 입니다. 래스터가 None이거나
    ransac.refine이 꺼져 있으면 밝기 기반 보정을 건너뜁니다.

    Returns:
    --------
    tuple
        (변환, 매칭 수, 인라이어 수)
    """
    kps_cur, desc_cur, gray_cur = current
    kps_prev, desc_prev, gray_prev = previous
    matches = match_descriptors(desc_cur, desc_prev, features.match_ratio)
    if len(matches) < 3:
        raise RegistrationError(f"매칭이 부족합니다: {len(matches)}개")
    pairs = np.array([[[kps_cur[m.index_a].x, kps_cur[m.index_a].y],
                       [kps_prev[m.index_b].x, kps_prev[m.index_b].y]] for m in matches])
    transform, flags = estimate_affine_ransac(pairs, ransac.iterations, ransac.inlier_tol_px, pair_seed)
    if not transform.is_invertible:
        raise RegistrationError(f"추정된 변환이 특이합니다 (det={transform.determinant:.3e})")

    if ransac.refine and gray_cur is not None and gray_prev is not None:
        refined = refine_affine_direct(gray_cur, gray_prev, transform, ransac.inlier_tol_px)
        if refined is not None and refined.is_invertible:
            transform = refined
        else:
            logger.debug("밝기 기반 보정 실패, 특징점 추정값 사용")
    return transform, len(matches), int(sum(flags))


def chain_to_reference(frames: Sequence[Frame], features: Optional[FeatureConfig] = None,
                       ransac: Optional[RansacConfig] = None, tolerate_failures: bool = False,
                       threads: Optional[int] = None) -> List[AffineTransform]:
    """
    모든 프레임을 0번 프레임 좌표계로 연결

    T₀ = 항등, Tₖ = Tₖ₋₁ ∘ Pₖ (Pₖ: k번 → k−1번 프레임)

    Parameters:
    -----------
    frames : Sequence[Frame]
        샘플링된 프레임
    features, ransac : 설정
        특징점 / RANSAC 설정 (None이면 기본값)
    tolerate_failures : bool
        True면 실패한 쌍만 항등 변환으로 대체 (경고 기록)
    threads : int, optional
        병렬 작업자 수 (결과에는 영향 없음)

    Returns:
    --------
    List[AffineTransform]
        프레임별 0번 프레임 좌표계로의 변환
    """
    if not frames:
        raise RegistrationError("정합할 프레임이 없습니다")
    features = features or FeatureConfig()
    ransac = ransac or RansacConfig()
    workers = max(1, threads or 1)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        per_frame = list(executor.map(lambda f: _frame_features(f, features), frames))
        logger.info(f"특징점 검출 완료: 프레임당 평균 "
                    f"{np.mean([len(kps) for kps, *_ in per_frame]):.0f}개")

        def run_pair(k: int):
            try:
                return estimate_pair(per_frame[k], per_frame[k - 1], features, ransac,
                                     ransac.seed + k), None
            except RegistrationError as e:
                return None, e

        pair_results = list(executor.map(run_pair, range(1, len(frames))))

    transforms = [AffineTransform.identity()]
    for k, (result, error) in enumerate(pair_results, start=1):
        pair = [frames[k - 1].index, frames[k].index]
        if error is not None:
            if not tolerate_failures:
                logger.error(f"프레임 {pair[0]}-{pair[1]} 정합 실패: {error.message}")
                raise RegistrationError(
                    f"프레임 {pair[0]}-{pair[1]} 정합 실패: {error.message}",
                    stage="mosaic", frames=pair) from error
            logger.warning(f"프레임 {pair[0]}-{pair[1]} 정합 실패, 항등 변환으로 대체: {error.message}")
            step = AffineTransform.identity()
        else:
            step, n_matches, n_inliers = result
            logger.debug(f"프레임 {pair[0]}-{pair[1]}: 매칭 {n_matches}, 인라이어 {n_inliers}")
        transforms.append(compose(transforms[-1], step))

    logger.info(f"정합 완료: {len(transforms)}프레임")
    return transforms
