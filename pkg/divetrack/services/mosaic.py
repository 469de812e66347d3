#!/usr/bin/env python3
"""
파노라마 모듈
전역 좌표 범위를 계산하고, 프레임을 변환하고, 공통 배경을 합성합니다.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import DEFAULT_COMPOSITE_MODE, MAX_PANORAMA_PIXELS, MEDIAN_BAND_BYTES, setup_logging
from ..core.errors import DegenerateConfigurationError, DomainError, RegistrationError
from ..models.frame import Frame
from ..models.geometry import AffineTransform, GlobalBounds
from ..models.mosaic import Panorama, WarpedFrame
from .registration import compose, invert

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

COMPOSITE_MODES = ("median", "mean")
# 중앙값 스택의 무효 샘플 값 (uint8 범위 밖)
INVALID_SAMPLE = 256


def _frame_corners(width: int, height: int) -> np.ndarray:
    return np.array([[0, 0], [width, 0], [0, height], [width, height]], dtype=np.float64)


def panorama_bounds(frames: Sequence[Frame], global_transforms: Sequence[AffineTransform]) -> GlobalBounds:
    """
    모든 프레임 네 모서리를 변환한 축 정렬 외곽 (바깥쪽으로 정수 반올림)
    """
    if not frames:
        raise DomainError("파노라마를 만들 프레임이 없습니다")
    if len(frames) != len(global_transforms):
        raise DomainError(f"프레임 수({len(frames)})와 변환 수({len(global_transforms)})가 다릅니다")

    corners = []
    for frame, transform in zip(frames, global_transforms):
        if not transform.is_invertible:
            raise DegenerateConfigurationError(
                f"프레임 {frame.index}의 변환이 특이합니다 (det={transform.determinant:.3e})",
                frames=[frame.index])
        corners.append(transform.apply(_frame_corners(frame.width, frame.height)))
    pts = np.vstack(corners)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return GlobalBounds(min_x=int(math.floor(lo[0])), min_y=int(math.floor(lo[1])),
                        max_x=int(math.ceil(hi[0])), max_y=int(math.ceil(hi[1])))


def panorama_offset(bounds: GlobalBounds) -> AffineTransform:
    """전역 좌표 → 파노라마 픽셀 좌표"""
    return AffineTransform.translation(-bounds.min_x, -bounds.min_y)


def _bilinear(pixels: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """유효 좌표(0 ≤ sx ≤ w−1, 0 ≤ sy ≤ h−1)에서 4-이웃 쌍선형 보간"""
    height, width = pixels.shape[:2]
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = (sx - x0)[:, None]
    fy = (sy - y0)[:, None]
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)

    src = pixels.astype(np.float64)
    top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
    bottom = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
    value = (1.0 - fy) * top + fy * bottom
    return np.clip(np.rint(value), 0, 255).astype(np.uint8)


def _footprint_window(frame: Frame, transform_to_panorama: AffineTransform,
                      bounds: GlobalBounds) -> Tuple[int, int, int, int]:
    """프레임이 덮는 파노라마 픽셀 구간 (x_lo, y_lo, x_hi, y_hi), 범위 안으로 자름"""
    footprint = transform_to_panorama.apply(_frame_corners(frame.width, frame.height))
    x_lo = min(max(int(math.floor(footprint[:, 0].min())) - 1, 0), bounds.width)
    x_hi = min(int(math.ceil(footprint[:, 0].max())) + 1, bounds.width)
    y_lo = min(max(int(math.floor(footprint[:, 1].min())) - 1, 0), bounds.height)
    y_hi = min(int(math.ceil(footprint[:, 1].max())) + 1, bounds.height)
    return x_lo, y_lo, max(x_hi, x_lo), max(y_hi, y_lo)


def warp_frame(frame: Frame, transform_to_panorama: AffineTransform, bounds: GlobalBounds,
               crop: bool = False) -> WarpedFrame:
    """
    역방향 매핑으로 프레임을 파노라마 좌표로 변환

    Parameters:
    -----------
    frame : Frame
        원본 프레임
    transform_to_panorama : AffineTransform
        프레임 → 파노라마 픽셀 변환
    bounds : GlobalBounds
        파노라마 범위 (출력 크기)
    crop : bool
        True면 프레임이 덮는 영역만 잘라 origin과 함께 반환

    Returns:
    --------
    WarpedFrame
        변환된 이미지와 유효 마스크
    """
    inverse = invert(transform_to_panorama)
    x_lo, y_lo, x_hi, y_hi = _footprint_window(frame, transform_to_panorama, bounds)

    if crop:
        origin = (x_lo, y_lo)
        image = np.zeros((y_hi - y_lo, x_hi - x_lo, 3), dtype=np.uint8)
        valid = np.zeros((y_hi - y_lo, x_hi - x_lo), dtype=bool)
        region, region_valid = image, valid
    else:
        origin = (0, 0)
        image = np.zeros((bounds.height, bounds.width, 3), dtype=np.uint8)
        valid = np.zeros((bounds.height, bounds.width), dtype=bool)
        region = image[y_lo:y_hi, x_lo:x_hi]
        region_valid = valid[y_lo:y_hi, x_lo:x_hi]
    if x_lo >= x_hi or y_lo >= y_hi:
        return WarpedFrame(image=image, valid=valid, origin=origin)

    gx, gy = np.meshgrid(np.arange(x_lo, x_hi, dtype=np.float64),
                         np.arange(y_lo, y_hi, dtype=np.float64))
    sx = inverse.a * gx + inverse.b * gy + inverse.tx
    sy = inverse.c * gx + inverse.d * gy + inverse.ty
    inside = (sx >= 0) & (sx <= frame.width - 1) & (sy >= 0) & (sy <= frame.height - 1)

    region[inside] = _bilinear(frame.pixels, sx[inside], sy[inside])
    region_valid[...] = inside
    return WarpedFrame(image=image, valid=valid, origin=origin)


def _band_rows(n_frames: int, width: int) -> int:
    """중앙값 스택(uint16)이 MEDIAN_BAND_BYTES를 넘지 않는 행 수"""
    per_row = max(1, n_frames) * max(1, width) * 3 * np.dtype(np.uint16).itemsize
    return max(1, MEDIAN_BAND_BYTES // per_row)


def _composite_median(warped: Sequence[WarpedFrame], coverage: np.ndarray) -> np.ndarray:
    height, width = coverage.shape
    out = np.zeros((height, width, 3), dtype=np.uint8)
    band = _band_rows(len(warped), width)
    for r0 in range(0, height, band):
        r1 = min(r0 + band, height)
        members = [w for w in warped if w.rows[0] < r1 and w.rows[1] > r0]
        if not members:
            continue
        stack = np.full((len(members), r1 - r0, width, 3), INVALID_SAMPLE, dtype=np.uint16)
        for slot, w in zip(stack, members):
            y0, y1 = max(w.rows[0], r0), min(w.rows[1], r1)
            x0, x1 = w.cols
            src = slice(y0 - w.origin[1], y1 - w.origin[1])
            mask = w.valid[src]
            slot[y0 - r0:y1 - r0, x0:x1][mask] = w.image[src][mask]
        # 무효 샘플은 정렬 시 뒤로 감
        stack.sort(axis=0)
        count = coverage[r0:r1]
        lower = np.maximum(count - 1, 0) // 2
        index = np.broadcast_to(lower[None, :, :, None], (1,) + stack.shape[1:])
        median = np.take_along_axis(stack, index, axis=0)[0]
        out[r0:r1] = np.where(count[:, :, None] > 0, median, 0).astype(np.uint8)
    return out


def _composite_mean(warped: Sequence[WarpedFrame], coverage: np.ndarray) -> np.ndarray:
    total = np.zeros(coverage.shape + (3,), dtype=np.uint32)
    for w in warped:
        region = total[w.rows[0]:w.rows[1], w.cols[0]:w.cols[1]]
        region[w.valid] += w.image[w.valid]
    safe = np.maximum(coverage, 1)[:, :, None]
    mean = np.where(coverage[:, :, None] > 0, np.rint(total / safe), 0.0)
    return np.clip(mean, 0, 255).astype(np.uint8)


def composite(warped_frames: Sequence[WarpedFrame], mode: str = DEFAULT_COMPOSITE_MODE,
              bounds: Optional[GlobalBounds] = None,
              transforms: Optional[Sequence[AffineTransform]] = None) -> Panorama:
    """
    픽셀별 중앙값(기본) 또는 평균으로 배경 합성

    짝수 개 중앙값은 작은 쪽 값을 사용합니다.
    bounds가 없으면 모든 프레임이 origin (0, 0)의 같은 크기여야 하고,
    있으면 잘라낸 조각을 origin 위치에 놓습니다.
    """
    if not warped_frames:
        raise DomainError("합성할 프레임이 없습니다")
    if mode not in COMPOSITE_MODES:
        raise DomainError(f"지원하지 않는 합성 방식: {mode} (median | mean)")

    if bounds is None:
        shape = warped_frames[0].valid.shape
        for w in warped_frames:
            if w.valid.shape != shape or w.origin != (0, 0):
                raise DomainError(f"변환된 프레임 크기가 다릅니다: {w.valid.shape}@{w.origin} vs {shape}")
        bounds = GlobalBounds(min_x=0, min_y=0, max_x=shape[1], max_y=shape[0])
    shape = (bounds.height, bounds.width)
    for w in warped_frames:
        if w.rows[1] > shape[0] or w.cols[1] > shape[1]:
            raise DomainError(f"변환된 프레임이 파노라마 밖으로 나갑니다: origin={w.origin}, "
                              f"크기={w.valid.shape}, 파노라마={shape}")

    coverage = np.zeros(shape, dtype=np.int32)
    for w in warped_frames:
        coverage[w.rows[0]:w.rows[1], w.cols[0]:w.cols[1]] += w.valid

    if mode == "median":
        image = _composite_median(warped_frames, coverage)
    else:
        image = _composite_mean(warped_frames, coverage)

    return Panorama(image=image, bounds=bounds, coverage=coverage, transforms=list(transforms or []))


def build_panorama(frames: Sequence[Frame], global_transforms: Sequence[AffineTransform],
                   mode: str = DEFAULT_COMPOSITE_MODE, threads: Optional[int] = None) -> Panorama:
    """
    범위 계산 → 파노라마 좌표 변환 → 프레임 변환(병렬) → 합성

    Parameters:
    -----------
    frames : Sequence[Frame]
        샘플링된 프레임
    global_transforms : Sequence[AffineTransform]
        프레임별 0번 프레임 좌표계 변환
    mode : str
        "median" 또는 "mean"
    threads : int, optional
        병렬 작업자 수

    Returns:
    --------
    Panorama
        배경, 범위, coverage, 프레임별 파노라마 변환
    """
    bounds = panorama_bounds(frames, global_transforms)
    pixels = bounds.width * bounds.height
    if pixels > MAX_PANORAMA_PIXELS:
        logger.error(f"파노라마가 너무 큽니다: {bounds.width}×{bounds.height}")
        raise RegistrationError(
            f"파노라마 크기 {bounds.width}×{bounds.height} 가 한도({MAX_PANORAMA_PIXELS} 픽셀)를 넘습니다. "
            f"정합 결과를 확인하세요", stage="mosaic")

    offset = panorama_offset(bounds)
    to_panorama: List[AffineTransform] = [compose(offset, t) for t in global_transforms]
    logger.info(f"파노라마 범위: {bounds.as_tuple()} ({bounds.width}×{bounds.height})")

    workers = max(1, threads or 1)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        warped = list(executor.map(lambda args: warp_frame(args[0], args[1], bounds, crop=True),
                                   zip(frames, to_panorama)))

    panorama = composite(warped, mode, bounds=bounds, transforms=to_panorama)
    covered = int(np.count_nonzero(panorama.coverage))
    logger.info(f"파노라마 합성 완료 ({mode}): 덮인 픽셀 {covered}/{pixels}")
    return panorama
