#!/usr/bin/env python3
"""
무게중심 검출 모듈
HSV 색 필터, 파노라마 차분, 연결 성분 필터링으로 프레임별 다이버 무게중심을 구합니다.
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from ..core.config import DEFAULT_CONNECTIVITY, DEFAULT_DILATION_PX, DEFAULT_MIN_AREA, setup_logging
from ..core.errors import DomainError, SegmentationError
from ..models.frame import Frame
from ..models.geometry import AffineTransform
from ..models.mosaic import Panorama, WarpedFrame
from ..models.segmentation import BarycentreSample, BinaryMask, ComponentStats, HsvThresholds
from ..utils.artifacts import draw_square
from .mosaic import warp_frame

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

Roi = Tuple[float, float, float, float]
RasterSource = Union[Frame, WarpedFrame, np.ndarray]

MARKER_HALF_SIZE = 3
MARKER_COLOUR = (255, 0, 0)


def _pixels(source: RasterSource) -> np.ndarray:
    if isinstance(source, Frame):
        return source.pixels
    if isinstance(source, WarpedFrame):
        return source.image
    return np.asarray(source)


def rgb_to_hsv_array(pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    헥스콘 RGB → HSV (벡터화)

    최댓값이 같은 채널이 여럿이면 빨강, 초록, 파랑 순으로 우선합니다.
    채도가 0이면 색상은 0도 입니다.

    Returns:
    --------
    tuple
        (h: 도 [0, 360), s: [0, 1], v: [0, 1])
    """
    rgb = np.asarray(pixels, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc

    v = maxc
    s = np.divide(delta, maxc, out=np.zeros_like(maxc), where=maxc > 0)

    safe = np.where(delta > 0, delta, 1.0)
    sector = np.select(
        [r == maxc, g == maxc],
        [np.mod((g - b) / safe, 6.0), (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    )
    h = np.where(delta > 0, 60.0 * sector, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    return h, s, v


def rgb_to_hsv(r: int, g: int, b: int) -> Tuple[float, float, float]:
    """8비트 RGB 한 픽셀 → (h 도, s, v)"""
    for channel in (r, g, b):
        if not 0 <= channel <= 255:
            raise DomainError(f"RGB 값은 0..255 범위여야 합니다: {(r, g, b)}")
    h, s, v = rgb_to_hsv_array(np.array([r, g, b], dtype=np.float64))
    return float(h), float(s), float(v)


def hue_in_range(h: np.ndarray, th: HsvThresholds) -> np.ndarray:
    if th.hue_wraps:
        return (h >= th.h_lo) | (h <= th.h_hi)
    return (h >= th.h_lo) & (h <= th.h_hi)


def apply_threshold(source: RasterSource, th: HsvThresholds,
                    ignore: Optional[Union[BinaryMask, np.ndarray]] = None) -> BinaryMask:
    """
    HSV 채널별 이중 임계 필터

    Parameters:
    -----------
    source : Frame, WarpedFrame 또는 H×W×3 배열
        입력 래스터
    th : HsvThresholds
        임계값 (색상 구간은 0도를 지나 감길 수 있음)
    ignore : BinaryMask, optional
        항상 제외할 픽셀 (예: 파노라마 coverage 0)
    """
    h, s, v = rgb_to_hsv_array(_pixels(source))
    bits = (hue_in_range(h, th)
            & (s >= th.s_lo) & (s <= th.s_hi)
            & (v >= th.v_lo) & (v <= th.v_hi))
    if ignore is not None:
        ignore_bits = ignore.bits if isinstance(ignore, BinaryMask) else np.asarray(ignore, dtype=bool)
        if ignore_bits.shape != bits.shape:
            raise SegmentationError(f"제외 마스크 크기가 다릅니다: {ignore_bits.shape} vs {bits.shape}")
        bits &= ~ignore_bits
    return BinaryMask(bits=bits)


def filter_panorama(panorama: Panorama, th: HsvThresholds) -> BinaryMask:
    """필터링된 파노라마 (coverage 0 픽셀 제외)"""
    mask = apply_threshold(panorama.image, th, ignore=panorama.uncovered)
    logger.debug(f"파노라마 필터 통과 픽셀: {mask.count}")
    return mask


def mask_subtract(frame_mask: BinaryMask, background_mask: BinaryMask,
                  dilation_px: int = DEFAULT_DILATION_PX) -> BinaryMask:
    """배경 마스크를 정사각 구조 요소로 팽창한 뒤 프레임 마스크에서 제거"""
    if frame_mask.bits.shape != background_mask.bits.shape:
        raise SegmentationError(
            f"마스크 크기가 다릅니다: {frame_mask.bits.shape} vs {background_mask.bits.shape}")
    if dilation_px < 0:
        raise DomainError(f"dilation_px는 0 이상이어야 합니다: {dilation_px}")

    background = background_mask.bits
    if dilation_px > 0 and background.any():
        size = 2 * dilation_px + 1
        background = ndimage.binary_dilation(background, structure=np.ones((size, size), dtype=bool))
    return BinaryMask(bits=frame_mask.bits & ~background)


def connected_components(mask: BinaryMask, connectivity: int = DEFAULT_CONNECTIVITY) -> List[ComponentStats]:
    """
    연결 성분 통계

    성분 순서는 (bbox min_y, min_x, 첫 래스터 위치) 이며 label은 그 순서의 1부터 번호입니다.
    """
    if connectivity not in (4, 8):
        raise DomainError(f"연결성은 4 또는 8 이어야 합니다: {connectivity}")
    structure = ndimage.generate_binary_structure(2, 2 if connectivity == 8 else 1)
    labels, n = ndimage.label(mask.bits, structure=structure)
    if n == 0:
        return []

    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    area = np.bincount(lab, minlength=n + 1)
    sum_x = np.bincount(lab, weights=xs, minlength=n + 1)
    sum_y = np.bincount(lab, weights=ys, minlength=n + 1)

    # ndimage.label 번호는 첫 래스터 위치 순서
    raw = []
    for label, slices in enumerate(ndimage.find_objects(labels), start=1):
        row_slice, col_slice = slices
        bbox = (col_slice.start, row_slice.start, col_slice.stop - 1, row_slice.stop - 1)
        raw.append((bbox[1], bbox[0], label, bbox))
    raw.sort()

    components = []
    for order, (_, _, label, bbox) in enumerate(raw, start=1):
        components.append(ComponentStats(
            label=order,
            area=int(area[label]),
            centroid_x=float(sum_x[label] / area[label]),
            centroid_y=float(sum_y[label] / area[label]),
            bbox=tuple(int(v) for v in bbox),
        ))
    return components


def filter_objects(components: Sequence[ComponentStats], min_area: int = DEFAULT_MIN_AREA,
                   roi: Optional[Roi] = None) -> List[ComponentStats]:
    """면적이 min_area 이상이고 (roi가 있으면) 중심이 roi 안인 성분만 남김"""
    if min_area < 1:
        raise DomainError(f"min_area는 1 이상이어야 합니다: {min_area}")
    kept = []
    for comp in components:
        if comp.area < min_area:
            continue
        if roi is not None:
            x0, y0, x1, y1 = roi
            if not (x0 <= comp.centroid_x <= x1 and y0 <= comp.centroid_y <= y1):
                continue
        kept.append(comp)
    return kept


def barycentre(components: Sequence[ComponentStats]) -> Optional[Tuple[float, float, int]]:
    """
    면적 가중 중심 = 남은 전경 픽셀 좌표 평균

    Returns:
    --------
    tuple 또는 None
        (x, y, 총 면적), 성분이 없으면 None (검출 없음)
    """
    if not components:
        return None
    total = sum(c.area for c in components)
    # 픽셀 좌표 합은 정수
    sum_x = sum(round(c.area * c.centroid_x) for c in components)
    sum_y = sum(round(c.area * c.centroid_y) for c in components)
    return sum_x / total, sum_y / total, total


def detect_in_frame(frame: Frame, transform_to_panorama: AffineTransform, panorama: Panorama,
                    filtered_panorama_mask: BinaryMask, th: HsvThresholds,
                    min_area: int = DEFAULT_MIN_AREA, roi: Optional[Roi] = None,
                    dilation_px: int = DEFAULT_DILATION_PX,
                    connectivity: int = DEFAULT_CONNECTIVITY) -> Tuple[BarycentreSample, BinaryMask, WarpedFrame]:
    """
    프레임 하나의 검출 전 과정

    Returns:
    --------
    tuple
        (표본, 차분 후 전경 마스크, 파노라마 좌표 프레임)
    """
    warped = warp_frame(frame, transform_to_panorama, panorama.bounds)
    ignore = panorama.uncovered | ~warped.valid
    raw = apply_threshold(warped, th, ignore=ignore)
    foreground = mask_subtract(raw, filtered_panorama_mask, dilation_px)
    objects = filter_objects(connected_components(foreground, connectivity), min_area, roi)
    result = barycentre(objects)

    if result is None:
        sample = BarycentreSample(frame_index=frame.index, t=frame.timestamp_s, valid=False)
    else:
        x, y, area = result
        sample = BarycentreSample(frame_index=frame.index, t=frame.timestamp_s,
                                  x=x, y=y, area=area, valid=True)
    return sample, foreground, warped


def locate_barycentre(frame: Frame, transform_to_panorama: AffineTransform, panorama: Panorama,
                      filtered_panorama_mask: BinaryMask, th: HsvThresholds,
                      min_area: int = DEFAULT_MIN_AREA, roi: Optional[Roi] = None,
                      dilation_px: int = DEFAULT_DILATION_PX,
                      connectivity: int = DEFAULT_CONNECTIVITY) -> BarycentreSample:
    """
    프레임 → 파노라마 좌표 무게중심

    검출이 없으면 valid=False 표본을 돌려줍니다 (오류 아님).
    """
    sample, _, _ = detect_in_frame(frame, transform_to_panorama, panorama, filtered_panorama_mask,
                                   th, min_area, roi, dilation_px, connectivity)
    return sample


def annotate_barycentre(raster: np.ndarray, x: float, y: float, half_size: int = MARKER_HALF_SIZE,
                        colour: Tuple[int, int, int] = MARKER_COLOUR) -> np.ndarray:
    """무게중심 위치에 채운 정사각형 표시 (기본 빨강)"""
    return draw_square(raster, x, y, half_size, colour=colour, filled=True)
