#!/usr/bin/env python3
"""
프레임 입출력 모듈
매니페스트를 읽고, 분석 프레임률을 정하고, 프레임을 디코딩합니다.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from ..core.config import (
    DEFAULT_N_FIGURES, DEFAULT_NYQUIST_FACTOR, DEFAULT_SAFETY_RATE_HZ, setup_logging,
)
from ..core.errors import ConfigurationError, DomainError, FrameFormatError, FrameReadError
from ..models.frame import Frame, FrameManifest, SamplingPlan
from ..utils.pnm import decode_image

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)


def compute_dive_duration(drop_height_m: float, g: float) -> float:
    """
    초기 속도 없는 자유낙하 시간 sqrt(2·Δx/g)

    Parameters:
    -----------
    drop_height_m : float
        낙하 높이 (m)
    g : float
        중력 가속도 (m/s²)

    Returns:
    --------
    float
        낙하 시간 (초)
    """
    if not drop_height_m > 0:
        raise DomainError(f"낙하 높이는 양수여야 합니다: {drop_height_m}")
    if not g > 0:
        raise DomainError(f"중력 가속도는 양수여야 합니다: {g}")
    return math.sqrt(2.0 * drop_height_m / g)


def figure_duration(dive_duration_s: float, n_figures: int = DEFAULT_N_FIGURES) -> float:
    """동작 하나에 주어지는 시간"""
    if n_figures < 1:
        raise DomainError(f"동작 수는 1 이상이어야 합니다: {n_figures}")
    if not dive_duration_s > 0:
        raise DomainError(f"다이빙 시간은 양수여야 합니다: {dive_duration_s}")
    return dive_duration_s / n_figures


def required_rate(t_fig_s: float, nyquist_factor: float = DEFAULT_NYQUIST_FACTOR,
                  safety_rate_hz: float = DEFAULT_SAFETY_RATE_HZ) -> float:
    """
    필요한 분석 프레임률

    동작 주파수 1/t_fig 에 나이퀴스트 배수를 곱하고, 안전 여유 프레임률과 비교해
    더 큰 값을 돌려줍니다.
    """
    if not t_fig_s > 0:
        raise DomainError(f"동작 시간은 양수여야 합니다: {t_fig_s}")
    if nyquist_factor < 1:
        raise DomainError(f"나이퀴스트 배수는 1 이상이어야 합니다: {nyquist_factor}")
    return max(nyquist_factor * (1.0 / t_fig_s), safety_rate_hz)


def recommended_rate(manifest: FrameManifest) -> float:
    """매니페스트의 낙하 높이와 중력으로 권장 프레임률 계산"""
    duration = compute_dive_duration(manifest.drop_height_m, manifest.g)
    return required_rate(figure_duration(duration))


def plan_sampling(source_fps: float, target_fps: float, n_source_frames: int) -> SamplingPlan:
    """
    인덱스 반올림 방식의 데시메이션 계획

    Parameters:
    -----------
    source_fps : float
        원본 프레임률
    target_fps : float
        분석 프레임률 (source_fps 이하)
    n_source_frames : int
        원본 프레임 수

    Returns:
    --------
    SamplingPlan
        selected_indices[k] = round(k·source_fps/target_fps), 끝에서 잘리고 중복 제거
    """
    if not target_fps > 0:
        raise ConfigurationError(f"target_fps는 양수여야 합니다: {target_fps}")
    if target_fps > source_fps:
        raise ConfigurationError(
            f"업샘플링은 지원하지 않습니다: target_fps {target_fps} > source_fps {source_fps}")
    if n_source_frames < 1:
        raise ConfigurationError(f"원본 프레임이 없습니다: {n_source_frames}")

    ratio = source_fps / target_fps
    n_samples = max(1, math.ceil(n_source_frames * target_fps / source_fps - 1e-9))
    indices: List[int] = []
    for k in range(n_samples):
        index = min(int(math.floor(k * source_fps / target_fps + 0.5)), n_source_frames - 1)
        if not indices or index > indices[-1]:
            indices.append(index)

    logger.debug(f"샘플링 계획: {source_fps}Hz → {target_fps}Hz (비율 {ratio:.4f}), {len(indices)}프레임")
    return SamplingPlan(source_fps=source_fps, target_fps=target_fps, selected_indices=indices)


def load_manifest(path: Union[str, Path]) -> FrameManifest:
    """
    매니페스트 JSON 로드

    프레임 경로는 매니페스트 파일 위치 기준으로 해석합니다.
    """
    manifest_path = Path(path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise FrameReadError(f"매니페스트를 찾을 수 없습니다: {manifest_path}", path=manifest_path) from e
    except OSError as e:
        raise FrameReadError(f"매니페스트를 읽을 수 없습니다: {manifest_path} ({e})", path=manifest_path) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"매니페스트 JSON 오류 ({manifest_path}): {e}") from e
    return manifest_from_dict(data, manifest_path.resolve().parent)


def manifest_from_dict(data: Dict[str, Any], base_dir: Path) -> FrameManifest:
    if not isinstance(data, dict):
        raise ConfigurationError("매니페스트 최상위는 객체여야 합니다")
    frames = data.get("frames")
    if not isinstance(frames, list):
        raise ConfigurationError("매니페스트에 'frames' 목록이 필요합니다")
    fields: Dict[str, Any] = {
        "source_fps": data.get("source_fps"),
        "frame_paths": [str((base_dir / p).resolve()) if not Path(p).is_absolute() else p
                        for p in frames],
    }
    for key, field in (("drop_height_m", "drop_height_m"), ("water_line_y", "water_line_y_global"),
                       ("g", "g"), ("sampling", "sampling")):
        if data.get(key) is not None:
            fields[field] = data[key]
    try:
        return FrameManifest.model_validate(fields)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigurationError(f"매니페스트 검증 실패 [{field}]: {first.get('msg')}") from e


def manifest_to_dict(manifest: FrameManifest) -> Dict[str, Any]:
    """매니페스트 JSON 형식으로 변환 (sample 단계 출력)"""
    data: Dict[str, Any] = {
        "source_fps": manifest.source_fps,
        "frames": [str(p) for p in manifest.frame_paths],
        "drop_height_m": manifest.drop_height_m,
        "water_line_y": manifest.water_line_y_global,
        "g": manifest.g,
    }
    if manifest.sampling is not None:
        data["sampling"] = {
            "source_fps": manifest.sampling.source_fps,
            "target_fps": manifest.sampling.target_fps,
            "selected_indices": list(manifest.sampling.selected_indices),
        }
    return data


def plan_from_manifest(manifest: FrameManifest, target_fps: float) -> SamplingPlan:
    """sample 단계가 기록한 계획이 있으면 그대로, 없으면 새로 계획"""
    if manifest.sampling is not None:
        return manifest.sampling
    return plan_sampling(manifest.source_fps, target_fps, len(manifest.frame_paths))


def _decode(path: Path) -> np.ndarray:
    if not Path(path).is_file():
        raise FrameReadError(f"프레임 파일을 찾을 수 없습니다: {path}", path=path)
    return decode_image(path)


def load_frames(manifest: FrameManifest, plan: SamplingPlan, threads: Optional[int] = None) -> List[Frame]:
    """
    계획에 따라 프레임 디코딩

    Parameters:
    -----------
    manifest : FrameManifest
        프레임 경로 목록
    plan : SamplingPlan
        선택할 원본 프레임 번호
    threads : int, optional
        병렬 디코딩 작업자 수

    Returns:
    --------
    List[Frame]
        인덱스 순서의 프레임 목록
    """
    n_paths = len(manifest.frame_paths)
    if plan.selected_indices[-1] >= n_paths:
        raise ConfigurationError(
            f"샘플링 계획이 매니페스트 범위를 벗어납니다: {plan.selected_indices[-1]} ≥ {n_paths}")

    paths = [Path(manifest.frame_paths[i]) for i in plan.selected_indices]
    workers = max(1, threads or 1)
    # map은 입력 순서대로 결과를 돌려줌
    with ThreadPoolExecutor(max_workers=workers) as executor:
        rasters = list(executor.map(_decode, paths))

    shape = rasters[0].shape
    for path, raster in zip(paths, rasters):
        if raster.shape != shape:
            raise FrameFormatError(
                f"프레임 크기 불일치: {path} {raster.shape[1]}×{raster.shape[0]} "
                f"(기대값 {shape[1]}×{shape[0]})", path=path)

    t0 = plan.selected_indices[0] / manifest.source_fps
    frames = [
        Frame(index=k, timestamp_s=source_index / manifest.source_fps - t0,
              pixels=raster, source_index=source_index)
        for k, (source_index, raster) in enumerate(zip(plan.selected_indices, rasters))
    ]
    logger.info(f"프레임 {len(frames)}장 로드 완료 ({shape[1]}×{shape[0]})")
    return frames
