#!/usr/bin/env python3
"""
파이프라인 설정 모델
흐름도(프레임 → 모자이크 → 무게중심 → 궤적)의 모든 조정값을 담습니다.
"""
import os
from pathlib import Path
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.config import (
    DEFAULT_COMPOSITE_MODE, DEFAULT_CONNECTIVITY, DEFAULT_DILATION_PX, DEFAULT_HSV,
    DEFAULT_INLIER_TOL_PX, DEFAULT_MATCH_RATIO, DEFAULT_MAX_GAP, DEFAULT_MAX_KEYPOINTS,
    DEFAULT_MIN_AREA, DEFAULT_MIN_DISTANCE_PX, DEFAULT_PATCH_SIZE, DEFAULT_RANSAC_ITERATIONS,
    DEFAULT_RANSAC_SEED, DEFAULT_SMOOTHING_WINDOW, DEFAULT_TARGET_FPS,
)
from .segmentation import HsvThresholds


class RansacConfig(BaseModel):
    """RANSAC 설정"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    iterations: int = Field(DEFAULT_RANSAC_ITERATIONS, ge=1, description="반복 횟수")
    inlier_tol_px: float = Field(DEFAULT_INLIER_TOL_PX, gt=0, description="인라이어 허용 오차 (픽셀)")
    seed: int = Field(DEFAULT_RANSAC_SEED, description="난수 시드")
    refine: bool = Field(True, description="RANSAC 결과를 밝기 기반으로 보정")


class FeatureConfig(BaseModel):
    """특징점 검출 / 매칭 설정"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_keypoints: int = Field(DEFAULT_MAX_KEYPOINTS, ge=3, description="프레임당 최대 특징점 수")
    min_distance_px: int = Field(DEFAULT_MIN_DISTANCE_PX, ge=1, description="비최대 억제 반경")
    patch_size: int = Field(DEFAULT_PATCH_SIZE, ge=3, description="기술자 패치 크기 (홀수)")
    match_ratio: float = Field(DEFAULT_MATCH_RATIO, gt=0, le=1, description="비율 검사 임계값")

    @field_validator("patch_size")
    @classmethod
    def validate_patch_size(cls, v):
        if v % 2 == 0:
            raise ValueError("patch_size는 홀수여야 합니다")
        return v


class PipelineConfig(BaseModel):
    """파이프라인 전체 설정"""
    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        json_schema_extra={
            "example": {
                "manifest": "frames/manifest.json",
                "target_fps": 25,
                "hsv": {"h": [340, 50], "s": [0.15, 0.9], "v": [0.2, 1.0]},
                "min_area": 50,
                "ransac": {"iterations": 500, "inlier_tol_px": 2.0, "seed": 0},
                "composite_mode": "median",
                "smoothing_window": 5,
                "max_gap": 5,
                "output_dir": "output"
            }
        },
    )

    manifest: Optional[Path] = Field(None, description="프레임 매니페스트 경로")
    target_fps: float = Field(DEFAULT_TARGET_FPS, gt=0, description="분석 프레임률 (Hz)")
    hsv: HsvThresholds = Field(default_factory=lambda: HsvThresholds.model_validate(DEFAULT_HSV))
    min_area: int = Field(DEFAULT_MIN_AREA, ge=1, description="최소 객체 면적 (픽셀)")
    roi: Optional[Tuple[float, float, float, float]] = Field(None, description="관심 영역 (min_x, min_y, max_x, max_y)")
    ransac: RansacConfig = Field(default_factory=RansacConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    composite_mode: Literal["median", "mean"] = Field(DEFAULT_COMPOSITE_MODE, description="합성 방식")
    smoothing_window: int = Field(DEFAULT_SMOOTHING_WINDOW, ge=1, description="이동 평균 창 (홀수)")
    max_gap: int = Field(DEFAULT_MAX_GAP, ge=0, description="보간 가능한 최대 공백 (프레임)")
    dilation_px: int = Field(DEFAULT_DILATION_PX, ge=0, description="배경 마스크 팽창 (픽셀)")
    connectivity: Literal[4, 8] = Field(DEFAULT_CONNECTIVITY, description="연결성")
    output_dir: Path = Field(Path("output"), description="산출물 디렉토리")
    tolerate_registration_failures: bool = Field(False, description="정합 실패 시 항등 변환으로 대체")
    debug: bool = Field(False, description="프레임별 디버그 산출물 기록")
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1, description="작업자 수")

    @field_validator("smoothing_window")
    @classmethod
    def validate_window(cls, v):
        """중심 이동 평균은 홀수 창만 허용"""
        if v % 2 == 0:
            raise ValueError("smoothing_window는 홀수여야 합니다")
        return v

    @field_validator("roi")
    @classmethod
    def validate_roi(cls, v):
        if v is not None and (v[2] < v[0] or v[3] < v[1]):
            raise ValueError("roi는 (min_x, min_y, max_x, max_y) 순서여야 합니다")
        return v
