#!/usr/bin/env python3
"""
프레임 관련 데이터 모델
Pydantic을 사용한 프레임, 매니페스트, 샘플링 계획 모델 정의
"""
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.config import DEFAULT_DROP_HEIGHT_M, DEFAULT_GRAVITY


class Frame(BaseModel):
    """샘플링된 한 장의 RGB 프레임"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    index: int = Field(..., ge=0, description="샘플링된 시퀀스에서의 위치")
    timestamp_s: float = Field(..., description="첫 샘플 프레임 기준 시각 (초)")
    pixels: np.ndarray = Field(..., description="H×W×3 uint8 RGB 래스터 (행 우선)")
    source_index: Optional[int] = Field(None, description="원본 영상에서의 프레임 번호")

    @field_validator("pixels", mode="before")
    @classmethod
    def validate_pixels(cls, v):
        """H×W×3 uint8 래스터 검증 (읽기 전용으로 고정)"""
        arr = np.asarray(v)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"H×W×3 래스터가 필요합니다: {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("프레임 크기는 1×1 이상이어야 합니다")
        if arr.dtype != np.uint8:
            raise ValueError(f"채널당 8비트가 필요합니다: {arr.dtype}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        return arr

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


class SamplingPlan(BaseModel):
    """원본 프레임률에서 분석 프레임률로의 데시메이션 계획"""
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "source_fps": 50,
                "target_fps": 25,
                "selected_indices": [0, 2, 4, 6]
            }
        },
    )

    source_fps: float = Field(..., gt=0, description="원본 프레임률 (Hz)")
    target_fps: float = Field(..., gt=0, description="분석 프레임률 (Hz)")
    selected_indices: List[int] = Field(..., description="선택된 원본 프레임 번호 (증가 순)")

    @model_validator(mode="after")
    def validate_plan(self):
        if self.target_fps > self.source_fps:
            raise ValueError("target_fps는 source_fps 이하여야 합니다 (업샘플링 불가)")
        idx = self.selected_indices
        if not idx:
            raise ValueError("선택된 프레임이 없습니다")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("selected_indices는 엄격하게 증가해야 합니다")
        if idx[0] < 0:
            raise ValueError("프레임 번호는 0 이상이어야 합니다")
        return self

    def timestamps(self) -> List[float]:
        """선택된 프레임의 시각 (첫 프레임 기준)"""
        t0 = self.selected_indices[0] / self.source_fps
        return [i / self.source_fps - t0 for i in self.selected_indices]


class FrameManifest(BaseModel):
    """프레임 목록 매니페스트"""
    model_config = ConfigDict(frozen=True)

    source_fps: float = Field(..., gt=0, description="원본 프레임률 (Hz)")
    frame_paths: List[Path] = Field(..., min_length=1, description="프레임 이미지 경로 (순서대로)")
    drop_height_m: float = Field(DEFAULT_DROP_HEIGHT_M, gt=0, description="플랫폼 높이 (m)")
    water_line_y_global: Optional[float] = Field(None, description="0번 프레임 좌표의 수면 행 (픽셀)")
    g: float = Field(DEFAULT_GRAVITY, gt=0, description="중력 가속도 (m/s²)")
    sampling: Optional[SamplingPlan] = Field(None, description="sample 단계가 기록한 샘플링 계획")
