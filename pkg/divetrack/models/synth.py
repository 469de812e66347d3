#!/usr/bin/env python3
"""
합성 시퀀스 모델
정답(ground truth)이 있는 검증용 프레임 시퀀스의 명세를 정의합니다.
"""
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .geometry import AffineTransform


class BallisticPath(BaseModel):
    """
    월드 좌표의 탄도 궤적

    수직 성분은 위쪽이 양수인 높이로 정의됩니다 (vy0 > 0 이면 상승).
    래스터 행 좌표는 y0 − (vy0·t − ½·g_px·t²) 입니다.
    """
    model_config = ConfigDict(frozen=True)

    x0: float
    y0: float = Field(..., description="t=0 의 월드 행 좌표")
    vx0: float = Field(0.0, description="수평 속도 (px/s)")
    vy0: float = Field(0.0, description="수직 상승 속도 (px/s)")
    g_px: float = Field(..., ge=0, description="중력 (px/s²)")

    def position(self, t: float) -> Tuple[float, float]:
        """시각 t의 월드 래스터 좌표 (x, y)"""
        height = self.vy0 * t - 0.5 * self.g_px * t * t
        return (self.x0 + self.vx0 * t, self.y0 - height)

    @property
    def t_apex(self) -> Optional[float]:
        if self.g_px <= 0:
            return None
        return self.vy0 / self.g_px

    @property
    def apex_height(self) -> Optional[float]:
        if self.g_px <= 0:
            return None
        return self.vy0 * self.vy0 / (2.0 * self.g_px)


class BlobSpec(BaseModel):
    """다이버를 대신하는 앤티앨리어싱 원판"""
    model_config = ConfigDict(frozen=True)

    colour_hsv: Tuple[float, float, float] = Field((0.0, 0.85, 0.85), description="(도, 0-1, 0-1)")
    radius_px: float = Field(12.0, ge=1, description="반지름 (픽셀)")
    trajectory: BallisticPath


class Distractor(BaseModel):
    """배경에 고정된 색 사각형 (색 필터를 통과하는 배경 요소)"""
    model_config = ConfigDict(frozen=True)

    x0: float
    y0: float
    x1: float
    y1: float
    colour_rgb: Tuple[int, int, int] = (200, 60, 40)

    @model_validator(mode="after")
    def validate_extent(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("사각형 범위가 비어 있습니다")
        return self


class BackgroundSpec(BaseModel):
    """값 노이즈(value noise) 배경 텍스처"""
    model_config = ConfigDict(frozen=True)

    seed: int = 0
    feature_scale: float = Field(6.0, gt=1, description="격자 간격 (픽셀). 작을수록 코너가 촘촘함")
    world_size: Tuple[int, int] = Field((800, 800), description="월드 크기 (w, h)")
    tint: Tuple[float, float, float] = Field((0.45, 0.85, 1.0), description="채널별 배율")
    low: float = Field(20.0, ge=0, le=255)
    high: float = Field(235.0, ge=0, le=255)
    distractors: List[Distractor] = Field(default_factory=list)


class SynthSpec(BaseModel):
    """합성 시퀀스 명세"""
    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    seed: int = 0
    frame_size: Tuple[int, int] = Field((640, 480), description="프레임 크기 (w, h)")
    n_frames: int = Field(..., ge=1)
    fps: float = Field(25.0, gt=0)
    camera_path: List[AffineTransform] = Field(default_factory=list, description="프레임별 월드→프레임 변환 (비어 있으면 항등)")
    background: BackgroundSpec = Field(default_factory=BackgroundSpec)
    blob: Optional[BlobSpec] = None
    noise_sigma: float = Field(2.0, ge=0, description="가우시안 픽셀 노이즈 (밝기 단위)")

    @field_validator("frame_size")
    @classmethod
    def validate_frame_size(cls, v):
        if v[0] < 1 or v[1] < 1:
            raise ValueError("프레임 크기는 1 이상이어야 합니다")
        return v

    @model_validator(mode="after")
    def validate_camera(self):
        if self.camera_path and len(self.camera_path) != self.n_frames:
            raise ValueError("camera_path 길이는 n_frames와 같아야 합니다")
        for k, t in enumerate(self.camera_path):
            if not t.is_invertible:
                raise ValueError(f"프레임 {k}의 카메라 변환이 가역이 아닙니다")
        return self

    def camera(self, k: int) -> AffineTransform:
        return self.camera_path[k] if self.camera_path else AffineTransform.identity()

    def time(self, k: int) -> float:
        return k / self.fps


class GroundTruth(BaseModel):
    """합성 시퀀스의 정답"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    transforms: List[AffineTransform] = Field(..., description="프레임별 월드→프레임 변환")
    centres: List[Optional[Tuple[float, float]]] = Field(..., description="프레임별 원판 중심 (월드)")
    times: List[float] = Field(..., description="프레임 시각 (초)")
    g_px: Optional[float] = Field(None, description="실제 중력 (px/s²)")
    background: np.ndarray = Field(..., description="월드 배경 래스터 (H×W×3 uint8)")

    @model_validator(mode="after")
    def validate_lengths(self):
        if not (len(self.transforms) == len(self.centres) == len(self.times)):
            raise ValueError("정답 목록 길이가 서로 다릅니다")
        return self
