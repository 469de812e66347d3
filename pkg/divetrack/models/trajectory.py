#!/usr/bin/env python3
"""
궤적 관련 데이터 모델
"""
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .segmentation import BarycentreSample


class Trajectory(BaseModel):
    """무게중심 시계열 (원시 + 평활)"""
    model_config = ConfigDict(frozen=True)

    samples: List[BarycentreSample] = Field(default_factory=list, description="모든 원시 표본 (시간 순)")
    smoothed_x: Optional[List[Optional[float]]] = Field(None, description="평활된 열 좌표 (공백 없는 구간 밖은 None)")
    smoothed_y: Optional[List[Optional[float]]] = Field(None, description="평활된 행 좌표 (공백 없는 구간 밖은 None)")

    @model_validator(mode="after")
    def validate_alignment(self):
        times = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("표본 시각은 엄격하게 증가해야 합니다")
        for name in ("smoothed_x", "smoothed_y"):
            values = getattr(self, name)
            if values is not None and len(values) != len(self.samples):
                raise ValueError(f"{name} 길이가 표본 수와 다릅니다")
        return self

    @property
    def is_smoothed(self) -> bool:
        return self.smoothed_x is not None and self.smoothed_y is not None

    def series_indices(self) -> List[int]:
        """평활값이 있는 (공백 없는 구간의) 표본 인덱스"""
        if not self.is_smoothed:
            return []
        return [i for i, v in enumerate(self.smoothed_y) if v is not None]


class FreeFallFit(BaseModel):
    """
    자유낙하 2차 적합 결과 (y는 위쪽이 양수)
    y(t) = y0 + v0·(t − t_start) − ½·g_px·(t − t_start)²
    """
    model_config = ConfigDict(frozen=True)

    y0: float = Field(..., description="구간 시작 높이 (픽셀, 위쪽 양수)")
    v0: float = Field(..., description="구간 시작 수직 속도 (px/s)")
    g_px: float = Field(..., description="픽셀 단위 중력 가속도 (px/s²)")
    rms_residual: float = Field(..., ge=0, description="잔차 RMS (픽셀)")
    t_apex: Optional[float] = Field(None, description="정점 시각 (클립 시각, 초)")
    segment: Tuple[float, float] = Field(..., description="적합 구간 (t_start, t_end)")
    n_samples: int = Field(..., ge=0, description="적합에 사용된 표본 수")
    warning: Optional[str] = Field(None, description="모델 불일치 경고")

    @property
    def is_physical(self) -> bool:
        return self.warning is None and self.g_px > 0


class DiveMetrics(BaseModel):
    """다이빙 성능 지표"""
    model_config = ConfigDict(frozen=True)

    max_height_px: float = Field(..., description="도약 시점 대비 최대 무게중심 높이 (픽셀)")
    max_height_m: Optional[float] = Field(None, description="최대 높이 (m, 보정된 경우)")
    t_apex: float = Field(..., description="정점 시각 (초)")
    entry_x_px: Optional[float] = Field(None, description="입수 시점 무게중심 열 좌표")
    entry_t: Optional[float] = Field(None, description="입수 시각 (초)")
    lateral_rms_px: float = Field(..., ge=0, description="수평 편차 RMS (픽셀)")
    px_per_m: Optional[float] = Field(None, description="픽셀/미터 배율")
