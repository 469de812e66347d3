#!/usr/bin/env python3
"""
분할 관련 데이터 모델
HSV 임계값, 이진 마스크, 연결 성분, 무게중심 표본을 정의합니다.
"""
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class HsvThresholds(BaseModel):
    """
    채널별 이중 임계값 (HSV)

    h_lo > h_hi 이면 색상 구간이 0°를 지나 감기는 구간입니다.
    설정 파일에서는 {"h": [lo, hi], "s": [lo, hi], "v": [lo, hi]} 형식도 허용합니다.
    """
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {"h": [340, 50], "s": [0.15, 0.9], "v": [0.2, 1.0]}
        },
    )

    h_lo: float = Field(..., ge=0, le=360, description="색상 하한 (도)")
    h_hi: float = Field(..., ge=0, le=360, description="색상 상한 (도)")
    s_lo: float = Field(..., ge=0, le=1, description="채도 하한")
    s_hi: float = Field(..., ge=0, le=1, description="채도 상한")
    v_lo: float = Field(..., ge=0, le=1, description="명도 하한")
    v_hi: float = Field(..., ge=0, le=1, description="명도 상한")

    @model_validator(mode="before")
    @classmethod
    def expand_pairs(cls, data):
        """{"h": [lo, hi], ...} 형식을 개별 필드로 펼침"""
        if isinstance(data, dict) and any(k in data for k in ("h", "s", "v")):
            expanded = {k: v for k, v in data.items() if k not in ("h", "s", "v")}
            for channel in ("h", "s", "v"):
                pair = data.get(channel)
                if pair is None:
                    continue
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    raise ValueError(f"'{channel}' 는 [lo, hi] 쌍이어야 합니다")
                expanded[f"{channel}_lo"], expanded[f"{channel}_hi"] = pair
            return expanded
        return data

    @model_validator(mode="after")
    def validate_order(self):
        if self.s_lo > self.s_hi:
            raise ValueError("s_lo는 s_hi 이하여야 합니다")
        if self.v_lo > self.v_hi:
            raise ValueError("v_lo는 v_hi 이하여야 합니다")
        return self

    @property
    def hue_wraps(self) -> bool:
        return self.h_lo > self.h_hi

    def to_pairs(self) -> dict:
        """설정 파일 형식으로 변환"""
        return {"h": [self.h_lo, self.h_hi], "s": [self.s_lo, self.s_hi], "v": [self.v_lo, self.v_hi]}


class BinaryMask(BaseModel):
    """픽셀당 1비트 마스크"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bits: np.ndarray = Field(..., description="H×W bool 배열")

    @field_validator("bits", mode="before")
    @classmethod
    def validate_bits(cls, v):
        arr = np.asarray(v).astype(bool, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"2차원 마스크가 필요합니다: {arr.shape}")
        arr.setflags(write=False)
        return arr

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(bits=np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))


class ComponentStats(BaseModel):
    """연결 성분 통계"""
    model_config = ConfigDict(frozen=True)

    label: int = Field(..., ge=1, description="성분 번호 (1부터)")
    area: int = Field(..., ge=1, description="픽셀 수")
    centroid_x: float = Field(..., description="픽셀 좌표 평균 (열)")
    centroid_y: float = Field(..., description="픽셀 좌표 평균 (행)")
    bbox: Tuple[int, int, int, int] = Field(..., description="(min_x, min_y, max_x, max_y), 경계 포함")


class BarycentreSample(BaseModel):
    """프레임 하나의 무게중심 측정값 (파노라마 좌표)"""
    model_config = ConfigDict(frozen=True)

    frame_index: int = Field(..., ge=0, description="프레임 인덱스")
    t: float = Field(..., description="시각 (초)")
    x: Optional[float] = Field(None, description="파노라마 열 좌표")
    y: Optional[float] = Field(None, description="파노라마 행 좌표")
    area: int = Field(0, ge=0, description="남은 전경 픽셀 수")
    valid: bool = Field(False, description="검출 성공 여부")
    interpolated: bool = Field(False, description="공백 보간으로 채워진 값 여부")

    @model_validator(mode="after")
    def validate_position(self):
        if (self.valid or self.interpolated) and (self.x is None or self.y is None):
            raise ValueError("유효/보간 표본은 좌표가 필요합니다")
        return self
