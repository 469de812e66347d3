#!/usr/bin/env python3
"""
파노라마 데이터 모델
"""
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .geometry import AffineTransform, GlobalBounds


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class WarpedFrame(BaseModel):
    """
    파노라마 좌표로 변환된 프레임

    파노라마 전체 크기이거나, 프레임이 덮는 영역만 잘라낸 조각입니다.
    조각의 image[0, 0]은 파노라마 픽셀 origin=(x, y)에 놓입니다.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    image: np.ndarray = Field(..., description="H×W×3 uint8")
    valid: np.ndarray = Field(..., description="H×W bool, 원본 프레임이 덮는 픽셀")
    origin: Tuple[int, int] = Field((0, 0), description="image[0, 0]의 파노라마 픽셀 좌표 (x, y)")

    @field_validator("image")
    @classmethod
    def validate_image(cls, v):
        if v.ndim != 3 or v.shape[2] != 3 or v.dtype != np.uint8:
            raise ValueError(f"H×W×3 uint8 래스터가 필요합니다: {v.shape} {v.dtype}")
        return _readonly(v)

    @field_validator("valid")
    @classmethod
    def validate_valid(cls, v):
        if v.ndim != 2 or v.dtype != bool:
            raise ValueError(f"H×W bool 마스크가 필요합니다: {v.shape} {v.dtype}")
        return _readonly(v)

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.image.shape[:2] != self.valid.shape:
            raise ValueError("이미지와 유효 마스크 크기가 다릅니다")
        if self.origin[0] < 0 or self.origin[1] < 0:
            raise ValueError(f"origin은 음수일 수 없습니다: {self.origin}")
        return self

    @property
    def rows(self) -> Tuple[int, int]:
        """파노라마 행 구간 [y0, y1)"""
        return self.origin[1], self.origin[1] + self.valid.shape[0]

    @property
    def cols(self) -> Tuple[int, int]:
        """파노라마 열 구간 [x0, x1)"""
        return self.origin[0], self.origin[0] + self.valid.shape[1]


class Panorama(BaseModel):
    """
    합성된 공통 배경

    coverage가 0인 픽셀은 채움색 (0, 0, 0) 입니다.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    image: np.ndarray = Field(..., description="H×W×3 uint8")
    bounds: GlobalBounds
    coverage: np.ndarray = Field(..., description="H×W 픽셀별 프레임 수")
    transforms: List[AffineTransform] = Field(default_factory=list,
                                              description="프레임별 파노라마 픽셀 좌표 변환")

    @model_validator(mode="after")
    def validate_shapes(self):
        expected = (self.bounds.height, self.bounds.width)
        if self.image.shape[:2] != expected or self.coverage.shape != expected:
            raise ValueError(f"파노라마 크기가 범위와 다릅니다: {self.image.shape[:2]} vs {expected}")
        _readonly(self.image)
        _readonly(self.coverage)
        return self

    @property
    def width(self) -> int:
        return self.bounds.width

    @property
    def height(self) -> int:
        return self.bounds.height

    @property
    def uncovered(self) -> np.ndarray:
        return self.coverage == 0
