#!/usr/bin/env python3
"""
기하 관련 데이터 모델
특징점, 기술자, 매칭, 아핀 변환, 파노라마 경계를 정의합니다.
"""
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# 가역성 판정 기준
MIN_ABS_DETERMINANT = 1e-8


class Keypoint(BaseModel):
    """Harris 코너 특징점"""
    model_config = ConfigDict(frozen=True)

    x: float = Field(..., ge=0, description="열 좌표 (서브픽셀 허용)")
    y: float = Field(..., ge=0, description="행 좌표 (서브픽셀 허용)")
    score: float = Field(..., gt=0, description="코너 응답 세기")


class Descriptor(BaseModel):
    """정규화된 밝기 패치 기술자"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray = Field(..., description="patch_size² 길이의 정규화 벡터")
    flat: bool = Field(False, description="분산이 0인 패치 여부 (값은 전부 0)")

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v):
        """1차원 실수 벡터로 변환"""
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("기술자는 1차원 벡터여야 합니다")
        arr.setflags(write=False)
        return arr


class Match(BaseModel):
    """두 특징점 목록 간 매칭"""
    model_config = ConfigDict(frozen=True)

    index_a: int = Field(..., ge=0, description="첫 번째 목록의 인덱스")
    index_b: int = Field(..., ge=0, description="두 번째 목록의 인덱스")
    distance: float = Field(..., ge=0, description="기술자 유클리드 거리")


class AffineTransform(BaseModel):
    """
    2×3 평면 아핀 변환
    (x, y) → (a·x + b·y + tx, c·x + d·y + ty)
    """
    model_config = ConfigDict(frozen=True)

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(tx=float(tx), ty=float(ty))

    @classmethod
    def from_matrix(cls, matrix) -> "AffineTransform":
        """[[a, b, tx], [c, d, ty]] 형식에서 생성"""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"2×3 행렬이 필요합니다: {m.shape}")
        return cls(a=m[0, 0], b=m[0, 1], tx=m[0, 2], c=m[1, 0], d=m[1, 1], ty=m[1, 2])

    def to_matrix(self) -> List[List[float]]:
        return [[self.a, self.b, self.tx], [self.c, self.d, self.ty]]

    def as_array(self) -> np.ndarray:
        return np.array(self.to_matrix(), dtype=np.float64)

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def is_invertible(self) -> bool:
        return abs(self.determinant) > MIN_ABS_DETERMINANT

    def apply(self, points) -> np.ndarray:
        """N×2 점 배열에 변환 적용"""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([self.a * x + self.b * y + self.tx,
                         self.c * x + self.d * y + self.ty], axis=1)

    def max_abs_difference(self, other: "AffineTransform") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array())))


class GlobalBounds(BaseModel):
    """파노라마 전역 좌표 범위 (정수로 바깥쪽 반올림)"""
    model_config = ConfigDict(frozen=True)

    min_x: int
    min_y: int
    max_x: int
    max_y: int

    @model_validator(mode="after")
    def validate_extent(self):
        if self.max_x <= self.min_x or self.max_y <= self.min_y:
            raise ValueError("파노라마 범위가 비어 있습니다")
        return self

    @property
    def width(self) -> int:
        return self.max_x - self.min_x

    @property
    def height(self) -> int:
        return self.max_y - self.min_y

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.min_x, self.min_y, self.max_x, self.max_y)
