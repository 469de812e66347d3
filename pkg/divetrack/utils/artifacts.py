#!/usr/bin/env python3
"""
산출물 입출력 유틸리티
임시 파일 + 이름 변경으로 원자적으로 기록하고, 이전 단계 산출물을 읽습니다.
"""
import os
import json
import tempfile
from pathlib import Path
from typing import Any, Union

import numpy as np

from ..core.config import setup_logging
from ..core.errors import ArtifactMissingError, ConfigurationError, FrameReadError
from .pnm import pnm_encoder

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

PathLike = Union[str, Path]


def _create_temp_file(directory: Path, suffix: str) -> Path:
    """
    대상 디렉토리 안에 임시 파일 생성 (같은 파일 시스템에서 이름 변경)
    """
    temp_file = tempfile.NamedTemporaryFile(
        suffix=suffix,
        prefix=".tmp_",
        dir=directory,
        delete=False
    )
    temp_file.close()
    return Path(temp_file.name)


def _cleanup_temp_file(file_path: Path):
    if file_path and file_path.exists():
        try:
            file_path.unlink()
            logger.debug(f"임시 파일 삭제: {file_path}")
        except OSError as e:
            logger.warning(f"임시 파일 삭제 실패: {file_path} - {e}")


def write_bytes_atomic(path: PathLike, data: bytes) -> Path:
    """
    바이트를 원자적으로 기록

    Parameters:
    -----------
    path : str 또는 Path
        최종 파일 경로
    data : bytes
        기록할 내용

    Returns:
    --------
    Path
        기록된 파일 경로
    """
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        temp_path = _create_temp_file(target.parent, target.suffix)
    except OSError as e:
        raise FrameReadError(f"출력 파일을 만들 수 없습니다: {target} ({e})", path=target) from e

    try:
        with open(temp_path, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, target)
    except OSError as e:
        _cleanup_temp_file(temp_path)
        raise FrameReadError(f"출력 파일 기록 실패: {target} ({e})", path=target) from e

    logger.debug(f"산출물 기록: {target} ({len(data)}바이트)")
    return target


def dumps_json(payload: Any) -> bytes:
    """결정적 JSON 직렬화 (키 순서 유지, 들여쓰기 2, 끝 줄바꿈)"""
    return (json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n").encode("utf-8")


def write_json_atomic(path: PathLike, payload: Any) -> Path:
    return write_bytes_atomic(path, dumps_json(payload))


def write_ppm_atomic(path: PathLike, pixels: np.ndarray) -> Path:
    return write_bytes_atomic(path, pnm_encoder.encode_ppm(pixels))


def write_pgm_atomic(path: PathLike, values: np.ndarray) -> Path:
    return write_bytes_atomic(path, pnm_encoder.encode_pgm(values))


def require_artifact(path: PathLike, stage: str = None) -> Path:
    """이전 단계 산출물이 있는지 확인"""
    target = Path(path)
    if not target.is_file():
        raise ArtifactMissingError(
            f"필요한 산출물이 없습니다: {target.name} ({target})", path=target, stage=stage)
    return target


def read_json_artifact(path: PathLike, stage: str = None) -> Any:
    target = require_artifact(path, stage)
    try:
        with open(target, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"JSON 형식 오류: {target} ({e})", stage=stage) from e


def draw_square(raster: np.ndarray, x: float, y: float, half_size: int,
                colour=(255, 0, 0), filled: bool = True) -> np.ndarray:
    """
    래스터 위에 정사각형 표식을 그림 (복사본 반환)

    Parameters:
    -----------
    raster : np.ndarray
        H×W×3 uint8 래스터
    x, y : float
        중심 좌표
    half_size : int
        한 변의 절반 (픽셀)
    colour : tuple
        RGB 색
    filled : bool
        채우기 여부 (False면 테두리만)
    """
    out = np.array(raster, dtype=np.uint8, copy=True)
    height, width = out.shape[:2]
    cx, cy = int(round(x)), int(round(y))
    x0, x1 = max(cx - half_size, 0), min(cx + half_size, width - 1)
    y0, y1 = max(cy - half_size, 0), min(cy + half_size, height - 1)
    if x0 > x1 or y0 > y1:
        return out
    if filled:
        out[y0:y1 + 1, x0:x1 + 1] = colour
    else:
        out[y0, x0:x1 + 1] = colour
        out[y1, x0:x1 + 1] = colour
        out[y0:y1 + 1, x0] = colour
        out[y0:y1 + 1, x1] = colour
    return out
