#!/usr/bin/env python3
"""
PNM 이미지 코덱 모듈
바이너리 PPM(P6) / PGM(P5) 인코딩과 디코딩을 제공합니다.
PNG는 Pillow가 설치된 경우에만 같은 인터페이스로 디코딩합니다.
"""
import importlib.util
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..core.config import setup_logging
from ..core.errors import FrameFormatError, FrameReadError

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

PathLike = Union[str, Path]


class PnmBase:
    """
    PNM 베이스 클래스
    인코더와 디코더의 공통 상수와 헤더 처리를 정의합니다.
    """

    MAGIC_PPM = b"P6"
    MAGIC_PGM = b"P5"
    PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
    WHITESPACE = b" \t\r\n\v\f"
    MAX_8BIT = 255
    MAX_16BIT = 65535

    def parse_header(self, data: bytes, source: str = "<bytes>") -> Tuple[bytes, int, int, int, int]:
        """
        PNM 헤더 분석

        Parameters:
        -----------
        data : bytes
            파일 전체 바이트
        source : str
            오류 메시지에 표시할 출처

        Returns:
        --------
        tuple
            (magic, width, height, maxval, raster_offset)
        """
        magic = data[:2]
        if magic not in (self.MAGIC_PPM, self.MAGIC_PGM):
            raise FrameFormatError(f"지원하지 않는 PNM 형식: {magic!r} ({source})", path=source)

        pos = 2
        fields = []
        while len(fields) < 3:
            # 공백과 주석 건너뛰기
            while pos < len(data) and data[pos] in self.WHITESPACE:
                pos += 1
            if pos < len(data) and data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
                continue
            start = pos
            while pos < len(data) and 48 <= data[pos] <= 57:
                pos += 1
            if start == pos:
                raise FrameFormatError(f"PNM 헤더 손상 ({source})", path=source)
            fields.append(int(data[start:pos]))

        # 헤더 끝에는 공백 한 바이트
        if pos >= len(data) or data[pos] not in self.WHITESPACE:
            raise FrameFormatError(f"PNM 헤더 종료 오류 ({source})", path=source)
        pos += 1

        width, height, maxval = fields
        if width < 1 or height < 1:
            raise FrameFormatError(f"잘못된 이미지 크기 {width}×{height} ({source})", path=source)
        if not 1 <= maxval <= self.MAX_16BIT:
            raise FrameFormatError(f"잘못된 maxval {maxval} ({source})", path=source)
        return magic, width, height, maxval, pos


class PnmDecoder(PnmBase):
    """PNM 디코더"""

    def decode_ppm(self, data: bytes, source: str = "<bytes>") -> np.ndarray:
        """P6 (maxval 255) → H×W×3 uint8"""
        magic, width, height, maxval, offset = self.parse_header(data, source)
        if magic != self.MAGIC_PPM:
            raise FrameFormatError(f"P6 형식이 아닙니다 ({source})", path=source)
        if maxval != self.MAX_8BIT:
            raise FrameFormatError(f"P6 maxval은 255여야 합니다: {maxval} ({source})", path=source)
        expected = width * height * 3
        raster = data[offset:offset + expected]
        if len(raster) != expected:
            raise FrameFormatError(
                f"래스터 길이 부족: {len(raster)}/{expected}바이트 ({source})", path=source)
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()

    def decode_pgm(self, data: bytes, source: str = "<bytes>") -> np.ndarray:
        """P5 → H×W (maxval ≤ 255 이면 uint8, 아니면 uint16)"""
        magic, width, height, maxval, offset = self.parse_header(data, source)
        if magic != self.MAGIC_PGM:
            raise FrameFormatError(f"P5 형식이 아닙니다 ({source})", path=source)
        dtype = np.dtype(np.uint8) if maxval <= self.MAX_8BIT else np.dtype(">u2")
        expected = width * height * dtype.itemsize
        raster = data[offset:offset + expected]
        if len(raster) != expected:
            raise FrameFormatError(
                f"래스터 길이 부족: {len(raster)}/{expected}바이트 ({source})", path=source)
        values = np.frombuffer(raster, dtype=dtype).reshape(height, width)
        return values.astype(np.uint8 if maxval <= self.MAX_8BIT else np.uint16)


class PnmEncoder(PnmBase):
    """PNM 인코더"""

    def encode_ppm(self, pixels: np.ndarray) -> bytes:
        """H×W×3 uint8 → P6 바이트"""
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise FrameFormatError(f"PPM 인코딩에는 H×W×3 uint8이 필요합니다: {arr.shape} {arr.dtype}")
        height, width = arr.shape[:2]
        header = b"%s\n%d %d\n%d\n" % (self.MAGIC_PPM, width, height, self.MAX_8BIT)
        return header + np.ascontiguousarray(arr).tobytes()

    def encode_pgm(self, values: np.ndarray) -> bytes:
        """H×W 정수 배열 → P5 바이트 (255 초과 값이 있으면 16비트)"""
        arr = np.asarray(values)
        if arr.ndim != 2:
            raise FrameFormatError(f"PGM 인코딩에는 2차원 배열이 필요합니다: {arr.shape}")
        if arr.dtype == bool:
            arr = arr.astype(np.uint8) * self.MAX_8BIT
        if arr.size and (arr.min() < 0 or arr.max() > self.MAX_16BIT):
            raise FrameFormatError("PGM 값 범위는 0..65535 입니다")
        height, width = arr.shape
        if arr.size == 0 or arr.max() <= self.MAX_8BIT:
            maxval, raster = self.MAX_8BIT, arr.astype(np.uint8).tobytes()
        else:
            maxval, raster = self.MAX_16BIT, arr.astype(">u2").tobytes()
        header = b"%s\n%d %d\n%d\n" % (self.MAGIC_PGM, width, height, maxval)
        return header + raster


# 싱글톤 인스턴스
pnm_decoder = PnmDecoder()
pnm_encoder = PnmEncoder()


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FrameReadError(f"파일을 읽을 수 없습니다: {path} ({e.strerror})", path=path) from e


def _decode_png(data: bytes, source: str) -> np.ndarray:
    """PNG 디코딩 (Pillow 필요)"""
    if importlib.util.find_spec("PIL") is None:
        raise FrameFormatError(f"PNG 디코딩에는 Pillow가 필요합니다 ({source})", path=source)
    import io
    from PIL import Image

    try:
        with Image.open(io.BytesIO(data)) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
    except Exception as e:
        raise FrameFormatError(f"PNG 디코딩 실패: {e} ({source})", path=source) from e


def decode_image(path: PathLike) -> np.ndarray:
    """
    매직 바이트에 따라 이미지를 H×W×3 uint8 래스터로 디코딩

    Parameters:
    -----------
    path : str 또는 Path
        이미지 파일 경로

    Returns:
    --------
    np.ndarray
        RGB 래스터
    """
    data = _read_bytes(path)
    source = str(path)
    if data[:2] == PnmBase.MAGIC_PPM:
        return pnm_decoder.decode_ppm(data, source)
    if data[:8] == PnmBase.PNG_SIGNATURE:
        return _decode_png(data, source)
    raise FrameFormatError(f"지원하지 않는 이미지 형식 ({source})", path=source)


def read_ppm(path: PathLike) -> np.ndarray:
    return pnm_decoder.decode_ppm(_read_bytes(path), str(path))


def read_pgm(path: PathLike) -> np.ndarray:
    return pnm_decoder.decode_pgm(_read_bytes(path), str(path))
