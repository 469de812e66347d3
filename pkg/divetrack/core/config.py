#!/usr/bin/env python3
"""
설정 관리 모듈
시스템 기본값, 로깅, 파이프라인 설정 파일 로드를 관리합니다.
"""
import os
import sys
import json
import logging
from pathlib import Path
from datetime import datetime
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import ValidationError

from .errors import ConfigurationError

# 앱 버전
APP_VERSION = "1.0.1"
APP_NAME = "divetrack"

# 샘플링 기본값 (25Hz: 10Hz 동작 → 20Hz 나이퀴스트 → 안전 여유)
DEFAULT_TARGET_FPS = 25.0
DEFAULT_NYQUIST_FACTOR = 2.0
DEFAULT_SAFETY_RATE_HZ = 25.0
DEFAULT_N_FIGURES = 5
DEFAULT_DROP_HEIGHT_M = 10.0
DEFAULT_GRAVITY = 9.81

# 특징점 / 정합 기본값
HARRIS_K = 0.04
HARRIS_WINDOW_SIGMA = 1.0
DEFAULT_MAX_KEYPOINTS = 500
DEFAULT_MIN_DISTANCE_PX = 5
DEFAULT_PATCH_SIZE = 9
DEFAULT_MATCH_RATIO = 0.8
DEFAULT_RANSAC_ITERATIONS = 500
DEFAULT_INLIER_TOL_PX = 2.0
DEFAULT_RANSAC_SEED = 0

# 밝기 기반 보정 (RANSAC 결과를 출발점으로 사용)
DIRECT_SMOOTH_SIGMA = 1.0
DIRECT_STRIDE = 3
DIRECT_MARGIN_PX = 4
DIRECT_HUBER_SCALE = 3.0
DIRECT_MAX_EVALUATIONS = 50
DIRECT_MIN_POINTS = 200

# 파노라마
DEFAULT_COMPOSITE_MODE = "median"
MAX_PANORAMA_PIXELS = 64_000_000
# 중앙값 합성 시 행 묶음 하나의 스택 크기 상한 (바이트)
MEDIAN_BAND_BYTES = 64 * 1024 * 1024

# 분할 / 궤적
DEFAULT_MIN_AREA = 50
DEFAULT_DILATION_PX = 1
DEFAULT_CONNECTIVITY = 8
DEFAULT_SMOOTHING_WINDOW = 5
DEFAULT_MAX_GAP = 5
MIN_FIT_SAMPLES = 5

# 피부색 기본 임계값 (클립마다 조정 필요)
DEFAULT_HSV = {"h": [340.0, 50.0], "s": [0.15, 0.9], "v": [0.2, 1.0]}

# 기본 디렉토리 설정
if getattr(sys, 'frozen', False):
    # 실행 파일로 패키징된 경우
    BASE_DIR = Path(sys.executable).parent
else:
    BASE_DIR = Path(os.path.abspath(os.path.dirname(os.path.dirname(os.path.dirname(__file__)))))

# 로그 디렉토리 설정 (환경 변수로 변경 가능)
LOG_DIR = Path(os.environ.get("DIVETRACK_LOG_DIR", BASE_DIR / "logs"))
LOG_LEVEL = os.environ.get("DIVETRACK_LOG_LEVEL", "INFO")


def setup_logging(name: str = None, level: str = None) -> logging.Logger:
    """
    통일된 로깅 설정

    Parameters:
    -----------
    name : str, optional
        로거 이름 (기본값: None, __name__ 사용)
    level : str, optional
        로그 레벨 (기본값: DIVETRACK_LOG_LEVEL 또는 "INFO")

    Returns:
    --------
    logging.Logger
        설정된 로거 인스턴스
    """
    if name is None:
        name = __name__
    if level is None:
        level = LOG_LEVEL

    logger = logging.getLogger(name)

    # 이미 핸들러가 설정되어 있으면 그대로 반환
    if logger.handlers:
        return logger

    log_level = getattr(logging, level.upper(), logging.INFO)
    logger.setLevel(log_level)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # 파일 핸들러 (디렉토리를 만들 수 없으면 콘솔만 사용)
    try:
        LOG_DIR.mkdir(parents=True, exist_ok=True)
        log_file = LOG_DIR / f"{APP_NAME}_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except OSError:
        pass

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # 상위 로거로 중복 전파하지 않음
    logger.propagate = False

    return logger


def set_package_log_level(level: str) -> None:
    """이미 생성된 divetrack 로거들의 레벨을 일괄 변경"""
    log_level = getattr(logging, level.upper(), logging.INFO)
    for logger_name, logger in logging.Logger.manager.loggerDict.items():
        if logger_name.startswith(APP_NAME) and isinstance(logger, logging.Logger):
            logger.setLevel(log_level)
            for handler in logger.handlers:
                handler.setLevel(log_level)


def parse_override(item: str) -> tuple:
    """
    `key=value` 형식의 덮어쓰기 항목 해석

    값은 JSON으로 먼저 해석하고, 실패하면 문자열 그대로 사용합니다.
    """
    if "=" not in item:
        raise ConfigurationError(f"잘못된 --set 형식: '{item}' (key=value 필요)")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"잘못된 --set 형식: '{item}' (빈 키)")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """점(.)으로 구분된 키 경로에 덮어쓰기 값을 적용"""
    for item in overrides or []:
        key, value = parse_override(item)
        parts = key.split(".")
        target = data
        for part in parts[:-1]:
            node = target.get(part)
            if not isinstance(node, dict):
                node = {}
                target[part] = node
            target = node
        target[parts[-1]] = value
    return data


def load_pipeline_config(path: Optional[Union[str, Path]] = None,
                         overrides: Iterable[str] = (),
                         output_dir: Optional[Union[str, Path]] = None):
    """
    파이프라인 설정 파일 로드

    Parameters:
    -----------
    path : str 또는 Path, optional
        JSON 설정 파일 경로 (None이면 기본값 + 덮어쓰기만 사용)
    overrides : Iterable[str]
        `--set key=value` 항목들
    output_dir : str 또는 Path, optional
        `--out` 으로 지정된 출력 디렉토리 (설정 파일보다 우선)

    Returns:
    --------
    PipelineConfig
        검증된 파이프라인 설정
    """
    from ..models.pipeline import PipelineConfig

    data: Dict[str, Any] = {}
    base_dir = Path.cwd()
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigurationError(f"설정 파일을 찾을 수 없습니다: {config_path}")
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"설정 파일 JSON 오류 ({config_path}): {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"설정 파일 최상위는 객체여야 합니다: {config_path}")
        base_dir = config_path.resolve().parent

    data = apply_overrides(data, overrides)
    if output_dir is not None:
        data["output_dir"] = str(output_dir)

    # 상대 경로는 설정 파일 위치 기준
    for key in ("manifest", "output_dir"):
        value = data.get(key)
        if isinstance(value, str) and value and not Path(value).is_absolute():
            data[key] = str((base_dir / value).resolve())

    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigurationError(f"설정 검증 실패 [{field}]: {first.get('msg')}") from e


class Config:
    """
    설정 관리 클래스
    기본값과 경로 정보를 한 곳에서 제공합니다.
    """
    def __init__(self):
        self.app_version = APP_VERSION
        self.app_name = APP_NAME
        self.base_dir = BASE_DIR
        self.log_dir = LOG_DIR

        # 샘플링
        self.default_target_fps = DEFAULT_TARGET_FPS
        self.default_gravity = DEFAULT_GRAVITY
        self.default_drop_height_m = DEFAULT_DROP_HEIGHT_M

        # 정합
        self.harris_k = HARRIS_K
        self.max_keypoints = DEFAULT_MAX_KEYPOINTS
        self.min_distance_px = DEFAULT_MIN_DISTANCE_PX
        self.patch_size = DEFAULT_PATCH_SIZE
        self.match_ratio = DEFAULT_MATCH_RATIO

        # 작업자 수 (출력 바이트에는 영향 없음)
        self.default_threads = os.cpu_count() or 1

    def get_app_info(self):
        """
        앱 정보 반환
        """
        return {
            "version": self.app_version,
            "name": self.app_name,
        }


# 싱글톤 인스턴스
config = Config()
