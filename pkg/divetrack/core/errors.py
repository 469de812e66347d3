#!/usr/bin/env python3
"""
예외 정의 모듈
파이프라인 단계별 오류와 CLI 종료 코드를 정의합니다.
"""
from typing import Any, Dict, Optional, Sequence


class DivetrackError(Exception):
    """
    모든 파이프라인 오류의 기본 클래스

    Parameters:
    -----------
    message : str
        오류 메시지
    stage : str, optional
        오류가 발생한 단계 이름 (sample, mosaic, track, metrics, synth)
    frames : Sequence[int], optional
        관련된 프레임 인덱스
    """
    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None,
                 frames: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.frames = list(frames) if frames is not None else []

    def to_report(self) -> Dict[str, Any]:
        """기계 판독용 오류 보고서"""
        return {
            "error": type(self).__name__,
            "exit_code": self.exit_code,
            "stage": self.stage,
            "frames": self.frames,
            "message": self.message,
        }


class ConfigurationError(DivetrackError):
    """설정 / 입력 파라미터 오류"""
    exit_code = 2


class DomainError(ConfigurationError, ValueError):
    """수학적 정의역을 벗어난 입력"""


class SynthSpecError(ConfigurationError):
    """합성 시나리오 명세 오류"""


class FrameReadError(DivetrackError):
    """프레임 파일 읽기 실패"""
    exit_code = 3

    def __init__(self, message: str, path=None, **kwargs):
        super().__init__(message, **kwargs)
        self.path = str(path) if path is not None else None

    def to_report(self) -> Dict[str, Any]:
        report = super().to_report()
        report["path"] = self.path
        return report


class FrameFormatError(FrameReadError):
    """이미지 형식 / 크기 오류"""


class ArtifactMissingError(FrameReadError):
    """이전 단계 산출물 누락"""


class RegistrationError(DivetrackError):
    """프레임 정합 실패"""
    exit_code = 4


class DegenerateConfigurationError(RegistrationError, ValueError):
    """퇴화된 점 배치 또는 특이 변환"""


class TrackingError(DivetrackError):
    """무게중심 추적 단계 오류"""
    exit_code = 5


class SegmentationError(TrackingError, ValueError):
    """마스크 크기 불일치 등 분할 오류"""


class TrajectoryQualityError(TrackingError):
    """보간 한도를 넘는 검출 공백"""


class InsufficientDataError(TrackingError):
    """적합에 필요한 표본 부족"""


class CalibrationError(TrackingError):
    """픽셀-미터 보정 실패"""
