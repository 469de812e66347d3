#!/usr/bin/env python3
"""
궤적 분석 모듈
무게중심 시계열을 보간/평활하고, 자유낙하 적합으로 배율을 보정하고, 성능 지표를 계산합니다.
"""
import csv
import io
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.config import DEFAULT_MAX_GAP, DEFAULT_SMOOTHING_WINDOW, MIN_FIT_SAMPLES, setup_logging
from ..core.errors import (
    CalibrationError, ConfigurationError, FrameFormatError, InsufficientDataError, TrajectoryQualityError,
)
from ..models.segmentation import BarycentreSample
from ..models.trajectory import DiveMetrics, FreeFallFit, Trajectory
from ..utils.artifacts import draw_square, dumps_json

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

CSV_COLUMNS = ("frame", "t", "x", "y", "valid", "interpolated", "area", "x_smooth", "y_smooth")
MIN_PHYSICAL_G_PX = 1e-6
RAW_COLOUR = (0, 0, 255)
SMOOTH_COLOUR = (255, 0, 0)


def smooth_moving_average(series: Union[Sequence[float], Sequence[Tuple[float, float]]],
                          window: int = DEFAULT_SMOOTHING_WINDOW):
    """
    지연 없는 중심 이동평균

    가장자리에서는 창 폭이 2·min(i, n−1−i)+1 로 대칭 축소됩니다.

    Parameters:
    -----------
    series : 값 목록 또는 (t, value) 목록
        시간 순서의 공백 없는 시계열
    window : int
        홀수 창 폭

    Returns:
    --------
    입력과 같은 형식 (값 목록이면 np.ndarray, (t, value) 목록이면 같은 t의 목록)
    """
    if window < 1 or window % 2 == 0:
        raise ConfigurationError(f"평활 창 폭은 양의 홀수여야 합니다: {window}")

    arr = np.asarray(series, dtype=np.float64)
    paired = arr.ndim == 2
    values = arr[:, 1] if paired else arr.reshape(-1)
    n = values.size
    half = window // 2
    smoothed = np.empty(n, dtype=np.float64)
    if n >= window:
        smoothed[half:n - half] = np.convolve(values, np.ones(window), mode="valid") / window
    for i in range(n):
        edge = min(i, n - 1 - i)
        if edge < half:
            smoothed[i] = values[i - edge:i + edge + 1].sum() / (2 * edge + 1)

    if paired:
        return [(float(t), float(v)) for t, v in zip(arr[:, 0], smoothed)]
    return smoothed


def _lerp(a: float, b: float, frac: float) -> float:
    return a + (b - a) * frac


def interpolate_gaps(samples: Sequence[BarycentreSample], max_gap: int = DEFAULT_MAX_GAP) -> List[BarycentreSample]:
    """
    무효 표본 구간을 선형 보간해 공백 없는 시계열 생성

    앞뒤의 무효 표본은 버리고, 보간된 표본은 interpolated=True 로 표시합니다.
    """
    valid_positions = [i for i, s in enumerate(samples) if s.valid]
    if len(valid_positions) < 2:
        raise InsufficientDataError(
            f"유효 표본이 2개 이상 필요합니다: {len(valid_positions)}개", stage="metrics")

    first, last = valid_positions[0], valid_positions[-1]
    series: List[BarycentreSample] = []
    prev = first
    for pos in valid_positions:
        gap = pos - prev - 1
        if gap > max_gap:
            missing = [samples[i].frame_index for i in range(prev + 1, pos)]
            raise TrajectoryQualityError(
                f"검출 공백이 너무 깁니다: {gap}프레임 (최대 {max_gap}), 프레임 {missing[0]}-{missing[-1]}",
                stage="metrics", frames=missing)
        if gap > 0:
            a, b = samples[prev], samples[pos]
            for i in range(prev + 1, pos):
                frac = (samples[i].t - a.t) / (b.t - a.t)
                series.append(samples[i].model_copy(update={
                    "x": _lerp(a.x, b.x, frac), "y": _lerp(a.y, b.y, frac),
                    "area": 0, "valid": False, "interpolated": True,
                }))
        series.append(samples[pos])
        prev = pos

    dropped = first + (len(samples) - 1 - last)
    if dropped:
        logger.debug(f"앞뒤 무효 표본 {dropped}개 제외")
    return series


def build_trajectory(samples: Sequence[BarycentreSample], window: int = DEFAULT_SMOOTHING_WINDOW,
                     max_gap: int = DEFAULT_MAX_GAP) -> Trajectory:
    """
    보간 + 평활

    모든 원시 표본을 유지하며, 평활값은 공백 없는 구간의 표본에만 있습니다.
    """
    ordered = sorted(samples, key=lambda s: s.frame_index)
    series = interpolate_gaps(ordered, max_gap)
    sx = smooth_moving_average([s.x for s in series], window)
    sy = smooth_moving_average([s.y for s in series], window)
    by_frame = {s.frame_index: (s, float(x), float(y)) for s, x, y in zip(series, sx, sy)}

    out_samples, out_x, out_y = [], [], []
    for sample in ordered:
        entry = by_frame.get(sample.frame_index)
        if entry is None:
            out_samples.append(sample)
            out_x.append(None)
            out_y.append(None)
        else:
            out_samples.append(entry[0])
            out_x.append(entry[1])
            out_y.append(entry[2])

    n_interp = sum(1 for s in series if s.interpolated)
    logger.info(f"궤적 구성: 표본 {len(ordered)}, 구간 {len(series)}, 보간 {n_interp}, 창 {window}")
    return Trajectory(samples=out_samples, smoothed_x=out_x, smoothed_y=out_y)


def fit_free_fall(series: Sequence[Tuple[float, float]],
                  segment: Optional[Tuple[float, float]] = None) -> FreeFallFit:
    """
    자유낙하 최소제곱 적합

    영상 행 좌표를 부호 반전해 위쪽을 양수로 두고
    y(t) = y0 + v0·τ − ½·g_px·τ², τ = t − t_start 를 적합합니다.

    Parameters:
    -----------
    series : (t, y_px) 목록
        영상 좌표 (아래쪽 양수) 시계열
    segment : (t_start, t_end), optional
        적합 구간 (없으면 전체)

    Returns:
    --------
    FreeFallFit
        g_px ≤ 0 이면 warning에 모델 불일치가 기록됩니다
    """
    arr = np.asarray(series, dtype=np.float64).reshape(-1, 2)
    if segment is None:
        if arr.shape[0] == 0:
            raise InsufficientDataError("적합할 표본이 없습니다", stage="metrics")
        segment = (float(arr[:, 0].min()), float(arr[:, 0].max()))
    t_start, t_end = segment
    inside = arr[(arr[:, 0] >= t_start) & (arr[:, 0] <= t_end)]
    if inside.shape[0] < MIN_FIT_SAMPLES:
        raise InsufficientDataError(
            f"자유낙하 적합에는 {MIN_FIT_SAMPLES}개 이상의 표본이 필요합니다: {inside.shape[0]}개",
            stage="metrics")

    tau = inside[:, 0] - t_start
    y_up = -inside[:, 1]
    design = np.column_stack([np.ones_like(tau), tau, -0.5 * tau * tau])
    coeffs, *_ = np.linalg.lstsq(design, y_up, rcond=None)
    y0, v0, g_px = (float(c) for c in coeffs)
    residual = y_up - design @ coeffs
    rms = float(np.sqrt(np.mean(residual * residual)))

    warning, t_apex = None, None
    if g_px <= MIN_PHYSICAL_G_PX:
        warning = f"모델 불일치: 적합된 g_px={g_px:.6g} 가 양수가 아닙니다"
        logger.warning(warning)
    else:
        t_apex = t_start + v0 / g_px

    return FreeFallFit(y0=y0, v0=v0, g_px=g_px, rms_residual=rms, t_apex=t_apex,
                       segment=(float(t_start), float(t_end)), n_samples=int(inside.shape[0]),
                       warning=warning)


def calibrate_scale(fit: FreeFallFit, g: float) -> float:
    """px_per_m = g_px / g"""
    if not g > 0:
        raise CalibrationError(f"중력 가속도는 양수여야 합니다: {g}", stage="metrics")
    if not fit.is_physical:
        raise CalibrationError(f"물리적으로 유효하지 않은 적합입니다 (g_px={fit.g_px:.6g})", stage="metrics")
    return fit.g_px / g


def _smoothed_series(traj: Trajectory) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    indices = traj.series_indices()
    if not indices:
        raise InsufficientDataError("평활된 궤적이 없습니다", stage="metrics")
    t = np.array([traj.samples[i].t for i in indices])
    x = np.array([traj.smoothed_x[i] for i in indices])
    y = np.array([traj.smoothed_y[i] for i in indices])
    return t, x, y


def find_water_entry(traj: Trajectory, water_line_y: float) -> Optional[Tuple[float, float]]:
    """
    정점 이후 수면선을 처음 아래로 지나는 시각과 그때의 열 좌표 (선형 보간)

    Returns:
    --------
    tuple 또는 None
        (entry_t, entry_x), 교차가 없으면 None
    """
    t, x, y = _smoothed_series(traj)
    apex = int(np.argmin(y))
    for i in range(apex + 1, len(y)):
        if y[i - 1] < water_line_y <= y[i]:
            frac = (water_line_y - y[i - 1]) / (y[i] - y[i - 1])
            return float(_lerp(t[i - 1], t[i], frac)), float(_lerp(x[i - 1], x[i], frac))
    logger.warning(f"수면선 y={water_line_y} 교차를 찾지 못했습니다")
    return None


def compute_metrics(traj: Trajectory, px_per_m: Optional[float] = None,
                    water_line_y: Optional[float] = None) -> DiveMetrics:
    """
    성능 지표 계산

    높이는 도약 시점(첫 표본) 대비 값이며, 수평 편차는 도약부터 입수까지 평활 x의 RMS 입니다.
    """
    t, x, y = _smoothed_series(traj)
    apex = int(np.argmin(y))
    max_height_px = float(y[0] - y[apex])

    entry = find_water_entry(traj, water_line_y) if water_line_y is not None else None
    entry_t, entry_x = entry if entry is not None else (None, None)

    span = x if entry_t is None else x[t <= entry_t]
    lateral_rms = float(np.sqrt(np.mean((span - span.mean()) ** 2)))

    metrics = DiveMetrics(
        max_height_px=max_height_px,
        max_height_m=max_height_px / px_per_m if px_per_m else None,
        t_apex=float(t[apex]),
        entry_x_px=entry_x,
        entry_t=entry_t,
        lateral_rms_px=lateral_rms,
        px_per_m=px_per_m,
    )
    logger.info(f"지표: 최대 높이 {max_height_px:.2f}px, 정점 {metrics.t_apex:.3f}s, "
                f"수평 RMS {lateral_rms:.2f}px")
    return metrics


def fit_series(traj: Trajectory) -> List[Tuple[float, float]]:
    """보정용 시계열: 공백 없는 구간의 평활 전 측정값 (보간 제외)"""
    indices = traj.series_indices()
    return [(traj.samples[i].t, traj.samples[i].y) for i in indices if traj.samples[i].valid]


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def export_trajectory_csv(traj: Trajectory) -> bytes:
    """
    궤적 CSV (frame,t,x,y,valid,interpolated,area,x_smooth,y_smooth)

    실수는 소수점 6자리, 값이 없으면 빈 칸, 플래그는 1/0 입니다.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for i, s in enumerate(traj.samples):
        xs = traj.smoothed_x[i] if traj.smoothed_x is not None else None
        ys = traj.smoothed_y[i] if traj.smoothed_y is not None else None
        writer.writerow([s.frame_index, _fmt(s.t), _fmt(s.x), _fmt(s.y), int(s.valid),
                         int(s.interpolated), s.area, _fmt(xs), _fmt(ys)])
    return buffer.getvalue().encode("utf-8")


def _parse_optional(value: str) -> Optional[float]:
    return float(value) if value != "" else None


def parse_trajectory_csv(data: bytes, source: str = "<bytes>") -> List[BarycentreSample]:
    """궤적 CSV → 원시 표본 목록 (평활 열은 무시)"""
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise FrameFormatError(f"궤적 CSV 헤더가 다릅니다 ({source})", path=source)

    samples = []
    for line_no, row in enumerate(reader, start=2):
        if len(row) != len(CSV_COLUMNS):
            raise FrameFormatError(f"궤적 CSV {line_no}행 열 수 오류 ({source})", path=source)
        try:
            samples.append(BarycentreSample(
                frame_index=int(row[0]), t=float(row[1]),
                x=_parse_optional(row[2]), y=_parse_optional(row[3]),
                valid=row[4] == "1", interpolated=row[5] == "1", area=int(row[6]),
            ))
        except ValueError as e:
            raise FrameFormatError(f"궤적 CSV {line_no}행 값 오류: {e} ({source})", path=source) from e
    return samples


def metrics_to_dict(metrics: DiveMetrics, fit: Optional[FreeFallFit] = None) -> Dict[str, Any]:
    payload = metrics.model_dump()
    if fit is not None:
        payload["free_fall"] = {
            "y0": fit.y0, "v0": fit.v0, "g_px": fit.g_px, "rms_residual": fit.rms_residual,
            "t_apex": fit.t_apex, "segment": list(fit.segment), "n_samples": fit.n_samples,
            "warning": fit.warning,
        }
    return payload


def export_metrics_json(metrics: DiveMetrics, fit: Optional[FreeFallFit] = None) -> bytes:
    return dumps_json(metrics_to_dict(metrics, fit))


def render_overlay(panorama_image: np.ndarray, traj: Trajectory, half_size: int = 1) -> np.ndarray:
    """파노라마 위에 원시 위치(파랑)와 평활 위치(빨강) 표시"""
    out = np.array(panorama_image, dtype=np.uint8, copy=True)
    for s in traj.samples:
        if s.valid:
            out = draw_square(out, s.x, s.y, half_size, colour=RAW_COLOUR)
    for i in traj.series_indices():
        out = draw_square(out, traj.smoothed_x[i], traj.smoothed_y[i], half_size, colour=SMOOTH_COLOUR)
    return out
