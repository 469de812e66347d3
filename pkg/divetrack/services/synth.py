#!/usr/bin/env python3
"""
합성 시퀀스 모듈
정답이 알려진 검증용 프레임 시퀀스를 생성합니다.
"""
import colorsys
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..core.config import DEFAULT_DROP_HEIGHT_M, DEFAULT_GRAVITY, DEFAULT_MIN_AREA, setup_logging
from ..core.errors import SynthSpecError
from ..models.frame import Frame
from ..models.geometry import AffineTransform
from ..models.segmentation import HsvThresholds
from ..models.synth import BackgroundSpec, BallisticPath, BlobSpec, Distractor, GroundTruth, SynthSpec
from ..utils.artifacts import write_json_atomic, write_ppm_atomic
from .registration import invert

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

# 값 노이즈 격자 여유 (셀 수)
GRID_PAD = 2

# 표준 시나리오 공통값
FRAME_SIZE = (640, 480)
N_FRAMES = 50
FPS = 25.0
G_PX = 500.0
VY0 = 490.0
VX0 = 40.0
BLOB_RADIUS = 12.0
JITTER_PX = 2.0
# 수면선은 도약 높이보다 이만큼 위 (하강 중 교차)
WATER_LINE_HEIGHT_PX = 60.0


class ValueNoise:
    """
    값 노이즈 배경

    feature_scale 간격 격자점에 시드 난수 밝기를 두고 쌍선형 보간합니다.
    좌표는 월드 범위 밖으로 GRID_PAD 셀까지 정의됩니다.
    """

    def __init__(self, spec: BackgroundSpec):
        self.spec = spec
        width, height = spec.world_size
        self.nx = int(math.ceil(width / spec.feature_scale)) + 2 * GRID_PAD + 1
        self.ny = int(math.ceil(height / spec.feature_scale)) + 2 * GRID_PAD + 1
        rng = np.random.default_rng(spec.seed)
        self.grid = rng.uniform(spec.low, spec.high, size=(self.ny, self.nx))
        self.tint = np.asarray(spec.tint, dtype=np.float64)

    def gray(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        scale = self.spec.feature_scale
        gx = np.clip(x / scale + GRID_PAD, 0.0, self.nx - 1 - 1e-9)
        gy = np.clip(y / scale + GRID_PAD, 0.0, self.ny - 1 - 1e-9)
        i0 = np.floor(gx).astype(np.intp)
        j0 = np.floor(gy).astype(np.intp)
        fx, fy = gx - i0, gy - j0
        g = self.grid
        top = (1 - fx) * g[j0, i0] + fx * g[j0, i0 + 1]
        bottom = (1 - fx) * g[j0 + 1, i0] + fx * g[j0 + 1, i0 + 1]
        return (1 - fy) * top + fy * bottom

    def colour(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """월드 좌표 → RGB 실수 (…×3), 방해 사각형 포함"""
        rgb = self.gray(x, y)[..., None] * self.tint
        for rect in self.spec.distractors:
            alpha = _rect_coverage(rect, x, y)[..., None]
            rgb = (1 - alpha) * rgb + alpha * np.asarray(rect.colour_rgb, dtype=np.float64)
        return rgb


def _rect_coverage(rect: Distractor, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """픽셀 정사각형과 사각형의 겹침 비율"""
    ax = np.clip(np.minimum(x + 0.5, rect.x1) - np.maximum(x - 0.5, rect.x0), 0.0, 1.0)
    ay = np.clip(np.minimum(y + 0.5, rect.y1) - np.maximum(y - 0.5, rect.y0), 0.0, 1.0)
    return ax * ay


def blob_rgb(blob: BlobSpec) -> np.ndarray:
    h, s, v = blob.colour_hsv
    return np.array(colorsys.hsv_to_rgb((h % 360.0) / 360.0, s, v), dtype=np.float64) * 255.0


def disc_alpha(u: np.ndarray, v: np.ndarray, cx: float, cy: float, radius: float) -> np.ndarray:
    """앤티앨리어싱 원판 불투명도 clip(r + 0.5 − 거리, 0, 1)"""
    dist = np.hypot(u - cx, v - cy)
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def blob_thresholds(blob: BlobSpec, hue_margin: float = 15.0) -> HsvThresholds:
    """원판 색을 감싸는 HSV 임계 구간"""
    h, s, v = blob.colour_hsv
    return HsvThresholds(
        h_lo=(h - hue_margin) % 360.0, h_hi=(h + hue_margin) % 360.0,
        s_lo=max(0.0, s - 0.25), s_hi=1.0,
        v_lo=max(0.0, v - 0.4), v_hi=1.0,
    )


def _blob_centres(spec: SynthSpec) -> List[Optional[Tuple[float, float]]]:
    if spec.blob is None:
        return [None] * spec.n_frames
    width, height = spec.background.world_size
    radius = spec.blob.radius_px
    centres = []
    for k in range(spec.n_frames):
        x, y = spec.blob.trajectory.position(spec.time(k))
        if x - radius < 0 or y - radius < 0 or x + radius > width or y + radius > height:
            raise SynthSpecError(
                f"프레임 {k}에서 원판이 월드 범위를 벗어납니다: ({x:.1f}, {y:.1f}), 월드 {width}×{height}")
        centres.append((x, y))
    return centres


def render_frame(spec: SynthSpec, noise: ValueNoise, k: int,
                 centre: Optional[Tuple[float, float]]) -> np.ndarray:
    """프레임 k 렌더링 (배경 → 원판 → 픽셀 노이즈)"""
    width, height = spec.frame_size
    camera = spec.camera(k)
    to_world = invert(camera)
    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    wx = to_world.a * u + to_world.b * v + to_world.tx
    wy = to_world.c * u + to_world.d * v + to_world.ty
    rgb = noise.colour(wx, wy)

    if centre is not None:
        cx, cy = camera.apply([centre])[0]
        radius = spec.blob.radius_px * math.sqrt(abs(camera.determinant))
        alpha = disc_alpha(u, v, cx, cy, radius)[..., None]
        rgb = (1 - alpha) * rgb + alpha * blob_rgb(spec.blob)

    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, k])
        rgb = rgb + rng.normal(0.0, spec.noise_sigma, size=rgb.shape)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def render_background(noise: ValueNoise) -> np.ndarray:
    """월드 배경 래스터 (원판, 노이즈 없음)"""
    width, height = noise.spec.world_size
    x, y = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return np.clip(np.rint(noise.colour(x, y)), 0, 255).astype(np.uint8)


def render_sequence(spec: SynthSpec, threads: Optional[int] = None) -> Tuple[List[Frame], GroundTruth]:
    """
    합성 시퀀스와 정답 생성

    같은 명세는 항상 같은 프레임과 정답을 만듭니다.

    Returns:
    --------
    tuple
        (프레임 목록, GroundTruth)
    """
    centres = _blob_centres(spec)
    noise = ValueNoise(spec.background)

    workers = max(1, threads or 1)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        rasters = list(executor.map(lambda k: render_frame(spec, noise, k, centres[k]), range(spec.n_frames)))

    frames = [Frame(index=k, timestamp_s=spec.time(k), pixels=raster, source_index=k)
              for k, raster in enumerate(rasters)]
    truth = GroundTruth(
        transforms=[spec.camera(k) for k in range(spec.n_frames)],
        centres=centres,
        times=[spec.time(k) for k in range(spec.n_frames)],
        g_px=spec.blob.trajectory.g_px if spec.blob is not None else None,
        background=render_background(noise),
    )
    logger.info(f"합성 시퀀스 '{spec.name}': {spec.n_frames}프레임 {spec.frame_size[0]}×{spec.frame_size[1]}")
    return frames, truth


def _dive_blob(x0: float, y0: float) -> BlobSpec:
    return BlobSpec(radius_px=BLOB_RADIUS,
                    trajectory=BallisticPath(x0=x0, y0=y0, vx0=VX0, vy0=VY0, g_px=G_PX))


def standard_scenarios(seed: int = 0) -> Dict[str, SynthSpec]:
    """
    표준 시나리오 목록

    - static: 고정 카메라
    - vibration: ±2 픽셀 시드 흔들림 (0번 프레임은 기준으로 흔들림 없음)
    - panning: 카메라가 원판을 따라감
    """
    times = [k / FPS for k in range(N_FRAMES)]

    static_bg = BackgroundSpec(seed=seed, distractors=[
        Distractor(x0=120, y0=220, x1=170, y1=260),
        Distractor(x0=600, y0=400, x1=660, y1=430),
    ])
    static = SynthSpec(
        name="static", seed=seed, n_frames=N_FRAMES, fps=FPS, background=static_bg,
        camera_path=[AffineTransform.translation(-80.0, -160.0)] * N_FRAMES,
        blob=_dive_blob(400.0, 600.0),
    )

    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-JITTER_PX, JITTER_PX, size=(N_FRAMES, 2))
    jitter[0] = 0.0
    vibration_bg = BackgroundSpec(seed=seed + 1, distractors=[
        Distractor(x0=60, y0=60, x1=110, y1=100),
        Distractor(x0=520, y0=300, x1=580, y1=330),
    ])
    vibration = SynthSpec(
        name="vibration", seed=seed, n_frames=N_FRAMES, fps=FPS, background=vibration_bg,
        camera_path=[AffineTransform.translation(float(jx), float(jy)) for jx, jy in jitter],
        blob=_dive_blob(320.0, 440.0),
    )

    panning_blob = _dive_blob(400.0, 560.0)
    half_w, half_h = FRAME_SIZE[0] / 2.0, FRAME_SIZE[1] / 2.0
    follow = []
    for t in times:
        cx, cy = panning_blob.trajectory.position(t)
        follow.append(AffineTransform.translation(-(cx - half_w), -(cy - half_h)))
    panning_bg = BackgroundSpec(seed=seed + 2, distractors=[
        Distractor(x0=150, y0=200, x1=200, y1=240),
        Distractor(x0=620, y0=600, x1=680, y1=630),
    ])
    panning = SynthSpec(
        name="panning", seed=seed, n_frames=N_FRAMES, fps=FPS, background=panning_bg,
        camera_path=follow, blob=panning_blob,
    )
    return {"static": static, "vibration": vibration, "panning": panning}


def water_line_for(spec: SynthSpec) -> Optional[float]:
    """도약 높이 위 WATER_LINE_HEIGHT_PX 지점의 0번 프레임 행 좌표"""
    if spec.blob is None:
        return None
    path = spec.blob.trajectory
    return float(spec.camera(0).apply([(path.x0, path.y0 - WATER_LINE_HEIGHT_PX)])[0][1])


def ground_truth_to_dict(spec: SynthSpec, truth: GroundTruth) -> dict:
    return {
        "name": spec.name,
        "seed": spec.seed,
        "fps": spec.fps,
        "frame_size": list(spec.frame_size),
        "world_size": list(spec.background.world_size),
        "g_px": truth.g_px,
        "radius_px": spec.blob.radius_px if spec.blob is not None else None,
        "water_line_y": water_line_for(spec),
        "times": truth.times,
        "transforms": [t.to_matrix() for t in truth.transforms],
        "centres": [list(c) if c is not None else None for c in truth.centres],
    }


def write_scenario(spec: SynthSpec, out_dir: Union[str, Path], threads: Optional[int] = None) -> Dict[str, Path]:
    """
    시나리오를 디스크에 기록

    Parameters:
    -----------
    spec : SynthSpec
        시나리오 명세
    out_dir : str 또는 Path
        출력 디렉토리
    threads : int, optional
        렌더링 작업자 수

    Returns:
    --------
    dict
        manifest, ground_truth, background, pipeline, frames 경로
    """
    out = Path(out_dir)
    frames, truth = render_sequence(spec, threads)

    names = []
    for frame in frames:
        name = f"f{frame.index:04d}.ppm"
        write_ppm_atomic(out / name, frame.pixels)
        names.append(name)

    manifest = {
        "source_fps": spec.fps,
        "frames": names,
        "drop_height_m": DEFAULT_DROP_HEIGHT_M,
        "g": DEFAULT_GRAVITY,
        "water_line_y": water_line_for(spec),
    }
    pipeline = {
        "manifest": "manifest.json",
        "target_fps": spec.fps,
        "min_area": DEFAULT_MIN_AREA,
        "output_dir": "run",
    }
    if spec.blob is not None:
        pipeline["hsv"] = blob_thresholds(spec.blob).to_pairs()

    paths = {
        "manifest": write_json_atomic(out / "manifest.json", manifest),
        "ground_truth": write_json_atomic(out / "ground_truth.json", ground_truth_to_dict(spec, truth)),
        "background": write_ppm_atomic(out / "background.ppm", truth.background),
        "pipeline": write_json_atomic(out / "pipeline.json", pipeline),
        "frames": out,
    }
    logger.info(f"시나리오 '{spec.name}' 기록 완료: {out}")
    return paths
