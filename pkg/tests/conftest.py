"""공통 테스트 픽스처"""
from pathlib import Path

import numpy as np
import pytest

from divetrack.models.frame import Frame
from divetrack.models.geometry import AffineTransform
from divetrack.models.synth import BackgroundSpec, BallisticPath, BlobSpec, Distractor, SynthSpec
from divetrack.services.synth import ValueNoise
from divetrack.utils.artifacts import write_json_atomic, write_ppm_atomic


def make_frame(pixels: np.ndarray, index: int = 0, fps: float = 25.0) -> Frame:
    return Frame(index=index, timestamp_s=index / fps, pixels=pixels, source_index=index)


def solid(width: int, height: int, rgb) -> np.ndarray:
    out = np.zeros((height, width, 3), dtype=np.uint8)
    out[:, :] = rgb
    return out


def textured_gray(width: int, height: int, seed: int = 0, scale: float = 12.0,
                  offset=(0.0, 0.0)) -> np.ndarray:
    """값 노이즈 밝기 래스터 (offset만큼 이동한 창)"""
    noise = ValueNoise(BackgroundSpec(seed=seed, feature_scale=scale, world_size=(width + 64, height + 64)))
    x, y = np.meshgrid(np.arange(width, dtype=np.float64) + offset[0],
                       np.arange(height, dtype=np.float64) + offset[1])
    return noise.gray(x, y)


def write_manifest(directory: Path, rasters, source_fps: float = 25.0, **extra) -> Path:
    names = []
    for k, raster in enumerate(rasters):
        name = f"f{k:04d}.ppm"
        write_ppm_atomic(directory / name, raster)
        names.append(name)
    payload = {"source_fps": source_fps, "frames": names}
    payload.update(extra)
    return write_json_atomic(directory / "manifest.json", payload)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_spec() -> SynthSpec:
    """
    작은 고정 카메라 다이빙 시나리오 (20프레임, 240×200)

    정점 t=0.5s, 높이 125px. 수면선(0번 프레임 120행)은 20프레임 안에 교차하지 않습니다.
    """
    background = BackgroundSpec(seed=7, world_size=(400, 400),
                                distractors=[Distractor(x0=100, y0=140, x1=130, y1=160)])
    blob = BlobSpec(radius_px=8.0,
                    trajectory=BallisticPath(x0=180.0, y0=300.0, vx0=20.0, vy0=500.0, g_px=1000.0))
    return SynthSpec(
        name="tiny", seed=3, frame_size=(240, 200), n_frames=20, fps=25.0,
        camera_path=[AffineTransform.translation(-80.0, -120.0)] * 20,
        background=background, blob=blob, noise_sigma=2.0,
    )


@pytest.fixture
def tiny_dive_spec() -> SynthSpec:
    return tiny_spec()
