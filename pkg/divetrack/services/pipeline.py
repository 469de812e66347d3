#!/usr/bin/env python3
"""
파이프라인 제어 모듈
sample → mosaic → track → metrics 단계를 실행합니다.
각 단계는 이전 단계가 디스크에 남긴 산출물만 읽으므로, 단계를 따로 실행해도 결과가 같습니다.
"""
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.config import config, setup_logging
from ..core.errors import ConfigurationError, DivetrackError, FrameFormatError, InsufficientDataError
from ..models.frame import Frame, FrameManifest
from ..models.geometry import AffineTransform, GlobalBounds
from ..models.mosaic import Panorama
from ..models.pipeline import PipelineConfig
from ..models.trajectory import Trajectory
from ..utils.artifacts import (
    read_json_artifact, require_artifact, write_bytes_atomic, write_json_atomic,
    write_pgm_atomic, write_ppm_atomic,
)
from ..utils.pnm import read_pgm, read_ppm
from . import frame_io, mosaic, registration, segmentation, trajectory

# 중앙 로깅 설정 사용
logger = setup_logging(__name__)

STAGES = ("sample", "mosaic", "track", "metrics")


@dataclass(frozen=True)
class ArtifactNames:
    """단계 산출물 파일 이름"""
    sampled_manifest: str = "sampled_manifest.json"
    panorama: str = "panorama.ppm"
    coverage: str = "coverage.pgm"
    transforms: str = "transforms.json"
    raw_trajectory: str = "raw_trajectory.csv"
    trajectory: str = "trajectory.csv"
    metrics: str = "metrics.json"
    overlay: str = "trajectory_overlay.ppm"
    error_report: str = "error_report.json"
    debug_dir: str = "debug"


ARTIFACTS = ArtifactNames()


@contextmanager
def stage_context(name: str):
    """단계 이름이 없는 오류에 현재 단계를 기록"""
    try:
        yield
    except DivetrackError as e:
        if e.stage is None:
            e.stage = name
        logger.error(f"[{name}] {type(e).__name__}: {e.message}")
        raise


def write_debug_frame(debug_dir: Path, sample, foreground, warped) -> None:
    """프레임 하나의 전경 마스크와 (표식을 그린) 변환 프레임 기록"""
    k = sample.frame_index
    write_pgm_atomic(debug_dir / f"mask_{k:04d}.pgm", foreground.bits)
    image = warped.image
    if sample.valid:
        image = segmentation.annotate_barycentre(image, sample.x, sample.y)
    write_ppm_atomic(debug_dir / f"frame_{k:04d}.ppm", image)


class PipelineController:
    """
    파이프라인 제어 클래스
    설정 하나로 단계별 실행과 전체 실행을 담당합니다.
    """

    def __init__(self, pipeline_config: PipelineConfig):
        self.config = pipeline_config
        self.out_dir = Path(pipeline_config.output_dir)
        self.threads = pipeline_config.threads

    def artifact(self, name: str) -> Path:
        return self.out_dir / name

    # ------------------------------------------------------------------
    # sample
    # ------------------------------------------------------------------
    def sample(self) -> Path:
        """매니페스트를 읽고 샘플링 계획을 기록"""
        with stage_context("sample"):
            if self.config.manifest is None:
                raise ConfigurationError("설정에 manifest 경로가 없습니다")
            manifest = frame_io.load_manifest(self.config.manifest)

            recommended = frame_io.recommended_rate(manifest)
            logger.info(f"권장 분석 프레임률 {recommended:.1f}Hz, 설정값 {self.config.target_fps}Hz")
            if self.config.target_fps < recommended:
                logger.warning(f"분석 프레임률이 권장값보다 낮습니다: {self.config.target_fps} < {recommended:.1f}")

            plan = frame_io.plan_sampling(manifest.source_fps, self.config.target_fps,
                                          len(manifest.frame_paths))
            sampled = manifest.model_copy(update={"sampling": plan})
            path = write_json_atomic(self.artifact(ARTIFACTS.sampled_manifest),
                                     frame_io.manifest_to_dict(sampled))
            logger.info(f"샘플링: 원본 {len(manifest.frame_paths)}프레임 → {len(plan.selected_indices)}프레임")
            return path

    def _load_sampled(self, stage: str) -> Tuple[FrameManifest, List[Frame]]:
        path = require_artifact(self.artifact(ARTIFACTS.sampled_manifest), stage)
        manifest = frame_io.load_manifest(path)
        plan = frame_io.plan_from_manifest(manifest, self.config.target_fps)
        return manifest, frame_io.load_frames(manifest, plan, self.threads)

    # ------------------------------------------------------------------
    # mosaic
    # ------------------------------------------------------------------
    def mosaic(self) -> Dict[str, Path]:
        """정합 + 파노라마 합성"""
        with stage_context("mosaic"):
            _, frames = self._load_sampled("mosaic")
            transforms = registration.chain_to_reference(
                frames, self.config.features, self.config.ransac,
                tolerate_failures=self.config.tolerate_registration_failures, threads=self.threads)
            panorama = mosaic.build_panorama(frames, transforms, self.config.composite_mode, self.threads)

            return {
                "panorama": write_ppm_atomic(self.artifact(ARTIFACTS.panorama), panorama.image),
                "coverage": write_pgm_atomic(self.artifact(ARTIFACTS.coverage), panorama.coverage),
                "transforms": write_json_atomic(self.artifact(ARTIFACTS.transforms),
                                                [t.to_matrix() for t in panorama.transforms]),
            }

    def _load_transforms(self, stage: str) -> List[AffineTransform]:
        data = read_json_artifact(self.artifact(ARTIFACTS.transforms), stage)
        path = self.artifact(ARTIFACTS.transforms)
        if not isinstance(data, list) or not data:
            raise FrameFormatError(f"{ARTIFACTS.transforms} 는 2×3 행렬 배열이어야 합니다", path=path, stage=stage)
        try:
            return [AffineTransform.from_matrix(m) for m in data]
        except (ValueError, TypeError) as e:
            raise FrameFormatError(f"{ARTIFACTS.transforms} 행렬 오류: {e}", path=path, stage=stage) from e

    def _load_panorama(self, stage: str, transforms: List[AffineTransform]) -> Panorama:
        image = read_ppm(require_artifact(self.artifact(ARTIFACTS.panorama), stage))
        coverage = read_pgm(require_artifact(self.artifact(ARTIFACTS.coverage), stage)).astype(np.int32)
        # 0번 프레임 변환은 파노라마 원점 이동 그 자체
        min_x, min_y = -int(round(transforms[0].tx)), -int(round(transforms[0].ty))
        height, width = image.shape[:2]
        bounds = GlobalBounds(min_x=min_x, min_y=min_y, max_x=min_x + width, max_y=min_y + height)
        return Panorama(image=image, bounds=bounds, coverage=coverage, transforms=transforms)

    # ------------------------------------------------------------------
    # track
    # ------------------------------------------------------------------
    def track(self) -> Path:
        """프레임별 무게중심 검출"""
        with stage_context("track"):
            transforms = self._load_transforms("track")
            panorama = self._load_panorama("track", transforms)
            _, frames = self._load_sampled("track")
            if len(frames) != len(transforms):
                raise FrameFormatError(
                    f"{ARTIFACTS.transforms} 의 변환 수({len(transforms)})가 프레임 수({len(frames)})와 다릅니다",
                    path=self.artifact(ARTIFACTS.transforms))

            th = self.config.hsv
            background_mask = segmentation.filter_panorama(panorama, th)
            debug_dir = self.artifact(ARTIFACTS.debug_dir) if self.config.debug else None

            def detect(args):
                frame, transform = args
                sample, foreground, warped = segmentation.detect_in_frame(
                    frame, transform, panorama, background_mask, th, self.config.min_area,
                    self.config.roi, self.config.dilation_px, self.config.connectivity)
                if debug_dir is not None:
                    write_debug_frame(debug_dir, sample, foreground, warped)
                # 래스터는 작업자 안에서 버리고 표본만 남김
                return sample

            with ThreadPoolExecutor(max_workers=max(1, self.threads)) as executor:
                samples = list(executor.map(detect, zip(frames, transforms)))

            if debug_dir is not None:
                logger.debug(f"디버그 산출물 {len(samples)}프레임 기록: {debug_dir}")
            n_valid = sum(1 for s in samples if s.valid)
            logger.info(f"무게중심 검출: {n_valid}/{len(samples)} 프레임")
            return write_bytes_atomic(self.artifact(ARTIFACTS.raw_trajectory),
                                      trajectory.export_trajectory_csv(Trajectory(samples=samples)))

    # ------------------------------------------------------------------
    # metrics
    # ------------------------------------------------------------------
    def metrics(self) -> Dict[str, Path]:
        """평활, 자유낙하 보정, 지표 계산"""
        with stage_context("metrics"):
            raw_path = require_artifact(self.artifact(ARTIFACTS.raw_trajectory), "metrics")
            samples = trajectory.parse_trajectory_csv(raw_path.read_bytes(), str(raw_path))
            manifest = frame_io.load_manifest(
                require_artifact(self.artifact(ARTIFACTS.sampled_manifest), "metrics"))
            transforms = self._load_transforms("metrics")
            panorama_image = read_ppm(require_artifact(self.artifact(ARTIFACTS.panorama), "metrics"))

            traj = trajectory.build_trajectory(samples, self.config.smoothing_window, self.config.max_gap)

            water_line = None
            if manifest.water_line_y_global is not None:
                water_line = manifest.water_line_y_global + transforms[0].ty

            fit, px_per_m = self._calibrate(traj, water_line, manifest.g)
            metrics = trajectory.compute_metrics(traj, px_per_m, water_line)

            return {
                "trajectory": write_bytes_atomic(self.artifact(ARTIFACTS.trajectory),
                                                 trajectory.export_trajectory_csv(traj)),
                "metrics": write_bytes_atomic(self.artifact(ARTIFACTS.metrics),
                                              trajectory.export_metrics_json(metrics, fit)),
                "overlay": write_ppm_atomic(self.artifact(ARTIFACTS.overlay),
                                            trajectory.render_overlay(panorama_image, traj)),
            }

    def _calibrate(self, traj: Trajectory, water_line: Optional[float], g: float):
        """평활 전 시계열로 자유낙하 적합 (입수 전까지)"""
        series = trajectory.fit_series(traj)
        segment = None
        if series:
            t_end = series[-1][0]
            if water_line is not None:
                entry = trajectory.find_water_entry(traj, water_line)
                if entry is not None:
                    t_end = entry[0]
            segment = (series[0][0], t_end)

        try:
            fit = trajectory.fit_free_fall(series, segment)
        except InsufficientDataError as e:
            logger.warning(f"자유낙하 적합 생략: {e.message}")
            return None, None

        if not fit.is_physical:
            logger.warning("자유낙하 적합이 물리적이지 않아 미터 환산을 생략합니다")
            return fit, None
        px_per_m = trajectory.calibrate_scale(fit, g)
        logger.info(f"보정: g_px={fit.g_px:.2f}px/s², {px_per_m:.3f}px/m (잔차 RMS {fit.rms_residual:.3f}px)")
        return fit, px_per_m

    # ------------------------------------------------------------------
    def run(self) -> Dict[str, Path]:
        """네 단계를 순서대로 실행"""
        logger.info(f"{config.app_name} {config.app_version} 파이프라인 시작: {self.out_dir}")
        outputs: Dict[str, Path] = {"sampled_manifest": self.sample()}
        outputs.update(self.mosaic())
        outputs["raw_trajectory"] = self.track()
        outputs.update(self.metrics())
        logger.info("파이프라인 완료")
        return outputs

    def run_stage(self, name: str):
        if name not in STAGES and name != "run":
            raise ValueError(f"알 수 없는 단계: {name}")
        return getattr(self, name)()


def run_pipeline(pipeline_config: PipelineConfig) -> Dict[str, Path]:
    """설정 하나로 전체 파이프라인 실행"""
    return PipelineController(pipeline_config).run()
