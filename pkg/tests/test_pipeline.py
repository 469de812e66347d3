"""전체 파이프라인 / 단계 산출물 테스트"""
import gc
import json
import weakref

import numpy as np
import pytest

from divetrack.core.config import DEFAULT_GRAVITY, load_pipeline_config
from divetrack.core.errors import ArtifactMissingError, ConfigurationError
from divetrack.models.geometry import AffineTransform
from divetrack.services import segmentation, synth, trajectory
from divetrack.services.pipeline import ARTIFACTS, PipelineController, run_pipeline
from divetrack.services.registration import compose, invert
from divetrack.services.trajectory import parse_trajectory_csv
from divetrack.utils.cli import main
from divetrack.utils.pnm import read_pgm, read_ppm

from conftest import tiny_spec


def scenario_config(directory, out_name, *overrides):
    return load_pipeline_config(directory / "pipeline.json", list(overrides), directory / out_name)


def centres_in_panorama(spec, transforms_json):
    """정답 중심을 파노라마 좌표로"""
    offset = AffineTransform.from_matrix(transforms_json[0])
    to_frame0 = spec.camera(0)
    out = []
    for k in range(spec.n_frames):
        world = spec.blob.trajectory.position(spec.time(k))
        out.append(compose(offset, to_frame0).apply([world])[0])
    return np.array(out)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    directory = tmp_path_factory.mktemp("tiny")
    synth.write_scenario(tiny_spec(), directory)
    outputs = run_pipeline(scenario_config(directory, "run", "threads=2"))
    return directory, outputs


class TestTinyRun:
    def test_artifacts_written(self, tiny_run):
        directory, outputs = tiny_run
        run = directory / "run"
        for name in (ARTIFACTS.sampled_manifest, ARTIFACTS.panorama, ARTIFACTS.coverage, ARTIFACTS.transforms,
                     ARTIFACTS.raw_trajectory, ARTIFACTS.trajectory, ARTIFACTS.metrics, ARTIFACTS.overlay):
            assert (run / name).is_file(), name
        assert outputs["metrics"] == run / ARTIFACTS.metrics
        assert not (run / ARTIFACTS.debug_dir).exists()

    def test_static_camera_registers_to_identity(self, tiny_run):
        directory, _ = tiny_run
        transforms = json.loads((directory / "run" / ARTIFACTS.transforms).read_text())
        assert len(transforms) == 20
        reference = AffineTransform.from_matrix(transforms[0])
        corners = np.array([[0, 0], [240, 0], [0, 200], [240, 200]], dtype=float)
        for matrix in transforms:
            t = AffineTransform.from_matrix(matrix)
            assert np.abs(t.apply(corners) - reference.apply(corners)).max() < 0.5

    def test_barycentres_follow_ground_truth(self, tiny_run):
        directory, _ = tiny_run
        run = directory / "run"
        samples = parse_trajectory_csv((run / ARTIFACTS.raw_trajectory).read_bytes())
        truth = centres_in_panorama(tiny_spec(), json.loads((run / ARTIFACTS.transforms).read_text()))
        valid = [s for s in samples if s.valid]
        assert len(valid) >= 0.95 * len(samples)
        errors = [np.hypot(s.x - truth[s.frame_index][0], s.y - truth[s.frame_index][1]) for s in valid]
        assert max(errors) <= 2.0

    def test_metrics(self, tiny_run):
        directory, _ = tiny_run
        metrics = json.loads((directory / "run" / ARTIFACTS.metrics).read_text())
        # 정점 높이 125px (평활 편향 포함)
        assert metrics["max_height_px"] == pytest.approx(125.0, abs=3.0)
        assert metrics["t_apex"] == pytest.approx(0.5, abs=0.05)
        assert metrics["entry_t"] is None
        assert metrics["px_per_m"] == pytest.approx(1000.0 / 9.81, rel=0.03)
        assert metrics["free_fall"]["g_px"] == pytest.approx(1000.0, rel=0.03)

    def test_trajectory_csv_has_smoothed_columns(self, tiny_run):
        directory, _ = tiny_run
        lines = (directory / "run" / ARTIFACTS.trajectory).read_text().splitlines()
        assert lines[0] == "frame,t,x,y,valid,interpolated,area,x_smooth,y_smooth"
        assert len(lines) == 21
        assert all(line.split(",")[7] != "" for line in lines[1:])

    def test_rerun_is_byte_identical(self, tiny_run):
        directory, _ = tiny_run
        run_pipeline(scenario_config(directory, "again", "threads=1"))
        for name in (ARTIFACTS.transforms, ARTIFACTS.panorama, ARTIFACTS.raw_trajectory,
                     ARTIFACTS.trajectory, ARTIFACTS.metrics):
            assert (directory / "again" / name).read_bytes() == (directory / "run" / name).read_bytes(), name

    def test_stages_one_by_one(self, tiny_run):
        directory, _ = tiny_run
        cfg = scenario_config(directory, "staged", "threads=3")
        for stage in ("sample", "mosaic", "track", "metrics"):
            PipelineController(cfg).run_stage(stage)
        for name in (ARTIFACTS.transforms, ARTIFACTS.raw_trajectory, ARTIFACTS.metrics):
            assert (directory / "staged" / name).read_bytes() == (directory / "run" / name).read_bytes(), name


class TestStageErrors:
    def test_track_without_transforms(self, tmp_path):
        synth.write_scenario(tiny_spec(), tmp_path)
        controller = PipelineController(scenario_config(tmp_path, "run"))
        controller.sample()
        with pytest.raises(ArtifactMissingError) as exc:
            controller.track()
        assert ARTIFACTS.transforms in exc.value.message
        assert exc.value.stage == "track"
        assert exc.value.exit_code == 3

    def test_sample_without_manifest(self, tmp_path):
        controller = PipelineController(load_pipeline_config(None, output_dir=tmp_path))
        with pytest.raises(ConfigurationError) as exc:
            controller.sample()
        assert exc.value.stage == "sample"

    def test_unknown_stage(self, tmp_path):
        with pytest.raises(ValueError):
            PipelineController(load_pipeline_config(None, output_dir=tmp_path)).run_stage("export")


def test_debug_outputs(tmp_path):
    synth.write_scenario(tiny_spec(), tmp_path)
    run_pipeline(scenario_config(tmp_path, "run", "debug=true", "composite_mode=mean"))
    debug = tmp_path / "run" / ARTIFACTS.debug_dir
    assert (debug / "mask_0000.pgm").is_file()
    assert (debug / "frame_0019.ppm").is_file()


def test_track_keeps_only_samples(tmp_path, monkeypatch):
    synth.write_scenario(tiny_spec(), tmp_path)
    controller = PipelineController(scenario_config(tmp_path, "run", "debug=true", "threads=2"))
    controller.sample()
    controller.mosaic()

    warped_refs = []
    detect = segmentation.detect_in_frame

    def recording_detect(*args, **kwargs):
        sample, foreground, warped = detect(*args, **kwargs)
        warped_refs.append(weakref.ref(warped.image))
        return sample, foreground, warped

    alive_at_export = []
    export = trajectory.export_trajectory_csv

    def checking_export(traj):
        gc.collect()
        alive_at_export.append(sum(ref() is not None for ref in warped_refs))
        return export(traj)

    monkeypatch.setattr(segmentation, "detect_in_frame", recording_detect)
    monkeypatch.setattr(trajectory, "export_trajectory_csv", checking_export)
    controller.track()

    assert len(warped_refs) == 20
    # 변환된 프레임은 CSV 기록 전에 모두 해제됨
    assert alive_at_export == [0]
    debug = tmp_path / "run" / ARTIFACTS.debug_dir
    assert len(list(debug.glob("mask_*.pgm"))) == 20
    assert len(list(debug.glob("frame_*.ppm"))) == 20


def corner_errors(spec, transforms):
    """프레임별 최대 모서리 오차 (0번 프레임 좌표계, 픽셀)"""
    width, height = spec.frame_size
    corners = np.array([[0, 0], [width, 0], [0, height], [width, height]], dtype=float)
    offset = transforms[0]
    errors = []
    for k, t in enumerate(transforms):
        estimated = compose(invert(offset), t)
        truth = compose(spec.camera(0), invert(spec.camera(k)))
        errors.append(np.hypot(*(estimated.apply(corners) - truth.apply(corners)).T).max())
    return np.array(errors)


def background_error(spec, directory, run, min_coverage=5):
    """coverage ≥ min_coverage 픽셀에서 채널별 파노라마-실제 배경 평균 절대 오차"""
    panorama = read_ppm(run / ARTIFACTS.panorama).astype(np.float64)
    coverage = read_pgm(run / ARTIFACTS.coverage)
    background = read_ppm(directory / "background.ppm").astype(np.float64)
    offset = AffineTransform.from_matrix(json.loads((run / ARTIFACTS.transforms).read_text())[0])

    # 파노라마 → 0번 프레임 → 월드 (모든 표준 시나리오에서 정수 이동)
    to_world = compose(invert(spec.camera(0)), invert(offset))
    sx, sy = int(round(to_world.tx)), int(round(to_world.ty))
    ys, xs = np.nonzero(coverage >= min_coverage)
    wx, wy = xs + sx, ys + sy
    inside = (wx >= 0) & (wx < background.shape[1]) & (wy >= 0) & (wy < background.shape[0])
    diff = np.abs(panorama[ys[inside], xs[inside]] - background[wy[inside], wx[inside]])
    return diff.mean(axis=0)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["static", "vibration", "panning"])
def test_standard_scenario(tmp_path, name):
    spec = synth.standard_scenarios()[name]
    synth.write_scenario(spec, tmp_path)
    run_pipeline(scenario_config(tmp_path, "run"))
    run = tmp_path / "run"

    # 정합: 모서리 오차 평균 ≤ 0.5px, 최대 ≤ 1.5px
    transforms = [AffineTransform.from_matrix(m) for m in json.loads((run / ARTIFACTS.transforms).read_text())]
    errors = corner_errors(spec, transforms)
    assert errors.mean() <= 0.5
    assert errors.max() <= 1.5

    # 중앙값 파노라마는 다이버를 지운 실제 배경과 같아야 함
    assert background_error(spec, tmp_path, run).max() <= 3.0

    # 원시 무게중심: 95% 이상 프레임에서 2px 이내
    samples = parse_trajectory_csv((run / ARTIFACTS.raw_trajectory).read_bytes())
    truth = centres_in_panorama(spec, [transforms[0].to_matrix()])
    good = [s for s in samples
            if s.valid and np.hypot(s.x - truth[s.frame_index][0], s.y - truth[s.frame_index][1]) <= 2.0]
    assert len(good) >= 0.95 * spec.n_frames

    # 평활: 수평은 오차 감소, 수직은 포물선 곡률에 의한 이동평균 편향(g·Δt²) 이내
    rows = [line.split(",") for line in (run / ARTIFACTS.trajectory).read_text().splitlines()[1:]]
    rows = [r for r in rows if r[4] == "1" and r[7] != ""]
    frame = np.array([int(r[0]) for r in rows])
    raw = np.array([[float(r[2]), float(r[3])] for r in rows]) - truth[frame]
    smoothed = np.array([[float(r[7]), float(r[8])] for r in rows]) - truth[frame]
    rms_raw = np.sqrt(np.mean(raw ** 2, axis=0))
    rms_smoothed = np.sqrt(np.mean(smoothed ** 2, axis=0))
    assert rms_smoothed[0] < rms_raw[0]
    assert rms_smoothed[1] <= 1.25 * rms_raw[1] + synth.G_PX / synth.FPS ** 2

    metrics = json.loads((run / ARTIFACTS.metrics).read_text())
    assert metrics["free_fall"]["g_px"] == pytest.approx(synth.G_PX, rel=0.02)
    assert metrics["entry_t"] is not None
    # 정점 높이: vy0² / (2·g_px) 픽셀을 실제 배율 g_px / g 로 환산
    apex_m = synth.VY0 ** 2 / (2.0 * synth.G_PX) / (synth.G_PX / DEFAULT_GRAVITY)
    assert metrics["max_height_m"] == pytest.approx(apex_m, rel=0.02)


@pytest.mark.slow
def test_mean_composite_matches_median_without_diver(tmp_path):
    spec = synth.standard_scenarios()["vibration"].model_copy(update={"blob": None})
    synth.write_scenario(spec, tmp_path)
    config_path = str(tmp_path / "pipeline.json")
    for mode in ("median", "mean"):
        out = str(tmp_path / mode)
        assert main(["sample", "--config", config_path, "--out", out]) == 0
        assert main(["mosaic", "--config", config_path, "--out", out, "--composite-mode", mode]) == 0

    median = read_ppm(tmp_path / "median" / ARTIFACTS.panorama).astype(np.float64)
    mean = read_ppm(tmp_path / "mean" / ARTIFACTS.panorama).astype(np.float64)
    coverage = read_pgm(tmp_path / "median" / ARTIFACTS.coverage)
    np.testing.assert_array_equal(coverage, read_pgm(tmp_path / "mean" / ARTIFACTS.coverage))
    covered = coverage >= 5
    assert np.abs(median[covered] - mean[covered]).mean() <= 1.5
    assert background_error(spec, tmp_path, tmp_path / "mean").max() <= 3.0
