#!/usr/bin/env python3
"""
분석 결과 평가 도구

합성 시나리오의 ground_truth.json 과 파이프라인 출력 디렉토리를 비교해
정합 모서리 오차, 프레임별 무게중심 오차, 보정된 중력 오차를 보고합니다.

사용법:
    python tools/evaluate_run.py synth_static/run synth_static/ground_truth.json
"""
import sys
import json
import argparse
from pathlib import Path

import numpy as np

# 저장소 루트에서 실행하지 않아도 패키지를 찾을 수 있도록
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from divetrack.models.geometry import AffineTransform  # noqa: E402
from divetrack.services.registration import compose, invert  # noqa: E402
from divetrack.services.trajectory import parse_trajectory_csv  # noqa: E402


def load_json(path: Path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def registration_errors(estimated, truth, frame_size):
    """
    프레임별 정합 모서리 오차 (0번 프레임 좌표계, 픽셀)

    Parameters:
    -----------
    estimated : list
        transforms.json 의 프레임 → 파노라마 변환
    truth : list
        정답 월드 → 프레임 변환
    frame_size : tuple
        (w, h)
    """
    w, h = frame_size
    corners = np.array([[0, 0], [w, 0], [0, h], [w, h]], dtype=np.float64)
    offset = estimated[0]
    errors = []
    for est, cam in zip(estimated, truth):
        to_frame0 = compose(invert(offset), est)
        expected = compose(truth[0], invert(cam))
        errors.append(float(np.abs(to_frame0.apply(corners) - expected.apply(corners)).max()))
    return errors


def barycentre_errors(samples, estimated, truth, centres):
    """프레임별 무게중심 오차 (검출 실패 프레임은 None)"""
    world_to_panorama = compose(estimated[0], truth[0])
    errors = {}
    for s in samples:
        centre = centres[s.frame_index] if s.frame_index < len(centres) else None
        if not s.valid or centre is None:
            errors[s.frame_index] = None
            continue
        cx, cy = world_to_panorama.apply([centre])[0]
        errors[s.frame_index] = float(np.hypot(s.x - cx, s.y - cy))
    return errors


def main():
    """메인 함수"""
    parser = argparse.ArgumentParser(description="파이프라인 결과를 합성 정답과 비교")
    parser.add_argument("run_dir", help="파이프라인 출력 디렉토리")
    parser.add_argument("ground_truth", help="ground_truth.json 경로")
    parser.add_argument("--max-error", type=float, default=2.0, help="허용 무게중심 오차 (픽셀)")
    parser.add_argument("--min-fraction", type=float, default=0.95, help="허용 오차 안 프레임 비율 하한")
    args = parser.parse_args()

    run_dir = Path(args.run_dir)
    truth = load_json(Path(args.ground_truth))

    print("\n===== 분석 결과 평가 =====")
    print(f"[*] 시나리오: {truth.get('name')} (시드 {truth.get('seed')})")

    estimated = [AffineTransform.from_matrix(m) for m in load_json(run_dir / "transforms.json")]
    cameras = [AffineTransform.from_matrix(m) for m in truth["transforms"]]
    if len(estimated) != len(cameras):
        print(f"[!] 프레임 수가 다릅니다: 결과 {len(estimated)}, 정답 {len(cameras)}")
        return 1

    reg = registration_errors(estimated, cameras, truth["frame_size"])
    print(f"[*] 정합 모서리 오차: 최대 {max(reg):.3f}px, 평균 {np.mean(reg):.3f}px")

    samples = parse_trajectory_csv((run_dir / "raw_trajectory.csv").read_bytes(), "raw_trajectory.csv")
    bary = barycentre_errors(samples, estimated, cameras, truth["centres"])
    measured = [e for e in bary.values() if e is not None]
    within = sum(1 for e in measured if e <= args.max_error)
    fraction = within / max(len(bary), 1)
    print(f"[*] 무게중심 검출: {len(measured)}/{len(bary)} 프레임")
    if measured:
        print(f"[*] 무게중심 오차: 최대 {max(measured):.3f}px, 중앙값 {np.median(measured):.3f}px")
    print(f"[*] 오차 {args.max_error}px 이내 비율: {fraction:.1%}")

    metrics_path = run_dir / "metrics.json"
    if metrics_path.exists() and truth.get("g_px"):
        fit = load_json(metrics_path).get("free_fall")
        if fit:
            rel = abs(fit["g_px"] - truth["g_px"]) / truth["g_px"]
            print(f"[*] 중력 추정: {fit['g_px']:.2f}px/s² (정답 {truth['g_px']:.2f}, 오차 {rel:.2%})")
        else:
            print("[!] metrics.json 에 자유낙하 적합이 없습니다")

    if fraction < args.min_fraction:
        print(f"[!] 허용 오차 안 프레임 비율이 {args.min_fraction:.0%} 미만입니다")
        return 1
    print("[+] 평가 통과")
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n[*] 프로그램이 중단되었습니다.")
    except Exception as e:
        print(f"\n[!] 오류 발생: {e}")
        sys.exit(1)
