#!/usr/bin/env python3
"""
명령행 인터페이스 유틸리티
명령행에서 다이빙 궤적 분석 파이프라인을 단계별 또는 전체로 실행합니다.
"""
import sys
import json
import argparse
from pathlib import Path
from typing import Optional, Sequence

from ..core.config import config, load_pipeline_config, set_package_log_level
from ..core.errors import DivetrackError
from ..services.pipeline import ARTIFACTS, STAGES, PipelineController
from ..services.synth import standard_scenarios, write_scenario
from .artifacts import dumps_json, write_bytes_atomic


def parse_args(argv: Optional[Sequence[str]] = None):
    """
    명령행 인수 분석

    Returns:
    --------
    argparse.Namespace
        파싱된 명령행 인수
    """
    # 모든 명령 공통 옵션
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="파이프라인 설정 JSON 경로")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="설정 덮어쓰기 (예: --set ransac.seed=3), 여러 번 지정 가능")
    common.add_argument("--out", help="출력 디렉토리 (설정의 output_dir 보다 우선)")
    common.add_argument("--verbose", action="store_true", help="DEBUG 로그 출력")

    parser = argparse.ArgumentParser(prog="divetrack", description="다이빙 무게중심 궤적 분석 도구")
    subparsers = parser.add_subparsers(dest="command", help="명령")

    subparsers.add_parser("sample", parents=[common], help="분석 프레임률로 프레임 선택")
    mosaic_parser = subparsers.add_parser("mosaic", parents=[common], help="정합 및 파노라마 합성")
    mosaic_parser.add_argument("--composite-mode", choices=["median", "mean"], help="합성 방식")
    subparsers.add_parser("track", parents=[common], help="프레임별 무게중심 검출")
    subparsers.add_parser("metrics", parents=[common], help="평활, 보정, 지표 계산")
    run_parser = subparsers.add_parser("run", parents=[common], help="전체 파이프라인 실행")
    run_parser.add_argument("--composite-mode", choices=["median", "mean"], help="합성 방식")

    synth_parser = subparsers.add_parser("synth", parents=[common], help="합성 검증 시나리오 생성")
    synth_parser.add_argument("--scenario", choices=["static", "vibration", "panning"], default="static",
                              help="표준 시나리오 이름")
    synth_parser.add_argument("--seed", type=int, default=0, help="시나리오 시드")

    return parser.parse_args(argv)


def print_header():
    """
    프로그램 헤더 출력
    """
    info = config.get_app_info()
    print("\n" + "=" * 60)
    print("  다이빙 무게중심 궤적 분석 - 명령행 도구")
    print("  버전:", info["version"])
    print("=" * 60)


def write_error_report(error: DivetrackError, out_dir: Optional[Path]) -> None:
    """오류 보고서를 stderr와 (가능하면) 출력 디렉토리에 기록"""
    report = error.to_report()
    print(json.dumps(report, ensure_ascii=False), file=sys.stderr)
    if out_dir is None:
        return
    try:
        write_bytes_atomic(Path(out_dir) / ARTIFACTS.error_report, dumps_json(report))
    except DivetrackError as e:
        print(f"[!] 오류 보고서 기록 실패: {e.message}", file=sys.stderr)


def handle_stage_command(args) -> int:
    """
    파이프라인 단계 명령 처리
    """
    overrides = list(args.overrides)
    if getattr(args, "composite_mode", None):
        overrides.append(f"composite_mode={args.composite_mode}")
    pipeline_config = load_pipeline_config(args.config, overrides, args.out)
    controller = PipelineController(pipeline_config)

    print(f"[*] '{args.command}' 실행 중... (출력: {controller.out_dir})")
    try:
        outputs = controller.run_stage(args.command)
    except DivetrackError as e:
        print(f"[!] {args.command} 실패 ({e.stage}): {e.message}")
        write_error_report(e, controller.out_dir)
        return e.exit_code

    if not isinstance(outputs, dict):
        outputs = {args.command: outputs}
    for name, path in outputs.items():
        print(f"[+] {name}: {path}")
    return 0


def handle_synth_command(args) -> int:
    """
    합성 시나리오 명령 처리
    """
    out_dir = Path(args.out or f"synth_{args.scenario}")
    spec = standard_scenarios(args.seed)[args.scenario]
    print(f"[*] 시나리오 '{args.scenario}' 생성 중... ({spec.n_frames}프레임)")
    paths = write_scenario(spec, out_dir)
    print(f"[+] 매니페스트: {paths['manifest']}")
    print(f"[+] 정답: {paths['ground_truth']}")
    print(f"[+] 설정: {paths['pipeline']}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    메인 함수
    """
    args = parse_args(argv)
    print_header()

    if not args.command:
        print("[!] 에러: 명령이 지정되지 않았습니다.")
        print(f"[*] 사용 가능한 명령: {', '.join(STAGES)}, run, synth")
        return 1

    if args.verbose:
        set_package_log_level("DEBUG")

    out_dir = Path(args.out) if args.out else None
    try:
        if args.command == "synth":
            return handle_synth_command(args)
        return handle_stage_command(args)
    except DivetrackError as e:
        print(f"[!] 에러: {e.message}")
        write_error_report(e, out_dir)
        return e.exit_code
    except Exception as e:
        print(f"[!] 예기치 않은 오류: {e}")
        report = {"error": type(e).__name__, "exit_code": 1, "stage": None, "frames": [], "message": str(e)}
        print(json.dumps(report, ensure_ascii=False), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
