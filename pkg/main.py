#!/usr/bin/env python3
"""
다이빙 무게중심 궤적 분석 도구
사용법: python main.py <sample|mosaic|track|metrics|run|synth> [옵션]
"""
import sys

from divetrack.utils.cli import main

if __name__ == "__main__":
    sys.exit(main())
