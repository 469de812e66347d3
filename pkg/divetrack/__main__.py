#!/usr/bin/env python3
"""
python -m divetrack 진입점
"""
import sys

from .utils.cli import main

if __name__ == "__main__":
    sys.exit(main())
