#!/usr/bin/env python3
"""
유틸리티 모듈 패키지
"""

from .pnm import decode_image, pnm_decoder, pnm_encoder
from .artifacts import write_bytes_atomic, write_json_atomic

__all__ = ['decode_image', 'pnm_decoder', 'pnm_encoder', 'write_bytes_atomic', 'write_json_atomic']
