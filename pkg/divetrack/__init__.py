"""
다이빙 무게중심 궤적 분석 패키지
"""
