"""
모델 패키지
"""
