"""
코어 패키지
"""
