"""
分析：譜、失穩設計與衰減率
"""
