"""
导引波弛豫模拟器测试
"""
