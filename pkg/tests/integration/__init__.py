"""
集成测试：缩小规模的实验驱动与命令行
"""
