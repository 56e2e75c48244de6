"""
核心引擎：网格与谱算子、波函数求解、粒子系综、监测量、场景与实验、存储与绘图
"""
__version__ = "0.1.0"
