"""
单元测试：网格与谱算子、波函数求解、系综、监测量、场景解析、存储与校验集
"""
