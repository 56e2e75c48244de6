"""
工具模块：全局配置与日志
"""
