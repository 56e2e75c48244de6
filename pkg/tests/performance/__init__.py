"""
标准场景验收测试（标记为 slow）
"""
