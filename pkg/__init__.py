"""
导引波弛豫模拟器
非线性 Schrödinger 方程、粒子系综向 Born 规则的弛豫、H 定理监测与时间反演实验

模块一律以仓库根目录为导入根（from core... / from utils...），入口为 cli.py
"""

__version__ = "0.1.0"
__author__ = "Pilot Wave Relaxation"
