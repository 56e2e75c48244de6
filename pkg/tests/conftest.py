"""
测试公共配置与夹具
"""
import os
import sys

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from core.numerics import Boundary, SpatialGrid
from core.wave import WaveSolver, superposition


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 标准规模的验收运行（-m 'not slow' 跳过）")


@pytest.fixture
def box_grid():
    return SpatialGrid(128, 0.0, 1.0, Boundary.BOX)


@pytest.fixture
def periodic_grid():
    return SpatialGrid(128, 0.0, 1.0, Boundary.PERIODIC)


@pytest.fixture
def box_solver(box_grid):
    return WaveSolver(box_grid)


@pytest.fixture
def three_mode_state(box_grid):
    """box 上 3 个模式的叠加态"""
    return superposition(box_grid, [1, 2, 3], [1.0, 0.6 * np.exp(0.4j), 0.3 * np.exp(2.1j)])


@pytest.fixture
def rng():
    return np.random.default_rng(7)
