"""
数值基础模块
均匀一维网格、谱微分、求积与三次样条插值，供所有场运算使用
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import ClassVar, Union

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import CubicSpline

from utils.config import config
from utils.logger import logger
from core.exceptions import ConfigurationError, GridAlignmentError, OutOfDomainError


class Boundary(str, Enum):
    """边界条件"""
    PERIODIC = "periodic"
    BOX = "box"


@dataclass(frozen=True)
class SpatialGrid:
    """
    均匀一维网格

    periodic: 节点 x_min + i·h，h = L/n
    box: 只存内部点 x_min + (i+1)·h，h = L/(n+1)，两壁处场恒为零
    """
    n_points: int
    x_min: float = 0.0
    x_max: float = 1.0
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, 'boundary', Boundary(self.boundary))
        min_points = config.get('NUMERICS.min_points', 8)
        if int(self.n_points) != self.n_points or self.n_points < min_points:
            raise ConfigurationError(f"网格点数必须为不小于 {min_points} 的整数: {self.n_points}")
        if not self.x_max > self.x_min:
            raise ConfigurationError(f"需要 x_max > x_min: [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, 'n_points', int(self.n_points))

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def is_periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def spacing(self) -> float:
        if self.is_periodic:
            return self.length / self.n_points
        return self.length / (self.n_points + 1)

    @cached_property
    def x(self) -> np.ndarray:
        """网格节点坐标"""
        offset = 0 if self.is_periodic else 1
        nodes = self.x_min + self.spacing * np.arange(offset, self.n_points + offset)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def closed_nodes(self) -> np.ndarray:
        """包含端点的节点：periodic 末尾补 x_max，box 两端补墙"""
        if self.is_periodic:
            nodes = np.append(self.x, self.x_max)
        else:
            nodes = np.concatenate(([self.x_min], self.x, [self.x_max]))
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """谱基的波数：periodic 为 FFT 波数，box 为正弦模 jπ/L"""
        if self.is_periodic:
            k = 2.0 * np.pi * sfft.fftfreq(self.n_points, d=self.spacing)
        else:
            k = np.pi * np.arange(1, self.n_points + 1) / self.length
        k.flags.writeable = False
        return k

    def close(self, values: np.ndarray) -> np.ndarray:
        """把网格值扩展到 closed_nodes 上（周期回绕或墙上补零）"""
        if self.is_periodic:
            return np.append(values, values[:1])
        zero = np.zeros(1, dtype=values.dtype)
        return np.concatenate((zero, values, zero))

    def quadrature(self, values: np.ndarray) -> float:
        """
        与边界类型一致的求积

        周期网格上的矩形公式与梯形公式相同；box 网格墙上值为零，
        梯形公式退化为内部点求和
        """
        return float(self.spacing * np.sum(values))

    def wrap(self, positions: np.ndarray) -> np.ndarray:
        """周期回绕或夹到墙内"""
        if self.is_periodic:
            return self.x_min + np.mod(positions - self.x_min, self.length)
        return np.clip(positions, self.x_min, self.x_max)


@dataclass(frozen=True)
class GridField:
    """对齐到网格的场，值只读"""
    grid: SpatialGrid
    values: np.ndarray
    floored_points: int = 0

    dtype: ClassVar[type] = np.float64

    def __post_init__(self):
        values = np.array(self.values, dtype=self.dtype)
        if values.shape != (self.grid.n_points,):
            raise GridAlignmentError(
                f"场长度 {values.shape} 与网格点数 {self.grid.n_points} 不一致")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    def with_values(self, values: np.ndarray, floored_points: int = 0) -> "GridField":
        return type(self)(self.grid, values, floored_points)

    def __len__(self) -> int:
        return self.grid.n_points


class RealField(GridField):
    """实值场：ρ、f_q、R、Q、v"""
    dtype: ClassVar[type] = np.float64


class ComplexField(GridField):
    """复值场：ψ"""
    dtype: ClassVar[type] = np.complex128


def _check_same_grid(*fields: GridField) -> SpatialGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridAlignmentError(f"场不在同一网格上: {f.grid} != {grid}")
    return grid


def _sine_apply(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """在正弦基(DST-I)中乘以对角因子"""
    if np.iscomplexobj(values) or np.iscomplexobj(multiplier):
        coeffs = sfft.dst(values.real, type=1) + 1j * sfft.dst(values.imag, type=1)
        coeffs = coeffs * multiplier
        return sfft.idst(coeffs.real, type=1) + 1j * sfft.idst(coeffs.imag, type=1)
    return sfft.idst(multiplier * sfft.dst(values, type=1), type=1)


def spectral_apply(grid: SpatialGrid, values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """在网格的谱基（Fourier 或正弦）中乘以对角因子"""
    if grid.is_periodic:
        out = sfft.ifft(multiplier * sfft.fft(values))
        if not np.iscomplexobj(values) and not np.iscomplexobj(multiplier):
            return out.real
        return out
    return _sine_apply(values, multiplier)


def _sine_derivative(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """正弦级数逐项求导得到余弦级数，用 DCT-I 在内部点求值"""
    n = grid.n_points
    k = grid.wavenumbers

    def apply(real_values: np.ndarray) -> np.ndarray:
        coeffs = 2.0 * sfft.idst(real_values, type=1)
        padded = np.zeros(n + 2)
        padded[1:n + 1] = 0.5 * coeffs * k
        return sfft.dct(padded, type=1)[1:n + 1]

    if np.iscomplexobj(values):
        return apply(values.real) + 1j * apply(values.imag)
    return apply(values)


def derivative(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """谱一阶导数（数组版本）"""
    if grid.is_periodic:
        ik = 1j * grid.wavenumbers
        if grid.n_points % 2 == 0:
            ik = ik.copy()
            ik[grid.n_points // 2] = 0.0
        out = sfft.ifft(ik * sfft.fft(values))
        return out if np.iscomplexobj(values) else out.real
    return _sine_derivative(grid, values)


def gradient(f: GridField) -> GridField:
    """谱一阶导数"""
    return f.with_values(derivative(f.grid, f.values))


def laplacian(f: GridField) -> GridField:
    """
    ∇²f：周期网格用 FFT，box 网格用正弦基

    基函数的特征值为 −k²，对本征函数精确到舍入误差
    """
    grid = f.grid
    return f.with_values(spectral_apply(grid, f.values, -grid.wavenumbers ** 2))


def node_floor_value(psi_sq: np.ndarray, node_floor: float = None) -> float:
    """分母中 |ψ|² 的下限 δ_ψ = node_floor × max|ψ|²"""
    if node_floor is None:
        node_floor = config.get('NUMERICS.node_floor', 1e-12)
    peak = float(np.max(psi_sq)) if psi_sq.size else 0.0
    return max(node_floor * peak, np.finfo(float).tiny)


def gradient_log(psi: ComplexField, node_floor: float = None) -> ComplexField:
    """
    ∇ψ/ψ，按 (∇ψ)·ψ*/|ψ|² 计算，|ψ|² 取节点下限

    返回场的 floored_points 记录被下限截断的点数
    """
    values = psi.values
    psi_sq = np.abs(values) ** 2
    floor = node_floor_value(psi_sq, node_floor)
    floored = psi_sq < floor
    n_floored = int(np.count_nonzero(floored))
    if n_floored:
        logger.debug(f"gradient_log: {n_floored} 个节点点被下限截断")

    ratio = derivative(psi.grid, values) * np.conj(values) / np.maximum(psi_sq, floor)
    return ComplexField(psi.grid, ratio, n_floored)


def integrate(f: GridField) -> float:
    """∫f dx"""
    if np.iscomplexobj(f.values):
        raise TypeError("integrate 只接受实值场")
    return f.grid.quadrature(f.values)


class FieldInterpolant:
    """
    网格场的三次样条插值器

    周期网格用周期样条；box 网格把两壁的零值作为节点并对墙外位置报错
    """

    def __init__(self, f: GridField):
        self.grid = f.grid
        bc_type = 'periodic' if self.grid.is_periodic else 'not-a-knot'
        self._spline = CubicSpline(self.grid.closed_nodes, self.grid.close(f.values), bc_type=bc_type)
        self._tolerance = config.get('NUMERICS.length_tolerance', 1e-9) * self.grid.length

    def __call__(self, x: Union[float, np.ndarray]) -> Union[float, complex, np.ndarray]:
        positions = np.asarray(x, dtype=float)
        grid = self.grid
        if grid.is_periodic:
            positions = grid.wrap(positions)
        else:
            outside = (positions < grid.x_min - self._tolerance) | (positions > grid.x_max + self._tolerance)
            if np.any(outside):
                bad = positions[outside] if positions.ndim else positions
                raise OutOfDomainError(
                    f"位置 {np.atleast_1d(bad)[:3]} 不在 [{grid.x_min}, {grid.x_max}] 内")
            positions = np.clip(positions, grid.x_min, grid.x_max)

        out = self._spline(positions)
        if np.ndim(out) == 0:
            return out.item()
        return out


def interpolate(f: GridField, x: Union[float, np.ndarray]) -> Union[float, complex, np.ndarray]:
    """在任意位置对网格场做三次样条插值"""
    return FieldInterpolant(f)(x)
