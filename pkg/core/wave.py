"""
波函数演化模块
线性 Schrödinger 方程与带阻尼项的非线性方程的谱方法推进，
以及由 Madelung 分解得到的速度场、量子势和量子力
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.logger import logger
from core.exceptions import ConfigurationError
from core.numerics import (
    ComplexField, RealField, SpatialGrid, derivative, gradient_log, laplacian,
    node_floor_value, spectral_apply,
)


@dataclass(frozen=True)
class WaveState:
    """网格上的波函数 ψ 及其时间戳"""
    psi: ComplexField
    time: float = 0.0

    @property
    def grid(self) -> SpatialGrid:
        return self.psi.grid

    @property
    def psi_sq(self) -> np.ndarray:
        return np.abs(self.psi.values) ** 2

    @property
    def norm(self) -> float:
        """∫|ψ|²dx"""
        return self.grid.quadrature(self.psi_sq)

    def evolved(self, values: np.ndarray, dt: float) -> "WaveState":
        return WaveState(ComplexField(self.grid, values), self.time + dt)


class PotentialKind(str, Enum):
    """外势类型"""
    NONE = "none"
    BOX_WALLS = "box_walls"
    HARMONIC = "harmonic"


class PhysicsParams(BaseModel):
    """物理参数：弛豫强度 α、外势 V(x)、节点下限"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    alpha: float = Field(0.5, ge=0.0)
    potential: PotentialKind = PotentialKind.NONE
    omega: float = Field(0.0, ge=0.0)
    node_floor: float = Field(1e-12, gt=0.0)

    @model_validator(mode='after')
    def _check_harmonic(self):
        if self.potential is PotentialKind.HARMONIC and self.omega <= 0:
            raise ValueError("harmonic 势需要 omega > 0")
        return self


def potential_values(grid: SpatialGrid, params: PhysicsParams) -> np.ndarray:
    """网格上的外势；box_walls 由 box 边界本身实现，内部为零"""
    if params.potential is PotentialKind.BOX_WALLS and grid.is_periodic:
        raise ConfigurationError("box_walls 势需要 box 边界")
    if params.potential is PotentialKind.HARMONIC:
        center = 0.5 * (grid.x_min + grid.x_max)
        return 0.5 * params.omega ** 2 * (grid.x - center) ** 2
    return np.zeros(grid.n_points)


def eigenstate(grid: SpatialGrid, n: int) -> np.ndarray:
    """
    网格谱基的归一化模

    box: √(2/L)·sin(nπ(x−x_min)/L)，n ≥ 1
    periodic: e^{2πin(x−x_min)/L}/√L
    """
    s = grid.x - grid.x_min
    if grid.is_periodic:
        return np.exp(2j * np.pi * n * s / grid.length) / np.sqrt(grid.length)
    if n < 1:
        raise ConfigurationError(f"box 模式编号必须 ≥ 1: {n}")
    return np.sqrt(2.0 / grid.length) * np.sin(n * np.pi * s / grid.length) + 0j


def superposition(grid: SpatialGrid, modes: Sequence[int], coefficients: Sequence[complex],
                  normalize: bool = True, time: float = 0.0) -> WaveState:
    """按 (模式, 复系数) 叠加出初始波函数"""
    coefficients = np.asarray(coefficients, dtype=complex)
    if len(modes) != len(coefficients):
        raise ConfigurationError("模式与系数个数不一致")
    if not np.any(np.abs(coefficients) > 0):
        raise ConfigurationError("初始 ψ 的系数不能全为零")

    psi = np.zeros(grid.n_points, dtype=complex)
    for n, c in zip(modes, coefficients):
        psi += c * eigenstate(grid, int(n))

    if normalize:
        psi /= np.sqrt(grid.quadrature(np.abs(psi) ** 2))
    return WaveState(ComplexField(grid, psi), time)


def gaussian_packet(grid: SpatialGrid, sigma0: float, t: float = 0.0,
                    x0: float = 0.0, k0: float = 0.0) -> WaveState:
    """自由高斯波包的解析解（ħ = m = 1）"""
    x = grid.x
    width = sigma0 + 0.5j * t / sigma0
    shift = x - x0 - k0 * t
    psi = ((2.0 * np.pi) ** -0.25 / np.sqrt(width)
           * np.exp(-shift ** 2 / (4.0 * sigma0 * width))
           * np.exp(1j * k0 * (x - x0) - 0.5j * k0 ** 2 * t))
    return WaveState(ComplexField(grid, psi), t)


def damping_rate(fq: RealField, alpha: float) -> RealField:
    """g(f_q) = α(1 − f_q)，在 f_q = 1 处变号"""
    return RealField(fq.grid, alpha * (1.0 - fq.values))


class WaveSolver:
    """波函数求解器"""

    def __init__(self, grid: SpatialGrid, params: Optional[PhysicsParams] = None):
        self.grid = grid
        self.params = params or PhysicsParams()
        self._potential = potential_values(grid, self.params)
        self._has_potential = bool(np.any(self._potential != 0.0))

        # 传播子按 dt 缓存，主步与粒子半步交替使用
        self._propagators = {}
        self._kinetic_phase = None
        self._potential_half = None

        logger.info(f"波函数求解器初始化完成: n={grid.n_points}, boundary={grid.boundary.value}, "
                    f"alpha={self.params.alpha}, potential={self.params.potential.value}")

    @property
    def potential(self) -> np.ndarray:
        return self._potential

    def _set_dt(self, dt: float):
        if dt <= 0:
            raise ValueError(f"时间步长必须为正: {dt}")
        if dt not in self._propagators:
            self._propagators[dt] = (np.exp(-0.5j * self.grid.wavenumbers ** 2 * dt),
                                     np.exp(-0.5j * self._potential * dt))
        self._kinetic_phase, self._potential_half = self._propagators[dt]

    def velocity_field(self, w: WaveState) -> RealField:
        """导引速度 v = Im(∇ψ/ψ)（ħ = m = 1）"""
        ratio = gradient_log(w.psi, self.params.node_floor)
        return RealField(self.grid, ratio.values.imag, ratio.floored_points)

    def quantum_potential(self, w: WaveState) -> RealField:
        """Q = −(1/2)∇²R/R，R = |ψ|，R² 取节点下限"""
        amplitude = np.abs(w.psi.values)
        lap = laplacian(RealField(self.grid, amplitude)).values
        psi_sq = amplitude ** 2
        floor = node_floor_value(psi_sq, self.params.node_floor)
        n_floored = int(np.count_nonzero(psi_sq < floor))
        return RealField(self.grid, -0.5 * lap / np.sqrt(np.maximum(psi_sq, floor)), n_floored)

    def quantum_force(self, w: WaveState) -> RealField:
        """
        F = −∇(Q + V)

        Q + V 不满足 box 墙上的零边界，这里用二阶有限差分而不是正弦基求导
        """
        q = self.quantum_potential(w)
        total = q.values + self._potential
        force = -np.gradient(total, self.grid.spacing, edge_order=2)
        return RealField(self.grid, force, q.floored_points)

    def energy(self, w: WaveState) -> float:
        """⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩"""
        psi = w.psi.values
        h_psi = -0.5 * laplacian(w.psi).values + self._potential * psi
        return self.grid.quadrature(np.real(np.conj(psi) * h_psi)) / w.norm

    def step_linear(self, w: WaveState, dt: float) -> WaveState:
        """
        线性方程的一步：谱基中精确的指数传播子，
        有外势时按 Strang 分裂 V/2 → T → V/2
        """
        self._set_dt(dt)
        psi = w.psi.values
        if self._has_potential:
            psi = self._potential_half * psi
        psi = spectral_apply(self.grid, psi, self._kinetic_phase)
        if self._has_potential:
            psi = self._potential_half * psi
        return w.evolved(psi, dt)

    def damp(self, w: WaveState, fq: RealField, dt: float, alpha: Optional[float] = None) -> WaveState:
        """
        阻尼子步 ψ ← ψ·e^{−g(f_q)dt}

        g 为实数，只改变 |ψ|，不动相位；时间戳不前进
        """
        alpha = self.params.alpha if alpha is None else alpha
        g = damping_rate(fq, alpha).values
        return WaveState(ComplexField(self.grid, np.exp(-g * dt) * w.psi.values), w.time)

    def step_nonlinear(self, w: WaveState, fq: RealField, dt: float,
                       alpha: Optional[float] = None) -> WaveState:
        """
        非线性方程 i(∂/∂t + g(f_q))ψ = −(1/2)∇²ψ (+Vψ) 的一步

        f_q 在一步内冻结；Strang 组合：半步阻尼 → 线性整步 → 半步阻尼。
        alpha = 0 时直接走线性传播子
        """
        alpha = self.params.alpha if alpha is None else alpha
        if alpha == 0:
            return self.step_linear(w, dt)

        half = np.exp(-0.5 * dt * damping_rate(fq, alpha).values)
        damped = WaveState(ComplexField(self.grid, half * w.psi.values), w.time)
        advanced = self.step_linear(damped, dt)
        return advanced.evolved(half * advanced.psi.values, 0.0)

    def probability_current(self, w: WaveState) -> np.ndarray:
        """j = Im(ψ*∇ψ) = v|ψ|²"""
        psi = w.psi.values
        return np.imag(np.conj(psi) * derivative(self.grid, psi))

    def source_term(self, w: WaveState, fq: RealField, alpha: Optional[float] = None) -> RealField:
        """修正连续性方程的源项 −2g(f_q)|ψ|²"""
        alpha = self.params.alpha if alpha is None else alpha
        return RealField(self.grid, -2.0 * damping_rate(fq, alpha).values * w.psi_sq)

    def continuity_residual(self, w_before: WaveState, w_after: WaveState, fq: RealField,
                            dt: float, alpha: Optional[float] = None) -> float:
        """
        修正连续性方程 ∂|ψ|²/∂t + ∇·(v|ψ|²) = −2g(f_q)|ψ|² 在半步处的离散残差 L2 范数

        时间导数取差商，流和源取前后两端的平均
        """
        if dt <= 0:
            raise ValueError(f"时间步长必须为正: {dt}")
        alpha = self.params.alpha if alpha is None else alpha
        p0, p1 = w_before.psi_sq, w_after.psi_sq
        current = 0.5 * (self.probability_current(w_before) + self.probability_current(w_after))
        source = -2.0 * damping_rate(fq, alpha).values * 0.5 * (p0 + p1)
        residual = (p1 - p0) / dt + derivative(self.grid, current) - source
        return float(np.sqrt(self.grid.quadrature(residual ** 2)))
