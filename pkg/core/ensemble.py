"""
粒子系综模块
初始采样（逆 CDF）、导引方程推进（RK4）、核密度估计与 f_q = ρ/|ψ|² 的构造
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import cumulative_trapezoid
from scipy.ndimage import gaussian_filter1d

from utils.config import config
from utils.logger import logger
from core.exceptions import ConfigurationError, InvalidDensityError
from core.numerics import FieldInterpolant, RealField, SpatialGrid, node_floor_value
from core.wave import WaveSolver, WaveState


@dataclass(frozen=True)
class ParticleEnsemble:
    """M 个等权粒子的位置，seed 记录样本来源"""
    positions: np.ndarray
    time: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 1 or positions.size < 1:
            raise ConfigurationError(f"系综至少需要 1 个粒子: shape={positions.shape}")
        positions.flags.writeable = False
        object.__setattr__(self, 'positions', positions)

    @property
    def size(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class FqField(RealField):
    """f_q = ρ/|ψ|²，附带所用的 ρ、|ψ|²、上限和截断点数"""
    rho: Optional[RealField] = None
    psi_sq: Optional[RealField] = None
    cap: float = np.inf


class DensityKind(str, Enum):
    """初始密度类型"""
    UNIFORM = "uniform"
    EIGENSTATE = "eigenstate"
    EQUILIBRIUM = "equilibrium"
    GAUSSIAN = "gaussian"


class DensitySpec(BaseModel):
    """闭式初始密度 ρ₀"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: DensityKind = DensityKind.EIGENSTATE
    mode: int = 1
    center: Optional[float] = None
    width: float = Field(0.1, gt=0.0)

    def density_function(self, grid: SpatialGrid,
                         psi0: Optional[WaveState] = None) -> Callable[[np.ndarray], np.ndarray]:
        """返回可在任意位置求值的（未归一化）密度"""
        L = grid.length
        if self.kind is DensityKind.UNIFORM:
            return lambda x: np.ones_like(x, dtype=float)

        if self.kind is DensityKind.EIGENSTATE:
            if grid.is_periodic:
                return lambda x: np.full_like(x, 1.0 / L, dtype=float)
            if self.mode < 1:
                raise ConfigurationError(f"box 本征态编号必须 ≥ 1: {self.mode}")
            return lambda x: 2.0 / L * np.sin(self.mode * np.pi * (x - grid.x_min) / L) ** 2

        if self.kind is DensityKind.GAUSSIAN:
            center = 0.5 * (grid.x_min + grid.x_max) if self.center is None else self.center
            if grid.is_periodic:
                images = (-1, 0, 1)
                return lambda x: sum(np.exp(-0.5 * ((x - center + m * L) / self.width) ** 2) for m in images)
            return lambda x: np.exp(-0.5 * ((x - center) / self.width) ** 2)

        if psi0 is None:
            raise ConfigurationError("equilibrium 密度需要初始波函数")
        interpolant = FieldInterpolant(RealField(grid, psi0.psi_sq))
        return lambda x: np.maximum(interpolant(x), 0.0)

    def on_grid(self, grid: SpatialGrid, psi0: Optional[WaveState] = None) -> RealField:
        """网格上的归一化密度"""
        values = np.asarray(self.density_function(grid, psi0)(grid.x), dtype=float)
        return normalized_density(grid, values)


def normalized_density(grid: SpatialGrid, values: np.ndarray) -> RealField:
    """检查非负且可归一化，返回 ∫ρ = 1 的场"""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise InvalidDensityError("密度必须有限且非负")
    total = grid.quadrature(values)
    if total <= 0:
        raise InvalidDensityError("密度恒为零，无法归一化")
    return RealField(grid, values / total)


DensityInput = Union[DensitySpec, RealField, Callable[[np.ndarray], np.ndarray]]


def sample_initial(rho0: DensityInput, M: int, seed: int, grid: SpatialGrid,
                   psi0: Optional[WaveState] = None, refine: int = 8) -> ParticleEnsemble:
    """
    从 ρ₀ 独立抽取 M 个粒子

    在（加密后的）网格上做累积分布，逆 CDF 线性插值；给定 seed 结果确定
    """
    if M < 1:
        raise ConfigurationError(f"粒子数必须 ≥ 1: {M}")

    if isinstance(rho0, RealField):
        nodes = grid.closed_nodes
        density = grid.close(rho0.values)
    else:
        func = rho0.density_function(grid, psi0) if isinstance(rho0, DensitySpec) else rho0
        nodes = np.linspace(grid.x_min, grid.x_max, refine * (grid.n_points + 1) + 1)
        density = np.asarray(func(nodes), dtype=float)

    if not np.all(np.isfinite(density)) or np.any(density < 0):
        raise InvalidDensityError("初始密度必须有限且非负")
    cdf = cumulative_trapezoid(density, nodes, initial=0.0)
    if cdf[-1] <= 0:
        raise InvalidDensityError("初始密度恒为零")
    cdf /= cdf[-1]

    rng = np.random.default_rng(seed)
    positions = grid.wrap(np.interp(rng.random(M), cdf, nodes))
    logger.info(f"初始系综采样完成: M={M}, seed={seed}")
    return ParticleEnsemble(positions, 0.0, seed)


def advance(e: ParticleEnsemble, w: WaveState, dt: float, solver: WaveSolver,
            fq: Optional[RealField] = None, substeps: Optional[int] = None) -> ParticleEnsemble:
    """
    导引方程 ẋ = Im(∇ψ/ψ) 的一步 RK4

    各级速度场取自对应时刻的波函数：ψ(t+s) 由 ψ(t) 以同一 f_q 非线性推进 s 得到，
    fq 缺省时按线性方程推进。substeps > 1 时把 dt 均分为若干粒子子步。
    子步位置先回绕（周期）或夹到墙内（box）再插值
    """
    if not np.isclose(w.time, e.time, rtol=0.0, atol=1e-9 * max(1.0, abs(e.time))):
        raise ValueError(f"系综时间 {e.time} 与波函数时间 {w.time} 不一致")
    if substeps is None:
        substeps = config.get('ENSEMBLE.substeps', 1)
    if substeps < 1:
        raise ConfigurationError(f"粒子子步数必须 ≥ 1: {substeps}")

    grid = w.grid
    h = dt / substeps
    fields = {}

    def velocity_at(j: int) -> FieldInterpolant:
        # j 以半个子步计
        if j not in fields:
            s = 0.5 * h * j
            if j == 0:
                state = w
            elif fq is None:
                state = solver.step_linear(w, s)
            else:
                state = solver.step_nonlinear(w, fq, s)
            fields[j] = FieldInterpolant(solver.velocity_field(state))
        return fields[j]

    def v(j: int, y: np.ndarray) -> np.ndarray:
        return velocity_at(j)(grid.wrap(y))

    x = e.positions
    clamped = 0
    for k in range(substeps):
        j = 2 * k
        k1 = v(j, x)
        k2 = v(j + 1, x + 0.5 * h * k1)
        k3 = v(j + 1, x + 0.5 * h * k2)
        k4 = v(j + 2, x + h * k3)
        moved = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not grid.is_periodic:
            clamped += int(np.count_nonzero((moved < grid.x_min) | (moved > grid.x_max)))
        x = grid.wrap(moved)

    if clamped:
        logger.debug(f"{clamped} 个粒子被夹回墙内")
    return ParticleEnsemble(x, e.time + dt, e.seed)


def _linear_binning(u: np.ndarray, size: int, periodic: bool) -> np.ndarray:
    """线性（CIC）分箱到整数节点"""
    base = np.floor(u)
    frac = u - base
    i0 = base.astype(np.int64)
    i1 = i0 + 1
    if periodic:
        i0 %= size
        i1 %= size
    return (np.bincount(i0, weights=1.0 - frac, minlength=size)
            + np.bincount(i1, weights=frac, minlength=size))[:size]


def estimate_density(e: ParticleEnsemble, grid: SpatialGrid, bandwidth: Optional[float] = None) -> RealField:
    """
    网格上的高斯核密度估计，归一化使 ∫ρ = 1

    粒子先线性分箱到节点再做高斯滤波；周期网格核回绕，box 网格在两壁镜像
    """
    h = grid.spacing
    if bandwidth is None:
        bandwidth = config.get('ENSEMBLE.bandwidth_factor', 4.0) * h
    if bandwidth < h * (1.0 - 1e-12):
        raise ConfigurationError(f"带宽 {bandwidth} 小于网格间距 {h}")
    sigma = bandwidth / h
    truncate = config.get('ENSEMBLE.kde_truncate', 6.0)
    n = grid.n_points
    u = (e.positions - grid.x_min) / h

    if grid.is_periodic:
        counts = _linear_binning(np.mod(u, n), n, periodic=True)
        smooth = gaussian_filter1d(counts, sigma, mode='wrap', truncate=truncate)
    else:
        # 节点 0 与 n+1 为两壁，向外补 pad 个节点容纳镜像粒子
        pad = int(np.ceil(truncate * sigma)) + 1
        images = np.concatenate((u, -u, 2.0 * (n + 1) - u))
        images = images[(images >= -pad) & (images < n + 1 + pad)]
        counts = _linear_binning(images + pad, n + 2 + 2 * pad, periodic=False)
        smooth = gaussian_filter1d(counts, sigma, mode='constant', cval=0.0, truncate=truncate)
        smooth = smooth[pad + 1:pad + 1 + n]

    total = grid.quadrature(smooth)
    if total <= 0:
        raise InvalidDensityError("核密度估计在网格上为零")
    return RealField(grid, smooth / total)


def compute_fq(rho: RealField, w: WaveState, cap: Optional[float] = None,
               node_floor: Optional[float] = None) -> FqField:
    """
    f_q = ρ/|ψ|²

    |ψ|² 取节点下限，结果不超过 cap，低于下限的点直接取 cap；
    ρ = 0 处取最小正浮点数使 ln f_q 有限。floored_points 统计被下限或截断改动的点
    """
    if cap is None:
        cap = config.get('ENSEMBLE.fq_cap', 1000.0)
    psi_sq = w.psi_sq
    floor = node_floor_value(psi_sq, node_floor)
    floored = psi_sq < floor

    ratio = rho.values / np.maximum(psi_sq, floor)
    positive = np.finfo(float).tiny
    clipped = (ratio > cap) | (ratio < positive)
    values = np.clip(ratio, positive, cap)
    values[floored] = cap

    n_flagged = int(np.count_nonzero(floored | clipped))
    if n_flagged:
        logger.debug(f"f_q: {int(np.count_nonzero(floored))} 个节点点, {n_flagged} 个截断点")
    return FqField(rho.grid, values, n_flagged,
                   rho=rho, psi_sq=RealField(rho.grid, psi_sq), cap=float(cap))


def boltzmann_source(fq: RealField, alpha: float) -> RealField:
    """J(f_q) = 2g(f_q)f_q = 2αf_q(1 − f_q)"""
    f = fq.values
    return RealField(fq.grid, 2.0 * alpha * f * (1.0 - f))
