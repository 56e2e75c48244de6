"""
监测量模块
H_q 函数、其解析时间导数、粗粒化 H̄、范数与距离，以及按采样时刻汇总的记录
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.config import config
from utils.logger import logger, monitor_logger
from core.exceptions import ConfigurationError
from core.numerics import RealField, SpatialGrid


def _mask_floor(*arrays: np.ndarray, floor_rel: Optional[float] = None) -> float:
    if floor_rel is None:
        floor_rel = config.get('MONITORS.mask_floor', 1e-12)
    peak = max(float(np.max(a)) if a.size else 0.0 for a in arrays)
    return max(floor_rel * peak, np.finfo(float).tiny)


def _h_integrand(rho: np.ndarray, psi_sq: np.ndarray, floor_rel: Optional[float] = None) -> np.ndarray:
    """(ρ − |ψ|²)·ln(ρ/|ψ|²)，两者都低于下限的点记为 0"""
    floor = _mask_floor(rho, psi_sq, floor_rel=floor_rel)
    both_small = (rho < floor) & (psi_sq < floor)
    log_ratio = np.log(np.maximum(rho, floor)) - np.log(np.maximum(psi_sq, floor))
    integrand = (rho - psi_sq) * log_ratio
    integrand[both_small] = 0.0
    return integrand


def h_function(rho: RealField, psi_sq: RealField, floor_rel: Optional[float] = None) -> float:
    """H_q = ∫(ρ − |ψ|²)ln(ρ/|ψ|²)dx ≥ 0"""
    grid = rho.grid
    return grid.quadrature(_h_integrand(rho.values, psi_sq.values, floor_rel))


def h_from_fq(fq: RealField, psi_sq: RealField) -> float:
    """H_q 的 ∫|ψ|²G(f_q) 形式，G(f) = (f − 1)ln f"""
    f = fq.values
    return fq.grid.quadrature(psi_sq.values * (f - 1.0) * np.log(f))


def h_valentini(rho: RealField, psi_sq: RealField, floor_rel: Optional[float] = None) -> float:
    """较早的量子 H 函数 ∫|ψ|²f_q ln f_q = ∫ρ ln(ρ/|ψ|²)，精确线性输运下守恒"""
    r, p = rho.values, psi_sq.values
    floor = _mask_floor(r, p, floor_rel=floor_rel)
    integrand = r * (np.log(np.maximum(r, floor)) - np.log(np.maximum(p, floor)))
    integrand[r < floor] = 0.0
    return rho.grid.quadrature(integrand)


def dh_dt_analytic(fq: RealField, psi_sq: RealField, alpha: float) -> float:
    """
    dH_q/dt = ∫(J/f_q){f_q − 1 + ln f_q}|ψ|²dx，J/f_q = 2g = 2α(1 − f_q)

    被积函数逐点非正，仅在 f_q = 1 处为零
    """
    f = fq.values
    integrand = 2.0 * alpha * (1.0 - f) * (f - 1.0 + np.log(f)) * psi_sq.values
    return fq.grid.quadrature(integrand)


def coarse_grain(f: RealField, cells: int) -> RealField:
    """把每个粗粒化单元内的点替换为单元均值"""
    n = f.grid.n_points
    if cells < 1 or n % cells != 0:
        raise ConfigurationError(f"粗粒化单元数 {cells} 必须整除网格点数 {n}")
    means = f.values.reshape(cells, n // cells).mean(axis=1)
    return RealField(f.grid, np.repeat(means, n // cells))


def h_bar(rho: RealField, psi_sq: RealField, cells: int, floor_rel: Optional[float] = None) -> float:
    """粗粒化 H̄：对粗粒化后的 (ρ, |ψ|²) 取 h_function"""
    return h_function(coarse_grain(rho, cells), coarse_grain(psi_sq, cells), floor_rel)


def l1_distance(rho: RealField, psi_sq: RealField) -> float:
    """∫|ρ − |ψ|²|dx"""
    return rho.grid.quadrature(np.abs(rho.values - psi_sq.values))


@dataclass
class MonitorRecord:
    """一次采样的监测量"""
    time: float
    h_q: float
    h_bar: Dict[int, float]
    norm: float
    l1_dist: float
    dh_dt_analytic: float
    dh_dt_numeric: float = float('nan')
    continuity_residual: float = 0.0
    floored_points: int = 0
    extras: Dict[str, float] = field(default_factory=dict)

    def to_row(self) -> Dict[str, float]:
        row = {'t': self.time, 'h_q': self.h_q}
        for cells in sorted(self.h_bar):
            row[f'h_bar_{cells}'] = self.h_bar[cells]
        row.update({
            'norm': self.norm,
            'l1_dist': self.l1_dist,
            'dh_dt_analytic': self.dh_dt_analytic,
            'dh_dt_numeric': self.dh_dt_numeric,
            'continuity_residual': self.continuity_residual,
            'floored_points': int(self.floored_points),
        })
        return row


def dh_dt_numeric(first: MonitorRecord, second: MonitorRecord) -> float:
    """两次采样之间 h_q 的差商"""
    interval = second.time - first.time
    if interval == 0:
        raise ZeroDivisionError(f"两条记录时间戳相同: t={first.time}")
    return (second.h_q - first.h_q) / interval


def dh_dt_centered(previous: MonitorRecord, following: MonitorRecord) -> float:
    """中心差分：用前后两条记录估计中间时刻的 dH/dt"""
    return dh_dt_numeric(previous, following)


def monitor_columns(cells: Sequence[int]) -> List[str]:
    """monitors.csv 的列顺序"""
    return (['t', 'h_q'] + [f'h_bar_{c}' for c in sorted(cells)]
            + ['norm', 'l1_dist', 'dh_dt_analytic', 'dh_dt_numeric',
               'continuity_residual', 'floored_points'])


class MonitorCollector:
    """监测量采集器"""

    def __init__(self, grid: SpatialGrid, alpha: float, cells: Optional[Sequence[int]] = None):
        self.grid = grid
        self.alpha = alpha
        self.cells = sorted(cells or config.get('MONITORS.coarse_cells', [16, 32, 64]))
        for c in self.cells:
            if grid.n_points % c != 0:
                raise ConfigurationError(f"粗粒化单元数 {c} 必须整除网格点数 {grid.n_points}")
        self.records: List[MonitorRecord] = []
        logger.debug(f"监测采集器初始化完成: cells={self.cells}")

    def sample(self, time: float, rho: RealField, psi_sq: RealField, fq: RealField,
               residual: float = 0.0, floored_points: int = 0,
               extras: Optional[Dict[str, float]] = None) -> MonitorRecord:
        """计算并保存一条记录"""
        record = MonitorRecord(
            time=time,
            h_q=h_function(rho, psi_sq),
            h_bar={c: h_bar(rho, psi_sq, c) for c in self.cells},
            norm=self.grid.quadrature(psi_sq.values),
            l1_dist=l1_distance(rho, psi_sq),
            dh_dt_analytic=dh_dt_analytic(fq, psi_sq, self.alpha),
            continuity_residual=residual,
            floored_points=floored_points,
            extras=dict(extras or {}),
        )
        self.records.append(record)
        monitor_logger.debug(
            f"t={time:.6g} h_q={record.h_q:.6e} norm={record.norm:.12f} l1={record.l1_dist:.6e}")
        return record

    def finalize(self) -> pd.DataFrame:
        """补齐数值导数（内部中心差分，两端单侧差分），返回监测表"""
        records = self.records
        if len(records) == 1:
            records[0].dh_dt_numeric = 0.0
        elif len(records) > 1:
            records[0].dh_dt_numeric = dh_dt_numeric(records[0], records[1])
            records[-1].dh_dt_numeric = dh_dt_numeric(records[-2], records[-1])
            for i in range(1, len(records) - 1):
                records[i].dh_dt_numeric = dh_dt_centered(records[i - 1], records[i + 1])

        frame = pd.DataFrame([r.to_row() for r in records], columns=monitor_columns(self.cells))
        frame['floored_points'] = frame['floored_points'].astype(np.int64)
        return frame

    def extras_frame(self) -> pd.DataFrame:
        """附加诊断量（H_valentini、能量等）"""
        rows = [{'t': r.time, **r.extras} for r in self.records]
        return pd.DataFrame(rows)
