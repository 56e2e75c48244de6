"""
结果可视化模块
运行结束后从运行目录读取 CSV 绘制 PNG，不参与模拟本身
"""
# 非交互式后端，避免多线程下的 tkinter 问题
import matplotlib
matplotlib.use('Agg')

import gc
import threading
from pathlib import Path
from typing import List, Union

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from utils.logger import logger
from core.storage import (
    MONITORS_FILE, REVERSAL_FILE, SNAPSHOT_DIR, read_snapshot,
)

# 线程锁确保线程安全
_plot_lock = threading.Lock()


def safe_plot(plot_func):
    """加锁绘图，结束后关闭所有图表"""
    def wrapper(*args, **kwargs):
        with _plot_lock:
            try:
                return plot_func(*args, **kwargs)
            finally:
                plt.close('all')
                gc.collect()
    return wrapper


class RunPlotter:
    """运行目录绘图器"""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        if not (self.run_dir / MONITORS_FILE).exists():
            raise FileNotFoundError(f"运行目录中没有 {MONITORS_FILE}: {self.run_dir}")
        self.monitors = pd.read_csv(self.run_dir / MONITORS_FILE)
        logger.info(f"运行目录绘图器初始化完成: {self.run_dir}")

    @safe_plot
    def plot_h_traces(self) -> Path:
        """H_q 与各粗粒化 H̄ 的时间曲线（对数坐标）"""
        fig, ax = plt.subplots(figsize=(10, 6))
        columns = [c for c in self.monitors.columns if c == 'h_q' or c.startswith('h_bar_')]
        for column in columns:
            values = self.monitors[column].to_numpy()
            ax.plot(self.monitors['t'], np.where(values > 0, values, np.nan), label=column)
        ax.set_yscale('log')
        ax.set_xlabel('t')
        ax.set_ylabel('H')
        ax.legend()
        path = self.run_dir / 'h_traces.png'
        fig.savefig(path, dpi=120, bbox_inches='tight')
        return path

    @safe_plot
    def plot_dh_dt(self) -> Path:
        fig, ax = plt.subplots(figsize=(10, 6))
        ax.plot(self.monitors['t'], self.monitors['dh_dt_analytic'], label='analytic')
        ax.plot(self.monitors['t'], self.monitors['dh_dt_numeric'], '.', label='numeric')
        ax.set_xlabel('t')
        ax.set_ylabel('dH/dt')
        ax.legend()
        path = self.run_dir / 'dh_dt.png'
        fig.savefig(path, dpi=120, bbox_inches='tight')
        return path

    @safe_plot
    def plot_norm(self) -> Path:
        fig, ax = plt.subplots(figsize=(10, 4))
        ax.plot(self.monitors['t'], self.monitors['norm'])
        ax.set_xlabel('t')
        ax.set_ylabel('∫|ψ|²')
        path = self.run_dir / 'norm.png'
        fig.savefig(path, dpi=120, bbox_inches='tight')
        return path

    @safe_plot
    def plot_snapshot(self, snapshot_path: Path) -> Path:
        """单个快照：ρ 与 |ψ|² 叠画，f_q 画在下方"""
        meta, frame = read_snapshot(snapshot_path)
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 7), sharex=True,
                                          gridspec_kw={'height_ratios': [2, 1]})
        top.plot(frame['x'], frame['rho'], label='ρ')
        top.plot(frame['x'], frame['psi_sq'], label='|ψ|²')
        top.set_title(f"t = {float(meta.get('time', 'nan')):.4g}")
        top.legend()
        bottom.plot(frame['x'], frame['f_q'])
        bottom.axhline(1.0, color='gray', linewidth=0.8)
        bottom.set_xlabel('x')
        bottom.set_ylabel('f_q')
        path = snapshot_path.with_suffix('.png')
        fig.savefig(path, dpi=120, bbox_inches='tight')
        return path

    @safe_plot
    def plot_reversal(self) -> Path:
        frame = pd.read_csv(self.run_dir / REVERSAL_FILE)
        fig, ax = plt.subplots(figsize=(10, 6))
        for leg, group in frame.groupby('leg', sort=False):
            ax.plot(group['t'], group['h_q'], label=leg)
        ax.set_xlabel('t since start of leg')
        ax.set_ylabel('h_q')
        ax.legend()
        path = self.run_dir / 'reversal.png'
        fig.savefig(path, dpi=120, bbox_inches='tight')
        return path

    def plot_all(self) -> List[Path]:
        """绘制运行目录中能画的全部图"""
        paths = [self.plot_h_traces(), self.plot_dh_dt(), self.plot_norm()]
        if (self.run_dir / REVERSAL_FILE).exists():
            paths.append(self.plot_reversal())
        snapshot_dir = self.run_dir / SNAPSHOT_DIR
        if snapshot_dir.is_dir():
            paths.extend(self.plot_snapshot(p) for p in sorted(snapshot_dir.glob('*.csv')))
        logger.info(f"绘图完成: {len(paths)} 张")
        return paths
