"""
运行结果存储模块
一次运行一个目录：监测 CSV、诊断 CSV、自描述快照、回显配置、gnuplot 脚本与清单
"""
import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from utils.config import config
from utils.logger import logger
from core import __version__
from core.scenario import ScenarioConfig, to_flat_text

if TYPE_CHECKING:
    from core.experiments import ReversalReport, ScenarioResult, Snapshot

MONITORS_FILE = 'monitors.csv'
DIAGNOSTICS_FILE = 'diagnostics.csv'
REVERSAL_FILE = 'reversal.csv'
CONFIG_FILE = 'config.resolved.cfg'
MANIFEST_FILE = 'manifest.json'
PLOT_FILE = 'plot.gp'
SNAPSHOT_DIR = 'snapshots'


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


class RunStorage:
    """运行目录管理器"""

    def __init__(self, run_dir: Union[str, Path, None] = None):
        if run_dir is None:
            run_dir = Path(config.get('OUTPUT.directory', 'runs')) / datetime.now().strftime('%Y%m%d_%H%M%S')
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.float_format = config.get('OUTPUT.float_format', '%.17g')
        self.started_at = datetime.now().isoformat(timespec='seconds')
        self._written: List[str] = []
        logger.info(f"运行目录初始化完成: {self.run_dir}")

    def _record(self, path: Path) -> Path:
        name = path.relative_to(self.run_dir).as_posix()
        if name not in self._written:
            self._written.append(name)
        return path

    def write_csv(self, frame: pd.DataFrame, name: str, header_lines: Sequence[str] = ()) -> Path:
        """固定 17 位有效数字、'\\n' 换行的 CSV；header_lines 作为 '# ' 注释行写在最前"""
        path = self.run_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                for line in header_lines:
                    f.write(f"# {line}\n")
                frame.to_csv(f, index=False, float_format=self.float_format, lineterminator='\n')
        except OSError as e:
            logger.error(f"写入 {path} 失败: {e}")
            raise
        return self._record(path)

    def write_monitors(self, monitors: pd.DataFrame) -> Path:
        return self.write_csv(monitors, MONITORS_FILE)

    def write_diagnostics(self, diagnostics: pd.DataFrame) -> Path:
        return self.write_csv(diagnostics, DIAGNOSTICS_FILE)

    def write_snapshot(self, snapshot: "Snapshot", name: Optional[str] = None) -> Path:
        """快照 CSV，注释行带网格元数据，不依赖配置即可重新作图"""
        grid = snapshot.grid
        header = [
            f"grid.boundary = {grid.boundary.value}",
            f"grid.n_points = {grid.n_points}",
            f"grid.x_min = {grid.x_min!r}",
            f"grid.x_max = {grid.x_max!r}",
            f"grid.spacing = {grid.spacing!r}",
            f"step = {snapshot.step}",
            f"time = {snapshot.time!r}",
        ]
        name = name or f"snap_{snapshot.step:08d}.csv"
        return self.write_csv(snapshot.to_frame(), f"{SNAPSHOT_DIR}/{name}", header)

    def write_snapshots(self, snapshots: Sequence["Snapshot"]) -> List[Path]:
        return [self.write_snapshot(s) for s in snapshots]

    def write_config(self, cfg: ScenarioConfig) -> Path:
        path = self.run_dir / CONFIG_FILE
        path.write_text(to_flat_text(cfg), encoding='utf-8')
        return self._record(path)

    def write_plot_script(self, columns: Sequence[str], reversal: bool = False) -> Path:
        """gnuplot 脚本：H 轨迹（对数坐标）与范数"""
        h_columns = [c for c in columns if c == 'h_q' or c.startswith('h_bar_')]
        lines = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            "set terminal pngcairo size 1000,700",
            "set xlabel 't'",
            "",
            "set output 'h_traces.png'",
            "set logscale y",
            "set ylabel 'H'",
            "plot " + ", \\\n     ".join(
                f"'{MONITORS_FILE}' using 't':'{c}' with lines" for c in h_columns),
            "unset logscale y",
            "",
            "set output 'norm.png'",
            "set ylabel 'norm'",
            f"plot '{MONITORS_FILE}' using 't':'norm' with lines",
            "",
            "set output 'dh_dt.png'",
            "set ylabel 'dH/dt'",
            f"plot '{MONITORS_FILE}' using 't':'dh_dt_analytic' with lines, \\",
            f"     '{MONITORS_FILE}' using 't':'dh_dt_numeric' with points",
        ]
        if reversal:
            lines += [
                "",
                "set output 'reversal.png'",
                "set ylabel 'h_q'",
                f"plot '< grep forward {REVERSAL_FILE}' using 2:3 with lines title 'forward', \\",
                f"     '< grep backward {REVERSAL_FILE}' using 2:3 with lines title 'backward'",
            ]
        path = self.run_dir / PLOT_FILE
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        return self._record(path)

    def write_manifest(self, cfg: ScenarioConfig, status: str = 'ok',
                       diagnostic: Optional[Dict[str, Any]] = None) -> Path:
        """清单：回显配置、版本、种子、起止时间、文件校验和；中止的运行也写"""
        files = []
        for name in self._written:
            path = self.run_dir / name
            if path.exists():
                files.append({'path': name, 'bytes': path.stat().st_size, 'sha256': _sha256(path)})
        manifest = {
            'status': status,
            'code_version': __version__,
            'seed': cfg.ensemble.seed,
            'started_at': self.started_at,
            'finished_at': datetime.now().isoformat(timespec='seconds'),
            'config': to_flat_text(cfg),
            'files': files,
        }
        if diagnostic:
            manifest['diagnostic'] = diagnostic
        path = self.run_dir / MANIFEST_FILE
        path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + '\n', encoding='utf-8')
        logger.info(f"清单已写入: {path} ({len(files)} 个文件, status={status})")
        return path

    def write_run(self, cfg: ScenarioConfig, result: "ScenarioResult") -> Path:
        """写出一次完整运行"""
        self.write_config(cfg)
        self.write_monitors(result.monitors)
        self.write_diagnostics(result.diagnostics)
        self.write_snapshots(result.snapshots)
        self.write_plot_script(result.monitors.columns)
        return self.write_manifest(cfg)

    def write_reversal_run(self, cfg: ScenarioConfig, report: "ReversalReport") -> Path:
        """写出时间反演实验"""
        self.write_config(cfg)
        self.write_monitors(report.monitors)
        self.write_diagnostics(report.diagnostics)
        self.write_csv(report.to_frame(), REVERSAL_FILE)
        self.write_snapshots(report.snapshots)
        self.write_plot_script(report.monitors.columns, reversal=True)
        return self.write_manifest(cfg, diagnostic={
            'retrace_l2_error': report.retrace_l2_error,
            'retrace_rho_error': report.retrace_rho_error,
        })

    def write_aborted(self, cfg: ScenarioConfig, error: Exception,
                      snapshot: Optional["Snapshot"] = None) -> Path:
        """中止的运行：回显配置、最后一个有效快照和诊断信息"""
        self.write_config(cfg)
        if snapshot is not None:
            self.write_snapshot(snapshot, name='abort.csv')
        diagnostic = {'error': type(error).__name__, 'message': str(error)}
        for attr in ('step', 'time'):
            if hasattr(error, attr):
                diagnostic[attr] = getattr(error, attr)
        return self.write_manifest(cfg, status='aborted', diagnostic=diagnostic)


def read_snapshot(path: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    """读回快照：(注释行元数据, 数据表)"""
    meta: Dict[str, str] = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].partition('=')
            meta[key.strip()] = value.strip()
    frame = pd.read_csv(path, comment='#', float_precision='round_trip')
    return meta, frame
