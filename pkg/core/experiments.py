"""
实验驱动模块
弛豫、平衡对照、线性基线、时间反演，以及范数定律、连续性收敛与 α 扫描
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.integrate import solve_ivp

from utils.config import config
from utils.logger import logger
from core.exceptions import NumericalAbort
from core.numerics import Boundary, ComplexField, RealField, SpatialGrid
from core.wave import PhysicsParams, WaveSolver, WaveState
from core.ensemble import (
    FqField, ParticleEnsemble, advance, compute_fq, estimate_density, sample_initial,
)
from core.monitors import MonitorCollector, h_valentini, l1_distance
from core.scenario import ExperimentKind, ScenarioConfig
from core.storage import RunStorage


@dataclass(frozen=True)
class Snapshot:
    """某一步的场快照"""
    step: int
    time: float
    grid: SpatialGrid
    rho: np.ndarray
    psi_sq: np.ndarray
    fq: np.ndarray
    velocity: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'x': self.grid.x,
            'rho': self.rho,
            'psi_sq': self.psi_sq,
            'f_q': self.fq,
            'v': self.velocity,
        })


@dataclass
class ScenarioResult:
    """一次场景运行的结果"""
    config: ScenarioConfig
    monitors: pd.DataFrame
    diagnostics: pd.DataFrame
    final_wave: WaveState
    final_rho: RealField
    final_fq: FqField
    ensemble: Optional[ParticleEnsemble]
    snapshots: List[Snapshot] = field(default_factory=list)

    @property
    def h_q_final_ratio(self) -> float:
        return _ratio(self.monitors["h_q"])


@dataclass
class ReversalReport:
    """时间反演实验的结果"""
    alpha: float
    t_reverse: float
    forward_h_trace: pd.Series
    backward_h_trace: pd.Series
    retrace_l2_error: float
    retrace_rho_error: float
    monitors: pd.DataFrame
    diagnostics: pd.DataFrame
    snapshots: List[Snapshot] = field(default_factory=list)

    def __post_init__(self):
        if self.retrace_l2_error < 0 or self.retrace_rho_error < 0:
            raise ValueError("回溯误差不能为负")

    def to_frame(self) -> pd.DataFrame:
        """reversal.csv：两段的 H 轨迹，backward 段 t 为反演后经过的时间"""
        forward = pd.DataFrame({'leg': 'forward', 't': self.forward_h_trace.index,
                                'h_q': self.forward_h_trace.values})
        backward = pd.DataFrame({'leg': 'backward', 't': self.backward_h_trace.index,
                                 'h_q': self.backward_h_trace.values})
        return pd.concat([forward, backward], ignore_index=True)


@dataclass
class _Leg:
    wave: WaveState
    ensemble: Optional[ParticleEnsemble]
    rho: RealField
    fq: FqField
    collector: MonitorCollector
    snapshots: List[Snapshot]


def conjugate_reverse(w: WaveState) -> WaveState:
    """ψ → ψ*：速度场逐点反号，时间戳不变"""
    return WaveState(ComplexField(w.grid, np.conj(w.psi.values)), w.time)


def l2_distance(a: WaveState, b: WaveState) -> float:
    """‖ψ_a − ψ_b‖₂"""
    diff = a.psi.values - b.psi.values
    return float(np.sqrt(a.grid.quadrature(np.abs(diff) ** 2)))


class ExperimentRunner:
    """
    场景执行器

    每一步：由系综估计 ρ，算 f_q，非线性推进 ψ，用步内各时刻的速度场推进粒子，
    到采样间隔时记录监测量。wave_only 模式下 ρ 冻结为 ρ₀
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.grid = cfg.grid.build()
        self.solver = WaveSolver(self.grid, cfg.physics)
        self.dt = cfg.time.dt
        self.sample_interval = cfg.time.sample_interval
        self.snapshot_interval = cfg.time.snapshot_interval
        self.bandwidth = cfg.ensemble.bandwidth_factor * self.grid.spacing
        self.substeps = cfg.ensemble.substeps
        self.wave_only = cfg.experiment.wave_only
        logger.info(f"实验执行器初始化完成: {cfg.experiment.name} ({cfg.experiment.kind.value}), "
                    f"M={cfg.ensemble.size}, seed={cfg.ensemble.seed}, substeps={self.substeps}, "
                    f"wave_only={self.wave_only}")

    @property
    def alpha(self) -> float:
        return self.cfg.physics.alpha

    def initial_state(self) -> Tuple[WaveState, Optional[ParticleEnsemble], RealField]:
        """ψ₀、初始系综（wave_only 时为 None）与网格上的 ρ₀"""
        w0 = self.cfg.psi.build(self.grid)
        rho0 = self.cfg.rho.on_grid(self.grid, w0)
        if self.wave_only:
            return w0, None, rho0
        e0 = sample_initial(self.cfg.rho, self.cfg.ensemble.size, self.cfg.ensemble.seed,
                            self.grid, psi0=w0)
        return w0, e0, rho0

    def density(self, e: Optional[ParticleEnsemble], frozen: RealField) -> RealField:
        if e is None:
            return frozen
        return estimate_density(e, self.grid, self.bandwidth)

    def fq(self, rho: RealField, w: WaveState) -> FqField:
        return compute_fq(rho, w, self.cfg.ensemble.fq_cap, self.cfg.physics.node_floor)

    def snapshot(self, step: int, w: WaveState, rho: RealField, fq: FqField) -> Snapshot:
        return Snapshot(step, w.time, self.grid, rho.values.copy(), w.psi_sq, fq.values.copy(),
                        self.solver.velocity_field(w).values.copy())

    def _sample(self, collector: MonitorCollector, w: WaveState, rho: RealField,
                fq: FqField, residual: float):
        psi_sq = RealField(self.grid, w.psi_sq)
        collector.sample(w.time, rho, psi_sq, fq, residual, fq.floored_points,
                         extras={'h_valentini': h_valentini(rho, psi_sq),
                                 'energy': self.solver.energy(w)})

    def _snapshot_due(self, step: int) -> bool:
        return step == 0 or (self.snapshot_interval > 0 and step % self.snapshot_interval == 0)

    def _evolve(self, w: WaveState, e: Optional[ParticleEnsemble], frozen: RealField,
                steps: int, step_offset: int = 0) -> _Leg:
        """推进 steps 步；任何非有限值都以 NumericalAbort 中止并附最后一个有效快照"""
        collector = MonitorCollector(self.grid, self.alpha, self.cfg.monitor.cells)
        snapshots: List[Snapshot] = []
        rho = self.density(e, frozen)
        fq = self.fq(rho, w)
        residual = 0.0

        for step in range(steps):
            absolute = step_offset + step
            w_next = self.solver.step_nonlinear(w, fq, self.dt)
            residual = self.solver.continuity_residual(w, w_next, fq, self.dt)

            if step % self.sample_interval == 0:
                self._sample(collector, w, rho, fq, residual)
            if self._snapshot_due(step):
                snapshots.append(self.snapshot(absolute, w, rho, fq))

            e_next = None if e is None else advance(e, w, self.dt, self.solver, fq, self.substeps)
            if not np.all(np.isfinite(w_next.psi.values)):
                self._abort("ψ 出现非有限值", absolute + 1, w_next.time, w, rho, fq, absolute)

            rho_next = self.density(e_next, frozen)
            if not np.all(np.isfinite(rho_next.values)):
                self._abort("ρ 出现非有限值", absolute + 1, w_next.time, w, rho, fq, absolute)

            w, e, rho = w_next, e_next, rho_next
            fq = self.fq(rho, w)

        self._sample(collector, w, rho, fq, residual)
        snapshots.append(self.snapshot(step_offset + steps, w, rho, fq))
        return _Leg(w, e, rho, fq, collector, snapshots)

    def _abort(self, message: str, step: int, time: float, w: WaveState,
               rho: RealField, fq: FqField, good_step: int):
        last_good = self.snapshot(good_step, w, rho, fq)
        logger.error(f"数值中止: {message} (step={step}, t={time:.6g}); "
                     f"检查 alpha·dt 与 f_q 上限")
        raise NumericalAbort(message, step, time, last_good)

    def run(self) -> ScenarioResult:
        """执行一次场景"""
        w0, e0, rho0 = self.initial_state()
        steps = self.cfg.time.steps
        logger.info(f"开始运行: steps={steps}, dt={self.dt}, alpha={self.alpha}")
        leg = self._evolve(w0, e0, rho0, steps)
        monitors = leg.collector.finalize()
        diagnostics = leg.collector.extras_frame()
        logger.info(f"运行完成: t={leg.wave.time:.6g}, h_q {monitors['h_q'].iloc[0]:.6e} → "
                    f"{monitors['h_q'].iloc[-1]:.6e}, norm={monitors['norm'].iloc[-1]:.12f}")
        return ScenarioResult(self.cfg, monitors, diagnostics, leg.wave, leg.rho, leg.fq,
                              leg.ensemble, leg.snapshots)

    def reverse(self) -> ReversalReport:
        """
        正向演化到 t_reverse，ψ 取共轭（粒子位置不动），再正向演化同样步数

        回溯误差：‖conj(ψ_末) − ψ₀‖ 与 ρ 的 L1 距离（wave_only 时比较 |ψ|²）
        """
        steps = self.cfg.reverse_steps
        w0, e0, rho0 = self.initial_state()
        logger.info(f"开始时间反演实验: t_reverse={self.cfg.experiment.t_reverse}, "
                    f"steps={steps}, alpha={self.alpha}")

        forward = self._evolve(w0, e0, rho0, steps)
        reversed_wave = conjugate_reverse(forward.wave)
        backward = self._evolve(reversed_wave, forward.ensemble, rho0, steps, step_offset=steps)

        retrace_l2 = l2_distance(conjugate_reverse(backward.wave), w0)
        if self.wave_only:
            retrace_rho = l1_distance(RealField(self.grid, backward.wave.psi_sq),
                                      RealField(self.grid, w0.psi_sq))
        else:
            retrace_rho = l1_distance(backward.rho, self.density(e0, rho0))

        forward_monitors = forward.collector.finalize()
        backward_monitors = backward.collector.finalize()
        t_reverse = forward.wave.time
        forward_trace = pd.Series(forward_monitors['h_q'].values,
                                  index=forward_monitors['t'].values, name='h_q')
        backward_trace = pd.Series(backward_monitors['h_q'].values,
                                   index=backward_monitors['t'].values - t_reverse, name='h_q')

        logger.info(f"时间反演完成: alpha={self.alpha}, retrace_l2={retrace_l2:.3e}, "
                    f"retrace_rho={retrace_rho:.3e}")
        return ReversalReport(
            alpha=self.alpha,
            t_reverse=t_reverse,
            forward_h_trace=forward_trace,
            backward_h_trace=backward_trace,
            retrace_l2_error=retrace_l2,
            retrace_rho_error=retrace_rho,
            monitors=pd.concat([forward_monitors, backward_monitors], ignore_index=True),
            diagnostics=pd.concat([forward.collector.extras_frame(), backward.collector.extras_frame()],
                                  ignore_index=True),
            snapshots=forward.snapshots + backward.snapshots,
        )


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """执行一次场景，给定种子结果确定"""
    return ExperimentRunner(cfg).run()


def reversal_experiment(cfg: ScenarioConfig, t_reverse: Optional[float] = None) -> ReversalReport:
    """时间反演实验；t_reverse 给出时覆盖配置"""
    if t_reverse is not None:
        data = cfg.model_dump(mode='json')
        data['experiment']['t_reverse'] = t_reverse
        data['experiment']['kind'] = ExperimentKind.REVERSAL.value
        cfg = ScenarioConfig.model_validate(data)
    if cfg.experiment.kind is not ExperimentKind.REVERSAL:
        raise ValueError(f"reversal_experiment 需要 kind = reversal: {cfg.experiment.kind.value}")
    return ExperimentRunner(cfg).reverse()


def norm_relaxation(grid: SpatialGrid, psi0: WaveState, rho: RealField, t_end: float,
                    dt: float, alpha: float = 0.5, sample_every: int = 10) -> pd.DataFrame:
    """
    ρ 冻结时的范数定律

    dN/dt = −2∫g|ψ|² = 2α(1 − N)，故 N(t) = 1 − (1 − N₀)e^{−2αt}；
    同时用 solve_ivp 积分同一方程作为独立参照
    """
    solver = WaveSolver(grid, PhysicsParams(alpha=alpha))
    steps = int(round(t_end / dt))
    w = psi0
    times, norms = [w.time], [w.norm]
    for step in range(1, steps + 1):
        fq = compute_fq(rho, w)
        w = solver.step_nonlinear(w, fq, dt)
        if step % sample_every == 0 or step == steps:
            times.append(w.time)
            norms.append(w.norm)

    times = np.asarray(times)
    n0 = norms[0]
    closed = 1.0 - (1.0 - n0) * np.exp(-2.0 * alpha * times)
    oracle = solve_ivp(lambda t, n: 2.0 * alpha * (1.0 - n), (times[0], times[-1]), [n0],
                       t_eval=times, method='DOP853', rtol=1e-12, atol=1e-14)
    logger.info(f"范数定律实验完成: N₀={n0:.6f}, N(T)={norms[-1]:.6f}")
    return pd.DataFrame({'t': times, 'norm': norms, 'closed_form': closed, 'ode_oracle': oracle.y[0]})


def manufactured_fq(grid: SpatialGrid, t: float) -> RealField:
    """收敛测试用的光滑 f_q(x, t) = 1 + 0.5·sin(2πx/L)·cos t"""
    s = (grid.x - grid.x_min) / grid.length
    return RealField(grid, 1.0 + 0.5 * np.sin(2.0 * np.pi * s) * np.cos(t))


def manufactured_wave(grid: SpatialGrid) -> WaveState:
    """无节点的光滑 ψ = 1 + 0.5e^{2πix} + 0.25e^{−4πix}"""
    s = (grid.x - grid.x_min) / grid.length
    psi = 1.0 + 0.5 * np.exp(2j * np.pi * s) + 0.25 * np.exp(-4j * np.pi * s)
    return WaveState(ComplexField(grid, psi), 0.0)


def continuity_convergence(dts: Sequence[float] = (0.01, 0.005, 0.0025), grid: Optional[SpatialGrid] = None,
                           alpha: float = 0.5,
                           fq_field: Callable[[SpatialGrid, float], RealField] = manufactured_fq,
                           psi0: Optional[WaveState] = None) -> pd.DataFrame:
    """
    修正连续性方程残差随 dt 的收敛阶

    每个 dt 只走一步，f_q 取步中点时刻的值；order 为相邻两级的观测阶
    """
    grid = grid or SpatialGrid(64, 0.0, 1.0, Boundary.PERIODIC)
    psi0 = psi0 or manufactured_wave(grid)
    solver = WaveSolver(grid, PhysicsParams(alpha=alpha))

    residuals = []
    for dt in dts:
        fq = fq_field(grid, psi0.time + 0.5 * dt)
        w1 = solver.step_nonlinear(psi0, fq, dt)
        residuals.append(solver.continuity_residual(psi0, w1, fq, dt))

    frame = pd.DataFrame({'dt': list(dts), 'residual': residuals})
    ratio = frame['residual'].shift(1) / frame['residual']
    frame['order'] = np.log(ratio) / np.log(frame['dt'].shift(1) / frame['dt'])
    logger.info(f"连续性残差收敛阶: {frame['order'].dropna().round(3).tolist()}")
    return frame


def _sweep_member(cfg: ScenarioConfig, alpha: float, out_dir: Optional[Path]) -> dict:
    member = cfg.with_overrides(alpha=alpha)
    row = {'alpha': alpha, 'h_q_final_ratio': float('nan'),
           'retrace_l2_error': float('nan'), 'retrace_rho_error': float('nan')}

    storage = None
    if out_dir is not None:
        storage = RunStorage(Path(out_dir) / f"alpha_{alpha:g}")

    try:
        if member.experiment.kind is ExperimentKind.REVERSAL:
            report = reversal_experiment(member)
            row.update({'h_q_final_ratio': _ratio(report.monitors['h_q']),
                        'retrace_l2_error': report.retrace_l2_error,
                        'retrace_rho_error': report.retrace_rho_error})
            if storage is not None:
                storage.write_reversal_run(member, report)
        else:
            result = run_scenario(member)
            row['h_q_final_ratio'] = result.h_q_final_ratio
            if storage is not None:
                storage.write_run(member, result)
    except NumericalAbort as e:
        logger.error(f"α 扫描成员中止: alpha={alpha:g}, {e}")
        if storage is not None:
            storage.write_aborted(member, e, e.snapshot)
        raise
    return row


def _ratio(h: pd.Series) -> float:
    return float(h.iloc[-1] / h.iloc[0]) if h.iloc[0] > 0 else float('nan')


def alpha_sweep(cfg: ScenarioConfig, alphas: Sequence[float], n_jobs: Optional[int] = None,
                out_dir: Union[str, Path, None] = None) -> pd.DataFrame:
    """
    对每个 α 独立运行场景

    各成员互不共享状态，输出写到各自目录；结果按提交顺序汇总
    """
    if n_jobs is None:
        n_jobs = config.get('SWEEP.n_jobs', 1)
    out_dir = Path(out_dir) if out_dir is not None else None
    logger.info(f"α 扫描开始: alphas={list(alphas)}, n_jobs={n_jobs}")
    rows = Parallel(n_jobs=n_jobs)(delayed(_sweep_member)(cfg, float(a), out_dir) for a in alphas)
    summary = pd.DataFrame(rows, columns=['alpha', 'h_q_final_ratio', 'retrace_l2_error', 'retrace_rho_error'])
    logger.info(f"α 扫描完成: {len(summary)} 个成员")
    return summary
