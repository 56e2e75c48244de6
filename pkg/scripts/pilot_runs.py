#!/usr/bin/env python3
"""
试运行脚本
按标准场景跑一遍带种子的试运行，记录测得的比值与建议阈值，供冻结 config.yml 中的 ACCEPTANCE 段

种子：ψ 相位 phase_seed = 20240601，系综 seed = 12345（见 core/scenario.py 的 standard_scenario）
报告写到 --out（JSON），建议阈值另以 YAML 片段打印
"""
import argparse
import json
import os
import sys
from pathlib import Path

# 添加项目根目录到路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pandas as pd
import yaml

from utils.config import config
from utils.logger import logger
from core.numerics import Boundary, ComplexField, RealField, SpatialGrid
from core.wave import WaveState
from core.experiments import alpha_sweep, continuity_convergence, norm_relaxation, run_scenario
from core.scenario import ExperimentKind, standard_scenario


def _standard(kind: ExperimentKind, steps: int, size: int, substeps: int):
    return standard_scenario(kind, ensemble__size=size, ensemble__substeps=substeps).with_overrides(steps=steps)


def pilot_relax(steps: int, size: int, substeps: int) -> dict:
    """弛豫、平衡对照与线性基线"""
    relax = run_scenario(_standard(ExperimentKind.RELAX, steps, size, substeps))
    control = run_scenario(_standard(ExperimentKind.EQUILIBRIUM_CONTROL, steps, size, substeps))
    baseline = run_scenario(_standard(ExperimentKind.LINEAR_BASELINE, steps, size, substeps))

    h = relax.monitors['h_q'].to_numpy()
    jitter = config.get('ACCEPTANCE.relax_jitter', 1e-3) * h[0]
    settled = np.flatnonzero(h < 0.01 * h[0])
    noise = float(np.max(np.abs(control.monitors['dh_dt_numeric'])))

    frame = relax.monitors
    qualifying = frame[np.abs(frame['dh_dt_numeric']) > noise]
    relative = (np.abs(qualifying['dh_dt_analytic'] - qualifying['dh_dt_numeric'])
                / np.abs(qualifying['dh_dt_numeric']))
    tolerance = config.get('ACCEPTANCE.dh_dt_rel_tolerance', 0.05)

    c = control.monitors
    b = baseline.monitors
    measured = {
        'relax_final_ratio': relax.h_q_final_ratio,
        'relax_increasing_fraction': float(np.count_nonzero(np.diff(h) > jitter) / (len(h) - 1)),
        'relax_reexcitation': float(h[settled[0]:].max() / h[0]) if settled.size else None,
        'dh_dt_noise_floor': noise,
        'dh_dt_qualifying': int(len(qualifying)),
        'dh_dt_agree_fraction': float(np.mean(relative <= tolerance)) if len(qualifying) else None,
        'equilibrium_h_ratio': float(c['h_q'].max() / c['h_q'].iloc[0]),
        'equilibrium_l1_ratio': float(c['l1_dist'].max() / c['l1_dist'].iloc[0]),
        'linear_norm_drift': float(np.max(np.abs(b['norm'] - 1.0))),
        'linear_h_bar_slope': float(np.polyfit(b['t'], b['h_bar_32'], 1)[0]),
        'linear_h_q_drift': float(np.max(np.abs(b['h_q'] - b['h_q'].iloc[0])) / c['h_q'].iloc[0]),
    }
    logger.info(f"弛豫试运行完成: {measured}")
    return measured


def pilot_reversal(substeps: int) -> dict:
    """反演回溯误差随 α 的变化"""
    cfg = standard_scenario(ExperimentKind.REVERSAL, ensemble__substeps=substeps)
    summary = alpha_sweep(cfg, [0.0, 0.25, 0.5])
    print(summary.to_string(index=False))
    errors = summary['retrace_l2_error'].to_numpy()
    return {
        'reversal_errors': errors.tolist(),
        'reversal_ratio': float(errors[-1] / max(errors[0], np.finfo(float).tiny)),
    }


def pilot_numerics() -> dict:
    """范数定律与连续性收敛阶"""
    grid = SpatialGrid(128, 0.0, 1.0, Boundary.PERIODIC)
    psi = 1.0 + 0.3 * np.exp(2j * np.pi * grid.x)
    psi *= np.sqrt(0.9 / grid.quadrature(np.abs(psi) ** 2))
    frame = norm_relaxation(grid, WaveState(ComplexField(grid, psi)), RealField(grid, np.ones(grid.n_points)),
                            t_end=5.0, dt=1e-3)
    orders = continuity_convergence((0.01, 0.005, 0.0025))['order'].dropna()
    return {
        'norm_law_rel_error': float((np.abs(frame['norm'] - frame['closed_form']) / frame['closed_form']).max()),
        'convergence_min_order': float(orders.min()),
    }


def propose_bounds(measured: dict, margin: float) -> dict:
    """上界乘以余量，下界除以余量；比例与阶数留固定余量"""
    proposed = {}
    upper = {
        'relax_final_ratio': 'relax_final_ratio',
        'equilibrium_h_factor': 'equilibrium_h_ratio',
        'equilibrium_l1_factor': 'equilibrium_l1_ratio',
        'linear_norm_drift': 'linear_norm_drift',
        'norm_law_rel_tolerance': 'norm_law_rel_error',
    }
    for key, source in upper.items():
        if measured.get(source) is not None:
            proposed[key] = float(f"{margin * measured[source]:.2g}")
    if measured.get('relax_increasing_fraction') is not None:
        fraction = max(margin * measured['relax_increasing_fraction'], 0.01)
        proposed['relax_max_increasing_fraction'] = float(f"{fraction:.2g}")
    if measured.get('dh_dt_agree_fraction') is not None:
        proposed['dh_dt_min_fraction'] = round(max(measured['dh_dt_agree_fraction'] - 0.05, 0.0), 2)
    if measured.get('reversal_errors'):
        proposed['reversal_linear_error'] = float(f"{max(margin * measured['reversal_errors'][0], 1e-12):.2g}")
        proposed['reversal_ratio'] = float(f"{measured['reversal_ratio'] / margin:.2g}")
    if measured.get('convergence_min_order') is not None:
        proposed['convergence_min_order'] = round(measured['convergence_min_order'] - 0.1, 2)
    return proposed


def main():
    parser = argparse.ArgumentParser(description='标准场景试运行')
    parser.add_argument('--steps', type=int, default=20000)
    parser.add_argument('--size', type=int, default=100000)
    parser.add_argument('--substeps', type=int, default=config.get('ENSEMBLE.substeps', 1),
                        help='每个时间步的粒子子步数')
    parser.add_argument('--margin', type=float, default=2.0, help='建议阈值相对测得值的余量倍数')
    parser.add_argument('--out', default='runs/pilot.json', help='试运行报告')
    parser.add_argument('--skip-relax', action='store_true')
    args = parser.parse_args()

    logger.info(f"开始试运行: steps={args.steps}, M={args.size}, substeps={args.substeps}")
    measured = {}
    if not args.skip_relax:
        measured.update(pilot_relax(args.steps, args.size, args.substeps))
    measured.update(pilot_reversal(args.substeps))
    measured.update(pilot_numerics())
    proposed = propose_bounds(measured, args.margin)
    standard = standard_scenario()

    report = {
        'seeds': {'phase_seed': standard.psi.phase_seed, 'ensemble_seed': standard.ensemble.seed},
        'steps': args.steps,
        'ensemble_size': args.size,
        'substeps': args.substeps,
        'margin': args.margin,
        'measured': measured,
        'proposed': proposed,
        'current': config.get_acceptance_config(),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, ensure_ascii=False) + '\n', encoding='utf-8')

    current = config.get_acceptance_config()
    table = pd.DataFrame({'current': pd.Series(current), 'proposed': pd.Series(proposed)})
    print(table.to_string())
    print(yaml.safe_dump({'ACCEPTANCE': {**current, **proposed}}, sort_keys=False, allow_unicode=True))
    print(f"✅ 试运行完成，报告已写入 {out}；核对后把建议值写入 config.yml 的 ACCEPTANCE 段")


if __name__ == "__main__":
    main()
