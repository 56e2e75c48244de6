"""
标准场景验收测试（box [0,1]，n=512，8 个模式，M=10⁵，dt=10⁻³）

每个场景单独跑一次，耗时以分钟计：pytest -m slow tests/performance
"""
import numpy as np
import pytest

from utils.config import config
from core.numerics import Boundary, ComplexField, RealField, SpatialGrid
from core.wave import WaveState
from core.experiments import alpha_sweep, continuity_convergence, norm_relaxation, run_scenario
from core.scenario import ExperimentKind, standard_scenario

pytestmark = pytest.mark.slow


ACCEPTANCE = config.get_acceptance_config()


def bound(name):
    return ACCEPTANCE[name]


@pytest.fixture(scope='module')
def relax():
    return run_scenario(standard_scenario(ExperimentKind.RELAX))


@pytest.fixture(scope='module')
def control():
    return run_scenario(standard_scenario(ExperimentKind.EQUILIBRIUM_CONTROL))


@pytest.fixture(scope='module')
def baseline():
    return run_scenario(standard_scenario(ExperimentKind.LINEAR_BASELINE))


def test_h_theorem_decay(relax):
    h = relax.monitors['h_q'].to_numpy()
    jitter = bound('relax_jitter') * h[0]
    increasing = np.count_nonzero(np.diff(h) > jitter)
    assert increasing < bound('relax_max_increasing_fraction') * (len(h) - 1)
    assert relax.h_q_final_ratio <= bound('relax_final_ratio')
    assert relax.monitors['t'].iloc[-1] == pytest.approx(20.0)

    # 一旦降到 1% 以下就不再回升到 2% 以上
    settled = np.flatnonzero(h < 0.01 * h[0])
    if settled.size:
        assert h[settled[0]:].max() <= 0.02 * h[0]


def test_two_dh_dt_computations_agree(relax, control):
    floor = float(np.max(np.abs(control.monitors['dh_dt_numeric'])))
    frame = relax.monitors
    qualifying = frame[np.abs(frame['dh_dt_numeric']) > floor]
    assert len(qualifying) > 0
    relative = np.abs(qualifying['dh_dt_analytic'] - qualifying['dh_dt_numeric']) / np.abs(qualifying['dh_dt_numeric'])
    agreeing = np.count_nonzero(relative <= bound('dh_dt_rel_tolerance'))
    assert agreeing >= bound('dh_dt_min_fraction') * len(qualifying)


def test_norm_relaxation_law():
    grid = SpatialGrid(128, 0.0, 1.0, Boundary.PERIODIC)
    psi = 1.0 + 0.3 * np.exp(2j * np.pi * grid.x)
    psi *= np.sqrt(0.9 / grid.quadrature(np.abs(psi) ** 2))
    rho = RealField(grid, np.ones(grid.n_points))
    frame = norm_relaxation(grid, WaveState(ComplexField(grid, psi)), rho, t_end=5.0, dt=1e-3)
    expected = 1.0 - 0.1 * np.exp(-frame['t'])
    assert (np.abs(frame['norm'] - expected) / expected).max() <= bound('norm_law_rel_tolerance')


def test_equilibrium_persists(control):
    frame = control.monitors
    assert frame['l1_dist'].max() <= bound('equilibrium_l1_factor') * frame['l1_dist'].iloc[0]
    assert frame['h_q'].max() <= bound('equilibrium_h_factor') * frame['h_q'].iloc[0]


def test_linear_baseline(baseline, control):
    frame = baseline.monitors
    assert np.max(np.abs(frame['norm'] - 1.0)) <= bound('linear_norm_drift')

    slope = np.polyfit(frame['t'], frame['h_bar_32'], 1)[0]
    assert slope <= 0.0

    # 细粒度 H 在线性演化下守恒，允许的偏离取平衡对照 t=0 的估计噪声
    noise = control.monitors['h_q'].iloc[0]
    drift = np.abs(frame['h_q'] - frame['h_q'].iloc[0])
    assert drift.max() <= bound('equilibrium_h_factor') * noise


def test_arrow_of_time():
    summary = alpha_sweep(standard_scenario(ExperimentKind.REVERSAL), [0.0, 0.25, 0.5], n_jobs=1)
    errors = summary['retrace_l2_error'].to_numpy()
    assert errors[0] <= bound('reversal_linear_error')
    assert errors[2] >= bound('reversal_ratio') * max(errors[0], np.finfo(float).tiny)
    assert errors[0] < errors[1] < errors[2]


def test_continuity_convergence():
    frame = continuity_convergence((0.01, 0.005, 0.0025))
    assert (frame['order'].dropna() >= bound('convergence_min_order')).all()
