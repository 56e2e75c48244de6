"""
实验驱动集成测试（缩小规模）
"""
import json

import numpy as np
import pandas as pd
import pytest

from core.exceptions import NumericalAbort
from core.numerics import Boundary, ComplexField, RealField, SpatialGrid
from core.wave import WaveSolver, WaveState, eigenstate
from core.experiments import (
    alpha_sweep, conjugate_reverse, continuity_convergence, norm_relaxation, reversal_experiment,
    run_scenario,
)
from core.scenario import parse_scenario

SMALL = """
grid.boundary = box
grid.n_points = 64
physics.alpha = {alpha}
psi.modes = 1, 2, 3
psi.amplitudes = 1, 0.8, 0.6
psi.phase_seed = 5
rho.kind = {rho}
ensemble.size = 4000
ensemble.seed = 1
time.dt = 0.001
time.steps = {steps}
time.sample_interval = 10
monitor.cells = 8, 16, 32
experiment.kind = {kind}
"""

REVERSAL = SMALL + """
experiment.t_reverse = 0.2
experiment.wave_only = true
"""


def small(alpha=0.5, rho='eigenstate', steps=50, kind='relax', template=SMALL):
    return parse_scenario(template.format(alpha=alpha, rho=rho, steps=steps, kind=kind))


class TestRunScenario:

    def test_monitor_table(self):
        result = run_scenario(small())
        frame = result.monitors
        assert list(frame.columns) == ['t', 'h_q', 'h_bar_8', 'h_bar_16', 'h_bar_32', 'norm', 'l1_dist',
                                       'dh_dt_analytic', 'dh_dt_numeric', 'continuity_residual',
                                       'floored_points']
        np.testing.assert_allclose(frame['t'], [0.0, 0.01, 0.02, 0.03, 0.04, 0.05], atol=1e-12)
        assert (frame['h_q'] >= 0).all()
        assert (frame['dh_dt_analytic'] <= 0).all()
        for column in ('h_bar_8', 'h_bar_16', 'h_bar_32'):
            assert (frame[column] <= frame['h_q'] + 1e-12).all()
        assert result.ensemble.size == 4000
        assert result.final_wave.time == pytest.approx(0.05)

    def test_deterministic(self):
        a, b = run_scenario(small()), run_scenario(small())
        pd.testing.assert_frame_equal(a.monitors, b.monitors, check_exact=True)
        np.testing.assert_array_equal(a.ensemble.positions, b.ensemble.positions)

    def test_snapshots_first_and_last(self):
        result = run_scenario(small())
        assert [s.step for s in result.snapshots] == [0, 50]

    def test_diagnostics(self):
        result = run_scenario(small())
        assert list(result.diagnostics.columns) == ['t', 'h_valentini', 'energy']
        assert len(result.diagnostics) == len(result.monitors)

    def test_linear_baseline_conserves_norm(self):
        result = run_scenario(small(alpha=0.0, kind='linear_baseline', steps=200))
        assert np.max(np.abs(result.monitors['norm'] - 1.0)) < 1e-9

    def test_relaxation_reduces_h(self):
        result = run_scenario(small(steps=300).with_overrides(seed=2))
        h = result.monitors['h_q']
        assert h.iloc[-1] < h.iloc[0]

    def test_equilibrium_control_wave_only_stays_put(self):
        text = SMALL.replace('psi.modes = 1, 2, 3', 'psi.modes = 2').replace(
            'psi.amplitudes = 1, 0.8, 0.6', 'psi.amplitudes = 1') + "experiment.wave_only = true\n"
        cfg = parse_scenario(text.format(alpha=0.5, rho='equilibrium', steps=100, kind='equilibrium_control'))
        result = run_scenario(cfg)
        assert result.monitors['h_q'].max() < 1e-12
        assert result.ensemble is None
        np.testing.assert_allclose(result.monitors['norm'], 1.0, atol=1e-12)

    def test_coupled_equilibrium_holds(self):
        # 粒子与 ψ 同步推进时，ρ₀ = |ψ₀|² 的系综只保留初始估计噪声
        text = SMALL.replace('grid.n_points = 64', 'grid.n_points = 128').replace(
            'psi.modes = 1, 2, 3', 'psi.modes = 1, 2, 3, 4, 5').replace(
            'psi.amplitudes = 1, 0.8, 0.6', 'psi.amplitudes = 1, 1, 1, 1, 1').replace(
            'ensemble.size = 4000', 'ensemble.size = 10000')
        cfg = parse_scenario(text.format(alpha=0.5, rho='equilibrium', steps=200, kind='equilibrium_control'))
        frame = run_scenario(cfg).monitors
        assert frame['l1_dist'].max() <= 2.0 * frame['l1_dist'].iloc[0]
        assert frame['h_q'].max() <= 5.0 * frame['h_q'].iloc[0]
        assert np.max(np.abs(frame['norm'] - 1.0)) < 0.01

    def test_nan_aborts_with_snapshot(self, monkeypatch):
        def broken(self, w, fq, dt, alpha=None):
            return w.evolved(np.full(w.grid.n_points, np.nan), dt)

        monkeypatch.setattr(WaveSolver, 'step_nonlinear', broken)
        with pytest.raises(NumericalAbort) as info:
            run_scenario(small())
        assert info.value.step == 1
        assert info.value.snapshot is not None
        assert info.value.snapshot.step == 0


class TestReversal:

    def test_conjugate_flips_velocity(self, box_grid, three_mode_state):
        solver = WaveSolver(box_grid)
        v = solver.velocity_field(three_mode_state).values
        v_reversed = solver.velocity_field(conjugate_reverse(three_mode_state)).values
        np.testing.assert_allclose(v_reversed, -v, atol=1e-12)

    def test_conjugate_real_unchanged(self, box_grid):
        w = WaveState(ComplexField(box_grid, eigenstate(box_grid, 1)))
        np.testing.assert_array_equal(conjugate_reverse(w).psi.values, w.psi.values)

    def test_plane_wave_reversed(self, periodic_grid):
        w = WaveState(ComplexField(periodic_grid, eigenstate(periodic_grid, 2)))
        solver = WaveSolver(periodic_grid)
        np.testing.assert_allclose(solver.velocity_field(conjugate_reverse(w)).values, -4 * np.pi, rtol=1e-12)

    def test_linear_retraces_and_nonlinear_does_not(self):
        linear = reversal_experiment(small(alpha=0.0, kind='reversal', template=REVERSAL))
        nonlinear = reversal_experiment(small(alpha=0.5, kind='reversal', template=REVERSAL))
        assert linear.retrace_l2_error <= 1e-6
        assert nonlinear.retrace_l2_error >= 100 * max(linear.retrace_l2_error, 1e-15)
        assert nonlinear.retrace_rho_error > linear.retrace_rho_error

    def test_traces(self):
        report = reversal_experiment(small(alpha=0.5, kind='reversal', template=REVERSAL))
        assert len(report.forward_h_trace) == len(report.backward_h_trace) == 21
        assert report.forward_h_trace.index[-1] == pytest.approx(0.2)
        assert report.backward_h_trace.index[0] == pytest.approx(0.0, abs=1e-12)
        frame = report.to_frame()
        assert list(frame.columns) == ['leg', 't', 'h_q']
        assert set(frame['leg']) == {'forward', 'backward'}

    def test_equilibrium_start_behaves_linearly(self):
        text = REVERSAL.replace('psi.modes = 1, 2, 3', 'psi.modes = 1').replace(
            'psi.amplitudes = 1, 0.8, 0.6', 'psi.amplitudes = 1')
        errors = [reversal_experiment(parse_scenario(text.format(alpha=a, rho='equilibrium', steps=0,
                                                                 kind='reversal'))).retrace_l2_error
                  for a in (0.0, 0.5)]
        assert errors[1] <= 10 * errors[0] + 1e-12

    def test_ensemble_mode(self):
        cfg = small(alpha=0.5, kind='reversal', template=REVERSAL.replace('wave_only = true', 'wave_only = false'))
        report = reversal_experiment(cfg)
        assert report.retrace_rho_error >= 0
        assert np.isfinite(report.retrace_l2_error)

    def test_t_reverse_argument(self):
        report = reversal_experiment(small(alpha=0.0), t_reverse=0.05)
        assert report.t_reverse == pytest.approx(0.05)

    def test_alpha_sweep_monotone(self, tmp_path):
        cfg = small(alpha=0.0, kind='reversal', template=REVERSAL)
        summary = alpha_sweep(cfg, [0.0, 0.25, 0.5], n_jobs=1, out_dir=tmp_path)
        assert list(summary['alpha']) == [0.0, 0.25, 0.5]
        errors = summary['retrace_l2_error'].to_numpy()
        assert errors[0] < errors[1] < errors[2]
        for name in ('alpha_0', 'alpha_0.25', 'alpha_0.5'):
            assert (tmp_path / name / 'reversal.csv').exists()
            assert (tmp_path / name / 'manifest.json').exists()

    def test_alpha_sweep_aborted_member_writes_manifest(self, tmp_path, mocker):
        mocker.patch('core.experiments.run_scenario',
                     side_effect=NumericalAbort("ψ 出现非有限值", 7, 0.007))
        with pytest.raises(NumericalAbort):
            alpha_sweep(small(), [0.5], n_jobs=1, out_dir=tmp_path)
        manifest = json.loads((tmp_path / 'alpha_0.5' / 'manifest.json').read_text(encoding='utf-8'))
        assert manifest['status'] == 'aborted'
        assert (tmp_path / 'alpha_0.5' / 'config.resolved.cfg').exists()


class TestNormLaw:

    def test_frozen_rho_norm_relaxes(self):
        grid = SpatialGrid(128, 0.0, 1.0, Boundary.PERIODIC)
        psi = 1.0 + 0.3 * np.exp(2j * np.pi * grid.x)
        psi *= np.sqrt(0.9 / grid.quadrature(np.abs(psi) ** 2))
        rho = RealField(grid, np.ones(grid.n_points))
        frame = norm_relaxation(grid, WaveState(ComplexField(grid, psi)), rho, t_end=5.0, dt=1e-3)
        assert frame['t'].iloc[-1] == pytest.approx(5.0)
        relative = np.abs(frame['norm'] - frame['closed_form']) / frame['closed_form']
        assert relative.max() <= 0.01
        np.testing.assert_allclose(frame['ode_oracle'], frame['closed_form'], rtol=1e-8)


class TestConvergence:

    def test_second_order(self):
        frame = continuity_convergence([0.01, 0.005, 0.0025])
        assert list(frame.columns) == ['dt', 'residual', 'order']
        assert frame['residual'].is_monotonic_decreasing
        assert (frame['order'].dropna() >= 1.8).all()
