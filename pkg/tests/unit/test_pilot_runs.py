"""
试运行阈值建议测试
"""
import pytest

from scripts.pilot_runs import propose_bounds


def test_upper_bounds_scaled_by_margin():
    measured = {'relax_final_ratio': 0.012, 'equilibrium_h_ratio': 1.7,
                'equilibrium_l1_ratio': 1.2, 'linear_norm_drift': 3e-12, 'norm_law_rel_error': 2e-4}
    proposed = propose_bounds(measured, margin=2.0)
    assert proposed['relax_final_ratio'] == pytest.approx(0.024)
    assert proposed['equilibrium_h_factor'] == pytest.approx(3.4)
    assert proposed['equilibrium_l1_factor'] == pytest.approx(2.4)
    assert proposed['linear_norm_drift'] == pytest.approx(6e-12)
    assert proposed['norm_law_rel_tolerance'] == pytest.approx(4e-4)


def test_lower_bounds_relaxed():
    measured = {'dh_dt_agree_fraction': 0.97, 'reversal_errors': [1e-13, 0.02, 0.05],
                'reversal_ratio': 5e11, 'convergence_min_order': 1.98, 'relax_increasing_fraction': 0.0}
    proposed = propose_bounds(measured, margin=2.0)
    assert proposed['dh_dt_min_fraction'] == pytest.approx(0.92)
    assert proposed['reversal_ratio'] == pytest.approx(2.5e11)
    assert proposed['reversal_linear_error'] == pytest.approx(1e-12)
    assert proposed['convergence_min_order'] == pytest.approx(1.88)
    assert proposed['relax_max_increasing_fraction'] == pytest.approx(0.01)


def test_missing_measurements_skipped():
    proposed = propose_bounds({'relax_reexcitation': None, 'dh_dt_agree_fraction': None}, margin=2.0)
    assert proposed == {}
