"""
运行结果存储测试
"""
import json

import numpy as np
import pandas as pd
import pytest

from core.numerics import Boundary, SpatialGrid
from core.experiments import Snapshot
from core.scenario import parse_scenario, standard_scenario
from core.storage import RunStorage, read_snapshot


@pytest.fixture
def storage(tmp_path):
    return RunStorage(tmp_path / 'run')


def _snapshot():
    grid = SpatialGrid(16, 0.0, 1.0, Boundary.BOX)
    psi_sq = 2 * np.sin(np.pi * grid.x) ** 2
    return Snapshot(step=100, time=0.1, grid=grid, rho=np.ones(16), psi_sq=psi_sq,
                    fq=1.0 / psi_sq, velocity=np.zeros(16))


class TestCsv:

    def test_seventeen_digits(self, storage):
        path = storage.write_csv(pd.DataFrame({'t': [0.1], 'h_q': [1.0 / 3.0]}), 'x.csv')
        text = path.read_text()
        assert text.splitlines()[0] == 't,h_q'
        assert text.splitlines()[1] == '0.10000000000000001,0.33333333333333331'
        assert '\r' not in text

    def test_identical_frames_identical_bytes(self, tmp_path):
        frame = pd.DataFrame({'t': np.linspace(0, 1, 11), 'v': np.exp(np.linspace(0, 1, 11))})
        a = RunStorage(tmp_path / 'a').write_csv(frame, 'm.csv')
        b = RunStorage(tmp_path / 'b').write_csv(frame, 'm.csv')
        assert a.read_bytes() == b.read_bytes()


class TestSnapshots:

    def test_self_describing(self, storage):
        path = storage.write_snapshot(_snapshot())
        assert path.name == 'snap_00000100.csv'
        meta, frame = read_snapshot(path)
        assert meta['grid.boundary'] == 'box'
        assert int(meta['grid.n_points']) == 16
        assert float(meta['time']) == 0.1
        assert list(frame.columns) == ['x', 'rho', 'psi_sq', 'f_q', 'v']
        grid = SpatialGrid(int(meta['grid.n_points']), float(meta['grid.x_min']),
                           float(meta['grid.x_max']), meta['grid.boundary'])
        np.testing.assert_array_equal(frame['x'].to_numpy(), grid.x)


class TestManifest:

    def test_config_echo_round_trips(self, storage):
        cfg = standard_scenario()
        path = storage.write_config(cfg)
        assert parse_scenario(path.read_text()) == cfg

    def test_checksums(self, storage):
        cfg = standard_scenario()
        storage.write_config(cfg)
        storage.write_snapshot(_snapshot())
        manifest = json.loads(storage.write_manifest(cfg).read_text())
        assert manifest['status'] == 'ok'
        assert manifest['seed'] == cfg.ensemble.seed
        assert {f['path'] for f in manifest['files']} == {'config.resolved.cfg', 'snapshots/snap_00000100.csv'}
        assert all(len(f['sha256']) == 64 for f in manifest['files'])

    def test_aborted_manifest(self, storage):
        from core.exceptions import NumericalAbort
        cfg = standard_scenario()
        error = NumericalAbort("ψ 出现非有限值", step=12, time=0.012, snapshot=_snapshot())
        manifest = json.loads(storage.write_aborted(cfg, error, error.snapshot).read_text())
        assert manifest['status'] == 'aborted'
        assert manifest['diagnostic']['step'] == 12
        assert (storage.run_dir / 'snapshots' / 'abort.csv').exists()

    def test_plot_script_references_columns(self, storage):
        path = storage.write_plot_script(['t', 'h_q', 'h_bar_16', 'norm'])
        text = path.read_text()
        assert "'h_bar_16'" in text
        assert "monitors.csv" in text
