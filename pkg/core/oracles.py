"""
内置校验模块
符号/求积参照与随机性质检验，`check` 子命令逐项运行并汇总
"""
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
import pandas as pd
import sympy as sp
from scipy import integrate, stats

from utils.logger import logger
from core.numerics import Boundary, ComplexField, RealField, SpatialGrid
from core.wave import WaveSolver, WaveState, eigenstate, gaussian_packet, superposition
from core.ensemble import DensityKind, DensitySpec, FqField, sample_initial
from core.monitors import dh_dt_analytic, h_bar, h_function, l1_distance


@dataclass
class OracleResult:
    """单项校验结果"""
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _symbolic_quantum_potential(amplitude: sp.Expr, x: sp.Symbol) -> sp.Expr:
    """Q = −(1/2)R''/R"""
    return sp.simplify(-sp.Rational(1, 2) * sp.diff(amplitude, x, 2) / amplitude)


class OracleSuite:
    """校验集"""

    def __init__(self, seed: int = 2024, trials: int = 1000):
        self.seed = seed
        self.trials = trials
        self.checks: List[Callable[[], OracleResult]] = [
            self.box_ground_quantum_potential,
            self.gaussian_quantum_potential,
            self.plane_wave_velocity,
            self.box_eigen_energies,
            self.h_function_quadrature,
            self.l1_distance_quadrature,
            self.h_function_nonnegative,
            self.dh_dt_nonpositive,
            self.h_bar_below_h_q,
            self.norm_law_symbolic,
            self.initial_sampling_ks,
        ]
        logger.info(f"校验集初始化完成: {len(self.checks)} 项, seed={seed}, trials={trials}")

    def box_ground_quantum_potential(self) -> OracleResult:
        """box 基态 R = √2 sin(πx)：Q ≡ π²/2"""
        x = sp.symbols('x')
        expected = float(_symbolic_quantum_potential(sp.sqrt(2) * sp.sin(sp.pi * x), x))
        grid = SpatialGrid(256, 0.0, 1.0, Boundary.BOX)
        solver = WaveSolver(grid)
        q = solver.quantum_potential(WaveState(ComplexField(grid, eigenstate(grid, 1))))
        error = float(np.max(np.abs(q.values - expected)))
        return OracleResult('box_ground_quantum_potential', error <= 1e-6, error, 1e-6,
                            f"Q = {expected:.12g}")

    def gaussian_quantum_potential(self) -> OracleResult:
        """t = 0 的高斯波包：Q = 1/(4σ²) − x²/(8σ⁴)"""
        x, sigma = sp.symbols('x sigma', positive=True)
        q_expr = _symbolic_quantum_potential(sp.exp(-x ** 2 / (4 * sigma ** 2)), x)
        q_func = sp.lambdify((x, sigma), q_expr, 'numpy')

        grid = SpatialGrid(256, -10.0, 10.0, Boundary.PERIODIC)
        solver = WaveSolver(grid)
        q = solver.quantum_potential(gaussian_packet(grid, sigma0=1.0))
        core = np.abs(grid.x) < 3.0
        error = float(np.max(np.abs(q.values[core] - q_func(grid.x[core], 1.0))))
        return OracleResult('gaussian_quantum_potential', error <= 1e-6, error, 1e-6)

    def plane_wave_velocity(self) -> OracleResult:
        """ψ = e^{ikx}：网格上 v ≡ k"""
        grid = SpatialGrid(64, 0.0, 1.0, Boundary.PERIODIC)
        k = 2.0 * np.pi * 3
        w = superposition(grid, [3], [1.0])
        v = WaveSolver(grid).velocity_field(w)
        error = float(np.max(np.abs(v.values - k)) / k)
        return OracleResult('plane_wave_velocity', error <= 1e-12, error, 1e-12)

    def box_eigen_energies(self) -> OracleResult:
        """box 本征能量 n²π²/(2L²)，由 sympy 对正弦模求二阶导得到"""
        x = sp.symbols('x')
        solver = WaveSolver(SpatialGrid(128, 0.0, 1.0, Boundary.BOX))
        worst = 0.0
        for n in range(1, 5):
            mode = sp.sin(n * sp.pi * x)
            exact = float(sp.simplify(-sp.Rational(1, 2) * sp.diff(mode, x, 2) / mode))
            w = WaveState(ComplexField(solver.grid, eigenstate(solver.grid, n)))
            worst = max(worst, abs(solver.energy(w) - exact) / exact)
        return OracleResult('box_eigen_energies', worst <= 1e-9, worst, 1e-9)

    def h_function_quadrature(self) -> OracleResult:
        """ρ = 1, |ψ|² = 2x：与 quad 积分 (1−2x)ln(1/2x) 比较"""
        reference, _ = integrate.quad(lambda s: (1.0 - 2.0 * s) * np.log(1.0 / (2.0 * s)), 0.0, 1.0, limit=200)
        grid = SpatialGrid(4096, 0.0, 1.0, Boundary.BOX)
        value = h_function(RealField(grid, np.ones(grid.n_points)), RealField(grid, 2.0 * grid.x))
        error = abs(value - reference)
        return OracleResult('h_function_quadrature', error <= 5e-3, error, 5e-3,
                            f"quad = {reference:.8f}, grid = {value:.8f}")

    def l1_distance_quadrature(self) -> OracleResult:
        """ρ = 1, |ψ|² = 2x：∫|1 − 2x| = 1/2"""
        grid = SpatialGrid(4096, 0.0, 1.0, Boundary.BOX)
        value = l1_distance(RealField(grid, np.ones(grid.n_points)), RealField(grid, 2.0 * grid.x))
        error = abs(value - 0.5)
        return OracleResult('l1_distance_quadrature', error <= 1e-3, error, 1e-3)

    def _random_pairs(self, grid: SpatialGrid):
        rng = np.random.default_rng(self.seed)
        for _ in range(self.trials):
            a = rng.uniform(0.01, 1.0, grid.n_points)
            b = rng.uniform(0.01, 1.0, grid.n_points)
            yield a / grid.quadrature(a), b / grid.quadrature(b)

    def h_function_nonnegative(self) -> OracleResult:
        grid = SpatialGrid(64, 0.0, 1.0, Boundary.PERIODIC)
        worst = min(h_function(RealField(grid, a), RealField(grid, b)) for a, b in self._random_pairs(grid))
        return OracleResult('h_function_nonnegative', worst >= 0.0, worst, 0.0,
                            f"{self.trials} 组随机场的最小值")

    def dh_dt_nonpositive(self) -> OracleResult:
        grid = SpatialGrid(64, 0.0, 1.0, Boundary.PERIODIC)
        rng = np.random.default_rng(self.seed + 1)
        worst = -np.inf
        for _ in range(self.trials):
            fq = FqField(grid, np.exp(rng.normal(0.0, 1.0, grid.n_points)))
            psi_sq = RealField(grid, rng.uniform(0.0, 2.0, grid.n_points))
            worst = max(worst, dh_dt_analytic(fq, psi_sq, alpha=rng.uniform(0.0, 1.0)))
        return OracleResult('dh_dt_nonpositive', worst <= 0.0, float(worst), 0.0,
                            f"{self.trials} 组随机 f_q 的最大值")

    def h_bar_below_h_q(self) -> OracleResult:
        grid = SpatialGrid(64, 0.0, 1.0, Boundary.PERIODIC)
        worst = -np.inf
        for a, b in self._random_pairs(grid):
            rho, psi_sq = RealField(grid, a), RealField(grid, b)
            h_q = h_function(rho, psi_sq)
            for cells in (8, 16, 32):
                worst = max(worst, h_bar(rho, psi_sq, cells) - h_q)
        return OracleResult('h_bar_below_h_q', worst <= 1e-12, float(worst), 1e-12)

    def norm_law_symbolic(self) -> OracleResult:
        """dN/dt = 2α(1 − N) 的解为 1 − (1 − N₀)e^{−2αt}"""
        t, alpha, n0 = sp.symbols('t alpha N_0', positive=True)
        n = sp.Function('N')
        solution = sp.dsolve(sp.Eq(n(t).diff(t), 2 * alpha * (1 - n(t))), n(t), ics={n(0): n0})
        difference = sp.simplify(solution.rhs - (1 - (1 - n0) * sp.exp(-2 * alpha * t)))
        passed = difference == 0
        return OracleResult('norm_law_symbolic', bool(passed), 0.0 if passed else float('nan'), 0.0,
                            str(solution.rhs))

    def initial_sampling_ks(self) -> OracleResult:
        """从 2sin²(πx) 逆 CDF 采样，KS 检验 p 值"""
        grid = SpatialGrid(512, 0.0, 1.0, Boundary.BOX)
        spec = DensitySpec(kind=DensityKind.EIGENSTATE, mode=1)
        e = sample_initial(spec, 5000, self.seed, grid)
        cdf = lambda s: s - np.sin(2.0 * np.pi * s) / (2.0 * np.pi)
        p_value = float(stats.kstest(e.positions, cdf).pvalue)
        return OracleResult('initial_sampling_ks', p_value > 0.001, p_value, 0.001, "p 值")

    def run(self) -> pd.DataFrame:
        """运行全部校验；单项异常记为失败"""
        results = []
        for check in self.checks:
            try:
                result = check()
            except Exception as e:
                logger.error(f"校验 {check.__name__} 出错: {e}")
                result = OracleResult(check.__name__, False, float('nan'), float('nan'), str(e))
            level = "INFO" if result.passed else "WARNING"
            logger.log(level, f"{result.name}: {'通过' if result.passed else '失败'} "
                              f"(value={result.value:.3e}, tol={result.tolerance:.1e})")
            results.append(result)
        return pd.DataFrame([r.__dict__ for r in results])

