"""
场景配置模块
扁平的 `section.key = value` 文本格式 ↔ pydantic 场景模型，校验错误带行号
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator,
)

from utils.config import config
from utils.logger import logger
from core.exceptions import ConfigurationError
from core.numerics import Boundary, SpatialGrid
from core.ensemble import DensityKind, DensitySpec
from core.wave import PhysicsParams, PotentialKind, WaveState, superposition


class GridSpec(BaseModel):
    """网格段"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    boundary: Boundary = Boundary.BOX
    n_points: int = Field(512, ge=1)
    x_min: float = 0.0
    x_max: float = 1.0

    @model_validator(mode='after')
    def _check_extent(self):
        min_points = config.get('NUMERICS.min_points', 8)
        if self.n_points < min_points:
            raise ValueError(f"n_points 必须 ≥ {min_points}")
        if not self.x_max > self.x_min:
            raise ValueError("需要 x_max > x_min")
        return self

    def build(self) -> SpatialGrid:
        return SpatialGrid(self.n_points, self.x_min, self.x_max, self.boundary)


class PsiSpec(BaseModel):
    """
    初始波函数段：ψ₀ = Σ aₙe^{iφₙ}φₙ(x)

    未给出 phases 时，若有 phase_seed 则按种子抽取随机相位，否则相位为零；
    抽出的相位写回模型，回显配置时以显式值出现
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    modes: List[int] = Field(default_factory=lambda: [1])
    amplitudes: List[float] = Field(default_factory=lambda: [1.0])
    phases: Optional[List[float]] = None
    phase_seed: Optional[int] = None
    normalize: bool = True

    @model_validator(mode='before')
    @classmethod
    def _resolve_phases(cls, data: Any) -> Any:
        if not isinstance(data, dict) or data.get('phases') is not None:
            return data
        modes = data.get('modes', [1])
        count = len(modes) if isinstance(modes, (list, tuple)) else 1
        seed = data.get('phase_seed')
        if seed is None:
            phases = [0.0] * count
        else:
            phases = np.random.default_rng(int(seed)).uniform(0.0, 2.0 * np.pi, count).tolist()
        return {**data, 'phases': phases}

    @model_validator(mode='after')
    def _check_lengths(self):
        if not (len(self.modes) == len(self.amplitudes) == len(self.phases)):
            raise ValueError("modes、amplitudes、phases 的个数必须一致")
        if not any(a != 0 for a in self.amplitudes):
            raise ValueError("初始 ψ 的系数不能全为零")
        return self

    def coefficients(self) -> np.ndarray:
        return np.asarray(self.amplitudes) * np.exp(1j * np.asarray(self.phases))

    def build(self, grid: SpatialGrid) -> WaveState:
        return superposition(grid, self.modes, self.coefficients(), normalize=self.normalize)


class EnsembleSpec(BaseModel):
    """粒子系综段"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    size: int = Field(100000, ge=1)
    seed: int = 0
    bandwidth_factor: float = Field(default_factory=lambda: config.get('ENSEMBLE.bandwidth_factor', 4.0), ge=1.0)
    fq_cap: float = Field(default_factory=lambda: config.get('ENSEMBLE.fq_cap', 1000.0), gt=1.0)
    substeps: int = Field(default_factory=lambda: config.get('ENSEMBLE.substeps', 1), ge=1)


class TimeSpec(BaseModel):
    """时间推进段"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    dt: float = Field(1e-3, gt=0.0)
    steps: int = Field(20000, ge=0)
    sample_interval: int = Field(100, ge=1)
    snapshot_interval: int = Field(default_factory=lambda: config.get('OUTPUT.snapshot_interval', 0), ge=0)


class MonitorSpec(BaseModel):
    """监测段"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    cells: List[int] = Field(default_factory=lambda: list(config.get('MONITORS.coarse_cells', [16, 32, 64])))

    @field_validator('cells')
    @classmethod
    def _positive(cls, cells: List[int]) -> List[int]:
        if not cells or any(c < 1 for c in cells):
            raise ValueError("粗粒化单元数必须为正整数")
        return sorted(cells)


class ExperimentKind(str, Enum):
    """实验类型"""
    RELAX = "relax"
    EQUILIBRIUM_CONTROL = "equilibrium_control"
    LINEAR_BASELINE = "linear_baseline"
    REVERSAL = "reversal"


class ExperimentSpec(BaseModel):
    """实验段"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: ExperimentKind = ExperimentKind.RELAX
    name: str = "scenario"
    t_reverse: Optional[float] = Field(None, gt=0.0)
    wave_only: bool = False


class ScenarioConfig(BaseModel):
    """完整场景"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    grid: GridSpec = Field(default_factory=GridSpec)
    physics: PhysicsParams = Field(default_factory=PhysicsParams)
    psi: PsiSpec = Field(default_factory=PsiSpec)
    rho: DensitySpec = Field(default_factory=DensitySpec)
    ensemble: EnsembleSpec = Field(default_factory=EnsembleSpec)
    time: TimeSpec = Field(default_factory=TimeSpec)
    monitor: MonitorSpec = Field(default_factory=MonitorSpec)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)

    @model_validator(mode='after')
    def _cross_checks(self):
        n = self.grid.n_points
        bad = [c for c in self.monitor.cells if n % c != 0]
        if bad:
            raise ValueError(f"粗粒化单元数 {bad} 必须整除 grid.n_points = {n}")
        if self.physics.potential is PotentialKind.BOX_WALLS and self.grid.boundary is not Boundary.BOX:
            raise ValueError("box_walls 势需要 grid.boundary = box")
        if self.grid.boundary is Boundary.BOX and any(m < 1 for m in self.psi.modes):
            raise ValueError("box 网格的模式编号必须 ≥ 1")
        if self.rho.kind is DensityKind.EIGENSTATE and self.grid.boundary is Boundary.BOX and self.rho.mode < 1:
            raise ValueError("box 本征态密度的 mode 必须 ≥ 1")

        kind = self.experiment.kind
        if kind is ExperimentKind.LINEAR_BASELINE and self.physics.alpha != 0:
            raise ValueError("linear_baseline 需要 physics.alpha = 0")
        if kind is ExperimentKind.EQUILIBRIUM_CONTROL and self.rho.kind is not DensityKind.EQUILIBRIUM:
            raise ValueError("equilibrium_control 需要 rho.kind = equilibrium")
        if kind is ExperimentKind.REVERSAL:
            if self.experiment.t_reverse is None:
                raise ValueError("reversal 需要 experiment.t_reverse")
            ratio = self.experiment.t_reverse / self.time.dt
            if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
                raise ValueError("experiment.t_reverse 必须是 time.dt 的整数倍")
        return self

    @property
    def reverse_steps(self) -> int:
        """反演前（以及反演后）各走的步数"""
        if self.experiment.t_reverse is None:
            return 0
        return int(round(self.experiment.t_reverse / self.time.dt))

    def with_overrides(self, seed: Optional[int] = None, steps: Optional[int] = None,
                       dt: Optional[float] = None, alpha: Optional[float] = None) -> "ScenarioConfig":
        """命令行覆盖，覆盖后重新校验"""
        data = self.model_dump(mode='json')
        if seed is not None:
            data['ensemble']['seed'] = seed
        if steps is not None:
            data['time']['steps'] = steps
        if dt is not None:
            data['time']['dt'] = dt
        if alpha is not None:
            data['physics']['alpha'] = alpha
        try:
            return ScenarioConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(_first_message(e), source='<overrides>') from e


SECTIONS: Dict[str, type] = {
    'grid': GridSpec,
    'physics': PhysicsParams,
    'psi': PsiSpec,
    'rho': DensitySpec,
    'ensemble': EnsembleSpec,
    'time': TimeSpec,
    'monitor': MonitorSpec,
    'experiment': ExperimentSpec,
}

LIST_KEYS = {'psi.modes', 'psi.amplitudes', 'psi.phases', 'monitor.cells'}


def _first_message(error: ValidationError) -> str:
    err = error.errors()[0]
    loc = '.'.join(str(p) for p in err['loc'])
    msg = err['msg'].removeprefix('Value error, ')
    return f"{loc}: {msg}" if loc else msg


def parse_scenario(text: str, source: Optional[str] = None) -> ScenarioConfig:
    """
    解析扁平配置文本

    每行 `section.key = value`，`#` 起注释；列表值用逗号分隔。
    任何错误都抛出带行号的 ConfigurationError
    """
    data: Dict[str, Dict[str, Any]] = {}
    lines: Dict[Tuple[str, ...], int] = {}
    section_lines: Dict[str, int] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError(f"缺少 '=': {raw.strip()}", number, source)

        key, value = (part.strip() for part in line.split('=', 1))
        if key.count('.') != 1:
            raise ConfigurationError(f"键必须是 section.key 形式: {key}", number, source)
        section, name = key.split('.')
        if section not in SECTIONS:
            raise ConfigurationError(f"未知段落: {section}", number, source)
        if (section, name) in lines:
            raise ConfigurationError(f"重复的键 {key}（首次出现在第 {lines[(section, name)]} 行）", number, source)
        if value == '':
            raise ConfigurationError(f"键 {key} 缺少取值", number, source)

        if key in LIST_KEYS:
            value = [item.strip() for item in value.split(',') if item.strip()]
        data.setdefault(section, {})[name] = value
        lines[(section, name)] = number
        section_lines.setdefault(section, number)

    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        loc = tuple(str(p) for p in err['loc'])
        number = lines.get(loc[:2]) if len(loc) >= 2 else None
        if number is None and loc:
            number = section_lines.get(loc[0])
        msg = err['msg'].removeprefix('Value error, ')
        key = '.'.join(loc[:2])
        raise ConfigurationError(f"{key}: {msg}" if key else msg, number, source) from e

    logger.debug(f"场景配置解析完成: {source or '<text>'}, kind={cfg.experiment.kind.value}")
    return cfg


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """读取场景文件"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigurationError(f"无法读取配置文件: {e}", source=str(path)) from e
    return parse_scenario(text, source=str(path))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ', '.join(_format_value(v) for v in value)
    return str(value)


def to_flat_text(cfg: ScenarioConfig) -> str:
    """
    把场景（含全部默认值）写回扁平文本

    浮点数用 repr，重新解析得到逐位相同的模型
    """
    out = []
    for section in SECTIONS:
        model = getattr(cfg, section)
        for name in type(model).model_fields:
            value = getattr(model, name)
            if value is None:
                continue
            out.append(f"{section}.{name} = {_format_value(value)}")
        out.append('')
    return '\n'.join(out)


def standard_scenario(kind: ExperimentKind = ExperimentKind.RELAX, **overrides) -> ScenarioConfig:
    """
    仓库冻结的标准场景

    box [0,1]，n=512，前 8 个模式等幅、带种子的随机相位，ρ₀ = |φ₁|²，
    M = 10⁵，dt = 10⁻³，T = 20，α = 1/2
    """
    data: Dict[str, Dict[str, Any]] = {
        'grid': {'boundary': 'box', 'n_points': 512, 'x_min': 0.0, 'x_max': 1.0},
        'physics': {'alpha': 0.5},
        'psi': {'modes': list(range(1, 9)), 'amplitudes': [1.0] * 8, 'phase_seed': 20240601},
        'rho': {'kind': 'eigenstate', 'mode': 1},
        'ensemble': {'size': 100000, 'seed': 12345},
        'time': {'dt': 1e-3, 'steps': 20000, 'sample_interval': 100},
        'monitor': {'cells': [16, 32, 64]},
        'experiment': {'kind': kind.value, 'name': kind.value},
    }
    if kind is ExperimentKind.EQUILIBRIUM_CONTROL:
        data['rho'] = {'kind': 'equilibrium'}
    elif kind is ExperimentKind.LINEAR_BASELINE:
        data['physics'] = {'alpha': 0.0}
    elif kind is ExperimentKind.REVERSAL:
        data['experiment'].update({'t_reverse': 2.0, 'wave_only': True})

    for key, value in overrides.items():
        section, name = key.split('__', 1)
        data.setdefault(section, {})[name] = value
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(_first_message(e), source='<standard>') from e
