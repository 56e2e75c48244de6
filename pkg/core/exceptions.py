"""
异常定义
"""
from typing import Any, Optional


class PilotWaveError(Exception):
    """模拟器异常基类"""


class GridAlignmentError(PilotWaveError):
    """场长度与网格点数不一致"""


class OutOfDomainError(PilotWaveError):
    """位置落在盒子区域之外"""


class InvalidDensityError(PilotWaveError):
    """初始密度为负、全零或不可归一化"""


class ConfigurationError(PilotWaveError):
    """配置错误，尽量携带出错的行号"""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.message = message
        self.line = line
        self.source = source
        super().__init__(self.located())

    def __reduce__(self):
        return type(self), (self.message, self.line, self.source)

    def located(self) -> str:
        if self.line is None:
            return self.message if self.source is None else f"{self.source}: {self.message}"
        return f"{self.source or '<config>'}:{self.line}: {self.message}"


class NumericalAbort(PilotWaveError):
    """ψ 或 ρ 出现非有限值，携带诊断快照"""

    def __init__(self, message: str, step: int, time: float, snapshot: Optional[Any] = None):
        self.step = step
        self.time = time
        self.snapshot = snapshot
        self.message = message
        super().__init__(f"{message} (step={step}, t={time:.6g})")

    def __reduce__(self):
        return type(self), (self.message, self.step, self.time, self.snapshot)
