"""
日志管理模块

sink 布局：
    stderr           控制台（stdout 留给命令行汇总输出）
    logs/app.log     全部记录
    logs/error.log   ERROR 及以上
    logs/monitor.log 只收 monitor_logger 的逐样本监测记录
"""
import os
import sys
from pathlib import Path
from typing import Callable, Optional

from loguru import logger

from utils.config import config

DEFAULT_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} - {message}"


def _is_monitor(record) -> bool:
    return record["extra"].get("monitor", False)


class LogManager:
    """日志管理器"""

    def __init__(self, log_dir: Optional[str] = None):
        self.log_dir = Path(log_dir or os.getenv("PILOTWAVE_LOG_DIR", "logs"))
        # 环境变量优先于 config.yml
        self.level = os.getenv("PILOTWAVE_LOG_LEVEL") or config.get('LOGGING.level', 'INFO')
        self.format = config.get('LOGGING.format', DEFAULT_FORMAT)
        self.rotation = config.get('LOGGING.rotation', "1 day")
        self.retention = config.get('LOGGING.retention', "30 days")
        self.setup_logger()

    def _file_sink(self, name: str, level: str, filter: Optional[Callable] = None):
        logger.add(
            sink=self.log_dir / name,
            level=level,
            format=self.format,
            rotation=self.rotation,
            retention=self.retention,
            encoding="utf-8",
            filter=filter,
        )

    def setup_logger(self):
        """重建全部 sink"""
        logger.remove()
        self.log_dir.mkdir(parents=True, exist_ok=True)

        logger.add(sink=sys.stderr, level=self.level, format=self.format, colorize=True,
                   filter=lambda record: not _is_monitor(record))
        self._file_sink("app.log", self.level)
        self._file_sink("error.log", "ERROR")
        self._file_sink("monitor.log", "DEBUG", filter=_is_monitor)


# 初始化日志管理器
log_manager = LogManager()

# 监测采样专用
monitor_logger = logger.bind(monitor=True)

__all__ = ['logger', 'monitor_logger']
