"""
配置管理模块
"""
import os
from pathlib import Path
from typing import Dict, Any, Optional

import yaml
from dotenv import load_dotenv

# .env 中可以用 PILOTWAVE_CONFIG 指定另一份 YAML
load_dotenv()


class Config:
    """配置管理类"""

    def __init__(self, config_file: Optional[str] = None):
        if config_file is None:
            config_file = os.getenv("PILOTWAVE_CONFIG") or Path(__file__).parent.parent / "config.yml"

        self.config_file = Path(config_file)
        self._config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """加载配置文件，缺失的段落用默认值补齐"""
        defaults = self._get_default_config()
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f) or {}
        except FileNotFoundError:
            # logger 依赖本模块，这里不能用 logger
            print(f"配置文件 {self.config_file} 不存在，使用默认配置")
            return defaults

        for section, values in defaults.items():
            merged = dict(values)
            merged.update(loaded.get(section) or {})
            loaded[section] = merged
        return loaded

    def _get_default_config(self) -> Dict[str, Any]:
        """获取默认配置"""
        return {
            'LOGGING': {
                'level': 'INFO'
            },
            'NUMERICS': {
                'node_floor': 1e-12,
                'min_points': 8,
                'length_tolerance': 1e-9
            },
            'ENSEMBLE': {
                'bandwidth_factor': 4.0,
                'kde_truncate': 6.0,
                'fq_cap': 1000.0,
                'substeps': 1
            },
            'MONITORS': {
                'coarse_cells': [16, 32, 64],
                'mask_floor': 1e-12
            },
            'OUTPUT': {
                'float_format': '%.17g',
                'snapshot_interval': 0,
                'directory': 'runs'
            },
            'SWEEP': {
                'n_jobs': 1
            },
            'ACCEPTANCE': {}
        }

    def get(self, key: str, default=None):
        """获取配置值"""
        keys = key.split('.')
        value = self._config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def get_acceptance_config(self) -> Dict[str, Any]:
        """获取冻结的回归阈值"""
        return self.get('ACCEPTANCE', {})


# 全局配置实例
config = Config()
