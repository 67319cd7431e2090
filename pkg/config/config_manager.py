"""
配置管理系统
支持多环境配置、配置验证和环境变量覆盖
"""
import os
import json
from pathlib import Path
from typing import Dict, Any, Optional
from dataclasses import dataclass, field, asdict
import logging

# 可选导入
try:
    import yaml
    YAML_AVAILABLE = True
except ImportError:
    YAML_AVAILABLE = False

try:
    from dotenv import load_dotenv
    DOTENV_AVAILABLE = True
except ImportError:
    DOTENV_AVAILABLE = False

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent


@dataclass
class MetricConfig:
    """S度量配置"""
    exhaustive_cap: int = 8
    tolerance: float = 1e-9


@dataclass
class SamplingConfig:
    """网格采样与Lipschitz估计配置"""
    seed: int = 0
    sphere_n: int = 720
    ball_n: int = 2000
    all_pairs_threshold: int = 1500
    default_pairs: int = 200000
    monodromy_steps: int = 360


@dataclass
class ExtensionConfig:
    """Lipschitz延拓配置"""
    lip_inflation: float = 1.05
    origin_epsilon: float = 1e-12
    bound_rel_tol: float = 1e-6
    membership_tol: float = 1e-9


@dataclass
class CoverConfig:
    """覆盖与多重度配置"""
    index_cap: int = 1_000_000
    member_cap: int = 1_000_000
    probes: int = 10000


@dataclass
class SweepConfig:
    """并行扫描配置"""
    workers: int = 1
    chunk_size: int = 50000


@dataclass
class ReportConfig:
    """报告配置"""
    output_dir: str = "results"
    write_csv: bool = True
    allure_results_dir: str = "results/allure-results"
    html_report_path: str = "results/report.html"


@dataclass
class AppConfig:
    """配置主类"""
    environment: str = "test"
    metric: MetricConfig = field(default_factory=MetricConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    extension: ExtensionConfig = field(default_factory=ExtensionConfig)
    cover: CoverConfig = field(default_factory=CoverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    custom: Dict[str, Any] = field(default_factory=dict)


SECTIONS = ('metric', 'sampling', 'extension', 'cover', 'sweep', 'report')

# 环境变量 -> (配置节, 键, 类型)
ENV_OVERRIDES = {
    'MVF_SEED': ('sampling', 'seed', int),
    'MVF_EXHAUSTIVE_CAP': ('metric', 'exhaustive_cap', int),
    'MVF_LIP_INFLATION': ('extension', 'lip_inflation', float),
    'MVF_INDEX_CAP': ('cover', 'index_cap', int),
    'MVF_WORKERS': ('sweep', 'workers', int),
    'MVF_OUTPUT_DIR': ('report', 'output_dir', str),
}


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_dir: Optional[Path] = None, env_file: str = ".env"):
        self.config_dir = Path(config_dir) if config_dir else CONFIG_DIR
        self.env_file = Path(env_file)
        self._config = AppConfig()

        # 加载环境变量
        self._load_env_file()

        # 获取当前环境
        self.environment = os.getenv('MVF_ENV', 'test')
        self._config.environment = self.environment

        # 加载配置
        self._load_config()

    def _load_env_file(self):
        """加载环境变量文件"""
        if self.env_file.exists() and DOTENV_AVAILABLE:
            load_dotenv(self.env_file)
            logger.info(f"已加载环境变量文件: {self.env_file}")
        elif self.env_file.exists():
            logger.warning(f"环境变量文件存在但python-dotenv未安装: {self.env_file}")

    def _load_config(self):
        """加载配置文件"""
        self._load_file_group("config", "基础配置")
        self._load_file_group(f"config.{self.environment}", "环境配置")
        self._apply_env_overrides()
        self._validate_config()

    def _load_file_group(self, stem: str, label: str):
        """按 yaml / yml / json 顺序加载第一个存在的文件"""
        for suffix in ('.yaml', '.yml', '.json'):
            config_file = self.config_dir / f"{stem}{suffix}"
            if not config_file.exists():
                continue
            try:
                self._merge_config(self._read_config_file(config_file))
                logger.debug(f"已加载{label}: {config_file}")
                break
            except Exception as e:
                logger.warning(f"加载{label}失败 {config_file}: {e}")

    def _read_config_file(self, config_file: Path) -> Dict[str, Any]:
        """读取配置文件"""
        with open(config_file, 'r', encoding='utf-8') as f:
            if config_file.suffix.lower() in ['.yaml', '.yml']:
                if not YAML_AVAILABLE:
                    logger.warning(f"YAML文件存在但PyYAML未安装，跳过: {config_file}")
                    return {}
                return yaml.safe_load(f) or {}
            elif config_file.suffix.lower() == '.json':
                return json.load(f)
            else:
                raise ValueError(f"不支持的配置文件格式: {config_file.suffix}")

    def _merge_config(self, config_data: Dict[str, Any]):
        """合并配置数据"""
        if not config_data:
            return

        for section in SECTIONS:
            if section not in config_data:
                continue
            target = getattr(self._config, section)
            for key, value in (config_data[section] or {}).items():
                if hasattr(target, key):
                    setattr(target, key, value)
                else:
                    logger.warning(f"忽略未知配置项: {section}.{key}")

        # 自定义配置
        if 'custom' in config_data:
            self._config.custom.update(config_data['custom'] or {})

    def _apply_env_overrides(self):
        """应用环境变量覆盖"""
        for env_name, (section, key, cast) in ENV_OVERRIDES.items():
            raw = os.getenv(env_name)
            if raw:
                setattr(getattr(self._config, section), key, cast(raw))
        if os.getenv('MVF_LOG_LEVEL'):
            self._config.custom['log_level'] = os.getenv('MVF_LOG_LEVEL')

    def _validate_config(self):
        """验证配置"""
        errors = []
        cfg = self._config

        if cfg.metric.exhaustive_cap < 1:
            errors.append("穷举上限必须至少为1")
        if cfg.metric.tolerance < 0:
            errors.append("容差不能为负")

        if cfg.sampling.all_pairs_threshold < 2:
            errors.append("全配对阈值必须至少为2")
        if cfg.sampling.default_pairs <= 0:
            errors.append("采样点对数必须大于0")
        if cfg.sampling.monodromy_steps < 3:
            errors.append("单值化步数必须至少为3")

        if cfg.extension.lip_inflation < 1.0:
            errors.append("Lipschitz放大系数不能小于1")
        if cfg.extension.bound_rel_tol < 0:
            errors.append("界的相对容差不能为负")

        if cfg.cover.index_cap <= 0 or cfg.cover.member_cap <= 0:
            errors.append("覆盖成员上限必须大于0")
        if cfg.cover.probes <= 0:
            errors.append("探针数必须大于0")

        if cfg.sweep.workers <= 0:
            errors.append("工作线程数必须大于0")
        if cfg.sweep.chunk_size <= 0:
            errors.append("分块大小必须大于0")

        if errors:
            error_msg = "配置验证失败:\n" + "\n".join(f"- {error}" for error in errors)
            logger.error(error_msg)
            raise ValueError(error_msg)

        logger.debug("配置验证通过")

    @property
    def config(self) -> AppConfig:
        """获取配置"""
        return self._config

    def get_custom_config(self, key: str, default: Any = None) -> Any:
        """获取自定义配置"""
        return self._config.custom.get(key, default)

    def update_config(self, section: str, key: str, value: Any):
        """更新配置"""
        if section in SECTIONS and hasattr(getattr(self._config, section), key):
            setattr(getattr(self._config, section), key, value)
        elif section == 'custom':
            self._config.custom[key] = value
        else:
            raise ValueError(f"未知的配置节或键: {section}.{key}")

        logger.info(f"配置已更新: {section}.{key} = {value}")

    def to_dict(self) -> Dict[str, Any]:
        """导出为字典"""
        return asdict(self._config)

    def save_config(self, config_file: Optional[Path] = None):
        """保存配置到文件"""
        if config_file is None:
            config_file = self.config_dir / f"config.{self.environment}.yaml"
        config_file = Path(config_file)
        config_data = self.to_dict()
        config_data.pop('environment', None)

        config_file.parent.mkdir(parents=True, exist_ok=True)

        # 根据文件扩展名选择保存格式
        if config_file.suffix.lower() in ['.yaml', '.yml'] and YAML_AVAILABLE:
            with open(config_file, 'w', encoding='utf-8') as f:
                yaml.dump(config_data, f, default_flow_style=False, allow_unicode=True, indent=2)
        else:
            # 如果YAML不可用，保存为JSON格式
            config_file = config_file.with_suffix('.json')
            with open(config_file, 'w', encoding='utf-8') as f:
                json.dump(config_data, f, indent=2, ensure_ascii=False)

        logger.info(f"配置已保存: {config_file}")
        return config_file


# 全局配置管理器实例
_config_manager = None


def get_config_manager() -> ConfigManager:
    """获取全局配置管理器实例"""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager


def get_config() -> AppConfig:
    """获取当前配置"""
    return get_config_manager().config


def reset_config():
    """丢弃全局实例，下次访问时重新加载（测试用）"""
    global _config_manager
    _config_manager = None
