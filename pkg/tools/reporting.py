"""
报告输出
JSON 报告嵌入运行配置、种子与版本；逐点对/逐探针明细写 CSV
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd

from almgren import ARTIFACT_NAME, __version__
from config.config_manager import get_config_manager
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class RunConfig:
    """一次命令行运行的参数"""
    command: str
    inputs: List[str] = field(default_factory=list)
    seed: int = 0
    tolerance: float = 1e-9
    mesh_n: Optional[int] = None
    ball_n: Optional[int] = None
    pairs: Optional[int] = None
    output_dir: str = "results"
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def build_report(run: RunConfig, payload: Dict[str, Any]) -> Dict[str, Any]:
    """报告结构：artifact、version、run、config、result；不含时间戳"""
    return _jsonable({
        "artifact": ARTIFACT_NAME,
        "version": __version__,
        "seed": run.seed,
        "run": asdict(run),
        "config": get_config_manager().to_dict(),
        "result": payload,
    })


def write_json_report(run: RunConfig, name: str, payload: Dict[str, Any]) -> Path:
    """写入 <output_dir>/<name>.json"""
    report = build_report(run, payload)
    path = run.output_path / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2, ensure_ascii=False, sort_keys=True)
    logger.info(f"报告已保存: {path}")
    return path


def write_csv(run: RunConfig, name: str, columns: Dict[str, Any]) -> Path:
    """写入 <output_dir>/<name>.csv"""
    path = run.output_path / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(columns).to_csv(path, index=False)
    logger.info(f"明细已保存: {path} ({len(next(iter(columns.values()), []))} 行)")
    return path
