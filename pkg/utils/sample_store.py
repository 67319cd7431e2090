"""
样本文件读写
QPoint、采样表与覆盖的 JSON 文件加载，加载前用 JSON Schema 校验结构
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

from jsonschema import ValidationError, validate

from almgren.errors import GeometryInputError
from almgren.mvf import SampledMVF
from almgren.nagata import Cover
from almgren.qspace import QPoint
from almgren.spaces import Space
from utils.logger import get_logger

logger = get_logger(__name__)

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_POINTS = {"type": "array", "minItems": 1, "items": {"anyOf": [_POINT, {"type": "number"}]}}
_SPACE = {
    "type": "object",
    "required": ["dim"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "norm": {"enum": ["euclidean", "sup", "one"]},
    },
}

QPOINT_SCHEMA = {
    "type": "object",
    "required": ["points"],
    "properties": {
        "Q": {"type": "integer", "minimum": 1},
        "points": _POINTS,
        "space": _SPACE,
    },
}

TABLE_SCHEMA = {
    "type": "object",
    "required": ["domain", "values"],
    "properties": {
        "domain": {
            "type": "object",
            "required": ["points"],
            "properties": {"points": {"type": "array", "minItems": 2, "items": _POINT}, "space": _SPACE},
        },
        "target": _SPACE,
        "Q": {"type": "integer", "minimum": 1},
        "values": {"type": "array", "minItems": 2, "items": QPOINT_SCHEMA},
        "provenance": {"type": "string"},
    },
}

COVER_SCHEMA = {
    "type": "object",
    "required": ["c", "s", "kind", "space", "members"],
    "properties": {
        "c": {"type": "number", "minimum": 1},
        "s": {"type": "number", "exclusiveMinimum": 0},
        "kind": {"enum": ["interval", "box", "ball", "sample"]},
        "space": _SPACE,
        "members": {"type": "array", "minItems": 1, "items": {"type": "object"}},
        "samples": {"type": "array", "items": _POINT},
    },
}


class SampleStore:
    """样本文件管理器"""

    def __init__(self, data_dir: Union[str, Path] = "test_data"):
        self.data_dir = Path(data_dir)

    def _resolve(self, filename: Union[str, Path]) -> Path:
        path = Path(filename)
        if path.is_absolute() or path.exists():
            return path
        return self.data_dir / path

    def load_json(self, filename: Union[str, Path], schema: Optional[Dict] = None) -> Dict[str, Any]:
        """读取 JSON 文件并按 schema 校验，失败时抛出 GeometryInputError"""
        file_path = self._resolve(filename)
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise GeometryInputError(f"文件不存在: {file_path}") from None
        except json.JSONDecodeError as e:
            raise GeometryInputError(f"JSON 解析失败: {file_path}, 错误: {e}") from None
        if schema is not None:
            try:
                validate(instance=data, schema=schema)
            except ValidationError as e:
                raise GeometryInputError(f"JSON Schema 校验失败 {file_path}: {e.message}") from None
        logger.debug(f"已加载: {file_path}")
        return data

    def load_qpoint(self, filename: Union[str, Path]) -> QPoint:
        data = self.load_json(filename, QPOINT_SCHEMA)
        space = Space.from_dict(data["space"]) if "space" in data else None
        return QPoint.from_dict(data, space)

    def load_table(self, filename: Union[str, Path]) -> SampledMVF:
        """加载采样表形式的多值函数"""
        data = self.load_json(filename, TABLE_SCHEMA)
        try:
            return SampledMVF.from_table(data)
        except (KeyError, ValueError, IndexError) as e:
            if isinstance(e, GeometryInputError):
                raise
            raise GeometryInputError(f"采样表结构不正确: {e}") from None

    def load_cover(self, filename: Union[str, Path]) -> Cover:
        data = self.load_json(filename, COVER_SCHEMA)
        try:
            return Cover.from_dict(data)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, GeometryInputError):
                raise
            raise GeometryInputError(f"覆盖结构不正确: {e}") from None

    def save_json(self, filename: Union[str, Path], data: Dict[str, Any]) -> Path:
        """写入 JSON，键排序以保证同一输入逐字节一致"""
        file_path = self._resolve(filename)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
        logger.info(f"已保存: {file_path}")
        return file_path
