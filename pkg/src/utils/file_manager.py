"""
文件管理
配置文件讀寫 (YAML / JSON / 平面 key = value)、%.17g 的 CSV 表格與輸出清單
"""

import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd
import yaml

from .errors import ConfigError

PathLike = Union[str, Path]

# 所有浮點數以此格式序列化
FLOAT_FORMAT = "%.17g"
YAML_SUFFIXES = (".yaml", ".yml")
FLAT_SUFFIXES = (".cfg", ".conf", ".txt")


def _flat_value(value: Any) -> str:
    """單一值的 YAML 流式表示，不含文件結尾標記"""
    text = yaml.safe_dump(value, default_flow_style=True).strip()
    if text.endswith("..."):
        text = text[:-3].rstrip()
    return text


class FileManager:
    """以 base_dir 為根的輸出與配置文件管理"""

    def __init__(self, base_dir: PathLike = "."):
        self.base_dir = self.ensure_dir(Path(base_dir).resolve())

    @staticmethod
    def ensure_dir(path: PathLike) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    # ------------------------------------------------------------------
    # 配置
    # ------------------------------------------------------------------
    def save_config(self, values: Mapping[str, Any], filepath: PathLike) -> Path:
        """依副檔名寫出 YAML、JSON 或平面格式"""
        filepath = Path(filepath)
        self.ensure_dir(filepath.parent)
        suffix = filepath.suffix.lower()

        if suffix in YAML_SUFFIXES:
            text = yaml.safe_dump(dict(values), default_flow_style=False, allow_unicode=True, sort_keys=True)
        elif suffix == ".json":
            text = json.dumps(dict(values), indent=2, ensure_ascii=False, sort_keys=True) + "\n"
        elif suffix in FLAT_SUFFIXES:
            text = "".join(f"{key} = {_flat_value(values[key])}\n" for key in sorted(values))
        else:
            raise ValueError(f"不支援的配置格式: {filepath.name}")

        filepath.write_text(text, encoding="utf-8")
        return filepath

    def load_config(self, filepath: PathLike) -> Dict[str, Any]:
        """
        讀取配置文件

        .yaml/.yml 與 .json 為巢狀格式；其他副檔名視為平面 `key = value`，
        值以 yaml.safe_load 解析。
        """
        filepath = Path(filepath)
        if not filepath.is_file():
            raise FileNotFoundError(f"配置文件不存在: {filepath}")

        text = filepath.read_text(encoding="utf-8")
        suffix = filepath.suffix.lower()
        if suffix in YAML_SUFFIXES:
            try:
                return yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{filepath} 不是合法的 YAML: {e}")
        if suffix == ".json":
            try:
                return json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{filepath} 不是合法的 JSON: {e}")
        return self.parse_flat(text, filepath)

    @staticmethod
    def parse_flat(text: str, source: PathLike) -> Dict[str, Any]:
        """平面 `key = value` 文字；值以 yaml.safe_load 解析，# 之後為註解"""
        values: Dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            where = f"{source}:{lineno}"
            if not sep:
                raise ConfigError(f"{where} 缺少 '=': {raw.strip()}")
            if not key:
                raise ConfigError(f"{where} 鍵名為空")
            if key in values:
                raise ConfigError(f"{where} 重複的鍵: {key}", key=key)
            try:
                values[key] = yaml.safe_load(value) if value else None
            except yaml.YAMLError as e:
                raise ConfigError(f"{where} 無法解析 {key}: {e}", key=key)
        return values

    # ------------------------------------------------------------------
    # 表格
    # ------------------------------------------------------------------
    def write_table(
        self,
        rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]],
        filepath: PathLike,
        columns: Optional[List[str]] = None,
    ) -> Path:
        """逗號分隔、含標題列；缺少的欄位以空值補上"""
        filepath = Path(filepath)
        self.ensure_dir(filepath.parent)
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
        if columns is not None:
            frame = frame.reindex(columns=columns)
        frame.to_csv(filepath, index=False, float_format=FLOAT_FORMAT)
        return filepath

    @staticmethod
    def read_table(filepath: PathLike) -> pd.DataFrame:
        filepath = Path(filepath)
        if not filepath.is_file():
            raise FileNotFoundError(f"表格文件不存在: {filepath}")
        return pd.read_csv(filepath, float_precision="round_trip")

    # ------------------------------------------------------------------
    # 校驗和與清單
    # ------------------------------------------------------------------
    @staticmethod
    def calculate_checksum(filepath: PathLike, algorithm: str = "sha256") -> str:
        filepath = Path(filepath)
        if not filepath.is_file():
            raise FileNotFoundError(f"文件不存在: {filepath}")
        digest = hashlib.new(algorithm)
        with filepath.open("rb") as f:
            while block := f.read(1 << 16):
                digest.update(block)
        return digest.hexdigest()

    def create_manifest(self, directory: PathLike, outputs: Sequence[PathLike]) -> Dict[str, Any]:
        """輸出文件的相對路徑、大小與 sha256"""
        directory = Path(directory)
        entries = [
            {
                "path": path.relative_to(directory).as_posix(),
                "size": path.stat().st_size,
                "checksum": self.calculate_checksum(path),
            }
            for path in sorted(Path(p) for p in outputs)
        ]
        return {"created_at": datetime.now().isoformat(), "directory": str(directory), "files": entries}


_file_manager: Optional[FileManager] = None


def get_file_manager() -> FileManager:
    """以目前工作目錄為根的共用實例"""
    global _file_manager
    if _file_manager is None:
        _file_manager = FileManager()
    return _file_manager
