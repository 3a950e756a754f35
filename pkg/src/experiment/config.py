"""
實驗配置

預設值來自 config/base_config.yaml；使用者配置 (YAML/JSON 巢狀或平面 key = value)
攤平為點號鍵後覆蓋預設值。未知鍵與格式錯誤的值以 ConfigError 回報並指出鍵名。
"""

from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from ..dynamics.assembly import FeedbackParams, SystemKind
from ..plate.forms import PlateConfig
from ..plate.geometry import Annulus
from ..utils.errors import ConfigError
from ..utils.file_manager import FileManager

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "base_config.yaml"

CHOICES = {
    "simulation.initial": ("random", "smooth", "zero"),
    "sweep.estimator": ("random", "power"),
    "run.log_level": ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"),
}


def flatten(nested: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """{"a": {"b": 1}} → {"a.b": 1}"""
    flat: Dict[str, Any] = {}
    for key, value in nested.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def unflatten(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


class ExperimentConfig:
    """攤平後的實驗配置與型別化存取"""

    def __init__(self, values: Mapping[str, Any]):
        self.values = dict(values)

    # ------------------------------------------------------------------
    # 載入
    # ------------------------------------------------------------------
    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        raw = FileManager(PROJECT_ROOT).load_config(DEFAULT_CONFIG_PATH)
        return cls(flatten(raw))

    @classmethod
    def load(
        cls,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "ExperimentConfig":
        config = cls.defaults()
        if path is not None:
            raw = FileManager(PROJECT_ROOT).load_config(path)
            if not isinstance(raw, Mapping):
                raise ConfigError(f"配置文件格式錯誤: {path}")
            config = config.merged(flatten(raw))
        if overrides:
            config = config.merged(flatten(overrides))
        config.validate()
        return config

    def merged(self, updates: Mapping[str, Any]) -> "ExperimentConfig":
        values = dict(self.values)
        for key in sorted(updates):
            if key not in values:
                raise ConfigError(f"未知的配置鍵: {key}", key=key)
            values[key] = updates[key]
        return ExperimentConfig(values)

    def to_nested(self) -> Dict[str, Any]:
        return unflatten(self.values)

    # ------------------------------------------------------------------
    # 型別化存取
    # ------------------------------------------------------------------
    def raw(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"缺少配置鍵: {key}", key=key)
        return self.values[key]

    def get_float(self, key: str, optional: bool = False) -> Optional[float]:
        value = self.raw(key)
        if value is None and optional:
            return None
        if isinstance(value, bool):
            raise ConfigError(f"{key} 必須是數值，得到 {value!r}", key=key)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} 必須是數值，得到 {value!r}", key=key)

    def get_int(self, key: str) -> int:
        value = self.raw(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key} 必須是整數，得到 {value!r}", key=key)
        return int(value)

    def get_bool(self, key: str) -> bool:
        value = self.raw(key)
        if not isinstance(value, bool):
            raise ConfigError(f"{key} 必須是 true/false，得到 {value!r}", key=key)
        return value

    def get_str(self, key: str, optional: bool = False) -> Optional[str]:
        value = self.raw(key)
        if value is None and optional:
            return None
        if not isinstance(value, str):
            raise ConfigError(f"{key} 必須是字串，得到 {value!r}", key=key)
        return value

    def int_list(self, key: str) -> List[int]:
        value = self.raw(key)
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{key} 必須是非空整數列表，得到 {value!r}", key=key)
        if any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigError(f"{key} 必須是非空整數列表，得到 {value!r}", key=key)
        return [int(v) for v in value]

    # ------------------------------------------------------------------
    # 驗證與領域物件
    # ------------------------------------------------------------------
    def validate(self):
        """檢查每個鍵都能轉成領域物件"""
        self.annulus()
        self.plate()
        self.feedback()
        self.system()
        modes = self.modes()
        if any(n < 0 for n in modes):
            raise ConfigError(f"fem.modes 必須非負: {modes}", key="fem.modes")
        if len(set(modes)) != len(modes):
            raise ConfigError(f"fem.modes 不可重複: {modes}", key="fem.modes")
        positive_ints = (
            "fem.elements",
            "delay.n_rho1",
            "delay.n_rho2",
            "delay.cap",
            "mgc.samples",
            "spectral.count",
            "sweep.points",
            "quasimode.pairs",
            "design.menu",
            "decay.smooth_modes",
        )
        for key in positive_ints:
            if self.get_int(key) < 1:
                raise ConfigError(f"{key} 必須為正整數", key=key)
        for key in ("design.k", "design.l", "design.which_eig", "simulation.checkpoint_every", "run.seed"):
            if self.get_int(key) < 0:
                raise ConfigError(f"{key} 不可為負", key=key)
        for key in ("simulation.t_end", "design.periods", "decay.t_end", "sweep.lambda_min", "spectral.tolerance"):
            if not self.get_float(key) > 0.0:
                raise ConfigError(f"{key} 必須為正", key=key)
        for key in ("simulation.dt", "sweep.lambda_max"):
            value = self.get_float(key, optional=True)
            if value is not None and not value > 0.0:
                raise ConfigError(f"{key} 必須為正或 null", key=key)
        if self.get_float("hypothesis.tolerance") < 0.0:
            raise ConfigError("hypothesis.tolerance 不可為負", key="hypothesis.tolerance")
        skip = self.get_float("decay.skip")
        if not 0.0 <= skip < 1.0:
            raise ConfigError("decay.skip 必須介於 [0, 1)", key="decay.skip")
        if not self.get_float("decay.floor") > 0.0:
            raise ConfigError("decay.floor 必須為正", key="decay.floor")
        if self.get_int("design.case") not in (1, 2):
            raise ConfigError("design.case 必須為 1 或 2", key="design.case")
        for key in ("simulation.progress", "design.mirror_branch"):
            self.get_bool(key)
        for key, choices in CHOICES.items():
            if self.get_str(key) not in choices:
                raise ConfigError(f"{key} 必須是 {', '.join(choices)} 之一", key=key)
        self.get_str("decay.input", optional=True)
        self.get_str("run.log_file", optional=True)

    def annulus(self) -> Annulus:
        x0 = self.raw("geometry.x0")
        if not isinstance(x0, (list, tuple)) or len(x0) != 2:
            raise ConfigError(f"geometry.x0 必須是二維點，得到 {x0!r}", key="geometry.x0")
        try:
            return Annulus(self.get_float("geometry.r0"), self.get_float("geometry.r1"), tuple(float(c) for c in x0))
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"geometry 設定無效: {e}", key="geometry.r0")

    def plate(self) -> PlateConfig:
        try:
            return PlateConfig(self.get_float("plate.mu"))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e), key="plate.mu")

    def feedback(self) -> FeedbackParams:
        names = ("beta1", "beta2", "gamma1", "gamma2", "tau1", "tau2")
        values = {name: self.get_float(f"feedback.{name}") for name in names}
        for name in ("beta1", "gamma1", "tau1", "tau2"):
            if values[name] <= 0.0:
                raise ConfigError(f"feedback.{name} 必須為正", key=f"feedback.{name}")
        return FeedbackParams(**values)

    def system(self) -> SystemKind:
        try:
            return SystemKind.parse(self.raw("system"))
        except ValueError as e:
            raise ConfigError(str(e), key="system")

    def modes(self) -> List[int]:
        return self.int_list("fem.modes")
