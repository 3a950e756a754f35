"""
日誌系統
控制台輸出帶顏色與 emoji 狀態標記，可選的文件輸出不帶顏色
"""

import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

CONSOLE_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
FILE_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
BANNER_WIDTH = 50


class ColoredFormatter(logging.Formatter):
    """依級別上色的格式化器"""

    RESET = "\033[0m"
    LEVEL_COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[35m",
    }

    def format(self, record):
        text = super().format(record)
        return f"{self.LEVEL_COLORS.get(record.levelname, self.RESET)}{text}{self.RESET}"


class PlateLabLogger:
    """PlateLab 日誌器"""

    def __init__(self, name: str = "PlateLab", level: str = "INFO"):
        self.name = name
        self.level = getattr(logging, level.upper())
        self.logger = logging.getLogger(name)
        self.logger.setLevel(self.level)
        self.logger.propagate = False

        consoles = [
            h for h in self.logger.handlers
            if isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
        ]
        if not consoles:
            console = logging.StreamHandler(sys.stdout)
            console.setFormatter(ColoredFormatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
            self.logger.addHandler(console)
            consoles = [console]
        for handler in consoles:
            handler.setLevel(self.level)

    def add_file_handler(self, log_file: Union[str, Path], level: str = "DEBUG"):
        """附加純文字的文件輸出"""
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(log_file, encoding="utf-8")
        handler.setLevel(getattr(logging, level.upper()))
        handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        self.logger.addHandler(handler)

    def info(self, message: str, **kwargs):
        self.logger.info(message, **kwargs)

    def debug(self, message: str, **kwargs):
        self.logger.debug(message, **kwargs)

    def warning(self, message: str, **kwargs):
        self.logger.warning(message, **kwargs)

    def error(self, message: str, **kwargs):
        self.logger.error(message, **kwargs)

    def log_config(self, values: Mapping[str, Any], title: str = "配置"):
        """逐鍵列出攤平後的配置"""
        self.info(f"⚙️ {title}")
        width = max((len(key) for key in values), default=0)
        for key in sorted(values):
            self.info(f"    {key:<{width}} = {values[key]}")

    def log_system_info(self):
        """平台、核心數、記憶體與數值庫版本"""
        import numpy
        import psutil
        import scipy

        memory_gb = psutil.virtual_memory().total / 1024**3
        self.info(
            f"🖥️ {platform.system()} {platform.release()} | Python {platform.python_version()} | "
            f"{psutil.cpu_count(logical=False) or '?'} 實體核心 / {psutil.cpu_count()} 邏輯核心 | "
            f"{memory_gb:.1f} GB"
        )
        self.info(f"🖥️ numpy {numpy.__version__} | scipy {scipy.__version__}")

    def log_run_start(self, subcommand: str, values: Dict[str, Any]):
        self.info("🚀 " + "=" * BANNER_WIDTH)
        self.info(f"🚀 子命令 {subcommand} 開始")
        self.info("🚀 " + "=" * BANNER_WIDTH)
        self.log_config(values)
        self.log_system_info()

    def log_run_end(self, success: bool, duration: float):
        mark = "✅" if success else "❌"
        verdict = "完成" if success else "失敗"
        self.info(f"{mark} 子命令{verdict}，耗時 {duration:.2f} 秒")


_global_logger: Optional[PlateLabLogger] = None


def setup_logger(
    name: str = "PlateLab",
    level: str = "INFO",
    log_file: Optional[Union[str, Path]] = None,
) -> PlateLabLogger:
    """
    建立並登記全域日誌器

    Args:
        name: 日誌器名稱
        level: 控制台級別
        log_file: 可選的日誌文件 (級別 DEBUG)
    """
    global _global_logger

    logger = PlateLabLogger(name, level)
    if log_file:
        logger.add_file_handler(log_file)
        logger.debug(f"日誌文件: {log_file}")

    _global_logger = logger
    return logger


def get_logger() -> PlateLabLogger:
    """全域日誌器；尚未設置時以預設值建立"""
    if _global_logger is None:
        return setup_logger()
    return _global_logger
