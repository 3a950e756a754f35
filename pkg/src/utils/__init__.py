"""
通用工具模組
"""

from .compute_manager import ComputeManager
from .errors import ConfigError, NumericalError, PlateLabError
from .file_manager import FileManager, get_file_manager
from .logger import get_logger, setup_logger

__all__ = [
    "setup_logger",
    "get_logger",
    "ComputeManager",
    "FileManager",
    "get_file_manager",
    "PlateLabError",
    "ConfigError",
    "NumericalError",
]
