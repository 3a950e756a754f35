"""
實驗驅動：配置、管道與命令列
"""

from .cli import run

__all__ = ["run"]
