"""
錯誤類型定義
CLI 依類型決定退出碼
"""


class PlateLabError(Exception):
    """PlateLab 錯誤基類"""


class ConfigError(PlateLabError, ValueError):
    """配置錯誤 (缺少、未知或格式錯誤的鍵)，退出碼 2"""

    def __init__(self, message: str, key: str = None):
        super().__init__(message)
        self.key = key


class NumericalError(PlateLabError, RuntimeError):
    """數值計算失敗 (奇異系統、特徵值求解失敗等)，退出碼 3"""
