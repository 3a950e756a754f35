"""
PlateLab：環形 Kirchhoff 板的延遲邊界回饋數值實驗
版本: 1.0.0

主要模組：
- plate: 幾何、笛卡兒形式參考計算、徑向有限元
- dynamics: 生成元組裝、時間積分、模擬回調
- analysis: 譜分析、失穩設計、衰減率擬合
- experiment: 配置、實驗管道、命令列介面
- utils: 日誌、文件、計算資源、錯誤類型
"""

__version__ = "1.0.0"
__description__ = "環形 Kirchhoff 板延遲邊界回饋實驗"

import sys

if sys.version_info < (3, 9):
    raise RuntimeError("需要 Python 3.9 或更高版本")
