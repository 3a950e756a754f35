"""
PlateLab 實驗入口

使用方式:
    python main.py mgc-check --config config/acceptance.cfg
    python main.py simulate --config config/acceptance.cfg --out results/simulate
    python main.py resolvent-sweep --config config/acceptance.cfg --threads 0
    python main.py design-is1 --config my_is1.cfg
    python main.py decay-fit --config config/acceptance.cfg
"""

import os
import sys

# 添加項目根目錄到路徑
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from src.experiment.cli import run

if __name__ == "__main__":
    sys.exit(run())
