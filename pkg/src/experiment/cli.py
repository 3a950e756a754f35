"""
PlateLab 命令列介面

使用方式:
    python main.py mgc-check --config config/acceptance.cfg
    python main.py simulate --config my.cfg --out results/sim --threads 4
    python main.py verify-design --config is1.cfg
    python main.py t-eigs --config config/acceptance.cfg --set fem.elements=128

退出碼: 0 成功, 2 配置或輸入錯誤, 3 數值失敗, 1 其他錯誤
"""

import argparse
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..utils.compute_manager import ComputeManager
from ..utils.errors import ConfigError, NumericalError
from ..utils.file_manager import FileManager
from ..utils.logger import get_logger, setup_logger
from .config import PROJECT_ROOT, ExperimentConfig
from .pipeline import SUBCOMMANDS, PlateLabPipeline

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platelab",
        description="環形 Kirchhoff 板延遲邊界回饋實驗",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="執行的子命令")
    parser.add_argument("--config", type=str, default=None, help="配置文件 (YAML/JSON 或 key = value)")
    parser.add_argument("--out", type=str, default=None, help="輸出目錄 (預設 results/<子命令>_<時間戳>)")
    parser.add_argument("--threads", type=int, default=None, help="工作執行緒數，0 表示自動")
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="覆蓋單一配置鍵，可重複 (例: --set fem.elements=128)",
    )
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """解析參數並執行子命令，回傳退出碼"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT

    logger = get_logger()
    start = time.perf_counter()
    try:
        overrides = FileManager.parse_flat("\n".join(args.assignments), "--set")
        config = ExperimentConfig.load(args.config, overrides=overrides)
        logger = setup_logger(
            level=config.get_str("run.log_level"),
            log_file=config.get_str("run.log_file", optional=True),
        )
        compute = ComputeManager(args.threads)

        out_dir = args.out
        if out_dir is None:
            stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            out_dir = PROJECT_ROOT / "results" / f"{args.subcommand}_{stamp}"
        out_dir = Path(out_dir)

        logger.log_run_start(args.subcommand, config.values)
        pipeline = PlateLabPipeline(config, out_dir, compute)
        pipeline.run(args.subcommand)
        manifest = pipeline.finalize(args.subcommand, time.perf_counter() - start)
        logger.info(f"📁 運行清單: {manifest}")
        logger.log_run_end(True, time.perf_counter() - start)
        return EXIT_OK

    except (NumericalError, np.linalg.LinAlgError) as e:
        logger.error(f"❌ 數值失敗: {e}")
        logger.log_run_end(False, time.perf_counter() - start)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as e:
        key = getattr(e, "key", None)
        suffix = f" (鍵: {key})" if key else ""
        logger.error(f"❌ 輸入錯誤{suffix}: {e}")
        return EXIT_INPUT
    except KeyboardInterrupt:
        logger.warning("⚠️ 使用者中斷")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"❌ 未預期的錯誤: {type(e).__name__}: {e}")
        logger.log_run_end(False, time.perf_counter() - start)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())
