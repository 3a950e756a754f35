#!/usr/bin/env python3
"""
驗收腳本
以 config/acceptance.cfg 連續執行兩次完整子命令組，比對所有 CSV 的校驗和
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Tuple

# 添加項目路徑
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.experiment.cli import EXIT_OK, run
from src.utils.file_manager import get_file_manager
from src.utils.logger import setup_logger

IS1_OVERRIDES = (
    "feedback.beta1=1",
    "feedback.beta2=1",
    "feedback.gamma1=1",
    "feedback.gamma2=1",
    "design.case=1",
)
IS2_OVERRIDES = (
    "feedback.beta1=1",
    "feedback.beta2=2",
    "feedback.gamma1=1",
    "feedback.gamma2=1",
    "design.case=2",
)
RESOLVED_OVERRIDES = ("fem.elements=128",)

# (輸出子目錄, 子命令, 額外的 --set 覆蓋)
SUITE: Tuple[Tuple[str, str, Tuple[str, ...]], ...] = (
    ("mgc-check", "mgc-check", ()),
    ("simulate", "simulate", ()),
    ("spectrum", "spectrum", ()),
    ("t-eigs", "t-eigs", RESOLVED_OVERRIDES),
    ("quasimode", "quasimode", RESOLVED_OVERRIDES),
    ("resolvent-sweep", "resolvent-sweep", ()),
    ("design-is1", "design-is1", IS1_OVERRIDES),
    ("design-is2", "design-is2", IS2_OVERRIDES),
    ("verify-is1", "verify-design", IS1_OVERRIDES),
    ("verify-is2", "verify-design", IS2_OVERRIDES),
    ("decay-fit", "decay-fit", ("decay.skip=0.3",)),
)


def run_suite(config: Path, out_root: Path, threads: int) -> Dict[str, int]:
    """執行一次完整子命令組，回傳各項退出碼"""
    codes = {}
    for name, subcommand, overrides in SUITE:
        argv = [subcommand, "--config", str(config), "--out", str(out_root / name), "--threads", str(threads)]
        for assignment in overrides:
            argv += ["--set", assignment]
        codes[name] = run(argv)
    return codes


def checksums(out_root: Path) -> Dict[str, str]:
    fm = get_file_manager()
    return {str(p.relative_to(out_root)): fm.calculate_checksum(p) for p in sorted(out_root.rglob("*.csv"))}


def main(argv: List[str] = None) -> int:
    parser = argparse.ArgumentParser(description="PlateLab 驗收與決定性檢查")
    parser.add_argument("--config", default=str(project_root / "config" / "acceptance.cfg"))
    parser.add_argument("--out", default=str(project_root / "results" / "acceptance"))
    parser.add_argument("--threads", type=int, default=0)
    args = parser.parse_args(argv)

    logger = setup_logger("PlateLab.acceptance")
    out = Path(args.out)
    runs = []
    for attempt in ("run_a", "run_b"):
        logger.info(f"🚀 驗收執行 {attempt}")
        codes = run_suite(Path(args.config), out / attempt, args.threads)
        failed = {k: v for k, v in codes.items() if v != EXIT_OK}
        if failed:
            logger.error(f"❌ 子命令失敗: {failed}")
            return 1
        runs.append(checksums(out / attempt))

    first, second = runs
    if first.keys() != second.keys():
        logger.error("❌ 兩次執行的輸出文件不同")
        return 1
    diff = [name for name in first if first[name] != second[name]]
    if diff:
        for name in diff:
            logger.error(f"❌ 校驗和不一致: {name}")
        return 1
    logger.info(f"✅ {len(first)} 個 CSV 逐位元一致")
    return 0


if __name__ == "__main__":
    sys.exit(main())
