"""
計算資源管理模組
決定工作執行緒數量，並提供結果順序固定的平行映射
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional

import psutil

THREADS_ENV = "PLATELAB_THREADS"


class ComputeManager:
    """計算資源管理器"""

    def __init__(self, threads: Optional[int] = None):
        self.requested = self._resolve_request(threads)
        self.threads = self.requested if self.requested > 0 else self.auto_threads()

    @staticmethod
    def _resolve_request(threads: Optional[int]) -> int:
        """旗標優先，其次環境變數，最後為 0 (自動)"""
        if threads is None:
            raw = os.environ.get(THREADS_ENV, "").strip()
            if not raw:
                return 0
            try:
                threads = int(raw)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} 必須是整數: {raw!r}")
        if threads < 0:
            raise ValueError(f"執行緒數不可為負: {threads}")
        return threads

    @staticmethod
    def auto_threads() -> int:
        """以實體核心數作為自動執行緒數"""
        return max(1, psutil.cpu_count(logical=False) or psutil.cpu_count() or 1)

    def map_ordered(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """平行映射；結果依輸入順序組合，與執行緒數無關"""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=min(self.threads, len(items))) as pool:
            return list(pool.map(func, items))

    def describe(self) -> Dict[str, Any]:
        """資源摘要 (寫入運行清單)"""
        memory = psutil.virtual_memory()
        return {
            "threads": self.threads,
            "requested_threads": self.requested,
            "cpu_count": psutil.cpu_count(),
            "memory_total_gb": round(memory.total / 1024**3, 1),
        }
