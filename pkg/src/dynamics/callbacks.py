"""
模擬回調函數
"""

import time
from typing import Any, Callable, Dict, List, Optional

from ..utils.logger import get_logger

EVENTS = (
    "on_simulation_start",
    "on_step_end",
    "on_checkpoint",
    "on_simulation_end",
)


class SimulationCallbacks:
    """模擬回調管理器"""

    def __init__(self):
        self.callbacks: Dict[str, List[Callable]] = {event: [] for event in EVENTS}
        self.energy_history: List[Dict[str, float]] = []
        self.start_time: Optional[float] = None
        self.wall_time: Optional[float] = None

    def add_callback(self, event: str, callback: Callable):
        """添加回調函數"""
        if event not in self.callbacks:
            raise ValueError(f"未知事件: {event}，可用事件: {', '.join(EVENTS)}")
        self.callbacks[event].append(callback)

    def trigger_callbacks(self, event: str, *args, **kwargs):
        """觸發回調函數；回調本身的錯誤只記錄不中斷模擬"""
        if event == "on_simulation_start":
            self.start_time = time.perf_counter()
        elif event == "on_simulation_end" and self.start_time is not None:
            self.wall_time = time.perf_counter() - self.start_time

        for callback in self.callbacks.get(event, []):
            try:
                callback(*args, **kwargs)
            except Exception as e:
                get_logger().warning(f"⚠️ 回調函數錯誤 ({event}): {e}")

    def log_energy(self, step: int, time_value: float, total: float):
        """記錄能量"""
        self.energy_history.append({"step": step, "time": time_value, "total": total})

    def get_energy_summary(self) -> Dict[str, Any]:
        """能量摘要：初值、終值與最大單步增量"""
        if not self.energy_history:
            return {}

        totals = [entry["total"] for entry in self.energy_history]
        increases = [b - a for a, b in zip(totals, totals[1:])]
        return {
            "steps": len(totals) - 1,
            "initial": totals[0],
            "final": totals[-1],
            "max": max(totals),
            "max_increase": max(increases) if increases else 0.0,
            "wall_time": self.wall_time,
        }
