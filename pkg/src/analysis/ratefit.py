"""
能量衰減率擬合

指數型：log E 對 t 的最小平方斜率；冪次型：log E 對 log t 的斜率。
任何固定離散化都是指數穩定的，多項式行為只能從衰減前段的視窗讀出。
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from ..dynamics.assembly import DiscreteGenerator, FeedbackParams, SystemKind, build_generator
from ..dynamics.evolution import SystemState, simulate, smooth_state, time_grid
from ..plate.femrad import ModeSpace

MIN_SAMPLES = 10
FINITE_DIMENSION_NOTE = (
    "固定離散化必為指數穩定；多項式型行為僅反映衰減前段的視窗，需配合預解式增益判讀"
)


class FitKind(str, Enum):
    EXPONENTIAL = "exponential"
    POWER = "power"


@dataclass(frozen=True)
class DecayFit:
    kind: FitKind
    rate_or_exponent: float
    r_squared: float
    window: Tuple[float, float]

    def as_row(self) -> Dict[str, object]:
        return {
            "kind": self.kind.value,
            "rate_or_exponent": self.rate_or_exponent,
            "r_squared": self.r_squared,
            "t_start": self.window[0],
            "t_end": self.window[1],
        }


def _windowed(times, energies, window) -> Tuple[np.ndarray, np.ndarray]:
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError("times 與 energies 必須是等長一維序列")
    t0, t1 = window
    if t0 > t1 or t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12:
        raise ValueError(f"視窗 [{t0}, {t1}] 不在序列 [{t[0]}, {t[-1]}] 內")
    mask = (t >= t0) & (t <= t1)
    t, e = t[mask], e[mask]
    if len(t) < MIN_SAMPLES:
        raise ValueError(f"視窗內至少需要 {MIN_SAMPLES} 個樣本，得到 {len(t)}")
    if np.any(e <= 0.0):
        raise ValueError("視窗內出現非正能量")
    return t, e


def _least_squares(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """閉式最小平方：回傳 (斜率, r²)；y 為常數時 r² = 1"""
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("自變數無變化，無法擬合")
    ss_tot = float(dy @ dy)
    # 均值的捨入會留下 eps 量級的殘差，視同常數
    flat = len(y) * (np.finfo(float).eps * max(1.0, float(np.abs(y).max()))) ** 2
    if ss_tot <= flat:
        return 0.0, 1.0
    slope = float(dx @ dy) / sxx
    residual = dy - slope * dx
    r2 = 1.0 - float(residual @ residual) / ss_tot
    return slope, min(max(r2, 0.0), 1.0)


def fit_exponential(times, energies, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """E ≈ C e^{−rate·t}"""
    window = window or (float(times[0]), float(times[-1]))
    t, e = _windowed(times, energies, window)
    slope, r2 = _least_squares(t, np.log(e))
    return DecayFit(FitKind.EXPONENTIAL, -slope, r2, (float(window[0]), float(window[1])))


def fit_power(times, energies, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """E ≈ C t^{exponent}，視窗必須從 t > 0 開始"""
    window = window or (float(times[0]), float(times[-1]))
    if window[0] <= 0.0:
        raise ValueError(f"冪次擬合需要 t_start > 0，得到 {window[0]}")
    t, e = _windowed(times, energies, window)
    slope, r2 = _least_squares(np.log(t), np.log(e))
    return DecayFit(FitKind.POWER, slope, r2, (float(window[0]), float(window[1])))


def default_window(times, energies, skip: float = 0.1, floor: float = 1e-13) -> Tuple[float, float]:
    """跳過前 skip 比例的時間，並在 E < floor·E(0) 前截止"""
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    if not 0.0 <= skip < 1.0:
        raise ValueError(f"skip 必須介於 [0, 1)，得到 {skip}")
    start = t[0] + skip * (t[-1] - t[0])
    end = t[-1]
    below = np.nonzero(e < floor * e[0])[0]
    if len(below):
        end = t[max(below[0] - 1, 0)]
    if end <= start:
        raise ValueError("能量在視窗開始前已低於浮點下限")
    return float(start), float(end)


def domain_norm_surrogate(gen: DiscreteGenerator, state: SystemState) -> float:
    """‖U₀‖² + ‖A_hU₀‖²，範數為離散能量範數"""
    U = state.to_vector(gen)
    AU = gen.apply(U)
    H = gen.energy_gram
    return float(np.real(np.vdot(U, H @ U)) + np.real(np.vdot(AU, H @ AU)))


@dataclass(frozen=True)
class DecayComparison:
    system1: DecayFit
    system2: DecayFit
    system1_power: DecayFit
    domain_norm: float
    times: np.ndarray
    energies1: np.ndarray
    energies2: np.ndarray

    @property
    def dichotomy(self) -> bool:
        return self.system2.rate_or_exponent > 0.0 and self.system1.rate_or_exponent < self.system2.rate_or_exponent


def compare_decay(
    space: ModeSpace,
    p: FeedbackParams,
    n_rho_target: int,
    cap: int,
    t_end: float,
    smooth_modes: int = 12,
    skip: float = 0.1,
    floor: float = 1e-13,
) -> DecayComparison:
    """兩系統自相同平滑資料出發；皆在 System2 的預設視窗上擬合"""
    n1, n2, dt, _ = time_grid(p.tau1, p.tau2, n_rho_target, cap)
    gens = {kind: build_generator(kind, space, p, n1, n2) for kind in SystemKind}
    runs = {}
    for kind, gen in gens.items():
        runs[kind] = simulate(gen, smooth_state(gen, smooth_modes), dt, t_end)

    times = runs[SystemKind.SYSTEM2].times
    e1 = runs[SystemKind.SYSTEM1].totals
    e2 = runs[SystemKind.SYSTEM2].totals
    window = default_window(times, e2, skip, floor)
    gen1 = gens[SystemKind.SYSTEM1]
    return DecayComparison(
        system1=fit_exponential(times, e1, window),
        system2=fit_exponential(times, e2, window),
        system1_power=fit_power(times, e1, window),
        domain_norm=domain_norm_surrogate(gen1, smooth_state(gen1, smooth_modes)),
        times=times,
        energies1=e1,
        energies2=e2,
    )
