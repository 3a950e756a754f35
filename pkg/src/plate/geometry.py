"""
環形區域幾何
內圓 Γ₀ 固支、外圓 Γ₁ 受控；提供邊界標架、模態角向因子與乘子幾何控制條件 (MGC) 檢查
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Annulus:
    """同心環形區域 r0 < |x| < r1，乘子原點 x0"""

    r0: float
    r1: float
    x0: Tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if not (0.0 < self.r0 < self.r1):
            raise ValueError(f"需要 0 < r0 < r1，得到 r0={self.r0}, r1={self.r1}")
        x0 = tuple(float(c) for c in self.x0)
        if len(x0) != 2:
            raise ValueError(f"x0 必須是二維點: {self.x0}")
        object.__setattr__(self, "x0", x0)

    @property
    def area(self) -> float:
        return np.pi * (self.r1**2 - self.r0**2)

    def normal(self, point) -> np.ndarray:
        """Γ₁ 上的外法向 ν = (x/r, y/r)"""
        p = np.asarray(point, dtype=float)
        return p / np.hypot(p[0], p[1])

    def tangent(self, point) -> np.ndarray:
        """Γ₁ 上的逆時針切向 τ = (−y/r, x/r)"""
        nu = self.normal(point)
        return np.array([-nu[1], nu[0]])

    def on_outer(self, point, rtol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        return abs(np.hypot(p[0], p[1]) - self.r1) <= rtol * self.r1

    def boundary_measure(self, n: int) -> float:
        """模態 n 的邊界測度因子 ℓΓ = c_n · r1"""
        return angular_factor(n) * self.r1


def angular_factor(n: int) -> float:
    """∫₀^{2π} cos²(nθ) dθ：n=0 為 2π，其餘為 π"""
    if n < 0:
        raise ValueError(f"模態指標必須非負: {n}")
    return 2.0 * np.pi if n == 0 else np.pi


@dataclass(frozen=True)
class MgcReport:
    min_hnu_gamma1: float
    max_hnu_gamma0: float
    satisfied: bool
    delta: Optional[float]


def mgc_check(geom: Annulus, samples: int = 64) -> MgcReport:
    """
    在兩圓各取 samples 個等距點評估 h·ν，h(x) = x − x0。

    對圓上一點 x = r·e，h·ν 以 ±(r − x0·e) 直接計算，
    當 x0 位於圓心時結果與取樣無關。
    """
    if samples < 8:
        raise ValueError(f"samples 至少為 8，得到 {samples}")

    theta = 2.0 * np.pi * np.arange(samples) / samples
    x0_dot_e = geom.x0[0] * np.cos(theta) + geom.x0[1] * np.sin(theta)

    # Γ₁ 外法向為 +e，Γ₀ (孔洞邊界) 外法向為 −e
    hnu_outer = geom.r1 - x0_dot_e
    hnu_inner = x0_dot_e - geom.r0

    min_outer = float(np.min(hnu_outer))
    max_inner = float(np.max(hnu_inner))
    satisfied = min_outer > 0.0 and max_inner <= 0.0
    delta = 1.0 / min_outer if satisfied else None
    return MgcReport(min_outer, max_inner, satisfied, delta)
