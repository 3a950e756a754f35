"""
離散生成元組裝

兩種系統共用的板塊寫成 E ẏ = J y + B·out，輸入 in = C y：
  System1  y = (u, v, η, ξ)：動態邊界控制 η, ξ 驅動延遲線
  System2  y = (u, v)：直接延遲邊界阻尼
out 為兩條延遲線在 ρ = 1 的輸出，in 為寫入 ρ = 0 的訊號。
延遲線以 ρ_j = j/N 上的格點值表示，傳輸方程 τz_t + z_ρ = 0。
"""

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np
import scipy.linalg as sla

from ..plate.femrad import ModeSpace
from ..utils.errors import NumericalError


class SystemKind(IntEnum):
    SYSTEM1 = 1
    SYSTEM2 = 2

    @classmethod
    def parse(cls, value) -> "SystemKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise ValueError(f"system 必須為 1 或 2，得到 {value!r}")


@dataclass(frozen=True)
class FeedbackParams:
    """回饋係數與延遲；β₂, γ₂ 可為 0 (無延遲基準)"""

    beta1: float
    beta2: float
    gamma1: float
    gamma2: float
    tau1: float
    tau2: float

    def __post_init__(self):
        for name in ("beta1", "beta2", "gamma1", "gamma2", "tau1", "tau2"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} 必須為有限值，得到 {value}")
            object.__setattr__(self, name, value)

    def with_delays(self, tau1: float, tau2: float) -> "FeedbackParams":
        return FeedbackParams(self.beta1, self.beta2, self.gamma1, self.gamma2, tau1, tau2)

    @property
    def gains(self) -> Tuple[float, float]:
        return self.beta1, self.gamma1

    @property
    def delayed(self) -> Tuple[float, float]:
        return self.beta2, self.gamma2

    @property
    def delays(self) -> Tuple[float, float]:
        return self.tau1, self.tau2


@dataclass(frozen=True)
class HypothesisReport:
    h_satisfied: bool
    is1: bool
    is2: bool


def validate_params(p: FeedbackParams, tolerance: float = 0.0) -> HypothesisReport:
    """
    分類回饋係數
      (H)   |β₂| < β₁ 且 |γ₂| < γ₁
      (IS₁) |β₂| = β₁ 且 |γ₂| = γ₁ (容差 tolerance，相對於 β₁, γ₁)
      (IS₂) |β₂| ≥ β₁、|γ₂| ≥ γ₁ 且兩差值之和 > 0
    """
    for name in ("beta1", "gamma1", "tau1", "tau2"):
        if getattr(p, name) <= 0.0:
            raise ValueError(f"{name} 必須為正，得到 {getattr(p, name)}")
    if tolerance < 0.0:
        raise ValueError(f"tolerance 不可為負: {tolerance}")

    db = abs(p.beta2) - p.beta1
    dg = abs(p.gamma2) - p.gamma1
    is1 = abs(db) <= tolerance * p.beta1 and abs(dg) <= tolerance * p.gamma1
    h = db < 0.0 and dg < 0.0 and not is1
    is2 = db >= 0.0 and dg >= 0.0 and db + dg > 0.0 and not is1
    return HypothesisReport(h_satisfied=h, is1=is1, is2=is2)


@dataclass
class DelayLine:
    """延遲線：values[0] 為入流槽 (ρ = 0)，values[-1] 為出流 (ρ = 1)"""

    tau: float
    cells: int
    weight: float
    values: np.ndarray = field(repr=False)

    @property
    def d_rho(self) -> float:
        return 1.0 / self.cells

    @property
    def rho(self) -> np.ndarray:
        return np.arange(self.cells + 1) / self.cells

    @property
    def outflow(self):
        return self.values[-1]

    def copy(self) -> "DelayLine":
        return DelayLine(self.tau, self.cells, self.weight, self.values.copy())


class DiscreteGenerator:
    """
    單一模態的離散生成元

    狀態排列 [u | v | η | ξ | z¹ | z²] (System1) 或 [u | v | z¹ | z²] (System2)。
    """

    def __init__(
        self,
        kind: SystemKind,
        space: ModeSpace,
        params: FeedbackParams,
        n_rho1: int,
        n_rho2: int,
    ):
        self.kind = SystemKind.parse(kind)
        self.space = space
        self.params = params
        for label, cells in (("n_rho1", n_rho1), ("n_rho2", n_rho2)):
            if int(cells) != cells or cells < 2:
                raise ValueError(f"{label} 必須為 ≥ 2 的整數，得到 {cells}")
        self.cells = (int(n_rho1), int(n_rho2))
        self.ell = space.boundary_measure

        nd = space.ndof
        if space.M.shape != (nd, nd) or space.K.shape != (nd, nd):
            raise ValueError("ModeSpace 矩陣維度不一致")
        if space.trace_value.shape != (nd,) or space.trace_slope.shape != (nd,):
            raise ValueError("跡泛函維度不一致")

        self.E, self.J, self.B, self.C = self._plate_block()
        self.plate_dim = self.E.shape[0]
        self.layout = self._layout()
        self.state_dim = self.layout["z2"].stop
        # 時間步進器快取，鍵為 dt
        self.steppers: Dict[float, object] = {}

    # ------------------------------------------------------------------
    # 板塊
    # ------------------------------------------------------------------
    def _plate_block(self):
        sp, p, ell = self.space, self.params, self.ell
        nd = sp.ndof
        s, t = sp.trace_slope, sp.trace_value
        u, v = slice(0, nd), slice(nd, 2 * nd)

        if self.kind is SystemKind.SYSTEM1:
            dim = 2 * nd + 2
            eta, xi = 2 * nd, 2 * nd + 1
            E = np.eye(dim)
            E[v, v] = sp.M
            J = np.zeros((dim, dim))
            J[u, v] = np.eye(nd)
            J[v, u] = -sp.K
            J[v, eta] = -ell * s
            J[v, xi] = -ell * t
            J[eta, v] = s
            J[eta, eta] = -p.beta1
            J[xi, v] = t
            J[xi, xi] = -p.gamma1
            B = np.zeros((dim, 2))
            B[eta, 0] = -p.beta2
            B[xi, 1] = -p.gamma2
            C = np.zeros((2, dim))
            C[0, eta] = 1.0
            C[1, xi] = 1.0
        else:
            dim = 2 * nd
            E = np.eye(dim)
            E[v, v] = sp.M
            J = np.zeros((dim, dim))
            J[u, v] = np.eye(nd)
            J[v, u] = -sp.K
            J[v, v] = -ell * (p.beta1 * np.outer(s, s) + p.gamma1 * np.outer(t, t))
            B = np.zeros((dim, 2))
            B[v, 0] = -ell * p.beta2 * s
            B[v, 1] = -ell * p.gamma2 * t
            C = np.zeros((2, dim))
            C[0, v] = s
            C[1, v] = t
        return E, J, B, C

    def _layout(self) -> Dict[str, slice]:
        nd = self.space.ndof
        layout = {"u": slice(0, nd), "v": slice(nd, 2 * nd)}
        pos = 2 * nd
        if self.kind is SystemKind.SYSTEM1:
            layout["eta"] = slice(pos, pos + 1)
            layout["xi"] = slice(pos + 1, pos + 2)
            pos += 2
        for name, cells in zip(("z1", "z2"), self.cells):
            layout[name] = slice(pos, pos + cells + 1)
            pos += cells + 1
        return layout

    # ------------------------------------------------------------------
    # 延遲線
    # ------------------------------------------------------------------
    @property
    def delay_coefs(self) -> Tuple[float, float]:
        return self.params.delayed

    @property
    def line_weights(self) -> Tuple[float, float]:
        """能量權重 τ|係數|"""
        p = self.params
        return p.tau1 * abs(p.beta2), p.tau2 * abs(p.gamma2)

    @property
    def energy_weights(self) -> Dict[str, float]:
        w1, w2 = self.line_weights
        weights = {"plate": 1.0, "kinetic": 1.0, "line1": w1 * self.ell, "line2": w2 * self.ell}
        if self.kind is SystemKind.SYSTEM1:
            weights["boundary_eta"] = self.ell
            weights["boundary_xi"] = self.ell
        return weights

    def new_lines(self, dtype=complex) -> List[DelayLine]:
        return [
            DelayLine(tau, cells, weight, np.zeros(cells + 1, dtype=dtype))
            for tau, cells, weight in zip(self.params.delays, self.cells, self.line_weights)
        ]

    def inflow(self, y: np.ndarray) -> np.ndarray:
        return self.C @ y

    # ------------------------------------------------------------------
    # 完整狀態
    # ------------------------------------------------------------------
    def pack(self, y: np.ndarray, lines) -> np.ndarray:
        return np.concatenate([np.asarray(y), lines[0].values, lines[1].values])

    def unpack(self, U: np.ndarray) -> Tuple[np.ndarray, List[DelayLine]]:
        U = np.asarray(U)
        if U.shape != (self.state_dim,):
            raise ValueError(f"狀態長度必須為 {self.state_dim}，得到 {U.shape}")
        lines = self.new_lines(dtype=U.dtype)
        lines[0].values[:] = U[self.layout["z1"]]
        lines[1].values[:] = U[self.layout["z2"]]
        return U[: self.plate_dim].copy(), lines

    @cached_property
    def _mass_factor(self):
        try:
            return sla.cho_factor(self.space.M, lower=True)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"質量矩陣非正定 (模態 {self.space.n}): {e}")

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        """E⁻¹ rhs，rhs 的列對應板塊狀態"""
        out = np.array(rhs, dtype=np.result_type(rhs, float), copy=True)
        v = self.layout["v"]
        out[v] = sla.cho_solve(self._mass_factor, out[v])
        return out

    @cached_property
    def explicit_matrix(self) -> np.ndarray:
        """
        顯式矩陣 A_h (dU/dt = A_h U)

        z_j (j ≥ 1) 以一階迎風差分；入流槽 z_0 追蹤 in 的導數並以
        κ = N/τ 鬆弛到 in。
        """
        pd = self.plate_dim
        A = np.zeros((self.state_dim, self.state_dim))
        Ay = self.solve_mass(self.J)
        Ab = self.solve_mass(self.B)
        A[:pd, :pd] = Ay
        for i, name in enumerate(("z1", "z2")):
            sl = self.layout[name]
            A[:pd, sl.stop - 1] += Ab[:, i]

        for i, name in enumerate(("z1", "z2")):
            sl = self.layout[name]
            kappa = self.cells[i] / self.params.delays[i]
            first = sl.start
            A[first] = self.C[i] @ A[:pd]
            A[first, :pd] += kappa * self.C[i]
            A[first, first] -= kappa
            for j in range(first + 1, sl.stop):
                A[j, j] = -kappa
                A[j, j - 1] = kappa
        return A

    def apply(self, U: np.ndarray) -> np.ndarray:
        return self.explicit_matrix @ np.asarray(U)

    @property
    def active(self) -> np.ndarray:
        """延遲係數為 0 的線為單向，不屬於回報的譜"""
        idx = [np.arange(self.plate_dim)]
        for coef, name in zip(self.delay_coefs, ("z1", "z2")):
            if coef != 0.0:
                sl = self.layout[name]
                idx.append(np.arange(sl.start, sl.stop))
        return np.concatenate(idx)

    @cached_property
    def energy_gram(self) -> np.ndarray:
        """E = ½ Uᴴ H U；延遲線採用相鄰格點平均"""
        H = np.zeros((self.state_dim, self.state_dim))
        H[self.layout["u"], self.layout["u"]] = self.space.K
        H[self.layout["v"], self.layout["v"]] = self.space.M
        if self.kind is SystemKind.SYSTEM1:
            for name in ("eta", "xi"):
                H[self.layout[name], self.layout[name]] = self.ell
        for name, cells, weight in zip(("z1", "z2"), self.cells, self.line_weights):
            avg = 0.5 * (np.eye(cells, cells + 1) + np.eye(cells, cells + 1, k=1))
            sl = self.layout[name]
            H[sl, sl] = weight * self.ell / cells * (avg.T @ avg)
        return H

    def energy(self, U: np.ndarray) -> float:
        U = np.asarray(U)
        return 0.5 * float(np.real(np.vdot(U, self.energy_gram @ U)))

    def balanced_matrix(self) -> np.ndarray:
        """
        能量座標下的 A_h (只含 active 分量)

        û = L_Kᵀu、v̂ = L_Mᵀv、η̂ = √ℓ η、ẑ = √(wℓΔρ) z；
        保守部分直接設為 [[0, W], [−Wᵀ, 0]]，W = L_Kᵀ L_M⁻ᵀ。
        """
        sp = self.space
        try:
            LK = sla.cholesky(sp.K, lower=True)
            LM = sla.cholesky(sp.M, lower=True)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"K 或 M 非正定 (模態 {sp.n}): {e}")

        scale_blocks = [LK.T, LM.T]
        inv_blocks = [
            sla.solve_triangular(LK.T, np.eye(sp.ndof), lower=False),
            sla.solve_triangular(LM.T, np.eye(sp.ndof), lower=False),
        ]
        if self.kind is SystemKind.SYSTEM1:
            root = np.sqrt(self.ell)
            scale_blocks.append(np.diag([root, root]))
            inv_blocks.append(np.diag([1.0 / root, 1.0 / root]))
        for cells, weight in zip(self.cells, self.line_weights):
            factor = np.sqrt(weight * self.ell / cells) if weight > 0.0 else 1.0
            scale_blocks.append(factor * np.eye(cells + 1))
            inv_blocks.append(np.eye(cells + 1) / factor)

        T = sla.block_diag(*scale_blocks)
        T_inv = sla.block_diag(*inv_blocks)
        A_hat = T @ self.explicit_matrix @ T_inv

        W = LK.T @ inv_blocks[1]
        u, v = self.layout["u"], self.layout["v"]
        A_hat[u, :] = 0.0
        A_hat[u, v] = W
        A_hat[v, u] = -W.T
        active = self.active
        return A_hat[np.ix_(active, active)]


def build_generator(kind, space: ModeSpace, p: FeedbackParams, n_rho1: int, n_rho2: int) -> DiscreteGenerator:
    return DiscreteGenerator(kind, space, p, n_rho1, n_rho2)
