"""
離散生成元的譜分析

- 生成元特徵值 (能量座標下的平衡矩陣)
- 輔助算子 T 的特徵對：K_T = K + ℓ(s sᵀ + t tᵀ)
- 準模態構造與殘差
- 沿虛軸的預解式增益：消去延遲線的阻抗形式為主，完整離散求解為交叉檢查
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from ..dynamics.assembly import DiscreteGenerator, FeedbackParams, SystemKind
from ..plate.femrad import ModeSpace, build_mode_space, lowest_eigenpairs
from ..utils.compute_manager import ComputeManager
from ..utils.errors import NumericalError
from ..utils.logger import get_logger

RESOLUTION_RTOL = 1e-6
NEWTON_RTOL = 1e-10
NEWTON_NOISE_RTOL = 1e-7


@dataclass(frozen=True)
class TEigenpair:
    mu4: float
    phi: np.ndarray
    mode_n: int

    @property
    def mu(self) -> float:
        return self.mu4**0.25


@dataclass(frozen=True)
class ResolventSample:
    lam: float
    gain: float


@dataclass(frozen=True)
class QuasimodeSample:
    mu: float
    u_norm: float
    f_norm: float

    @property
    def ratio(self) -> float:
        return self.f_norm / self.u_norm


@dataclass(frozen=True)
class ImpedanceRoot:
    omega: complex
    residual: float
    iterations: int


# ----------------------------------------------------------------------
# 生成元譜
# ----------------------------------------------------------------------
def _sort_spectrum(values: np.ndarray) -> np.ndarray:
    order = np.lexsort((values.imag, -values.real))
    return values[order]


def generator_spectrum(gen: DiscreteGenerator, count: Optional[int] = None) -> np.ndarray:
    """特徵值依實部遞減排列；延遲係數為 0 的單向線不列入"""
    A_hat = gen.balanced_matrix()
    dim = A_hat.shape[0]
    if count is None:
        count = dim
    if not 1 <= count <= dim:
        raise ValueError(f"count 必須介於 1 與 {dim} 之間，得到 {count}")
    try:
        values = sla.eigvals(A_hat, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        cond = np.linalg.cond(A_hat)
        raise NumericalError(
            f"生成元特徵值求解失敗 (System{int(gen.kind)}, 模態 {gen.space.n}, "
            f"維度 {dim}, 條件數 {cond:.3e}): {e}"
        )
    return _sort_spectrum(values)[:count]


# ----------------------------------------------------------------------
# 自由板與 T 算子
# ----------------------------------------------------------------------
def free_plate_eigs(space: ModeSpace, count: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Kφ = λ²Mφ (Γ₁ 為自然邊界條件)，回傳遞增的 λ² 與 M 正規化特徵向量"""
    count = space.ndof if count is None else count
    try:
        return lowest_eigenpairs(space.K, space.M, count)
    except NumericalError as e:
        raise NumericalError(f"自由板特徵對求解失敗 (模態 {space.n}): {e}")


def t_operator_matrix(space: ModeSpace) -> np.ndarray:
    ell = space.boundary_measure
    s, t = space.trace_slope, space.trace_value
    K_T = space.K + ell * (np.outer(s, s) + np.outer(t, t))
    return 0.5 * (K_T + K_T.T)


def t_operator_eigs(space: ModeSpace, count: int) -> List[TEigenpair]:
    """T 的最小 count 個特徵對 (μ⁴ 遞增，φ 為 M 正交歸一)"""
    try:
        values, vectors = lowest_eigenpairs(t_operator_matrix(space), space.M, count)
    except NumericalError as e:
        raise NumericalError(f"ã 非正定 (模態 {space.n})，組裝可能有誤: {e}")
    return [TEigenpair(float(mu4), vectors[:, k].copy(), space.n) for k, mu4 in enumerate(values)]


def _refined(space: ModeSpace) -> ModeSpace:
    return build_mode_space(space.geom, space.plate, space.n, 2 * space.elements)


def _resolved_prefix(coarse: np.ndarray, fine: np.ndarray, rtol: float) -> int:
    rel = np.abs(coarse - fine[: len(coarse)]) / np.abs(fine[: len(coarse)])
    bad = np.nonzero(rel > rtol)[0]
    return len(coarse) if len(bad) == 0 else int(bad[0])


def resolved_pairs(space: ModeSpace, count: int, rtol: float = RESOLUTION_RTOL) -> List[TEigenpair]:
    """與加倍網格相比相對差 ≤ rtol 的前段 T 特徵對"""
    pairs = t_operator_eigs(space, count)
    fine = t_operator_eigs(_refined(space), count)
    keep = _resolved_prefix(
        np.array([p.mu4 for p in pairs]), np.array([p.mu4 for p in fine]), rtol
    )
    get_logger().debug(f"模態 {space.n}: {keep}/{count} 個 T 特徵對通過網格解析檢查")
    return pairs[:keep]


def resolved_band(space: ModeSpace, rtol: float = RESOLUTION_RTOL) -> float:
    """λ_max = 0.5·√(最大可靠自由板特徵值)"""
    coarse, _ = free_plate_eigs(space)
    fine, _ = free_plate_eigs(_refined(space), space.ndof)
    keep = _resolved_prefix(coarse, fine, rtol)
    if keep == 0:
        raise NumericalError(f"模態 {space.n} 在 {space.elements} 個元素下沒有可靠的特徵值")
    return 0.5 * float(np.sqrt(coarse[keep - 1]))


# ----------------------------------------------------------------------
# 阻抗形式
# ----------------------------------------------------------------------
def boundary_impedances(kind, p: FeedbackParams, omega) -> Tuple[complex, complex]:
    """
    消去延遲線後 Γ₁ 上的阻抗
      System2: iω(β₁ + β₂e^{−iωτ₁})
      System1: iω / (iω + β₁ + β₂e^{−iωτ₁})
    """
    kind = SystemKind.parse(kind)
    out = []
    for gain, delayed, tau in zip(p.gains, p.delayed, p.delays):
        factor = gain + delayed * np.exp(-1j * omega * tau)
        if kind is SystemKind.SYSTEM2:
            out.append(1j * omega * factor)
        else:
            out.append(1j * omega / (1j * omega + factor))
    return out[0], out[1]


def boundary_impedance_derivatives(kind, p: FeedbackParams, omega) -> Tuple[complex, complex]:
    kind = SystemKind.parse(kind)
    out = []
    for gain, delayed, tau in zip(p.gains, p.delayed, p.delays):
        e = np.exp(-1j * omega * tau)
        if kind is SystemKind.SYSTEM2:
            out.append(1j * (gain + delayed * e) + omega * tau * delayed * e)
        else:
            D = 1j * omega + gain + delayed * e
            dD = 1j - 1j * tau * delayed * e
            out.append((1j * D - 1j * omega * dD) / D**2)
    return out[0], out[1]


def impedance_matrix(space: ModeSpace, p: FeedbackParams, kind, omega) -> np.ndarray:
    """Z(ω) = K − ω²M + ℓ·imp₁·s sᵀ + ℓ·imp₂·t tᵀ"""
    imp1, imp2 = boundary_impedances(kind, p, omega)
    ell = space.boundary_measure
    s, t = space.trace_slope, space.trace_value
    return (
        space.K
        - omega**2 * space.M
        + ell * imp1 * np.outer(s, s)
        + ell * imp2 * np.outer(t, t)
    )


def _impedance_matrix_derivative(space: ModeSpace, p: FeedbackParams, kind, omega) -> np.ndarray:
    d1, d2 = boundary_impedance_derivatives(kind, p, omega)
    ell = space.boundary_measure
    s, t = space.trace_slope, space.trace_value
    return -2.0 * omega * space.M + ell * d1 * np.outer(s, s) + ell * d2 * np.outer(t, t)


def response_gram(space: ModeSpace, p: FeedbackParams, kind, lam: float) -> np.ndarray:
    """
    由 u 重建完整狀態能量範數：‖U‖² = uᴴ Q u

    延遲線以精確剖面 e^{−iλτρ} 積分。
    """
    kind = SystemKind.parse(kind)
    ell = space.boundary_measure
    s, t = space.trace_slope, space.trace_value
    Q = space.K + lam**2 * space.M
    if kind is SystemKind.SYSTEM1:
        imp1, imp2 = boundary_impedances(kind, p, lam)
        Q = Q + ell * (1.0 + p.tau1 * abs(p.beta2)) * abs(imp1) ** 2 * np.outer(s, s)
        Q = Q + ell * (1.0 + p.tau2 * abs(p.gamma2)) * abs(imp2) ** 2 * np.outer(t, t)
    else:
        Q = Q + ell * p.tau1 * abs(p.beta2) * lam**2 * np.outer(s, s)
        Q = Q + ell * p.tau2 * abs(p.gamma2) * lam**2 * np.outer(t, t)
    return 0.5 * (Q + Q.T)


def _factor_impedance(space, p, kind, lam):
    Z = impedance_matrix(space, p, kind, lam)
    lu, piv = sla.lu_factor(Z)
    diag = np.abs(np.diag(lu))
    if diag.min() <= np.finfo(float).eps * diag.max():
        raise NumericalError(f"阻抗系統在 λ = {lam:.17g} 奇異 (離散共振)")
    return lu, piv


def random_forcing(space: ModeSpace, seed: int) -> np.ndarray:
    """M 正規化的固定種子隨機右端項"""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(space.ndof)
    L = sla.cholesky(space.M, lower=True)
    return sla.solve_triangular(L.T, g / np.linalg.norm(g), lower=False)


def _gain_random(space, p, kind, lam, f) -> float:
    lu = _factor_impedance(space, p, kind, lam)
    u = sla.lu_solve(lu, space.M @ f)
    Q = response_gram(space, p, kind, lam)
    return float(np.sqrt(np.real(np.vdot(u, Q @ u))))


def _gain_power(space, p, kind, lam, iterations: int = 200, rtol: float = 1e-10, seed: int = 0) -> float:
    """‖R Z⁻¹ L‖₂ 的冪迭代估計，M = L Lᵀ、Q = Rᵀ R"""
    lu = _factor_impedance(space, p, kind, lam)
    L = sla.cholesky(space.M, lower=True)
    R = sla.cholesky(response_gram(space, p, kind, lam), lower=False)

    g = np.random.default_rng(seed).standard_normal(space.ndof).astype(complex)
    g /= np.linalg.norm(g)
    sigma = 0.0
    for _ in range(iterations):
        x = R @ sla.lu_solve(lu, L @ g)
        g_new = L.T @ sla.lu_solve(lu, R.T @ x, trans=2)
        norm = np.linalg.norm(g_new)
        if norm == 0.0:
            return 0.0
        sigma_new = float(np.sqrt(norm))
        g = g_new / norm
        if abs(sigma_new - sigma) <= rtol * sigma_new:
            sigma = sigma_new
            break
        sigma = sigma_new
    return sigma


def resolvent_sweep_reduced(
    space: ModeSpace,
    p: FeedbackParams,
    kind,
    lambdas: Sequence[float],
    estimator: str = "random",
    seed: int = 0,
    compute: Optional[ComputeManager] = None,
) -> List[ResolventSample]:
    """
    沿 iℝ 的預解式增益 ‖U‖/‖F‖，F = (0, f, 0, …)

    對每個 λ 解 Z(λ)u = M f；estimator="power" 改以冪迭代估計
    該 λ 下的最大增益。
    """
    kind = SystemKind.parse(kind)
    if estimator not in ("random", "power"):
        raise ValueError(f"未知的增益估計方式: {estimator}")
    compute = compute or ComputeManager(threads=1)
    f = random_forcing(space, seed)

    def gain(lam: float) -> ResolventSample:
        lam = float(lam)
        if estimator == "power":
            value = _gain_power(space, p, kind, lam, seed=seed)
        else:
            value = _gain_random(space, p, kind, lam, f)
        return ResolventSample(lam, value)

    return compute.map_ordered(gain, list(lambdas))


def resonance_gains(
    space: ModeSpace,
    p: FeedbackParams,
    kind,
    pairs: Sequence[TEigenpair],
    estimator: str = "random",
    seed: int = 0,
    compute: Optional[ComputeManager] = None,
) -> Tuple[List[ResolventSample], float]:
    """在 λₙ = μₙ² 取樣增益，並回傳 log gain 對 log λ 的斜率"""
    lambdas = [pair.mu4**0.5 for pair in pairs]
    samples = resolvent_sweep_reduced(space, p, kind, lambdas, estimator, seed, compute)
    if len(samples) < 2:
        return samples, float("nan")
    x = np.log([s.lam for s in samples])
    y = np.log([s.gain for s in samples])
    slope = float(np.polyfit(x, y, 1)[0])
    return samples, slope


def half_decade_ratio(samples: Sequence[ResolventSample]) -> float:
    """最高半個十倍頻的最大增益 / 最低半個十倍頻的最大增益；頻帶不足一個十倍頻時為 nan"""
    lam = np.array([s.lam for s in samples])
    gain = np.array([s.gain for s in samples])
    if len(lam) < 2 or lam.max() < 10.0 * lam.min():
        return float("nan")
    half = np.sqrt(10.0)
    top = gain[lam >= lam.max() / half]
    bottom = gain[lam <= lam.min() * half]
    return float(top.max() / bottom.max())


def impedance_eigenvalue(
    space: ModeSpace,
    p: FeedbackParams,
    kind,
    omega0: complex,
    tol: float = NEWTON_RTOL,
    maxiter: int = 50,
) -> ImpedanceRoot:
    """
    以 Newton 法求 Z(ω)x = 0 在 ω₀ 附近的根

    ν(ω) 取束 (Z(ω), M) 中絕對值最小的特徵值，ν′ = yᴴZ′x / yᴴMx。
    |Δω| ≤ tol·|ω| 時收斂。步長降到捨入雜訊 (|Δω| ≤ NEWTON_NOISE_RTOL·|ω|)
    卻不再縮小時，回傳 |ν| 最小的迭代值。
    """
    omega = complex(omega0)
    best: Optional[ImpedanceRoot] = None
    previous = np.inf
    stalled = 0
    nu = np.inf
    for it in range(1, maxiter + 1):
        Z = impedance_matrix(space, p, kind, omega)
        w, vl, vr = sla.eig(Z, space.M, left=True, right=True)
        k = int(np.argmin(np.abs(w)))
        nu = w[k]
        if best is None or abs(nu) < best.residual:
            best = ImpedanceRoot(omega, float(abs(nu)), it)
        x, y = vr[:, k], vl[:, k]
        dZ = _impedance_matrix_derivative(space, p, kind, omega)
        denom = np.vdot(y, space.M @ x)
        if denom == 0.0:
            raise NumericalError(f"阻抗特徵值在 ω = {omega} 退化")
        dnu = np.vdot(y, dZ @ x) / denom
        if dnu == 0.0:
            raise NumericalError(f"阻抗特徵值導數在 ω = {omega} 為 0")
        delta = nu / dnu
        step = abs(delta)
        omega = omega - delta
        if step <= tol * abs(omega):
            return ImpedanceRoot(omega, float(abs(nu)), it)
        if step <= NEWTON_NOISE_RTOL * abs(omega):
            stalled = stalled + 1 if step >= 0.5 * previous else 0
            if stalled >= 3:
                get_logger().debug(f"阻抗 Newton 停在捨入雜訊 |Δω| = {step:.3e}，取 |ν| 最小的迭代")
                return best
        previous = step
    if best is not None and previous <= NEWTON_NOISE_RTOL * abs(omega):
        return best
    raise NumericalError(f"阻抗特徵值 Newton 迭代未收斂 (ω₀ = {omega0}, |ν| = {abs(nu):.3e})")


# ----------------------------------------------------------------------
# 完整離散系統的交叉檢查
# ----------------------------------------------------------------------
def resolvent_full_crosscheck(gen: DiscreteGenerator, lam: float, f: np.ndarray) -> float:
    """
    解 (iλI − A_h)U = F，F 在速度分量放 f；範數為離散能量範數，除以 ‖f‖_M

    入流槽追蹤入流的導數，故 F 在各入流槽同時放入 C·F (強迫項對入流的貢獻)，
    使 z₀ 與入流一致；與消去延遲線的增益只差迎風離散誤差。
    """
    f = np.asarray(f)
    if f.shape != (gen.space.ndof,):
        raise ValueError(f"f 長度必須為 {gen.space.ndof}")
    pd = gen.plate_dim
    F = np.zeros(gen.state_dim, dtype=complex)
    F[gen.layout["v"]] = f
    for i, name in enumerate(("z1", "z2")):
        F[gen.layout[name].start] = gen.C[i] @ F[:pd]
    shifted = 1j * lam * np.eye(gen.state_dim) - gen.explicit_matrix
    try:
        lu, piv = sla.lu_factor(shifted)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"iλ = {lam}i 處分解失敗: {e}")
    diag = np.abs(np.diag(lu))
    if diag.min() <= np.finfo(float).eps * diag.max():
        raise NumericalError(f"iλ = {lam}i 為離散特徵值")
    U = sla.lu_solve((lu, piv), F)
    H = gen.energy_gram
    forcing = np.real(np.vdot(f, gen.space.M @ f))
    return float(np.sqrt(np.real(np.vdot(U, H @ U)) / forcing))


# ----------------------------------------------------------------------
# 準模態
# ----------------------------------------------------------------------
def _normalized(space: ModeSpace, phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return phi / np.sqrt(phi @ space.M @ phi)


def _quasimode_parts(space: ModeSpace, p: FeedbackParams, pair: TEigenpair):
    if pair.mode_n != space.n:
        raise ValueError(f"特徵對屬於模態 {pair.mode_n}，空間為模態 {space.n}")
    phi = _normalized(space, pair.phi)
    lam = 1j * pair.mu4**0.5
    s_phi = space.trace_slope @ phi
    t_phi = space.trace_value @ phi
    eta, xi = s_phi / lam, t_phi / lam
    f3 = (p.beta1 + p.beta2 * np.exp(lam * -p.tau1)) * eta
    f4 = (p.gamma1 + p.gamma2 * np.exp(lam * -p.tau2)) * xi
    return phi, lam, eta, xi, f3, f4


def quasimode_test(space: ModeSpace, p: FeedbackParams, pairs: Sequence[TEigenpair]) -> List[QuasimodeSample]:
    """
    Uₙ = (φ/λ, φ, ∂νφ/λ, φ/λ, η e^{−iμ²τ₁ρ}, ξ e^{−iμ²τ₂ρ})，λ = iμ²，
    Fₙ = (0, 0, f₃, f₄, 0, 0)；範數為 System1 的能量範數 (延遲線精確積分)。
    """
    ell = space.boundary_measure
    samples = []
    for pair in pairs:
        phi, lam, eta, xi, f3, f4 = _quasimode_parts(space, p, pair)
        u = phi / lam
        u_sq = (
            np.real(np.vdot(u, space.K @ u))
            + phi @ space.M @ phi
            + ell * (abs(eta) ** 2 + abs(xi) ** 2)
            + ell * p.tau1 * abs(p.beta2) * abs(eta) ** 2
            + ell * p.tau2 * abs(p.gamma2) * abs(xi) ** 2
        )
        f_sq = ell * (abs(f3) ** 2 + abs(f4) ** 2)
        samples.append(QuasimodeSample(pair.mu, float(np.sqrt(u_sq)), float(np.sqrt(f_sq))))
    return samples


def quasimode_state(gen: DiscreteGenerator, pair: TEigenpair) -> Tuple[np.ndarray, np.ndarray, complex]:
    """
    完整離散狀態下的 (Uₙ, Fₙ, λₙ)，用於殘差 λU − A_hU − F

    入流槽追蹤入流的導數，故 F 在 z 的入流槽重複 f₃, f₄。
    """
    if gen.kind is not SystemKind.SYSTEM1:
        raise ValueError("準模態構造只適用於 System1")
    phi, lam, eta, xi, f3, f4 = _quasimode_parts(gen.space, gen.params, pair)
    lay = gen.layout
    U = np.zeros(gen.state_dim, dtype=complex)
    F = np.zeros(gen.state_dim, dtype=complex)
    U[lay["u"]] = phi / lam
    U[lay["v"]] = phi
    U[lay["eta"]] = eta
    U[lay["xi"]] = xi
    for name, value, tau, cells in (("z1", eta, gen.params.tau1, gen.cells[0]), ("z2", xi, gen.params.tau2, gen.cells[1])):
        rho = np.arange(cells + 1) / cells
        U[lay[name]] = value * np.exp(-lam * tau * rho)
    F[lay["eta"]] = f3
    F[lay["xi"]] = f4
    F[lay["z1"].start] = f3
    F[lay["z2"].start] = f4
    return U, F, lam
