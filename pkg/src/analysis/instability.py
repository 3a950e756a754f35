"""
System2 的失穩延遲設計

IS₁：|β₂| = β₁、|γ₂| = γ₁。取自由邊界板特徵對 Kφ = λ²Mφ，
     延遲使 β₁ + β₂e^{−iλτ₁} = 0，週期解 e^{iλt}φ 能量守恆。
IS₂：|β₂| ≥ β₁、|γ₂| ≥ γ₁。解二次特徵值問題 λ²M − λG − K = 0，
     G = ℓ(√(β₂²−β₁²) s sᵀ + √(γ₂²−γ₁²) t tᵀ)，延遲由 arccos 公式給出。
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from ..dynamics.assembly import FeedbackParams, SystemKind, build_generator, validate_params
from ..dynamics.evolution import ansatz_state, simulate, time_grid
from ..plate.femrad import ModeSpace, lowest_eigenpairs
from ..utils.errors import NumericalError
from ..utils.logger import get_logger
from .spectral import free_plate_eigs, impedance_eigenvalue

REAL_ROOT_RTOL = 1e-8


class DesignCase(str, Enum):
    IS1 = "IS1"
    IS2 = "IS2"


@dataclass(frozen=True)
class InstabilityDesign:
    lam: float
    phi: np.ndarray
    mode_n: int
    tau1_choices: Tuple[float, ...]
    tau2_choices: Tuple[float, ...]
    case: DesignCase
    k: int = 0
    l: int = 0

    @property
    def tau1(self) -> float:
        return self.tau1_choices[0]

    @property
    def tau2(self) -> float:
        return self.tau2_choices[0]

    def scaled(self, factor: float) -> "InstabilityDesign":
        return replace(self, phi=factor * self.phi)


@dataclass(frozen=True)
class VerificationReport:
    energy_drift: float
    eigen_residual: float
    n_rho1: int
    n_rho2: int
    dt: float
    t_end: float
    exact_shift: bool


def delay_phase(gain: float, delayed: float, mirror: bool = False) -> float:
    """
    λτ 的相位 θ ∈ (0, 2π]：cos θ = −gain/delayed 且 delayed·sin θ ≥ 0
    (mirror=True 取負正弦分支)
    """
    if gain <= 0.0:
        raise ValueError(f"瞬時增益必須為正，得到 {gain}")
    if abs(delayed) < gain:
        raise ValueError(f"需要 |延遲增益| ≥ 瞬時增益，得到 {delayed} < {gain}")
    theta = float(np.arccos(np.clip(-gain / delayed, -1.0, 1.0)))
    negative_branch = (delayed < 0.0) != mirror
    if negative_branch:
        theta = 2.0 * np.pi - theta
    if theta == 0.0:
        theta = 2.0 * np.pi
    return theta


def delay_menu(theta: float, lam: float, start: int, count: int) -> Tuple[float, ...]:
    """τ(k) = (θ + 2kπ)/λ，k = start, …, start+count−1"""
    if start < 0:
        raise ValueError(f"延遲指標必須非負: {start}")
    if count < 1:
        raise ValueError(f"選單長度至少為 1: {count}")
    k = np.arange(start, start + count)
    return tuple(float(v) for v in (theta + 2.0 * np.pi * k) / lam)


def design_is1(
    space: ModeSpace,
    k: int = 0,
    l: int = 0,
    which_eig: int = 0,
    params: Optional[FeedbackParams] = None,
    mirror: bool = False,
    menu: int = 5,
) -> InstabilityDesign:
    """
    自由邊界板特徵對的延遲設計

    未給 params 時取 β₂ = β₁、γ₂ = γ₁，延遲為 (2k+1)π/λ；
    β₂ = −β₁ 時相位為 2π，延遲為 2(k+1)π/λ。
    """
    if not 0 <= which_eig < space.ndof:
        raise ValueError(f"which_eig 必須介於 0 與 {space.ndof - 1} 之間，得到 {which_eig}")
    values, vectors = free_plate_eigs(space, which_eig + 1)
    lam = float(np.sqrt(values[which_eig]))
    phi = vectors[:, which_eig].copy()

    if params is None:
        theta1 = theta2 = np.pi
    else:
        if not validate_params(params, tolerance=1e-12).is1:
            raise ValueError("design_is1 需要 |β₂| = β₁ 且 |γ₂| = γ₁")
        theta1 = delay_phase(params.beta1, params.beta2, mirror)
        theta2 = delay_phase(params.gamma1, params.gamma2, mirror)

    design = InstabilityDesign(
        lam=lam,
        phi=phi,
        mode_n=space.n,
        tau1_choices=delay_menu(theta1, lam, k, menu),
        tau2_choices=delay_menu(theta2, lam, l, menu),
        case=DesignCase.IS1,
        k=k,
        l=l,
    )
    get_logger().debug(f"IS₁ 設計 模態 {space.n}: λ = {lam:.12g}, τ₁ = {design.tau1:.12g}")
    return design


def is2_damping(space: ModeSpace, p: FeedbackParams) -> np.ndarray:
    """G = ℓ(√(β₂²−β₁²) s sᵀ + √(γ₂²−γ₁²) t tᵀ)"""
    a = np.sqrt(max(p.beta2**2 - p.beta1**2, 0.0))
    b = np.sqrt(max(p.gamma2**2 - p.gamma1**2, 0.0))
    s, t = space.trace_slope, space.trace_value
    return space.boundary_measure * (a * np.outer(s, s) + b * np.outer(t, t))


def rayleigh_root(phi: np.ndarray, K: np.ndarray, G: np.ndarray) -> float:
    """p₊(φ) = ½[s + √(s² + 4a)]，s = φᵀGφ、a = φᵀKφ (φ 已 M 正規化)"""
    s = float(phi @ G @ phi)
    a = float(phi @ K @ phi)
    return 0.5 * (s + np.sqrt(s * s + 4.0 * a))


def _qep_candidates(space: ModeSpace, G: np.ndarray) -> List[Tuple[float, np.ndarray]]:
    """z = (λφ, φ)：[[G, K], [K, 0]] z = λ [[M, 0], [0, K]] z，第二列即 K·λφ = λ·Kφ"""
    nd = space.ndof
    zero = np.zeros((nd, nd))
    A = np.block([[G, space.K], [space.K, zero]])
    B = np.block([[space.M, zero], [zero, space.K]])
    try:
        values, vectors = sla.eig(A, B)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"二次特徵值問題求解失敗 (模態 {space.n}): {e}")

    out = []
    for lam, vec in zip(values, vectors.T):
        if not np.isfinite(lam) or lam.real <= 0.0:
            continue
        if abs(lam.imag) > REAL_ROOT_RTOL * abs(lam):
            continue
        x = vec[nd:]
        x = x * np.exp(-1j * np.angle(x[np.argmax(np.abs(x))]))
        phi = x.real
        norm = np.sqrt(phi @ space.M @ phi)
        if norm == 0.0:
            continue
        out.append((float(lam.real), phi / norm))
    return out


def design_is2(
    space: ModeSpace,
    p: FeedbackParams,
    k: int = 0,
    l: int = 0,
    mirror: bool = False,
    menu: int = 5,
) -> InstabilityDesign:
    """二次特徵值問題的延遲設計；以 Rayleigh 泛函最小者為準"""
    if p.beta1 <= 0.0 or p.gamma1 <= 0.0:
        raise ValueError("β₁ 與 γ₁ 必須為正")
    if abs(p.beta2) < p.beta1 or abs(p.gamma2) < p.gamma1:
        raise ValueError("design_is2 需要 |β₂| ≥ β₁ 且 |γ₂| ≥ γ₁")

    G = is2_damping(space, p)
    candidates = _qep_candidates(space, G)
    if not candidates:
        raise NumericalError(f"模態 {space.n} 找不到實正根")

    functional = [rayleigh_root(phi, space.K, G) for _, phi in candidates]
    best = int(np.argmin(functional))
    smallest = int(np.argmin([lam for lam, _ in candidates]))
    if best != smallest:
        get_logger().warning(
            f"⚠️ 模態 {space.n}: Rayleigh 泛函最小者 (λ={candidates[best][0]:.12g}) "
            f"不是最小實根 (λ={candidates[smallest][0]:.12g})"
        )
    lam, phi = candidates[best]

    theta1 = delay_phase(p.beta1, p.beta2, mirror)
    theta2 = delay_phase(p.gamma1, p.gamma2, mirror)
    design = InstabilityDesign(
        lam=lam,
        phi=phi,
        mode_n=space.n,
        tau1_choices=delay_menu(theta1, lam, k, menu),
        tau2_choices=delay_menu(theta2, lam, l, menu),
        case=DesignCase.IS2,
        k=k,
        l=l,
    )
    get_logger().debug(f"IS₂ 設計 模態 {space.n}: λ = {lam:.12g}, 候選數 {len(candidates)}")
    return design


def rayleigh_fixed_point(
    space: ModeSpace,
    p: FeedbackParams,
    lam0: Optional[float] = None,
    tol: float = 1e-12,
    maxiter: int = 1000,
) -> Tuple[float, np.ndarray]:
    """
    λ ← ½[s(w) + √(s(w)² + 4a(w,w))]，w 為 K + λG 相對於 M 的最小特徵向量

    迭代用盡時，若最後一步已小於 1e−9·λ (捨入雜訊) 仍回傳該值。
    """
    G = is2_damping(space, p)
    if lam0 is None:
        lam0 = float(np.sqrt(free_plate_eigs(space, 1)[0][0]))
    lam = float(lam0)
    change = np.inf
    for _ in range(maxiter):
        _, vec = lowest_eigenpairs(space.K + lam * G, space.M, 1)
        w = vec[:, 0]
        lam_new = rayleigh_root(w, space.K, G)
        change = abs(lam_new - lam)
        lam = lam_new
        if change <= tol * lam:
            return lam, w
    if change <= 1e-9 * lam:
        return lam, w
    raise NumericalError(f"Rayleigh 不動點迭代未收斂 (模態 {space.n}, λ = {lam:.12g})")


def aggregate_designs(designs: Sequence[InstabilityDesign]) -> InstabilityDesign:
    """跨模態取最小 λ"""
    if not designs:
        raise ValueError("沒有可彙整的設計")
    return min(designs, key=lambda d: (d.lam, d.mode_n))


def verify_design(
    design: InstabilityDesign,
    p: FeedbackParams,
    space: ModeSpace,
    n_rho_target: int = 64,
    cap: int = 4096,
    periods: float = 10.0,
    progress: bool = False,
) -> VerificationReport:
    """
    以週期解初始資料模擬 System2，回報能量漂移與阻抗特徵值殘差

    延遲取自設計選單的第一項；τ₁/τ₂ 為有理數時用精確平移。
    """
    if design.mode_n != space.n:
        raise ValueError(f"設計屬於模態 {design.mode_n}，空間為模態 {space.n}")
    if periods <= 0:
        raise ValueError(f"periods 必須為正: {periods}")
    report = validate_params(p, tolerance=1e-12)
    if design.case is DesignCase.IS1 and not report.is1:
        raise ValueError("IS₁ 設計需要 |β₂| = β₁ 且 |γ₂| = γ₁")
    if design.case is DesignCase.IS2 and not (abs(p.beta2) >= p.beta1 and abs(p.gamma2) >= p.gamma1):
        raise ValueError("IS₂ 設計需要 |β₂| ≥ β₁ 且 |γ₂| ≥ γ₁")

    params = p.with_delays(design.tau1, design.tau2)
    n1, n2, dt, exact = time_grid(params.tau1, params.tau2, n_rho_target, cap)
    gen = build_generator(SystemKind.SYSTEM2, space, params, n1, n2)
    t_end = periods * 2.0 * np.pi / design.lam

    trajectory = simulate(gen, ansatz_state(gen, design.lam, design.phi), dt, t_end, progress=progress)
    totals = trajectory.totals
    drift = 0.0 if totals[0] == 0.0 else abs(totals[-1] - totals[0]) / totals[0]

    root = impedance_eigenvalue(space, params, SystemKind.SYSTEM2, design.lam)
    residual = float(abs(root.omega - design.lam))
    get_logger().debug(
        f"驗證 {design.case.value} 模態 {space.n}: 漂移 {drift:.3e}, 殘差 {residual:.3e}"
    )
    return VerificationReport(drift, residual, n1, n2, float(dt), float(t_end), exact)
