"""
離散系統的時間積分

板塊以隱式中點法推進，延遲線在 dt·N = τ 時做精確格點平移，
否則以半拉格朗日線性插值推進 (只增加耗散)。
能量以 DiscreteGenerator.energy_gram 的二次型計算，
並提供逐步耗散稽核。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as sla
from tqdm import tqdm

from ..plate.femrad import lowest_eigenpairs
from ..utils.errors import NumericalError
from ..utils.logger import get_logger
from .assembly import DelayLine, DiscreteGenerator, SystemKind
from .callbacks import SimulationCallbacks

EXACT_SHIFT_RTOL = 1e-9
AUDIT_RTOL = 1e-8


class IncommensurateDelays(NumericalError):
    """τ₁/τ₂ 在分母上限內不是有理數"""


@dataclass
class SystemState:
    """板塊狀態 y、兩條延遲線與時間"""

    y: np.ndarray
    lines: List[DelayLine]
    time: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.y.copy(), [line.copy() for line in self.lines], self.time)

    def to_vector(self, gen: DiscreteGenerator) -> np.ndarray:
        return gen.pack(self.y, self.lines)

    @classmethod
    def from_vector(cls, gen: DiscreteGenerator, U, time: float = 0.0) -> "SystemState":
        y, lines = gen.unpack(U)
        return cls(y, lines, time)

    @classmethod
    def zeros(cls, gen: DiscreteGenerator, dtype=float) -> "SystemState":
        return cls(np.zeros(gen.plate_dim, dtype=dtype), gen.new_lines(dtype=dtype), 0.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    plate: float
    kinetic: float
    boundary_eta: float
    boundary_xi: float
    line1: float
    line2: float

    @property
    def total(self) -> float:
        return self.plate + self.kinetic + self.boundary_eta + self.boundary_xi + self.line1 + self.line2


def _line_energy(line: DelayLine, ell: float) -> float:
    if line.weight == 0.0:
        return 0.0
    avg = 0.5 * (line.values[1:] + line.values[:-1])
    return 0.5 * line.weight * ell * line.d_rho * float(np.sum(np.abs(avg) ** 2))


def energy_breakdown(gen: DiscreteGenerator, state: SystemState) -> EnergyBreakdown:
    sp, lay, ell = gen.space, gen.layout, gen.ell
    u, v = state.y[lay["u"]], state.y[lay["v"]]
    plate = 0.5 * float(np.real(np.vdot(u, sp.K @ u)))
    kinetic = 0.5 * float(np.real(np.vdot(v, sp.M @ v)))
    eta = xi = 0.0
    if gen.kind is SystemKind.SYSTEM1:
        eta = 0.5 * ell * float(np.sum(np.abs(state.y[lay["eta"]]) ** 2))
        xi = 0.5 * ell * float(np.sum(np.abs(state.y[lay["xi"]]) ** 2))
    return EnergyBreakdown(
        plate=plate,
        kinetic=kinetic,
        boundary_eta=eta,
        boundary_xi=xi,
        line1=_line_energy(state.lines[0], ell),
        line2=_line_energy(state.lines[1], ell),
    )


class MidpointStepper:
    """
    固定 (gen, dt) 的中點法推進器

    以 Schur 補消去 u 後只分解 w = y[nd:] 的方程：
        [E_w − dt/2 J_ww − dt²/4 J_wu P] w⁺ = [E_w + dt/2 J_ww + dt²/4 J_wu P] w
                                               + dt J_wu u + dt B_w out½
        u⁺ = u + dt/2 P (w + w⁺)
    """

    def __init__(self, gen: DiscreteGenerator, dt: float):
        if not dt > 0.0:
            raise ValueError(f"dt 必須為正，得到 {dt}")
        self.gen = gen
        self.dt = float(dt)
        nd = gen.space.ndof
        self.nd = nd

        E_w = gen.E[nd:, nd:]
        J_ww = gen.J[nd:, nd:]
        self.J_wu = gen.J[nd:, :nd]
        self.B_w = gen.B[nd:]
        P = np.zeros((nd, gen.plate_dim - nd))
        P[:, :nd] = np.eye(nd)
        self.P = P

        coupling = 0.25 * dt * dt * self.J_wu @ P
        lhs = E_w - 0.5 * dt * J_ww - coupling
        self.rhs = E_w + 0.5 * dt * J_ww + coupling
        try:
            self._lu = sla.lu_factor(lhs, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalError(f"中點法系統分解失敗 (dt={dt}): {e}")
        if np.any(np.abs(np.diag(self._lu[0])) == 0.0):
            raise NumericalError(f"中點法系統奇異 (dt={dt})")

        self.exact = tuple(
            abs(dt * cells - tau) <= EXACT_SHIFT_RTOL * tau
            for tau, cells in zip(gen.params.delays, gen.cells)
        )
        for exact, tau in zip(self.exact, gen.params.delays):
            if not exact and dt > tau:
                raise ValueError(f"插值模式需要 dt ≤ τ，得到 dt={dt}, τ={tau}")

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(rhs):
            return sla.lu_solve(self._lu, rhs.real) + 1j * sla.lu_solve(self._lu, rhs.imag)
        return sla.lu_solve(self._lu, rhs)

    def _next_outflow(self, line: DelayLine, exact: bool):
        if exact:
            return line.values[-2]
        foot = 1.0 - self.dt / line.tau
        return np.interp(foot, line.rho, line.values.real) + (
            1j * np.interp(foot, line.rho, line.values.imag) if np.iscomplexobj(line.values) else 0.0
        )

    def _advance_line(self, line: DelayLine, exact: bool, in_old, in_new) -> np.ndarray:
        if exact:
            return np.concatenate([[in_new], line.values[:-1]])
        rho = line.rho
        foot = rho - self.dt / line.tau
        new = np.empty_like(line.values)
        inside = foot >= 0.0
        if np.iscomplexobj(line.values):
            new[inside] = np.interp(foot[inside], rho, line.values.real) + 1j * np.interp(
                foot[inside], rho, line.values.imag
            )
        else:
            new[inside] = np.interp(foot[inside], rho, line.values)
        # 特徵線落在 ρ = 0 之前：對入流做時間插值
        frac = 1.0 - rho[~inside] * line.tau / self.dt
        new[~inside] = in_old + frac * (in_new - in_old)
        return new

    def advance(self, state: SystemState) -> Tuple[SystemState, np.ndarray]:
        """推進一步，回傳新狀態與半步入流 in½"""
        gen, nd, dt = self.gen, self.nd, self.dt
        dtype = np.result_type(state.y, *(line.values for line in state.lines))

        out_old = np.array([line.outflow for line in state.lines], dtype=dtype)
        out_new = np.array(
            [self._next_outflow(line, ex) for line, ex in zip(state.lines, self.exact)], dtype=dtype
        )
        out_half = 0.5 * (out_old + out_new)

        u, w = state.y[:nd], state.y[nd:]
        rhs = self.rhs @ w + dt * (self.J_wu @ u) + dt * (self.B_w @ out_half)
        w_new = self._solve(rhs)
        u_new = u + 0.5 * dt * (self.P @ (w + w_new))
        y_new = np.concatenate([u_new, w_new]).astype(dtype, copy=False)

        in_old = gen.inflow(state.y)
        in_new = gen.inflow(y_new)
        lines = []
        for i, line in enumerate(state.lines):
            values = self._advance_line(line, self.exact[i], in_old[i], in_new[i])
            lines.append(DelayLine(line.tau, line.cells, line.weight, values.astype(dtype, copy=False)))

        new_state = SystemState(y_new, lines, state.time + dt)
        return new_state, 0.5 * (in_old + in_new)


def stepper_for(gen: DiscreteGenerator, dt: float) -> MidpointStepper:
    """同一生成元與 dt 共用分解；快取存放在生成元上，隨生成元一起釋放"""
    dt = float(dt)
    if dt not in gen.steppers:
        gen.steppers[dt] = MidpointStepper(gen, dt)
    return gen.steppers[dt]


def step(state: SystemState, gen: DiscreteGenerator, dt: float) -> SystemState:
    """推進一步；分解結果依 dt 快取在 gen 上"""
    return stepper_for(gen, dt).advance(state)[0]


def project_inflow(gen: DiscreteGenerator, state: SystemState) -> SystemState:
    """將各延遲線的入流槽設為當前入流 (t = 0 相容條件)"""
    out = state.copy()
    inflow = gen.inflow(out.y)
    for line, value in zip(out.lines, inflow):
        if not np.iscomplexobj(line.values) and np.iscomplexobj(value):
            line.values = line.values.astype(complex)
        line.values[0] = value
    return out


def reverse_velocity(gen: DiscreteGenerator, state: SystemState) -> SystemState:
    """v → −v (無阻尼時即時間反演)"""
    out = state.copy()
    out.y[gen.layout["v"]] *= -1.0
    return out


@dataclass
class Trajectory:
    kind: SystemKind
    dt: float
    times: np.ndarray
    energies: List[EnergyBreakdown]
    half_inflows: Optional[np.ndarray] = None
    checkpoints: Dict[int, SystemState] = field(default_factory=dict)

    @property
    def totals(self) -> np.ndarray:
        return np.array([e.total for e in self.energies])

    @property
    def final_state(self) -> Optional[SystemState]:
        if not self.checkpoints:
            return None
        return self.checkpoints[max(self.checkpoints)]

    def to_frame(self) -> pd.DataFrame:
        columns = {
            "time": self.times,
            "E_total": self.totals,
            "E_plate": [e.plate for e in self.energies],
            "E_kinetic": [e.kinetic for e in self.energies],
        }
        if self.kind is SystemKind.SYSTEM1:
            columns["E_eta"] = [e.boundary_eta for e in self.energies]
            columns["E_xi"] = [e.boundary_xi for e in self.energies]
        columns["E_line1"] = [e.line1 for e in self.energies]
        columns["E_line2"] = [e.line2 for e in self.energies]
        return pd.DataFrame(columns)


def simulate(
    gen: DiscreteGenerator,
    U0: SystemState,
    dt: float,
    t_end: float,
    checkpoint_every: int = 0,
    callbacks: Optional[SimulationCallbacks] = None,
    progress: bool = False,
) -> Trajectory:
    """
    從 U0 模擬到 t_end

    能量逐步取樣；checkpoint_every > 0 時每隔該步數保存狀態，
    終態一律保存。
    """
    if not t_end > 0.0:
        raise ValueError(f"t_end 必須為正，得到 {t_end}")
    if checkpoint_every < 0:
        raise ValueError(f"checkpoint_every 不可為負: {checkpoint_every}")
    stepper = stepper_for(gen, dt)
    n_steps = int(np.ceil(t_end / dt - 1e-9))
    callbacks = callbacks or SimulationCallbacks()
    logger = get_logger()

    state = project_inflow(gen, U0)
    state.time = 0.0
    energies = [energy_breakdown(gen, state)]
    half = np.zeros((n_steps, 2), dtype=complex)
    checkpoints = {0: state.copy()} if checkpoint_every else {}

    logger.debug(
        f"模擬 System{int(gen.kind)} 模態 {gen.space.n}: {n_steps} 步, dt={dt:.6g}, "
        f"精確平移={stepper.exact}"
    )
    callbacks.trigger_callbacks("on_simulation_start", gen=gen, state=state)
    callbacks.log_energy(0, 0.0, energies[0].total)

    for k in tqdm(range(n_steps), desc=f"System{int(gen.kind)} n={gen.space.n}", disable=not progress):
        state, in_half = stepper.advance(state)
        state.time = (k + 1) * dt
        half[k] = in_half
        energy = energy_breakdown(gen, state)
        energies.append(energy)
        callbacks.log_energy(k + 1, state.time, energy.total)
        callbacks.trigger_callbacks("on_step_end", step=k + 1, state=state, energy=energy)
        if checkpoint_every and (k + 1) % checkpoint_every == 0:
            checkpoints[k + 1] = state.copy()
            callbacks.trigger_callbacks("on_checkpoint", step=k + 1, state=state)

    checkpoints[n_steps] = state.copy()
    times = np.arange(n_steps + 1) * dt
    trajectory = Trajectory(gen.kind, float(dt), times, energies, half, checkpoints)
    callbacks.trigger_callbacks("on_simulation_end", trajectory=trajectory)
    return trajectory


@dataclass
class AuditLedger:
    delta_energy: np.ndarray
    bound: np.ndarray
    flags: np.ndarray

    @property
    def n_flags(self) -> int:
        return int(np.count_nonzero(self.flags))

    def to_frame(self, times: np.ndarray) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time": times[1:],
                "delta_E": self.delta_energy,
                "bound": self.bound,
                "flag": self.flags.astype(int),
            }
        )


def dissipation_audit(trajectory: Trajectory, gen: DiscreteGenerator, rtol: float = AUDIT_RTOL) -> AuditLedger:
    """
    逐步耗散稽核

    bound_k = −dt·ℓ·[(β₁−|β₂|)|in¹_{k+½}|² + (γ₁−|γ₂|)|in²_{k+½}|²]，
    ΔE_k 超過 bound_k + rtol·E(0) 的步驟標記為違規。
    """
    if trajectory.half_inflows is None:
        raise ValueError("軌跡缺少半步入流資料")
    totals = trajectory.totals
    if len(trajectory.half_inflows) != len(totals) - 1:
        raise ValueError("半步入流數與步數不一致")

    gains = np.array(gen.params.gains)
    delayed = np.abs(np.array(gen.delay_coefs))
    margin = gains - delayed
    bound = -trajectory.dt * gen.ell * (np.abs(trajectory.half_inflows) ** 2 @ margin)
    delta = np.diff(totals)
    flags = delta > bound + rtol * totals[0]
    if np.any(flags):
        get_logger().warning(f"⚠️ 耗散稽核：{int(np.count_nonzero(flags))} 步超出界限")
    return AuditLedger(delta, bound, flags)


def commensurate_grid(tau1: float, tau2: float, target: int, cap: int) -> Tuple[int, int, float]:
    """
    選擇 N_ρ1, N_ρ2 使 τ₁/N_ρ1 = τ₂/N_ρ2 = dt

    τ₁/τ₂ ≈ p/q (約分)，N_ρ1 = p·m、N_ρ2 = q·m，m = ⌈target / min(p, q)⌉。
    """
    if tau1 <= 0.0 or tau2 <= 0.0:
        raise ValueError(f"延遲必須為正: τ₁={tau1}, τ₂={tau2}")
    if target < 2:
        raise ValueError(f"target 至少為 2，得到 {target}")
    ratio = tau1 / tau2
    frac = Fraction(ratio).limit_denominator(cap)
    p, q = frac.numerator, frac.denominator
    if abs(p / q - ratio) > 1e-10 * ratio:
        raise IncommensurateDelays(f"τ₁/τ₂ = {ratio:.17g} 在上限 {cap} 內無法化為有理數")
    m = int(np.ceil(target / min(p, q)))
    n1, n2 = p * m, q * m
    if max(n1, n2) > cap:
        raise NumericalError(f"精確平移需要 N_ρ = ({n1}, {n2})，超過上限 {cap}")
    return n1, n2, tau1 / n1


def time_grid(tau1: float, tau2: float, target: int, cap: int) -> Tuple[int, int, float, bool]:
    """優先精確平移；不可行時退回插值模式 dt = min(τᵢ/target)"""
    try:
        n1, n2, dt = commensurate_grid(tau1, tau2, target, cap)
        return n1, n2, dt, True
    except IncommensurateDelays as e:
        get_logger().warning(f"⚠️ {e}；改用插值模式")
        return target, target, min(tau1, tau2) / target, False


# ----------------------------------------------------------------------
# 初始資料
# ----------------------------------------------------------------------
def random_state(gen: DiscreteGenerator, rng: np.random.Generator) -> SystemState:
    """能量座標下的標準常態初始資料 (延遲線歷史亦為隨機)"""
    sp, lay = gen.space, gen.layout
    LK = sla.cholesky(sp.K, lower=True)
    LM = sla.cholesky(sp.M, lower=True)
    y = np.zeros(gen.plate_dim)
    y[lay["u"]] = sla.solve_triangular(LK.T, rng.standard_normal(sp.ndof), lower=False)
    y[lay["v"]] = sla.solve_triangular(LM.T, rng.standard_normal(sp.ndof), lower=False)
    if gen.kind is SystemKind.SYSTEM1:
        y[lay["eta"]] = rng.standard_normal(1)
        y[lay["xi"]] = rng.standard_normal(1)
    lines = gen.new_lines(dtype=float)
    for line in lines:
        line.values[:] = rng.standard_normal(line.cells + 1)
    return SystemState(y, lines, 0.0)


def smooth_state(gen: DiscreteGenerator, modes: int = 12) -> SystemState:
    """v₀ = Σ_{k=1}^{modes} φ_k / k (自由板特徵向量，M 正規化)，u₀ = 0"""
    sp = gen.space
    count = min(modes, sp.ndof)
    _, vecs = lowest_eigenpairs(sp.K, sp.M, count)
    weights = 1.0 / np.arange(1, count + 1)
    state = SystemState.zeros(gen, dtype=float)
    state.y[gen.layout["v"]] = vecs @ weights
    return state


def ansatz_state(gen: DiscreteGenerator, lam: float, phi: np.ndarray) -> SystemState:
    """
    週期解 u = e^{iλt}φ 在 t = 0 的狀態 (System2)

    延遲線填入歷史 z¹(ρ) = ∂νv·e^{−iλτ₁ρ}、z²(ρ) = v·e^{−iλτ₂ρ}。
    """
    if gen.kind is not SystemKind.SYSTEM2:
        raise ValueError("週期解初始資料只適用於 System2")
    phi = np.asarray(phi, dtype=complex)
    state = SystemState.zeros(gen, dtype=complex)
    v = 1j * lam * phi
    state.y[gen.layout["u"]] = phi
    state.y[gen.layout["v"]] = v
    inflow = gen.inflow(state.y)
    for line, value in zip(state.lines, inflow):
        line.values[:] = value * np.exp(-1j * lam * line.tau * line.rho)
    return state
