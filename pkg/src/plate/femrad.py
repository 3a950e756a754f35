"""
逐 Fourier 模態的徑向離散

在 [r0, r1] 上以 C¹ Hermite 三次元離散 û(r)，r0 處固支 (û = û′ = 0)。
每個模態 u = û(r)cos(nθ) 產生質量矩陣 M、剛度矩陣 K 以及 r1 處的跡泛函。

自由度排列：節點 i ≥ 1 的值在 2(i−1)、h·û′ 在 2(i−1)+1 (h 為均勻元素長度)；
外圓節點即最後兩個自由度。
"""

from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre

from ..utils.compute_manager import ComputeManager
from ..utils.errors import NumericalError
from .forms import FieldJet, PlateConfig, polar_jet
from .geometry import Annulus, angular_factor

GAUSS_POINTS = 6


def hermite_basis(xi, h) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    參考元素 ξ∈[0,1] 上的 Hermite 形函數及其對 r 的一、二階導數

    斜率形函數對應自由度 h·û′，故 N 本身與 h 無關 (h 可逐點給定)。
    """
    xi = np.asarray(xi, dtype=float)
    h = np.asarray(h, dtype=float)
    xi2, xi3 = xi * xi, xi * xi * xi
    N = np.array(
        [
            1.0 - 3.0 * xi2 + 2.0 * xi3,
            xi - 2.0 * xi2 + xi3,
            3.0 * xi2 - 2.0 * xi3,
            -xi2 + xi3,
        ]
    )
    dN = np.array(
        [
            -6.0 * xi + 6.0 * xi2,
            1.0 - 4.0 * xi + 3.0 * xi2,
            6.0 * xi - 6.0 * xi2,
            -2.0 * xi + 3.0 * xi2,
        ]
    ) / h
    d2N = np.array(
        [
            -6.0 + 12.0 * xi,
            -4.0 + 6.0 * xi,
            6.0 - 12.0 * xi,
            -2.0 + 6.0 * xi,
        ]
    ) / h**2
    return N, dN, d2N


def lowest_eigenpairs(K: np.ndarray, M: np.ndarray, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Kφ = λMφ 的最小 count 個特徵對 (K、M 對稱正定)

    以反轉束 Mφ = (1/λ)Kφ 取最大的 1/λ：最小的 λ 由此得到相對精度，
    不受 λ_max 的絕對捨入誤差影響。特徵向量以 M 正規化，λ 遞增。
    """
    nd = K.shape[0]
    if not 1 <= count <= nd:
        raise ValueError(f"count 必須介於 1 與 {nd} 之間，得到 {count}")
    try:
        inv, vectors = sla.eigh(M, K, subset_by_index=[nd - count, nd - 1])
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"剛度矩陣非正定，無法求特徵對: {e}")
    if inv.min() <= 0.0:
        raise NumericalError(f"反轉束出現非正特徵值: {inv.min():.3e}")
    inv, vectors = inv[::-1], vectors[:, ::-1]
    norms = np.sqrt(np.einsum("ik,ij,jk->k", vectors, M, vectors))
    vectors = vectors / norms
    # 符號：絕對值最大的分量為正
    pivot = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(count)]
    vectors = vectors * np.sign(pivot)
    return 1.0 / inv, vectors


@dataclass(frozen=True)
class ModeSpace:
    """單一模態的離散空間；建構後不可變"""

    n: int
    geom: Annulus
    plate: PlateConfig
    nodes: np.ndarray
    M: np.ndarray
    K: np.ndarray
    trace_value: np.ndarray
    trace_slope: np.ndarray

    @property
    def ndof(self) -> int:
        return self.M.shape[0]

    @property
    def elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def slope_scale(self) -> float:
        """斜率自由度的尺度 h (自由度 = h·û′)"""
        return float(self.nodes[1] - self.nodes[0])

    @property
    def boundary_measure(self) -> float:
        return self.geom.boundary_measure(self.n)

    def full_dofs(self, dofs) -> np.ndarray:
        """補上 r0 處兩個固支自由度"""
        dofs = np.asarray(dofs)
        if dofs.shape != (self.ndof,):
            raise ValueError(f"自由度長度必須為 {self.ndof}，得到 {dofs.shape}")
        full = np.zeros(self.ndof + 2, dtype=np.result_type(dofs, float))
        full[2:] = dofs
        return full

    def evaluate_profile(self, dofs, r) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """在半徑 r 處評估 (û, û′, û″)"""
        r = np.asarray(r, dtype=float)
        tol = 1e-12 * self.geom.r1
        if np.any(r < self.geom.r0 - tol) or np.any(r > self.geom.r1 + tol):
            raise ValueError(f"半徑超出 [{self.geom.r0}, {self.geom.r1}]")
        full = self.full_dofs(dofs)

        elem = np.clip(np.searchsorted(self.nodes, r, side="right") - 1, 0, self.elements - 1)
        a = self.nodes[elem]
        h = self.nodes[elem + 1] - a
        xi = (r - a) / h
        N, dN, d2N = hermite_basis(xi, h)
        local = np.stack([full[2 * elem + k] for k in range(4)])
        return (
            np.sum(N * local, axis=0),
            np.sum(dN * local, axis=0),
            np.sum(d2N * local, axis=0),
        )

    def profile(self, dofs) -> Callable:
        """回傳 r ↦ (û, û′, û″)，可直接交給 PolarModeField"""
        return lambda r: self.evaluate_profile(dofs, r)


def _element_matrices(a: float, b: float, n: int, mu: float, gauss) -> Tuple[np.ndarray, np.ndarray]:
    xg, wg = gauss
    h = b - a
    xi = 0.5 * (xg + 1.0)
    w = 0.5 * wg * h
    r = a + h * xi
    N, dN, d2N = hermite_basis(xi, h)

    e1 = d2N
    e2 = dN / r - n**2 * N / r**2
    e3 = np.sqrt(2.0) * n * (dN / r - N / r**2)
    lap = e1 + e2
    wr = w * r

    Me = (N * wr) @ N.T
    Ke = (1.0 - mu) * ((e1 * wr) @ e1.T + (e2 * wr) @ e2.T + (e3 * wr) @ e3.T) + mu * (
        (lap * wr) @ lap.T
    )
    return Me, Ke


def build_mode_space(geom: Annulus, cfg: PlateConfig, n: int, elements: int) -> ModeSpace:
    """
    組裝模態 n 的質量與剛度矩陣

    K 為 a(·,·) 在 û(r)cos(nθ) 上的限制：
        c_n ∫ r [(1−μ)(û″² + e₂² + e₃²) + μ(û″ + e₂)²] dr
    其中 e₂ = û′/r − n²û/r²，e₃ = √2·n(û′/r − û/r²)，c_n 為角向因子。
    """
    n = int(n)
    elements = int(elements)
    if n < 0:
        raise ValueError(f"模態指標必須非負: {n}")
    if elements < 1:
        raise ValueError(f"元素數至少為 1，得到 {elements}")

    nodes = np.linspace(geom.r0, geom.r1, elements + 1)
    size = 2 * (elements + 1)
    M_full = np.zeros((size, size))
    K_full = np.zeros((size, size))
    gauss = legendre.leggauss(GAUSS_POINTS)

    for e in range(elements):
        Me, Ke = _element_matrices(nodes[e], nodes[e + 1], n, cfg.mu, gauss)
        idx = slice(2 * e, 2 * e + 4)
        M_full[idx, idx] += Me
        K_full[idx, idx] += Ke

    c_n = angular_factor(n)
    M = c_n * M_full[2:, 2:]
    K = c_n * K_full[2:, 2:]
    M = 0.5 * (M + M.T)
    K = 0.5 * (K + K.T)

    ndof = 2 * elements
    trace_value = np.zeros(ndof)
    trace_value[ndof - 2] = 1.0
    trace_slope = np.zeros(ndof)
    trace_slope[ndof - 1] = 1.0 / float(nodes[1] - nodes[0])

    for arr in (nodes, M, K, trace_value, trace_slope):
        arr.setflags(write=False)
    return ModeSpace(n, geom, cfg, nodes, M, K, trace_value, trace_slope)


def build_mode_spaces(
    geom: Annulus,
    cfg: PlateConfig,
    modes: Iterable[int],
    elements: int,
    compute: Optional[ComputeManager] = None,
) -> List[ModeSpace]:
    """依模態順序建構多個 ModeSpace"""
    compute = compute or ComputeManager(threads=1)
    return compute.map_ordered(lambda n: build_mode_space(geom, cfg, n, elements), list(modes))


def reconstruct_field(space: ModeSpace, dofs, r, theta) -> FieldJet:
    """由自由度重建 û(r)cos(nθ) 的值與笛卡兒二階導數"""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    u, du, d2u = space.evaluate_profile(dofs, r)
    n = space.n
    cos_n, sin_n = np.cos(n * theta), np.sin(n * theta)
    return polar_jet(
        r,
        theta,
        value=u * cos_n,
        f_r=du * cos_n,
        f_rr=d2u * cos_n,
        f_t=-n * u * sin_n,
        f_tt=-(n**2) * u * cos_n,
        f_rt=-n * du * sin_n,
    )


def interpolate_profile(space: ModeSpace, f: Callable, df: Callable) -> np.ndarray:
    """固支徑向剖面 f 的 Hermite 插值自由度 (值與 h·f′)"""
    r0 = space.geom.r0
    scale = max(1.0, abs(f(space.geom.r1)), abs(df(space.geom.r1)))
    if abs(f(r0)) > 1e-12 * scale or abs(df(r0)) > 1e-12 * scale:
        raise ValueError("剖面在 r0 處必須滿足 f = f′ = 0")
    inner = space.nodes[1:]
    values = np.asarray(f(inner))
    slopes = np.asarray(df(inner))
    dofs = np.zeros(space.ndof, dtype=np.result_type(values, slopes, float))
    dofs[0::2] = values
    dofs[1::2] = space.slope_scale * slopes
    return dofs


def l2_error(space: ModeSpace, dofs, f: Callable, points: int = 8) -> float:
    """‖û − f‖ 於帶角向因子與權重 r 的 L² 範數"""
    xg, wg = legendre.leggauss(points)
    lo, hi = space.nodes[:-1, None], space.nodes[1:, None]
    r = (0.5 * (hi - lo) * xg + 0.5 * (hi + lo)).ravel()
    w = (0.5 * (hi - lo) * wg).ravel()
    u, _, _ = space.evaluate_profile(dofs, r)
    diff = np.abs(u - np.asarray(f(r))) ** 2
    return float(np.sqrt(angular_factor(space.n) * np.sum(w * r * diff)))
