"""
板的笛卡兒形式參考計算 (oracle)

對閉式場以求積評估雙線性形式 a(f,g)、能量密度 c, d 以及邊界算子 B₁, B₂，
用來驗證徑向離散。場的導數由解析式提供，不做數值微分。
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P

from .geometry import Annulus


@dataclass(frozen=True)
class PlateConfig:
    """Poisson 比 μ"""

    mu: float

    def __post_init__(self):
        if not (0.0 < self.mu < 0.5):
            raise ValueError(f"Poisson 比需滿足 0 < mu < 1/2，得到 {self.mu}")


@dataclass
class FieldJet:
    """場在取樣點上的值與偏導數

    d1 = (f_x, f_y)
    d2 = (f_xx, f_xy, f_yy)
    d3 = (f_xxx, f_xxy, f_xyy, f_yyy)，僅三階場提供
    """

    value: np.ndarray
    d1: Tuple[np.ndarray, np.ndarray]
    d2: Tuple[np.ndarray, np.ndarray, np.ndarray]
    d3: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None

    @property
    def laplacian(self) -> np.ndarray:
        return self.d2[0] + self.d2[2]

    def grad_laplacian(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.d3 is None:
            raise ValueError("需要三階導數")
        fxxx, fxxy, fxyy, fyyy = self.d3
        return fxxx + fxyy, fxxy + fyyy


class AnalyticField:
    """閉式場：呼叫 field(x, y) 回傳 FieldJet"""

    order = 2

    def __call__(self, x, y) -> FieldJet:
        raise NotImplementedError


class PolynomialField(AnalyticField):
    """二元多項式 Σ c[i, j] x^i y^j，導數至三階"""

    order = 3

    def __init__(self, coeffs):
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))

    def _partial(self, nx: int, ny: int) -> np.ndarray:
        c = self.coeffs
        if nx:
            c = P.polyder(c, nx, axis=0)
        if ny:
            c = P.polyder(c, ny, axis=1)
        return c

    def __call__(self, x, y) -> FieldJet:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)

        def ev(nx, ny):
            return P.polyval2d(x, y, self._partial(nx, ny))

        return FieldJet(
            value=ev(0, 0),
            d1=(ev(1, 0), ev(0, 1)),
            d2=(ev(2, 0), ev(1, 1), ev(0, 2)),
            d3=(ev(3, 0), ev(2, 1), ev(1, 2), ev(0, 3)),
        )

    @classmethod
    def radial_power(cls, power: int, scale: float = 1.0) -> "PolynomialField":
        """scale · (x² + y²)^power"""
        base = np.zeros((3, 3))
        base[2, 0] = base[0, 2] = 1.0
        coeffs = np.array([[scale]])
        for _ in range(power):
            coeffs = _mul2d(coeffs, base)
        return cls(coeffs)


def _mul2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """二元多項式係數相乘"""
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), dtype=np.result_type(a, b))
    for i, j in zip(*np.nonzero(b)):
        out[i : i + a.shape[0], j : j + a.shape[1]] += b[i, j] * a
    return out


def polar_jet(r, theta, value, f_r, f_rr, f_t, f_tt, f_rt) -> FieldJet:
    """由極座標偏導數組出笛卡兒二階導數"""
    c, s = np.cos(theta), np.sin(theta)
    cs = c * s
    c2s2 = c * c - s * s
    fx = c * f_r - s / r * f_t
    fy = s * f_r + c / r * f_t
    fxx = (
        c * c * f_rr
        + s * s / r * f_r
        + s * s / r**2 * f_tt
        - 2.0 * cs / r * f_rt
        + 2.0 * cs / r**2 * f_t
    )
    fyy = (
        s * s * f_rr
        + c * c / r * f_r
        + c * c / r**2 * f_tt
        + 2.0 * cs / r * f_rt
        - 2.0 * cs / r**2 * f_t
    )
    fxy = (
        cs * f_rr
        - cs / r * f_r
        - cs / r**2 * f_tt
        + c2s2 / r * f_rt
        - c2s2 / r**2 * f_t
    )
    return FieldJet(value=value, d1=(fx, fy), d2=(fxx, fxy, fyy))


class PolarModeField(AnalyticField):
    """û(r)·cos(nθ)；profile(r) 回傳 (û, û′, û″)"""

    order = 2

    def __init__(self, profile: Callable, n: int):
        self.profile = profile
        self.n = int(n)

    def jet_polar(self, r, theta) -> FieldJet:
        u, du, d2u = self.profile(r)
        n = self.n
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

    def __call__(self, x, y) -> FieldJet:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.jet_polar(np.hypot(x, y), np.arctan2(y, x))


def _polar_rule(
    geom: Annulus, order: int, n_theta: int, breaks: Optional[Sequence[float]]
):
    """r 方向複合 Gauss–Legendre、θ 方向梯形法則"""
    if order < 4:
        raise ValueError(f"求積階數至少為 4，得到 {order}")
    if n_theta < 4:
        raise ValueError(f"θ 取樣數至少為 4，得到 {n_theta}")
    edges = np.asarray(breaks if breaks is not None else (geom.r0, geom.r1), dtype=float)
    if edges[0] < geom.r0 - 1e-14 or edges[-1] > geom.r1 + 1e-14 or np.any(np.diff(edges) <= 0):
        raise ValueError("breaks 必須在 [r0, r1] 內嚴格遞增")

    xi, w = legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    r = (0.5 * (hi - lo) * xi + 0.5 * (hi + lo)).ravel()
    wr = (0.5 * (hi - lo) * w).ravel()

    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    wt = np.full(n_theta, 2.0 * np.pi / n_theta)

    R, T = np.meshgrid(r, theta, indexing="ij")
    weights = np.outer(wr * r, wt)
    return R * np.cos(T), R * np.sin(T), weights


def a_form_quadrature(
    f: AnalyticField,
    g: AnalyticField,
    cfg: PlateConfig,
    geom: Annulus,
    order: int = 12,
    n_theta: int = 64,
    breaks: Optional[Sequence[float]] = None,
) -> complex:
    """a(f, g) = ∫Ω [f₁₁ḡ₁₁ + f₂₂ḡ₂₂ + μ(f₁₁ḡ₂₂ + f₂₂ḡ₁₁) + 2(1−μ) f₁₂ḡ₁₂] dx"""
    X, Y, W = _polar_rule(geom, order, n_theta, breaks)
    fxx, fxy, fyy = f(X, Y).d2
    gxx, gxy, gyy = (np.conj(d) for d in g(X, Y).d2)
    mu = cfg.mu
    integrand = (
        fxx * gxx
        + fyy * gyy
        + mu * (fxx * gyy + fyy * gxx)
        + 2.0 * (1.0 - mu) * fxy * gxy
    )
    return complex(np.sum(W * integrand))


def energy_densities(hessian, cfg: PlateConfig):
    """
    能量密度
        c = |u₁₁|² + |u₂₂|² + 2μ Re(u₁₁ū₂₂) + 2(1−μ)|u₁₂|²
        d = |u₁₁|² + |u₂₂|² + 2|u₁₂|²
    hessian 形狀 (..., 2, 2)
    """
    h = np.asarray(hessian)
    if h.shape[-2:] != (2, 2):
        raise ValueError(f"Hessian 形狀必須為 (..., 2, 2)，得到 {h.shape}")
    a, e, e2, b = h[..., 0, 0], h[..., 0, 1], h[..., 1, 0], h[..., 1, 1]
    scale = np.max(np.abs(h)) if h.size else 0.0
    if not np.allclose(e, e2, rtol=0.0, atol=1e-13 * max(scale, 1.0)):
        raise ValueError("Hessian 必須對稱")

    aa, bb, ee = np.abs(a) ** 2, np.abs(b) ** 2, np.abs(e) ** 2
    c = aa + bb + 2.0 * cfg.mu * np.real(a * np.conj(b)) + 2.0 * (1.0 - cfg.mu) * ee
    d = aa + bb + 2.0 * ee
    if np.ndim(c) == 0:
        return float(c), float(d)
    return c, d


def energy_density_quadrature(
    f: AnalyticField,
    cfg: PlateConfig,
    geom: Annulus,
    order: int = 12,
    n_theta: int = 64,
    breaks: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """∫Ω c(f,f) 與 ∫Ω d(f,f)"""
    X, Y, W = _polar_rule(geom, order, n_theta, breaks)
    fxx, fxy, fyy = f(X, Y).d2
    hessian = np.stack([np.stack([fxx, fxy], -1), np.stack([fxy, fyy], -1)], -2)
    c, d = energy_densities(hessian, cfg)
    return float(np.sum(W * c)), float(np.sum(W * d))


def _outer_frame(point, geom: Annulus):
    p = np.asarray(point, dtype=float)
    if p.shape != (2,):
        raise ValueError(f"邊界點必須是二維: {point}")
    if not geom.on_outer(p):
        raise ValueError(f"點 {tuple(p)} 不在 Γ₁ (r1={geom.r1}) 上")
    return p, geom.normal(p), geom.tangent(p)


def c1_definition(jet: FieldJet, nu) -> complex:
    """C₁f = 2ν₁ν₂f₁₂ − ν₁²f₂₂ − ν₂²f₁₁"""
    fxx, fxy, fyy = (complex(np.asarray(d)) for d in jet.d2)
    return 2.0 * nu[0] * nu[1] * fxy - nu[0] ** 2 * fyy - nu[1] ** 2 * fxx


def c1_tangential(jet: FieldJet, nu, tau, radius: float) -> complex:
    """C₁f = −∂²_τ f − (∂_τ ν₂) f₁ + (∂_τ ν₁) f₂，圓上 ∂_τ ν = τ/r"""
    fx, fy = (complex(np.asarray(d)) for d in jet.d1)
    fxx, fxy, fyy = (complex(np.asarray(d)) for d in jet.d2)
    tHt = tau[0] ** 2 * fxx + 2.0 * tau[0] * tau[1] * fxy + tau[1] ** 2 * fyy
    # 沿弧長 dτ/ds = −ν/r
    d2_tau = tHt - (nu[0] * fx + nu[1] * fy) / radius
    dtau_nu1, dtau_nu2 = tau[0] / radius, tau[1] / radius
    return -d2_tau - dtau_nu2 * fx + dtau_nu1 * fy


def boundary_operator_oracle(
    f: AnalyticField, point, cfg: PlateConfig, geom: Annulus
) -> Tuple[complex, complex]:
    """
    在 Γ₁ 上一點精確評估
        B₁f = Δf + (1−μ) C₁f
        B₂f = ∂_νΔf + (1−μ) ∂_τ C₂f，C₂f = (ν₁²−ν₂²) f₁₂ − ν₁ν₂ (f₁₁ − f₂₂)
    ∂_τ C₂f 包含沿圓周變化的 ν 所產生的曲率項。
    """
    p, nu, tau = _outer_frame(point, geom)
    jet = f(p[0], p[1])
    if jet.d3 is None:
        raise ValueError("B₂ 需要三階導數")
    mu = cfg.mu
    radius = geom.r1

    lap = complex(np.asarray(jet.laplacian))
    b1 = lap + (1.0 - mu) * c1_definition(jet, nu)

    fxx, fxy, fyy = (complex(np.asarray(d)) for d in jet.d2)
    fxxx, fxxy, fxyy, fyyy = (complex(np.asarray(d)) for d in jet.d3)
    lx, ly = fxxx + fxyy, fxxy + fyyy
    dnu_lap = nu[0] * lx + nu[1] * ly

    # 固定 ν 時的切向導數
    dt_fxy = tau[0] * fxxy + tau[1] * fxyy
    dt_fxx = tau[0] * fxxx + tau[1] * fxxy
    dt_fyy = tau[0] * fxyy + tau[1] * fyyy
    a_coef = nu[0] ** 2 - nu[1] ** 2
    b_coef = nu[0] * nu[1]
    frozen = a_coef * dt_fxy - b_coef * (dt_fxx - dt_fyy)
    # ν 沿弧長的變化：dν₁/ds = −ν₂/r，dν₂/ds = ν₁/r
    da = -4.0 * nu[0] * nu[1] / radius
    db = (nu[0] ** 2 - nu[1] ** 2) / radius
    curvature = da * fxy - db * (fxx - fyy)
    b2 = dnu_lap + (1.0 - mu) * (frozen + curvature)
    return b1, b2
