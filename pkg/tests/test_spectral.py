"""
譜分析、T 算子、準模態與預解式增益測試
"""

import numpy as np
import pytest

from src.analysis.instability import design_is1
from src.analysis.spectral import (
    ResolventSample,
    boundary_impedances,
    free_plate_eigs,
    generator_spectrum,
    half_decade_ratio,
    impedance_eigenvalue,
    impedance_matrix,
    quasimode_state,
    quasimode_test,
    random_forcing,
    resolved_band,
    resolved_pairs,
    resolvent_full_crosscheck,
    resolvent_sweep_reduced,
    resonance_gains,
    t_operator_eigs,
    t_operator_matrix,
)
from src.dynamics.assembly import FeedbackParams, SystemKind, build_generator
from src.plate.femrad import build_mode_space
from src.utils.compute_manager import ComputeManager


@pytest.mark.parametrize("kind", [SystemKind.SYSTEM1, SystemKind.SYSTEM2])
@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_spectrum_in_left_half_plane(spaces, h_params, kind, n):
    gen = build_generator(kind, spaces[n], h_params, 16, 16)
    values = generator_spectrum(gen)
    assert len(values) == len(gen.active)
    assert values[0].real < 0.0
    assert np.all(np.diff(values.real) <= 0.0)


def test_conservative_spectrum_on_imaginary_axis(spaces, conservative_params):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], conservative_params, 8, 8)
    values = generator_spectrum(gen)
    assert len(values) == gen.plate_dim
    assert np.abs(values.real).max() <= 1e-12 * np.abs(values).max()


def test_generator_spectrum_count(spaces, h_params):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 4, 4)
    assert len(generator_spectrum(gen, 5)) == 5
    with pytest.raises(ValueError):
        generator_spectrum(gen, 0)


def test_t_operator_eigenpairs(spaces):
    space = spaces[1]
    pairs = t_operator_eigs(space, 6)
    K_T = t_operator_matrix(space)
    mu4 = np.array([p.mu4 for p in pairs])
    assert np.all(mu4 > 0.0)
    assert np.all(np.diff(mu4) > 0.0)
    Phi = np.column_stack([p.phi for p in pairs])
    assert np.allclose(Phi.T @ space.M @ Phi, np.eye(6), atol=1e-10)
    for p in pairs:
        residual = K_T @ p.phi - p.mu4 * space.M @ p.phi
        assert np.linalg.norm(residual) <= 1e-9 * p.mu4 * np.linalg.norm(space.M @ p.phi)
        assert p.phi @ K_T @ p.phi == pytest.approx(p.mu4, rel=1e-10)
        assert p.mu == pytest.approx(p.mu4**0.25)


def test_t_eigenvalues_stable_under_refinement(annulus, plate):
    """前三個 μ⁴ 在 64/128/256 個元素間相對差 ≤ 1e−6，不被捨入污染"""
    levels = {e: t_operator_eigs(build_mode_space(annulus, plate, 0, e), 3) for e in (64, 128, 256)}
    for coarse, fine in ((64, 128), (128, 256)):
        for a, b in zip(levels[coarse], levels[fine]):
            assert a.mu4 == pytest.approx(b.mu4, rel=1e-6)
    gaps = [abs(levels[64][k].mu4 - levels[128][k].mu4) for k in range(3)]
    finer = [abs(levels[128][k].mu4 - levels[256][k].mu4) for k in range(3)]
    assert all(f <= g for f, g in zip(finer, gaps))


def test_free_plate_eigenvalues_stable_under_refinement(annulus, plate):
    coarse, _ = free_plate_eigs(build_mode_space(annulus, plate, 1, 64), 3)
    fine, _ = free_plate_eigs(build_mode_space(annulus, plate, 1, 128), 3)
    assert coarse == pytest.approx(fine, rel=1e-6)
    assert np.all(coarse > 0.0)


def test_resolved_pairs_prefix(fine_space, resolved_space):
    coarse = resolved_pairs(fine_space, 10)
    pairs = resolved_pairs(resolved_space, 10)
    assert 1 <= len(coarse) <= len(pairs)
    assert len(pairs) >= 5
    reference = t_operator_eigs(resolved_space, len(pairs))
    assert [p.mu4 for p in pairs] == [p.mu4 for p in reference]


def test_resolved_band_positive(fine_space):
    band = resolved_band(fine_space)
    values, _ = free_plate_eigs(fine_space, 1)
    assert band > 0.5 * np.sqrt(values[0])


def test_quasimode_norms(resolved_space, small_gain_params):
    """‖Uₙ‖ ≥ 1、‖Fₙ‖/‖Uₙ‖ 嚴格遞減且 ‖Fₙ‖ 隨 μ 衰減"""
    pairs = resolved_pairs(resolved_space, 8)[:5]
    assert len(pairs) == 5
    samples = quasimode_test(resolved_space, small_gain_params, pairs)
    assert all(s.u_norm >= 1.0 - 1e-8 for s in samples)
    ratios = np.array([s.ratio for s in samples])
    assert np.all(np.diff(ratios) < 0.0)
    slope = np.polyfit(np.log([s.mu for s in samples]), np.log([s.f_norm for s in samples]), 1)[0]
    assert -1.3 < slope < -0.2
    # 不慢於 μ^{−1/2}
    scaled = np.array([s.f_norm * np.sqrt(s.mu) for s in samples])
    assert scaled[-1] <= scaled[0]


def test_quasimode_residual(fine_space, small_gain_params):
    """位移、邊界控制與入流槽的殘差即 F；延遲線內部為迎風截斷誤差"""
    p = small_gain_params
    gen = build_generator(SystemKind.SYSTEM1, fine_space, p, 256, 256)
    pair = t_operator_eigs(fine_space, 1)[0]
    U, F, lam = quasimode_state(gen, pair)
    residual = lam * U - gen.apply(U) - F

    lay = gen.layout
    exact_rows = np.concatenate(
        [residual[lay["u"]], residual[lay["eta"]], residual[lay["xi"]], [residual[lay["z1"].start], residual[lay["z2"].start]]]
    )
    assert np.abs(exact_rows).max() <= 1e-10 * np.linalg.norm(U)

    eta = U[lay["eta"]][0]
    z1 = gen.layout["z1"]
    bound = abs(eta) * pair.mu4 * p.tau1 / gen.cells[0]
    assert np.abs(residual[z1.start + 1 : z1.stop]).max() <= bound


def test_quasimode_state_requires_system1(fine_space, small_gain_params):
    gen = build_generator(SystemKind.SYSTEM2, fine_space, small_gain_params, 8, 8)
    pair = t_operator_eigs(fine_space, 1)[0]
    with pytest.raises(ValueError):
        quasimode_state(gen, pair)


def test_impedances_match_definition(h_params):
    omega = 1.7
    imp1, imp2 = boundary_impedances(SystemKind.SYSTEM2, h_params, omega)
    assert imp1 == pytest.approx(1j * omega * (2.0 + np.exp(-1j * omega * 0.7)))
    assert imp2 == pytest.approx(1j * omega * (3.0 - 2.0 * np.exp(-1j * omega * 1.1)))
    imp1, _ = boundary_impedances(SystemKind.SYSTEM1, h_params, omega)
    assert imp1 == pytest.approx(1j * omega / (1j * omega + 2.0 + np.exp(-1j * omega * 0.7)))


def test_impedance_at_zero_is_stiffness(spaces, h_params):
    Z = impedance_matrix(spaces[0], h_params, SystemKind.SYSTEM2, 0.0)
    assert np.allclose(Z, spaces[0].K)


def test_system1_gain_near_zero_frequency(spaces, h_params):
    samples = resolvent_sweep_reduced(spaces[0], h_params, SystemKind.SYSTEM1, [1e-6, 1e-3])
    gains = [s.gain for s in samples]
    assert all(np.isfinite(g) and g > 0.0 for g in gains)
    assert gains[1] == pytest.approx(gains[0], rel=0.1)


def test_sweep_is_thread_independent(spaces, h_params):
    lambdas = np.geomspace(0.1, 20.0, 12)
    serial = resolvent_sweep_reduced(spaces[1], h_params, 2, lambdas, compute=ComputeManager(threads=1))
    parallel = resolvent_sweep_reduced(spaces[1], h_params, 2, lambdas, compute=ComputeManager(threads=4))
    assert [s.gain for s in serial] == [s.gain for s in parallel]
    assert [s.lam for s in serial] == list(lambdas)


def test_power_estimator_bounds_random_forcing(spaces, h_params):
    lambdas = [0.5, 3.0, 11.0]
    random = resolvent_sweep_reduced(spaces[0], h_params, 2, lambdas, estimator="random")
    power = resolvent_sweep_reduced(spaces[0], h_params, 2, lambdas, estimator="power")
    for r, p in zip(random, power):
        assert p.gain >= r.gain * (1.0 - 1e-6)
    with pytest.raises(ValueError):
        resolvent_sweep_reduced(spaces[0], h_params, 2, lambdas, estimator="exact")


def test_reduced_gain_matches_full_system(annulus, plate, h_params):
    """消去延遲線的增益與完整離散求解一致，差異隨 N_ρ 一階收斂"""
    space = build_mode_space(annulus, plate, 0, 8)
    lam = 0.5
    f = random_forcing(space, 0)
    reduced = resolvent_sweep_reduced(space, h_params, 2, [lam])[0].gain
    errors = []
    for cells in (32, 64):
        gen = build_generator(SystemKind.SYSTEM2, space, h_params, cells, cells)
        full = resolvent_full_crosscheck(gen, lam, f)
        assert full == pytest.approx(reduced, rel=0.05)
        errors.append(abs(full - reduced))
    assert errors[1] <= errors[0] / 1.6


def test_system1_resonance_growth(resolved_space, small_gain_params):
    """System1 在 λₙ = μₙ² 的增益遞增，gain/λ² 有界；System2 沒有同樣的增長"""
    pairs = resolved_pairs(resolved_space, 8)[:5]
    assert len(pairs) == 5
    samples1, slope1 = resonance_gains(resolved_space, small_gain_params, 1, pairs, estimator="power")
    gains1 = np.array([s.gain for s in samples1])
    lams = np.array([s.lam for s in samples1])
    assert np.all(np.diff(gains1) > 0.0)
    assert slope1 > 0.0
    normalized = gains1 / lams**2
    assert normalized[-1] <= normalized[0]

    _, slope2 = resonance_gains(resolved_space, small_gain_params, 2, pairs, estimator="power")
    assert slope2 < slope1


def test_system2_gain_flat_over_resolved_band(annulus, plate, h_params):
    """System2：最高半個十倍頻的最大增益 ≤ 2 × 最低半個十倍頻的最大增益"""
    for n in range(4):
        space = build_mode_space(annulus, plate, n, 64)
        lambdas = np.geomspace(0.1, resolved_band(space), 40)
        samples = resolvent_sweep_reduced(space, h_params, SystemKind.SYSTEM2, lambdas, estimator="power")
        ratio = half_decade_ratio(samples)
        assert np.isfinite(ratio)
        assert ratio <= 2.0


def test_impedance_newton_returns_best_iterate_below_noise(annulus, plate):
    """容差低於捨入雜訊時回傳 |ν| 最小的迭代而非報錯"""
    space = build_mode_space(annulus, plate, 0, 16)
    design = design_is1(space)
    params = FeedbackParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).with_delays(design.tau1, design.tau2)
    root = impedance_eigenvalue(space, params, SystemKind.SYSTEM2, design.lam, tol=1e-15)
    assert abs(root.omega - design.lam) <= 1e-6 * design.lam
    assert 1 <= root.iterations <= 50
    default = impedance_eigenvalue(space, params, SystemKind.SYSTEM2, design.lam)
    assert abs(default.omega - design.lam) <= 1e-6 * design.lam


def test_half_decade_ratio():
    samples = [ResolventSample(lam, gain) for lam, gain in ((0.1, 1.0), (0.2, 2.0), (1.0, 0.5), (10.0, 3.0))]
    assert half_decade_ratio(samples) == pytest.approx(1.5)
    assert np.isnan(half_decade_ratio(samples[:2]))
