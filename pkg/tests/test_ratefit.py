"""
能量衰減率擬合測試
"""

import numpy as np
import pytest

from src.analysis.ratefit import (
    MIN_SAMPLES,
    FitKind,
    compare_decay,
    default_window,
    fit_exponential,
    fit_power,
)
from src.plate.femrad import build_mode_space


def test_fit_exponential_recovers_rate():
    t = np.linspace(0.0, 10.0, 101)
    fit = fit_exponential(t, 3.0 * np.exp(-0.7 * t))
    assert fit.kind is FitKind.EXPONENTIAL
    assert fit.rate_or_exponent == pytest.approx(0.7, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window == (0.0, 10.0)


def test_fit_power_recovers_exponent():
    t = np.linspace(1.0, 10.0, 50)
    fit = fit_power(t, 2.0 * t**-1.5, window=(2.0, 10.0))
    assert fit.kind is FitKind.POWER
    assert fit.rate_or_exponent == pytest.approx(-1.5, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_power_needs_positive_start():
    t = np.linspace(0.0, 10.0, 50)
    with pytest.raises(ValueError):
        fit_power(t, np.exp(-t))


def test_constant_energy_is_a_perfect_fit():
    t = np.linspace(0.0, 1.0, 20)
    fit = fit_exponential(t, np.full_like(t, 2.5))
    assert fit.rate_or_exponent == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0


def test_window_validation():
    t = np.linspace(0.0, 10.0, 101)
    e = np.exp(-t)
    with pytest.raises(ValueError):
        fit_exponential(t, e, window=(0.0, 0.5 * (MIN_SAMPLES - 2) / 10.0))
    with pytest.raises(ValueError):
        fit_exponential(t, e, window=(5.0, 11.0))
    with pytest.raises(ValueError):
        fit_exponential(t, e[:-1])
    e_bad = e.copy()
    e_bad[50] = 0.0
    with pytest.raises(ValueError):
        fit_exponential(t, e_bad)


def test_default_window_stops_at_floor():
    t = np.linspace(0.0, 40.0, 401)
    start, end = default_window(t, np.exp(-t))
    assert start == pytest.approx(4.0)
    assert end == pytest.approx(29.9)


def test_default_window_rejects_early_collapse():
    t = np.linspace(0.0, 10.0, 101)
    with pytest.raises(ValueError):
        default_window(t, np.exp(-100.0 * t))
    with pytest.raises(ValueError):
        default_window(t, np.exp(-t), skip=1.0)


def test_as_row():
    t = np.linspace(0.0, 10.0, 101)
    row = fit_exponential(t, np.exp(-t)).as_row()
    assert row["kind"] == "exponential"
    assert set(row) == {"kind", "rate_or_exponent", "r_squared", "t_start", "t_end"}


def test_compare_decay_both_systems(annulus, plate, h_params):
    space = build_mode_space(annulus, plate, 0, 16)
    comparison = compare_decay(space, h_params, n_rho_target=16, cap=4096, t_end=30.0)
    assert comparison.system2.rate_or_exponent > 0.0
    assert comparison.system2.r_squared >= 0.9
    assert comparison.system1.rate_or_exponent > 0.0
    assert comparison.system1.window == comparison.system2.window
    assert comparison.system1_power.kind is FitKind.POWER
    assert comparison.domain_norm > 0.0
    assert len(comparison.times) == len(comparison.energies1) == len(comparison.energies2)
    assert comparison.energies2[-1] < comparison.energies2[0]


def test_decay_dichotomy_at_acceptance_resolution(annulus, plate, h_params):
    """64 個元素、N_ρ = 64：System2 指數衰減且擬合良好，System1 衰減率嚴格較小"""
    space = build_mode_space(annulus, plate, 0, 64)
    comparison = compare_decay(space, h_params, n_rho_target=64, cap=4096, t_end=30.0, skip=0.3)
    assert comparison.system2.rate_or_exponent > 0.0
    assert comparison.system2.r_squared >= 0.98
    assert comparison.system1.rate_or_exponent < comparison.system2.rate_or_exponent
    assert comparison.dichotomy
