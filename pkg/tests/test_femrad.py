"""
徑向 Hermite 有限元測試
"""

import numpy as np
import pytest
import scipy.linalg as sla

from src.plate.femrad import (
    build_mode_space,
    build_mode_spaces,
    interpolate_profile,
    l2_error,
    lowest_eigenpairs,
    reconstruct_field,
)
from src.plate.forms import PolarModeField, a_form_quadrature
from src.utils.compute_manager import ComputeManager

# r0 = 1 處固支的平滑剖面 (f, f′)
SMOOTH_PROFILES = [
    (lambda r: (r - 1) ** 2, lambda r: 2 * (r - 1)),
    (
        lambda r: (r - 1) ** 2 * (r - 1.5) ** 2,
        lambda r: 2 * (r - 1) * (r - 1.5) ** 2 + 2 * (r - 1) ** 2 * (r - 1.5),
    ),
    (lambda r: (r - 1) ** 2 * np.sin(r), lambda r: 2 * (r - 1) * np.sin(r) + (r - 1) ** 2 * np.cos(r)),
    (lambda r: (r - 1) ** 2 * np.exp(-r), lambda r: (2 * (r - 1) - (r - 1) ** 2) * np.exp(-r)),
    (lambda r: (r - 1) ** 3, lambda r: 3 * (r - 1) ** 2),
]


def test_dimensions_and_traces(annulus, plate):
    space = build_mode_space(annulus, plate, 1, 1)
    assert space.ndof == 2
    assert space.elements == 1
    assert space.trace_value.tolist() == [1.0, 0.0]
    assert space.trace_slope.tolist() == [0.0, 1.0]

    space = build_mode_space(annulus, plate, 0, 8)
    assert space.M.shape == (16, 16)
    assert space.trace_value[14] == 1.0
    assert space.trace_slope[15] == pytest.approx(8.0)
    assert space.slope_scale == pytest.approx(0.125)
    assert space.boundary_measure == pytest.approx(4.0 * np.pi)


def test_invalid_arguments(annulus, plate):
    with pytest.raises(ValueError):
        build_mode_space(annulus, plate, 0, 0)
    with pytest.raises(ValueError):
        build_mode_space(annulus, plate, -1, 4)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_matrices_symmetric_positive_definite(spaces, n):
    space = spaces[n]
    for A in (space.M, space.K):
        assert np.array_equal(A, A.T)
        assert np.linalg.eigvalsh(A).min() > 0.0
        assert not A.flags.writeable


@pytest.mark.parametrize("n", [0, 1, 2, 3])
@pytest.mark.parametrize("profile", range(len(SMOOTH_PROFILES)))
def test_stiffness_matches_cartesian_quadrature(annulus, plate, n, profile):
    """uᵀKu 與二維笛卡兒求積的 a(u, u) 相符"""
    space = build_mode_space(annulus, plate, n, 32)
    f, df = SMOOTH_PROFILES[profile]
    dofs = interpolate_profile(space, f, df)
    discrete = float(dofs @ space.K @ dofs)

    field = PolarModeField(space.profile(dofs), n)
    oracle = a_form_quadrature(field, field, plate, annulus, order=8, n_theta=64, breaks=space.nodes)
    assert abs(oracle.imag) <= 1e-12 * abs(oracle)
    assert discrete == pytest.approx(oracle.real, rel=1e-8)


def test_mass_matches_l2_norm(spaces):
    space = spaces[2]
    f, df = SMOOTH_PROFILES[2]
    dofs = interpolate_profile(space, f, df)
    norm = l2_error(space, dofs, lambda r: np.zeros_like(r))
    assert dofs @ space.M @ dofs == pytest.approx(norm**2, rel=1e-12)


def test_cubic_profile_reproduced_exactly(spaces, rng):
    space = spaces[0]
    f = lambda r: (r - 1) ** 2 * (r + 1)
    df = lambda r: 2 * (r - 1) * (r + 1) + (r - 1) ** 2
    dofs = interpolate_profile(space, f, df)
    r = rng.uniform(1.0, 2.0, 50)
    u, du, _ = space.evaluate_profile(dofs, r)
    assert np.allclose(u, f(r), rtol=0.0, atol=1e-12)
    assert np.allclose(du, df(r), rtol=0.0, atol=1e-11)


def test_interpolation_converges_fourth_order(annulus, plate):
    f = lambda r: r**4 - 1 - 4 * (r - 1)
    df = lambda r: 4 * r**3 - 4
    errors = []
    for elements in (4, 8, 16):
        space = build_mode_space(annulus, plate, 1, elements)
        errors.append(l2_error(space, interpolate_profile(space, f, df), f))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((rates > 3.7) & (rates < 4.3))


def test_interpolation_requires_clamped_profile(spaces):
    with pytest.raises(ValueError):
        interpolate_profile(spaces[0], lambda r: r, lambda r: np.ones_like(r))


def test_reconstruct_zero_field(spaces):
    space = spaces[3]
    jet = reconstruct_field(space, np.zeros(space.ndof), np.array([1.2, 1.9]), np.array([0.1, 2.0]))
    assert np.all(jet.value == 0.0)
    assert all(np.all(d == 0.0) for d in jet.d2)


def test_evaluate_profile_validation(spaces):
    space = spaces[0]
    with pytest.raises(ValueError):
        space.evaluate_profile(np.zeros(space.ndof), np.array([0.5]))
    with pytest.raises(ValueError):
        space.evaluate_profile(np.zeros(space.ndof + 1), np.array([1.5]))


def test_build_mode_spaces_keeps_order(annulus, plate):
    spaces = build_mode_spaces(annulus, plate, [3, 0, 2], 4, ComputeManager(threads=3))
    assert [s.n for s in spaces] == [3, 0, 2]
    reference = build_mode_space(annulus, plate, 2, 4)
    assert np.array_equal(spaces[2].K, reference.K)


@pytest.mark.parametrize("elements", [8, 128])
def test_mass_diagonal_independent_of_mesh_size(annulus, plate, elements):
    """值與斜率自由度的質量對角元同階，細網格下不退化"""
    space = build_mode_space(annulus, plate, 0, elements)
    diag = np.diag(space.M)
    assert diag.max() / diag.min() < 400.0


def test_lowest_eigenpairs_match_dense_solver(spaces):
    space = spaces[2]
    values, vectors = lowest_eigenpairs(space.K, space.M, 5)
    reference = sla.eigh(space.K, space.M, eigvals_only=True)[:5]
    assert values == pytest.approx(reference, rel=1e-10)
    assert np.all(np.diff(values) > 0.0)
    assert vectors.T @ space.M @ vectors == pytest.approx(np.eye(5), abs=1e-10)
    residual = space.K @ vectors - (space.M @ vectors) * values
    assert np.abs(residual).max() < 1e-8 * np.abs(space.K).max()


def test_lowest_eigenpairs_sign_is_deterministic(spaces):
    _, vectors = lowest_eigenpairs(spaces[0].K, spaces[0].M, 3)
    pivots = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(3)]
    assert np.all(pivots > 0.0)


@pytest.mark.parametrize("count", [0, 17])
def test_lowest_eigenpairs_rejects_bad_count(spaces, count):
    with pytest.raises(ValueError):
        lowest_eigenpairs(spaces[0].K, spaces[0].M, count)
