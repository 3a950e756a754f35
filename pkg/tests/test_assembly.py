"""
離散生成元組裝測試
"""

import numpy as np
import pytest

from src.dynamics.assembly import (
    FeedbackParams,
    SystemKind,
    build_generator,
    validate_params,
)
from src.plate.femrad import build_mode_space


def _params(b1, b2, g1, g2, t1=0.7, t2=1.1):
    return FeedbackParams(b1, b2, g1, g2, t1, t2)


def test_hypothesis_classification():
    assert validate_params(_params(2, 1, 3, -2)).h_satisfied
    report = validate_params(_params(1, 1, 1, -1))
    assert report.is1 and not report.h_satisfied and not report.is2
    report = validate_params(_params(1, 2, 1, 1))
    assert report.is2 and not report.is1 and not report.h_satisfied
    # 一條滿足、一條違反：三者皆否
    report = validate_params(_params(2, 1, 1, 3))
    assert not (report.h_satisfied or report.is1 or report.is2)


def test_hypothesis_tolerance():
    p = _params(1.0, 1.0 + 1e-10, 1.0, 1.0)
    assert not validate_params(p).is1
    assert validate_params(p, tolerance=1e-8).is1


@pytest.mark.parametrize("name", ["beta1", "gamma1", "tau1", "tau2"])
def test_nonpositive_parameters_rejected(h_params, name):
    values = {k: getattr(h_params, k) for k in ("beta1", "beta2", "gamma1", "gamma2", "tau1", "tau2")}
    values[name] = 0.0
    with pytest.raises(ValueError):
        validate_params(FeedbackParams(**values))


def test_nonfinite_parameters_rejected():
    with pytest.raises(ValueError):
        _params(np.nan, 1, 1, 1)


def test_system_kind_parse():
    assert SystemKind.parse(1) is SystemKind.SYSTEM1
    assert SystemKind.parse("2") is SystemKind.SYSTEM2
    with pytest.raises(ValueError):
        SystemKind.parse(3)


def test_state_dimensions(spaces, h_params):
    space = spaces[0]
    gen1 = build_generator(SystemKind.SYSTEM1, space, h_params, 2, 2)
    gen2 = build_generator(SystemKind.SYSTEM2, space, h_params, 2, 3)
    nd = space.ndof
    assert gen1.state_dim == 2 * nd + 2 + 3 + 3
    assert gen2.state_dim == 2 * nd + 3 + 4
    assert gen1.layout["z1"].start == 2 * nd + 2
    assert gen2.layout["z2"].stop == gen2.state_dim


def test_delay_cells_validated(spaces, h_params):
    with pytest.raises(ValueError):
        build_generator(1, spaces[0], h_params, 1, 4)
    with pytest.raises(ValueError):
        build_generator(1, spaces[0], h_params, 4, 2.5)


@pytest.mark.parametrize("kind", [SystemKind.SYSTEM1, SystemKind.SYSTEM2])
def test_zero_state_is_equilibrium(spaces, h_params, kind):
    gen = build_generator(kind, spaces[1], h_params, 4, 4)
    assert np.all(gen.apply(np.zeros(gen.state_dim)) == 0.0)


def test_constant_line_drives_boundary_controls(spaces, h_params):
    """z¹ ≡ c 且其餘為 0：η̇ = −β₂c，迎風格點不變"""
    gen = build_generator(SystemKind.SYSTEM1, spaces[0], h_params, 4, 4)
    U = np.zeros(gen.state_dim)
    U[gen.layout["z1"]] = 0.5
    dU = gen.apply(U)
    assert dU[gen.layout["eta"]][0] == pytest.approx(-h_params.beta2 * 0.5)
    assert dU[gen.layout["xi"]][0] == 0.0
    z1 = gen.layout["z1"]
    assert np.allclose(dU[z1.start + 1 : z1.stop], 0.0)
    # 入流槽：η̇ 加上朝 in = η = 0 的鬆弛
    kappa = gen.cells[0] / h_params.tau1
    assert dU[z1.start] == pytest.approx(-h_params.beta2 * 0.5 - kappa * 0.5, rel=1e-12)


def test_pack_unpack(spaces, h_params, rng):
    gen = build_generator(SystemKind.SYSTEM2, spaces[2], h_params, 5, 7)
    U = rng.standard_normal(gen.state_dim)
    y, lines = gen.unpack(U)
    assert np.array_equal(gen.pack(y, lines), U)
    assert lines[0].cells == 5 and lines[1].cells == 7
    with pytest.raises(ValueError):
        gen.unpack(U[:-1])


def test_energy_gram_is_positive_semidefinite(spaces, h_params):
    gen = build_generator(SystemKind.SYSTEM1, spaces[1], h_params, 6, 6)
    H = gen.energy_gram
    assert np.allclose(H, H.T)
    assert np.linalg.eigvalsh(H).min() > -1e-12 * np.abs(H).max()


def test_zero_delay_coefficient_detaches_line(spaces):
    p = _params(2.0, 0.0, 3.0, -2.0)
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], p, 4, 4)
    assert gen.line_weights[0] == 0.0
    z1 = gen.layout["z1"]
    assert not np.any(np.isin(np.arange(z1.start, z1.stop), gen.active))
    assert len(gen.active) == gen.state_dim - (gen.cells[0] + 1)


@pytest.mark.parametrize("kind", [SystemKind.SYSTEM1, SystemKind.SYSTEM2])
def test_balanced_matrix_is_similar(annulus, plate, h_params, kind):
    space = build_mode_space(annulus, plate, 1, 2)
    gen = build_generator(kind, space, h_params, 4, 4)
    explicit = np.linalg.eigvals(gen.explicit_matrix)
    balanced = np.linalg.eigvals(gen.balanced_matrix())
    assert len(explicit) == len(balanced)
    scale = np.abs(explicit).max()
    distance = np.abs(explicit[:, None] - balanced[None, :]).min(axis=1)
    assert distance.max() <= 1e-8 * scale
