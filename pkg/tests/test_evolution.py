"""
時間積分、能量與耗散稽核測試
"""

import gc
import weakref

import numpy as np
import pytest

from src.dynamics.assembly import SystemKind, build_generator
from src.dynamics.callbacks import SimulationCallbacks
from src.dynamics.evolution import (
    IncommensurateDelays,
    MidpointStepper,
    SystemState,
    ansatz_state,
    commensurate_grid,
    dissipation_audit,
    energy_breakdown,
    random_state,
    reverse_velocity,
    simulate,
    smooth_state,
    step,
    stepper_for,
    time_grid,
)
from src.plate.femrad import build_mode_space
from src.utils.errors import NumericalError


def test_commensurate_grid_for_default_delays():
    n1, n2, dt = commensurate_grid(0.7, 1.1, 64, 4096)
    assert (n1, n2) == (70, 110)
    assert dt == pytest.approx(0.01, rel=1e-14)


def test_commensurate_grid_failures():
    with pytest.raises(IncommensurateDelays):
        commensurate_grid(1.0, np.sqrt(2.0), 64, 4096)
    with pytest.raises(NumericalError):
        commensurate_grid(0.7, 1.1, 64, 100)
    with pytest.raises(ValueError):
        commensurate_grid(0.7, 1.1, 1, 4096)


def test_time_grid_falls_back_to_interpolation():
    n1, n2, dt, exact = time_grid(1.0, np.sqrt(2.0), 64, 4096)
    assert not exact
    assert (n1, n2) == (64, 64)
    assert dt == pytest.approx(1.0 / 64)
    assert time_grid(0.7, 1.1, 64, 4096)[3]


def test_exact_shift_moves_line_by_one_cell(spaces, h_params):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 7, 11)
    stepper = MidpointStepper(gen, 0.1)
    assert stepper.exact == (True, True)

    state = SystemState.zeros(gen)
    state.lines[0].values[:] = np.arange(8.0)
    new, in_half = stepper.advance(state)
    assert np.array_equal(new.lines[0].values[1:], np.arange(7.0))
    assert new.lines[0].values[0] == pytest.approx(gen.inflow(new.y)[0])
    assert in_half[0] == pytest.approx(0.5 * new.lines[0].values[0])
    assert new.time == pytest.approx(0.1)


def test_interpolation_mode_requires_small_dt(spaces, h_params):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 64, 64)
    with pytest.raises(ValueError):
        MidpointStepper(gen, 1.0)
    with pytest.raises(ValueError):
        MidpointStepper(gen, 0.0)


def test_step_uses_cached_stepper(spaces, h_params, rng):
    gen = build_generator(SystemKind.SYSTEM1, spaces[1], h_params, 7, 11)
    state = random_state(gen, rng)
    direct, _ = MidpointStepper(gen, 0.1).advance(state)
    cached = step(state, gen, 0.1)
    assert np.array_equal(direct.y, cached.y)
    assert list(gen.steppers) == [0.1]
    assert stepper_for(gen, 0.1) is gen.steppers[0.1]


def test_stepper_cache_released_with_generator(spaces, h_params, rng):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 7, 11)
    simulate(gen, random_state(gen, rng), 0.1, 0.5)
    ref = weakref.ref(gen)
    del gen
    gc.collect()
    assert ref() is None


@pytest.mark.parametrize("kind", [SystemKind.SYSTEM1, SystemKind.SYSTEM2])
def test_energy_breakdown_matches_gram(spaces, h_params, rng, kind):
    gen = build_generator(kind, spaces[2], h_params, 6, 9)
    state = random_state(gen, rng)
    breakdown = energy_breakdown(gen, state)
    assert breakdown.total == pytest.approx(gen.energy(state.to_vector(gen)), rel=1e-12)
    if kind is SystemKind.SYSTEM2:
        assert breakdown.boundary_eta == 0.0 and breakdown.boundary_xi == 0.0


@pytest.mark.parametrize("kind", [SystemKind.SYSTEM1, SystemKind.SYSTEM2])
@pytest.mark.parametrize("seed", range(5))
def test_dissipation_under_hypothesis(spaces, h_params, kind, seed):
    """(H) 下每一步 ΔE ≤ 耗散界 + 1e−8·E(0)"""
    n1, n2, dt = commensurate_grid(h_params.tau1, h_params.tau2, 8, 4096)
    gen = build_generator(kind, spaces[seed % 4], h_params, n1, n2)
    trajectory = simulate(gen, random_state(gen, np.random.default_rng(seed)), dt, 20.0)
    ledger = dissipation_audit(trajectory, gen)
    assert ledger.n_flags == 0
    assert np.all(ledger.bound <= 0.0)
    totals = trajectory.totals
    assert totals[-1] < totals[0]


def test_conservative_limit(annulus, plate, conservative_params):
    """所有回饋係數為 0：中點法逐步守恆能量"""
    space = build_mode_space(annulus, plate, 0, 4)
    gen = build_generator(SystemKind.SYSTEM2, space, conservative_params, 70, 110)
    assert gen.line_weights == (0.0, 0.0)
    trajectory = simulate(gen, smooth_state(gen, 4), 0.01, 100.0)
    totals = trajectory.totals
    assert len(totals) == 10001
    assert np.abs(np.diff(totals)).max() <= 1e-12 * totals[0]


def test_time_reversal(spaces, conservative_params, rng):
    gen = build_generator(SystemKind.SYSTEM2, spaces[1], conservative_params, 70, 110)
    stepper = MidpointStepper(gen, 0.01)
    state = random_state(gen, rng)
    forward, _ = stepper.advance(state)
    back, _ = stepper.advance(reverse_velocity(gen, forward))
    back = reverse_velocity(gen, back)
    assert np.allclose(back.y, state.y, rtol=0.0, atol=1e-10 * np.abs(state.y).max())


def test_interpolation_mode_only_dissipates(spaces, h_params, rng):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 64, 64)
    trajectory = simulate(gen, random_state(gen, rng), 0.013, 3.9)
    totals = trajectory.totals
    assert totals[-1] <= totals[0]
    assert totals.max() <= 1.001 * totals[0]


def test_zero_state_stays_zero(spaces, h_params):
    gen = build_generator(SystemKind.SYSTEM1, spaces[0], h_params, 7, 11)
    trajectory = simulate(gen, SystemState.zeros(gen), 0.1, 1.0)
    assert np.all(trajectory.totals == 0.0)
    assert dissipation_audit(trajectory, gen).n_flags == 0


def test_checkpoints_and_callbacks(spaces, h_params, rng):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 14, 22)
    callbacks = SimulationCallbacks()
    steps = []
    callbacks.add_callback("on_step_end", lambda step, **_: steps.append(step))
    trajectory = simulate(gen, random_state(gen, rng), 0.05, 1.25, checkpoint_every=10, callbacks=callbacks)

    assert sorted(trajectory.checkpoints) == [0, 10, 20, 25]
    assert steps == list(range(1, 26))
    assert trajectory.final_state.time == pytest.approx(1.25)
    summary = callbacks.get_energy_summary()
    assert summary["steps"] == 25
    assert summary["final"] == pytest.approx(trajectory.totals[-1])
    assert summary["wall_time"] is not None


def test_trajectory_frame_columns(spaces, h_params, rng):
    for kind, has_controls in ((SystemKind.SYSTEM1, True), (SystemKind.SYSTEM2, False)):
        gen = build_generator(kind, spaces[0], h_params, 7, 11)
        frame = simulate(gen, random_state(gen, rng), 0.1, 0.5).to_frame()
        assert ("E_eta" in frame.columns) == has_controls
        assert list(frame.columns[:2]) == ["time", "E_total"]
        assert len(frame) == 6


def test_ansatz_state(spaces, h_params):
    gen1 = build_generator(SystemKind.SYSTEM1, spaces[0], h_params, 7, 11)
    with pytest.raises(ValueError):
        ansatz_state(gen1, 1.0, np.ones(spaces[0].ndof))
    gen2 = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 7, 11)
    state = ansatz_state(gen2, 2.0, np.ones(spaces[0].ndof))
    line = state.lines[0]
    assert line.values[0] == pytest.approx(gen2.inflow(state.y)[0])
    assert abs(line.values[-1]) == pytest.approx(abs(line.values[0]))


def test_simulate_validates_arguments(spaces, h_params):
    gen = build_generator(SystemKind.SYSTEM2, spaces[0], h_params, 7, 11)
    with pytest.raises(ValueError):
        simulate(gen, SystemState.zeros(gen), 0.1, 0.0)
    with pytest.raises(ValueError):
        simulate(gen, SystemState.zeros(gen), 0.1, 1.0, checkpoint_every=-1)
