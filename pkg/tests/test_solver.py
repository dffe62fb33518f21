import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from shelab.fields import GridFunction, TorusGrid, norm_l1, osc_log
from shelab.noise import NoiseStream
from shelab.solver import (
    ConfigurationError,
    PathFailure,
    RenormSchedule,
    SigmaSpec,
    SimulationConfig,
    SolverState,
    _advance,
    _sigma_eval,
    coupled_pair,
    default_dt,
    epoch_times,
    renormalize,
    rescale_sigma,
    run_path,
    step,
    subadditivity_check,
)
from shelab.torus_kernel import semigroup_apply

PIECEWISE = SigmaSpec.piecewise_linear([1.0], [1.0, 0.5])


def ones(grid, c=1.0):
    return GridFunction(grid, np.full(grid.n_points, c))


# --------------------------------------------------------------------------- sigma


def test_sigma_kinds():
    z = np.linspace(-3, 3, 13)
    assert np.all(SigmaSpec.zero()(z) == 0)
    assert np.allclose(SigmaSpec.linear(2.5)(z), 2.5 * z)
    assert PIECEWISE(0.0) == 0.0
    assert PIECEWISE(1.0) == pytest.approx(1.0)
    assert PIECEWISE(3.0) == pytest.approx(2.0)
    assert PIECEWISE(-2.0) == pytest.approx(-2.0)
    assert PIECEWISE.lipschitz_constant == 1.0


@pytest.mark.parametrize("args", [("linear", 0.0), ("linear", -1.0), ("bogus", 1.0)])
def test_sigma_validation(args):
    with pytest.raises(ValueError):
        SigmaSpec(args[0], q=args[1])
    with pytest.raises(ValueError):
        SigmaSpec.piecewise_linear([1.0, 0.5], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        SigmaSpec.piecewise_linear([1.0], [1.0])


knots_strategy = st.lists(st.floats(-5, 5), min_size=1, max_size=4, unique=True).map(sorted)


@settings(max_examples=100, deadline=None)
@given(knots_strategy, st.data())
def test_piecewise_lipschitz_and_origin(knots, data):
    knots = [k for i, k in enumerate(knots) if i == 0 or k - knots[i - 1] > 1e-3]
    slopes = data.draw(st.lists(st.floats(-3, 3), min_size=len(knots) + 1, max_size=len(knots) + 1))
    sigma = SigmaSpec.piecewise_linear(knots, slopes)
    assert abs(sigma(0.0)) <= 1e-12
    z = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=2, max_size=20)))
    s = sigma(z)
    lip = sigma.lipschitz_constant
    diff = np.abs(s[:, None] - s[None, :])
    assert np.all(diff <= lip * np.abs(z[:, None] - z[None, :]) + 1e-9)
    knots_a, vals, sl = sigma.kernel_arrays()
    for w in z:
        assert _sigma_eval(w, 2, 0.0, knots_a, vals, sl) == pytest.approx(float(sigma(w)), abs=1e-12)


def test_rescale_sigma_examples():
    lin = SigmaSpec.linear(1.3)
    assert rescale_sigma(lin, 7.0) == lin
    assert rescale_sigma(SigmaSpec.zero(), 3.0) == SigmaSpec.zero()
    moved = rescale_sigma(PIECEWISE, 2.0)
    assert moved.knots == (0.5,)
    assert moved.slopes == PIECEWISE.slopes
    assert moved.lipschitz_constant == PIECEWISE.lipschitz_constant
    w = np.linspace(-2, 2, 41)
    assert np.allclose(moved(w), PIECEWISE(2.0 * w) / 2.0, atol=1e-14)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            rescale_sigma(PIECEWISE, bad)


# --------------------------------------------------------------------------- schedule


def test_epoch_arithmetic():
    t = epoch_times(5.0, 10.0)
    assert t[:2] == [1.0, 2.0]
    assert t[2] == pytest.approx(2 + math.log(2) ** -5)
    assert abs(t[2] - 8.2499) < 1e-4


def test_schedule_validation():
    with pytest.raises(ValueError):
        RenormSchedule(alpha=6.0, beta=3.0)
    with pytest.raises(ValueError):
        RenormSchedule(alpha=5.0, beta=3.5)
    RenormSchedule(alpha=5.7, beta=3.5)


def test_schedule_snapping_and_dense_tail():
    sched = RenormSchedule(alpha=6.0, beta=3.5)
    dt = 1e-3
    steps, dense = sched.snapped(50.0, dt)
    raw = sched.raw_epochs(50.0, dt)
    assert np.all(np.diff(steps) > 0)
    assert steps[0] == 1000 and steps[1] == 2000
    assert np.all(np.abs(steps * dt - np.asarray(raw)[: len(steps)]) <= dt / 2 + 1e-12)
    # gaps shrink below dt before t = 50
    assert dense is not None and dense * dt == pytest.approx(raw[-1], abs=dt)
    assert RenormSchedule(enabled=False).snapped(50.0, dt)[0].size == 0


def test_default_dt():
    g = TorusGrid(64)
    assert default_dt(g, SigmaSpec.zero()) == g.spacing**2 / 4
    assert default_dt(g, SigmaSpec.linear(1.0)) == g.spacing**2 / 4
    assert default_dt(g, SigmaSpec.linear(8.0)) == pytest.approx(g.spacing / 640)


# --------------------------------------------------------------------------- step


def test_heat_reduction():
    g = TorusGrid(256)
    x = g.points
    dt = 1e-4
    state = SolverState.initial(GridFunction(g, 2 + np.cos(np.pi * x)))
    stream = NoiseStream(1, 0, g, dt)
    state = _advance(state, SigmaSpec.zero(), stream, 10_000, renormalize_band=False)
    assert state.time == pytest.approx(1.0)
    expected = 2 + math.exp(-np.pi**2) * np.cos(np.pi * x)
    assert np.max(np.abs(state.reconstruct().values - expected)) <= 1e-3


def test_mass_conserved_per_step():
    g = TorusGrid(64)
    rng = np.random.default_rng(0)
    state = SolverState.initial(GridFunction(g, 0.5 + rng.random(64)))
    stream = NoiseStream(1, 0, g, 1e-3)
    for _ in range(50):
        before = norm_l1(state.field)
        state = step(state, SigmaSpec.zero(), stream)
        assert abs(norm_l1(state.field) - before) <= 1e-10 * before


@pytest.mark.parametrize("scheme", ["semi_implicit_em", "split_step_geometric"])
def test_linear_scaling(scheme):
    g = TorusGrid(32)
    dt = default_dt(g, SigmaSpec.linear(1.0))
    stream = NoiseStream(11, 3, g, dt)
    u0 = GridFunction(g, 1 + 0.5 * np.cos(np.pi * g.points))
    sig = SigmaSpec.linear(1.0)
    a = _advance(SolverState.initial(u0, scheme), sig, stream, 3000)
    for kappa in (2.0, 0.25, 5.0, 0.3):
        b = _advance(SolverState.initial(kappa * u0, scheme), sig, stream, 3000)
        ua, ub = a.reconstruct().values, b.reconstruct().values
        assert np.max(np.abs(ub / (kappa * ua) - 1)) <= 1e-12
        assert np.argmax(a.field.values) == np.argmax(b.field.values)
        # the two runs renormalise at different steps, so agreement is up to rounding
        assert abs(osc_log(a.field) - osc_log(b.field)) <= 1e-12


def test_scheme_mismatch():
    g = TorusGrid(16)
    state = SolverState.initial(ones(g), "split_step_geometric")
    with pytest.raises(ConfigurationError):
        step(state, PIECEWISE, NoiseStream(1, 0, g, 1e-3))
    with pytest.raises(ConfigurationError):
        SolverState.initial(ones(g), "rk4")


def test_initial_must_be_positive():
    g = TorusGrid(16)
    v = np.ones(16)
    v[3] = 0
    with pytest.raises(ValueError):
        SolverState.initial(GridFunction(g, v))


def test_geometric_scheme_positive_without_clamps():
    g = TorusGrid(32)
    dt = 4 * g.spacing**2  # well above the default policy
    cfg = SimulationConfig(g, dt, 20.0, ones(g), "split_step_geometric", sample_times=(5.0, 10.0))
    path = run_path(cfg, SigmaSpec.linear(2.0), NoiseStream(3, 0, g, dt), RenormSchedule())
    assert path.ok
    assert path["clamp_count"][-1] == 0
    assert np.all(np.isfinite(path["log_inf"]))


def test_path_failure_on_nonfinite():
    g = TorusGrid(16)
    state = SolverState.initial(ones(g))
    huge = SigmaSpec.linear(1e200)
    with pytest.raises(PathFailure):
        _advance(state, huge, NoiseStream(1, 0, g, 1e-3), 5, renormalize_band=False)
    cfg = SimulationConfig(g, 1e-3, 0.01, ones(g))
    path = run_path(cfg, huge, NoiseStream(1, 0, g, 1e-3))
    assert not path.ok and "step" in path.failure


# --------------------------------------------------------------------------- renormalize


def test_renormalize_examples():
    g = TorusGrid(16)
    state = SolverState.initial(ones(g, 2.0))  # L1 = 4
    r1 = renormalize(state)
    assert norm_l1(r1.field) == pytest.approx(1.0, abs=1e-15)
    assert r1.log_mass == pytest.approx(math.log(4.0), abs=1e-15)
    r2 = renormalize(r1)
    assert abs(r2.log_mass - r1.log_mass) <= 1e-15
    rng = np.random.default_rng(4)
    s = SolverState.initial(GridFunction(g, 0.1 + rng.random(16)))
    r = renormalize(s)
    assert r.log_mass + math.log(r.field.values.max()) == pytest.approx(math.log(s.field.values.max()), abs=1e-14)


def test_renormalize_rejects_zero_mass():
    g = TorusGrid(8)
    state = replace(SolverState.initial(ones(g)), field=GridFunction(g, np.zeros(8)))
    with pytest.raises(PathFailure):
        renormalize(state)


@pytest.mark.parametrize("sigma", [SigmaSpec.linear(1.0), PIECEWISE])
def test_renormalisation_matches_direct_run(sigma):
    g = TorusGrid(32)
    dt = default_dt(g, sigma)
    u0 = GridFunction(g, 1 + 0.5 * np.sin(np.pi * g.points))
    times = tuple(np.linspace(0, 5, 11))
    stream = NoiseStream(21, 0, g, dt)
    renorm = run_path(SimulationConfig(g, dt, 5.0, u0, sample_times=times), sigma, stream,
                      RenormSchedule(alpha=6.0, beta=3.5))
    direct = run_path(SimulationConfig(g, dt, 5.0, u0, sample_times=times, renormalize=False),
                      sigma, stream)
    assert renorm.ok and direct.ok
    assert np.max(np.abs(renorm.log_sup_u - direct.log_sup_u)) <= 1e-10
    assert np.max(np.abs(renorm.log_l1_u - direct.log_l1_u)) <= 1e-10
    assert np.max(np.abs(renorm["osc"] - direct["osc"])) <= 1e-10


# --------------------------------------------------------------------------- run_path


def test_run_path_zero_sigma_constant():
    g = TorusGrid(16)
    dt = default_dt(g, SigmaSpec.zero())
    cfg = SimulationConfig(g, dt, 3.0, ones(g), sample_times=tuple(np.linspace(0, 3, 7)))
    path = run_path(cfg, SigmaSpec.zero(), NoiseStream(1, 0, g, dt), RenormSchedule())
    assert path.ok
    assert np.max(np.abs(path.log_sup_u)) <= 1e-12
    assert np.max(path["osc"]) <= 1e-12


def test_run_path_samples_and_decay():
    g = TorusGrid(32)
    dt = g.spacing**2
    cfg = SimulationConfig(g, dt, 60.0, ones(g), sample_times=tuple(np.arange(0, 61, 1.0)))
    slopes = []
    for pid in range(4):
        path = run_path(cfg, SigmaSpec.linear(1.0), NoiseStream(8, pid, g, dt), RenormSchedule())
        assert path.ok
        assert path["time"][0] == 0 and path["time"][-1] == pytest.approx(60.0)
        t = path["time"]
        slopes.append(np.polyfit(t[t >= 30], path.log_sup_u[t >= 30], 1)[0])
    assert np.mean(slopes) < 0


def test_run_path_observer_adds_columns():
    g = TorusGrid(16)
    cfg = SimulationConfig(g, 1e-3, 0.01, ones(g), sample_times=(0.005,))
    path = run_path(cfg, SigmaSpec.linear(1.0), NoiseStream(1, 0, g, 1e-3),
                    observer=lambda s: {"steps": s.steps})
    assert list(path["steps"]) == [0, 5, 10]


def test_run_path_rejects_dt_mismatch():
    g = TorusGrid(16)
    cfg = SimulationConfig(g, 1e-3, 0.01, ones(g))
    with pytest.raises(ConfigurationError):
        run_path(cfg, SigmaSpec.zero(), NoiseStream(1, 0, g, 2e-3))


def test_ensemble_mean_follows_heat_semigroup():
    g = TorusGrid(32)
    x = g.points
    dt = default_dt(g, SigmaSpec.linear(1.0))
    u0 = GridFunction(g, 2 + np.cos(np.pi * x))
    nsteps = 205
    finals = []
    for pid in range(400):
        s = _advance(SolverState.initial(u0), SigmaSpec.linear(1.0), NoiseStream(5, pid, g, dt), nsteps)
        finals.append(s.reconstruct().values)
    finals = np.array(finals)
    expected = semigroup_apply(nsteps * dt, u0).values
    for mode in (np.ones(32), np.cos(np.pi * x)):
        proj = finals @ mode * g.spacing
        target = expected @ mode * g.spacing
        se = proj.std(ddof=1) / math.sqrt(len(proj))
        assert abs(proj.mean() - target) <= 3 * se


def test_shift_stationarity():
    g = TorusGrid(16)
    dt = default_dt(g, SigmaSpec.linear(1.0))
    cfg = SimulationConfig(g, dt, 1.0, ones(g))
    base, moved = [], []
    for pid in range(200):
        a = run_path(cfg, SigmaSpec.linear(1.0), NoiseStream(12, pid, g, dt))
        b = run_path(cfg, SigmaSpec.linear(1.0), NoiseStream(12, 200 + pid, g, dt).shifted(5000))
        base.append(a.log_sup_u[-1])
        moved.append(b.log_sup_u[-1])
    assert ks_2samp(base, moved).pvalue > 0.01


# --------------------------------------------------------------------------- pathwise checks


def test_coupled_pair_examples():
    g = TorusGrid(32)
    dt = default_dt(g, PIECEWISE)
    cfg = SimulationConfig(g, dt, 2.0, ones(g), sample_times=tuple(np.linspace(0, 2, 9)))
    stream = NoiseStream(2, 0, g, dt)
    same = coupled_pair(cfg, PIECEWISE, stream, ones(g), ones(g))
    assert same.max_violation == 0.0 and same.passed
    lin = coupled_pair(cfg, SigmaSpec.linear(1.0), stream, ones(g), ones(g, 2.0))
    assert lin.passed and np.all(lin.violations < 0)
    high = GridFunction(g, 1 + np.cos(np.pi * g.points) ** 2)
    rep = coupled_pair(cfg, PIECEWISE, stream, ones(g), high)
    assert rep.passed and rep.max_violation <= 1e-8


def test_coupled_pair_exact_halving():
    g = TorusGrid(32)
    dt = default_dt(g, SigmaSpec.linear(1.0))
    stream = NoiseStream(6, 1, g, dt)
    a = _advance(SolverState.initial(ones(g)), SigmaSpec.linear(1.0), stream, 500)
    b = _advance(SolverState.initial(ones(g, 2.0)), SigmaSpec.linear(1.0), stream, 500)
    assert np.max(np.abs(a.reconstruct().values / b.reconstruct().values - 0.5)) <= 1e-13


def test_coupled_pair_preconditions():
    g = TorusGrid(16)
    cfg = SimulationConfig(g, 1e-3, 0.01, ones(g))
    stream = NoiseStream(1, 0, g, 1e-3)
    with pytest.raises(ValueError):
        coupled_pair(cfg, PIECEWISE, stream, ones(g, 2.0), ones(g))
    bad = np.ones(16)
    bad[0] = 0
    with pytest.raises(ValueError):
        coupled_pair(cfg, PIECEWISE, stream, GridFunction(g, bad), ones(g))


def test_subadditivity_examples():
    g = TorusGrid(32)
    dt = 1 / 1024
    cfg = SimulationConfig(g, dt, 2.0, ones(g))
    stream = NoiseStream(17, 0, g, dt)
    zero = subadditivity_check(cfg, SigmaSpec.zero(), stream, 1.0, 1.0)
    assert zero.passed and abs(zero.log_s_total) <= 1e-12 and abs(zero.log_s_shifted) <= 1e-12
    s0 = subadditivity_check(cfg, SigmaSpec.linear(1.0), stream, 0.0, 1.0)
    assert s0.passed and s0.log_s_first == 0.0
    assert s0.log_s_shifted == pytest.approx(s0.log_s_total, abs=1e-12)
    for pid in range(5):
        rep = subadditivity_check(cfg, SigmaSpec.linear(1.0), NoiseStream(17, pid, g, dt), 1.0, 1.0)
        assert rep.passed and rep.margin >= 0
    with pytest.raises(ConfigurationError):
        subadditivity_check(cfg, SigmaSpec.linear(1.0), stream, 1.0003, 1.0)
