"""Ledger bookkeeping, convergence detection, and decay fitting."""

import numpy as np
import pytest

from pfsim import (DecayFitError, Grid, Ledger, LedgerError, State,
                   StepperConfig, StepResult, convergence_detector, decay_fit,
                   make_default_model, record, run, spatial_spread)
from pfsim.diagnostics import LEDGER_COLUMNS


def constant_state(grid, c=0.4, d=1.1):
    return State(np.full(grid.n_cells, c), np.full(grid.n_cells, d), grid)


def spinodal_state(grid, rng, amp=0.05):
    noise = rng.uniform(-1.0, 1.0, grid.n_cells)
    noise -= noise.mean()
    return State(amp * noise, np.ones(grid.n_cells), grid)


def test_initial_row_has_zero_dissipation_and_residual():
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    led = Ledger()
    led.record_initial(constant_state(g), m)
    assert len(led) == 1
    assert led.column("dissipation")[0] == 0.0
    assert led.column("identity_residual")[0] == 0.0
    assert led.column("t")[0] == 0.0


def test_constant_run_rows_identical_except_time():
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    summary = run(constant_state(g), 0.01, StepperConfig(dt=1e-3), m)
    led = summary.ledger
    for name in LEDGER_COLUMNS:
        col = led.column(name)
        if name == "t":
            assert np.ptp(col) > 0
        elif name == "newton_iters":
            continue
        else:
            assert np.ptp(col) == 0.0, name
    assert np.abs(led.column("identity_residual")).max() == 0.0


def test_record_rejects_non_monotone_time():
    g = Grid.interval(8, 1.0)
    m = make_default_model()
    led = Ledger()
    led.record_initial(constant_state(g), m)
    result = StepResult(constant_state(g), t=0.0, newton_iters=0,
                        residual_norm=0.0, dissipation_increment=0.0)
    with pytest.raises(LedgerError):
        record(led, result, m)


def test_spinodal_dissipation_strictly_increasing():
    g = Grid.interval(48, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    s = spinodal_state(g, np.random.default_rng(3))
    summary = run(s, 0.05, StepperConfig(dt=1e-3), m)
    d = summary.ledger.column("dissipation")
    assert (np.diff(d) > 0).all()


def test_kappa_monitor():
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.3, 0.0))
    led = Ledger()
    led.record_initial(State(np.zeros(16), np.full(16, 0.5), g), m)
    assert led.kappa() == pytest.approx(2.0)
    assert not led.band_violated(2.5)
    assert led.band_violated(1.5)


def test_detector_fires_immediately_on_constant_state():
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    led = Ledger()
    led.record_initial(constant_state(g), m)
    decision = convergence_detector(led, tol=1e-12, consecutive=1,
                                    state=constant_state(g), m=m)
    assert decision.fired
    assert decision.mu_spread == 0.0
    assert decision.theta_spread == 0.0


def test_detector_respects_consecutive_count():
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    led = Ledger()
    led.record_initial(constant_state(g), m)
    assert not convergence_detector(led, tol=1e-12, consecutive=3).fired


def test_detector_never_fires_above_tol():
    g = Grid.interval(48, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    s = spinodal_state(g, np.random.default_rng(4))
    summary = run(s, 0.02, StepperConfig(dt=1e-3), m)
    gsum = (summary.ledger.column("grad_mu")
            + summary.ledger.column("grad_theta"))
    tol = 0.5 * gsum.min()
    assert not convergence_detector(summary.ledger, tol).fired


def test_detector_needs_rows():
    with pytest.raises(LedgerError):
        convergence_detector(Ledger(), 1e-8)


def _synthetic_ledger(times, values):
    """Build a ledger whose lagrangian column follows ``values``."""
    g = Grid.interval(4, 1.0)
    m = make_default_model((0.0, 0.0, 0.0))
    led = Ledger()
    led.record_initial(constant_state(g), m)
    led.rows.clear()
    for t, v in zip(times, values):
        led.rows.append({name: 0.0 for name in LEDGER_COLUMNS})
        led.rows[-1]["t"] = float(t)
        led.rows[-1]["lagrangian"] = float(v)
    return led


def test_decay_fit_exponential_synthetic():
    t = np.linspace(0.0, 5.0, 200)
    led = _synthetic_ledger(t, 2.0 + np.exp(-2.0 * t))
    rep = decay_fit(led, 2.0, tail_start=0)
    assert rep.model == "exponential"
    assert abs(rep.rate - 2.0) / 2.0 <= 0.05
    assert rep.r2_exp > rep.r2_alg


def test_decay_fit_algebraic_synthetic():
    t = np.linspace(10.0, 100.0, 300)
    led = _synthetic_ledger(t, 1.0 + (1.0 + t) ** -4.0)
    rep = decay_fit(led, 1.0, tail_start=0)
    assert rep.model == "algebraic"
    assert abs(rep.alg_exponent - 4.0) / 4.0 <= 0.05
    assert rep.r2_alg > rep.r2_exp


def test_decay_fit_monotone_report():
    t = np.linspace(0.0, 3.0, 100)
    led = _synthetic_ledger(t, 0.5 + np.exp(-t))  # strictly decreasing
    rep = decay_fit(led, 0.5, tail_start=0)
    assert all(rep.monotone.values())
    # every candidate exponent sees a nonincreasing transform
    assert set(rep.monotone) == {round(0.05 * k, 2) for k in range(1, 11)}


def test_decay_fit_errors():
    t = np.linspace(0.0, 1.0, 4)
    led = _synthetic_ledger(t, 1.0 + np.exp(-t))
    with pytest.raises(DecayFitError):
        decay_fit(led, 1.0, tail_start=0)  # too short
    t = np.linspace(0.0, 1.0, 50)
    led = _synthetic_ledger(t, 1.0 + np.exp(-t))
    with pytest.raises(DecayFitError):
        decay_fit(led, 5.0, tail_start=0)  # e_inf overestimated


def test_decay_fit_gap_floor_truncates():
    t = np.linspace(0.0, 30.0, 400)
    gap = np.exp(-2.0 * t)  # underflows toward zero late in the tail
    led = _synthetic_ledger(t, 4.0 + gap)
    rep = decay_fit(led, 4.0, tail_start=0, gap_floor=1e-12)
    assert rep.model == "exponential"
    assert abs(rep.rate - 2.0) / 2.0 <= 0.05
    assert rep.n_rows < 400


def test_identity_residual_halves_with_dt():
    g = Grid.interval(64, 2.0)
    m = make_default_model((0.0, 0.5, 0.1))
    x = g.coordinates()[0]
    s = State(0.7 + 0.1 * np.cos(np.pi * x / 2.0),
              1.0 + 0.2 * np.cos(np.pi * x / 2.0), g)
    resids = []
    for dt in (2e-3, 1e-3):
        summary = run(s.copy(), 0.5, StepperConfig(dt=dt), m)
        resids.append(abs(summary.ledger.column("identity_residual")[-1]))
    ratio = resids[0] / resids[1]
    assert 1.6 <= ratio <= 2.4


def test_spatial_spread_constant_state():
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    mu_spread, theta_spread = spatial_spread(constant_state(g), m)
    assert mu_spread == 0.0
    assert theta_spread == 0.0
