"""Run diagnostics: conservation ledger, convergence detection, decay fits.

The ledger records, per step, the conserved quantities, the energy and
constrained energy, the cumulative dissipation D(t) and the identity
residual E(t) + D(t) - E(0), the temperature bounds (for monitoring the
admissible band), and the gradient norms that drive equilibration
detection.  Rows are recorded for every step; file output is handled by
:mod:`pfsim.io`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecayFitError, LedgerError
from .grid import grad_sq_norm, mean
from .model import ModelFunctions
from .state import State, chemical_potential, conserved_f, energy, lagrangian

__all__ = [
    "Ledger",
    "record",
    "ConvergenceDecision",
    "convergence_detector",
    "spatial_spread",
    "DecayFitReport",
    "decay_fit",
]

LEDGER_COLUMNS = (
    "t", "mass", "enthalpy", "energy", "lagrangian", "dissipation",
    "identity_residual", "theta_min", "theta_max", "grad_mu", "grad_theta",
    "newton_iters",
)


class Ledger:
    """Time-ordered per-step record of conserved and dissipated quantities."""

    def __init__(self):
        self.rows: list[dict] = []
        self._e0: float | None = None
        self._dissipation = 0.0

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name not in LEDGER_COLUMNS:
            raise KeyError(name)
        return np.array([row[name] for row in self.rows], dtype=float)

    def _append(self, t: float, state: State, m: ModelFunctions,
                increment: float, newton_iters: int):
        if self.rows and t <= self.rows[-1]["t"]:
            raise LedgerError(
                f"non-monotone time: {t} after {self.rows[-1]['t']}")
        if increment < 0.0:
            raise LedgerError("dissipation increment must be nonnegative")
        e = energy(state, m)
        if self._e0 is None:
            self._e0 = e
        self._dissipation += increment
        mu = chemical_potential(state, m)
        self.rows.append({
            "t": t,
            "mass": mean(state.psi, state.grid),
            "enthalpy": conserved_f(state, m),
            "energy": e,
            "lagrangian": lagrangian(state, m),
            "dissipation": self._dissipation,
            "identity_residual": (e + self._dissipation) - self._e0,
            "theta_min": float(state.theta.min()),
            "theta_max": float(state.theta.max()),
            "grad_mu": float(np.sqrt(grad_sq_norm(mu, state.grid))),
            "grad_theta": float(np.sqrt(grad_sq_norm(state.theta, state.grid))),
            "newton_iters": int(newton_iters),
        })

    def record_initial(self, state: State, m: ModelFunctions, t: float = 0.0):
        """First row: zero dissipation, identity residual exactly zero."""
        self._append(t, state, m, 0.0, 0)

    def record(self, result, m: ModelFunctions):
        """Append the outcome of one accepted step."""
        self._append(result.t, result.state, m,
                     result.dissipation_increment, result.newton_iters)

    def kappa(self) -> float:
        """Temperature-band monitor max(max theta, 1/min theta) over the run."""
        tmin = min(row["theta_min"] for row in self.rows)
        tmax = max(row["theta_max"] for row in self.rows)
        return max(tmax, 1.0 / tmin)

    def band_violated(self, kappa_star: float) -> bool:
        """True if theta ever left the declared band [1/kappa*, kappa*]."""
        return self.kappa() > kappa_star


def record(ledger: Ledger, result, m: ModelFunctions) -> Ledger:
    ledger.record(result, m)
    return ledger


@dataclass
class ConvergenceDecision:
    fired: bool
    row: int | None = None
    grad_sum: float | None = None
    mu_spread: float | None = None
    theta_spread: float | None = None


def convergence_detector(ledger: Ledger, tol: float, *, consecutive: int = 3,
                         state: State | None = None,
                         m: ModelFunctions | None = None) -> ConvergenceDecision:
    """Equilibration test: |grad mu| + |grad theta| < tol on a run of rows.

    Fires when the sum of gradient norms stays below ``tol`` for
    ``consecutive`` consecutive rows.  When the current state and model
    are supplied, the decision also reports the spatial max-min spreads of
    mu and theta (the limits are spatially constant, so the spreads should
    collapse alongside the gradients).
    """
    if len(ledger) == 0:
        raise LedgerError("convergence detector needs a nonempty ledger")
    if consecutive < 1:
        raise ValueError("consecutive must be at least 1")
    sums = ledger.column("grad_mu") + ledger.column("grad_theta")
    fired = False
    row = None
    streak = 0
    for i, v in enumerate(sums):
        streak = streak + 1 if v < tol else 0
        if streak >= consecutive:
            fired = True
            row = i
            break
    decision = ConvergenceDecision(fired, row, float(sums[-1]))
    if state is not None and m is not None:
        decision.mu_spread, decision.theta_spread = spatial_spread(state, m)
    return decision


def spatial_spread(state: State, m: ModelFunctions) -> tuple[float, float]:
    """Max-min spread of the chemical potential and of theta."""
    mu = chemical_potential(state, m)
    return float(np.ptp(mu)), float(np.ptp(state.theta))


@dataclass
class DecayFitReport:
    """Outcome of fitting the energy-gap decay on a ledger tail.

    ``model`` is the better-fitting of the two regressions of
    log(L - L_inf): against t (exponential regime) and against log t
    (algebraic regime); ``rate`` is the winning slope magnitude.
    ``monotone`` maps each candidate exponent sigma to whether
    (L - L_inf)^sigma is nonincreasing on the tail within the per-step
    tolerance, with the worst per-step increase in ``worst_increase``.
    """

    model: str
    rate: float
    exp_rate: float
    alg_exponent: float
    r2_exp: float
    r2_alg: float
    monotone: dict[float, bool]
    worst_increase: dict[float, float]
    n_rows: int


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and R^2 of y against x."""
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def decay_fit(ledger: Ledger, e_inf: float, *, tail_start: int | None = None,
              gap_floor: float = 0.0, mono_tol: float = 1e-10,
              exponents: tuple[float, ...] = tuple(np.round(np.arange(0.05, 0.51, 0.05), 2)),
              min_rows: int = 8) -> DecayFitReport:
    """Fit the decay of L(t) - e_inf on the tail of a ledger.

    The tail starts at row ``tail_start`` (default: the second half).  A
    positive ``gap_floor`` truncates the tail at the first row whose gap
    falls to or below the floor; with the default floor of zero, a
    nonpositive gap raises (``e_inf`` was overestimated).  The floor is
    how callers keep the fit above the round-off noise that dominates the
    gap once the trajectory has numerically reached its limit.
    """
    t_all = ledger.column("t")
    gap_all = ledger.column("lagrangian") - e_inf
    start = len(ledger) // 2 if tail_start is None else int(tail_start)
    t = t_all[start:]
    gap = gap_all[start:]
    if gap_floor > 0.0:
        bad = np.nonzero(gap <= gap_floor)[0]
        if bad.size:
            t, gap = t[:bad[0]], gap[:bad[0]]
    if t.size < min_rows:
        raise DecayFitError(
            f"tail too short: {t.size} usable rows, need {min_rows}")
    if (gap <= 0.0).any():
        raise DecayFitError("L(t) - e_inf is nonpositive on the tail "
                            "(e_inf overestimated)")

    y = np.log(gap)
    slope_exp, r2_exp = _linear_fit(t, y)
    pos = t > 0.0
    if pos.sum() >= min_rows:
        slope_alg, r2_alg = _linear_fit(np.log(t[pos]), y[pos])
    else:
        slope_alg, r2_alg = 0.0, -np.inf

    monotone: dict[float, bool] = {}
    worst: dict[float, float] = {}
    for sig in exponents:
        h = gap ** sig
        increases = np.diff(h)
        w = float(increases.max()) if increases.size else 0.0
        monotone[float(sig)] = bool(w <= mono_tol)
        worst[float(sig)] = w

    if r2_exp >= r2_alg:
        model, rate = "exponential", -slope_exp
    else:
        model, rate = "algebraic", -slope_alg
    return DecayFitReport(model, float(rate), float(-slope_exp), float(-slope_alg),
                          float(r2_exp), float(r2_alg), monotone, worst, int(t.size))
