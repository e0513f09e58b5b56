"""Time integration preserving the discrete conservation laws.

Two schemes are provided.

``implicit`` (the flagship) is backward Euler on the coupled system

    psi+ - psi = dt * lap(mu+),   mu+ = -lap(psi+) + phi'(psi+) - lam'(psi+) theta+,
    b(theta+) + lam(psi+) - b(theta) - lam(psi) = dt * lap(theta+),

solved by damped Newton with analytic Jacobian blocks.  Because the
Laplacian matrix has exactly zero column sums, the cell averages of psi
and of b(theta) + lam(psi) are conserved up to the nonlinear residual:
no projection or correction is ever applied.

``imex`` advances psi with the fourth-order part implicit and the
nonlinear terms explicit (one symmetric linear solve), then advances the
heat equation in the transformed variable w = b(theta), for which the
diffusion operator becomes div(a grad w) with a = 1/b'; the diffusivity is
frozen at the old state, giving a single linear solve, and theta is
recovered by inverting b exactly per cell.  Conservation of the enthalpy
is again structural.  The scheme is conditionally stable and its energy
behavior is regime dependent.

Residual convention: Newton converges the update-form residuals written
above (the time-difference form, without the 1/dt factor), measured in
the max norm.  In double precision the 1/dt-scaled residual of the
fourth-order block cannot reach tight tolerances at moderate resolutions,
while the update form can; the conservation guarantees quoted by
:func:`step` are stated for this convention.  The achievable floor grows
like eps * dt * |lap|^2, so very fine grids need a looser ``newton_tol``
or a smaller ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics
from .errors import (
    NewtonDivergedError,
    NonFiniteError,
    PositivityLostError,
    SimulationError,
)
from .grid import grad_sq_norm, laplacian_matrix, neumann_laplacian
from .model import ModelFunctions
from .state import State, chemical_potential

__all__ = ["StepperConfig", "StepResult", "RunSummary", "step", "run"]


@dataclass(frozen=True)
class StepperConfig:
    """Knobs of the time integrator.

    ``newton_tol`` bounds the max-norm of the update-form residual (see
    module docstring).  Linear systems are solved by sparse LU up to
    ``direct_max_unknowns`` unknowns and by ILU-preconditioned LGMRES
    beyond that, with ``linear_tol`` as the iterative tolerance.
    """

    dt: float
    scheme: str = "implicit"
    newton_tol: float = 1e-10
    max_newton_iters: int = 25
    linear_tol: float = 1e-10
    max_halvings: int = 8
    direct_max_unknowns: int = 50_000

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("implicit", "imex"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.newton_tol > 0.0 and self.linear_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")


@dataclass
class StepResult:
    """Outcome of one accepted step.

    ``dissipation_increment`` is dt times the squared gradient norms of
    the new chemical potential and temperature fields, the discrete
    integrand of the energy identity.
    """

    state: State
    t: float
    newton_iters: int
    residual_norm: float
    dissipation_increment: float


@dataclass
class RunSummary:
    state: State
    ledger: "diagnostics.Ledger"
    steps: int
    t: float
    converged: bool
    mu_spread: float | None = None
    theta_spread: float | None = None


def _solve_linear(mat: sp.spmatrix, rhs: np.ndarray, cfg: StepperConfig) -> np.ndarray:
    n = mat.shape[0]
    csc = mat.tocsc()
    if n <= cfg.direct_max_unknowns:
        return spla.spsolve(csc, rhs)
    ilu = spla.spilu(csc, drop_tol=1e-6, fill_factor=10)
    prec = spla.LinearOperator((n, n), ilu.solve)
    sol, info = spla.lgmres(csc, rhs, M=prec, rtol=cfg.linear_tol, atol=0.0)
    if info != 0:
        return spla.spsolve(csc, rhs)
    return sol


def step(s: State, cfg: StepperConfig, m: ModelFunctions) -> StepResult:
    """Advance one time step from ``s``; raises on solver failure."""
    if cfg.scheme == "implicit":
        return _step_implicit(s, cfg, m)
    return _step_imex(s, cfg, m)


def _dissipation_increment(state: State, m: ModelFunctions, dt: float) -> float:
    mu = chemical_potential(state, m)
    return dt * (grad_sq_norm(mu, state.grid) + grad_sq_norm(state.theta, state.grid))


def _step_implicit(s: State, cfg: StepperConfig, m: ModelFunctions) -> StepResult:
    g = s.grid
    n = g.n_cells
    dt = cfg.dt
    lap = laplacian_matrix(g)
    eye = sp.identity(n, format="csr")
    e_old = m.b(s.theta) + m.lam(s.psi)

    def residual(psi, theta):
        mu = -neumann_laplacian(psi, g) + m.dphi(psi) - m.dlam(psi) * theta
        r1 = psi - s.psi - dt * neumann_laplacian(mu, g)
        r2 = m.b(theta) + m.lam(psi) - e_old - dt * neumann_laplacian(theta, g)
        return r1, r2

    psi = s.psi.copy()
    theta = s.theta.copy()
    r1, r2 = residual(psi, theta)
    norm = max(np.abs(r1).max(), np.abs(r2).max())
    if not np.isfinite(norm):
        raise NonFiniteError("non-finite residual at start of implicit step")

    def newton_update():
        c = m.d2phi(psi) - m.d2lam(psi) * theta
        j11 = eye + dt * (lap @ lap) - dt * (lap @ sp.diags(c)).tocsr()
        j12 = dt * (lap @ sp.diags(m.dlam(psi))).tocsr()
        j21 = sp.diags(m.dlam(psi))
        j22 = sp.diags(m.db(theta)) - dt * lap
        jac = sp.bmat([[j11, j12], [j21, j22]], format="csr")
        delta = _solve_linear(jac, -np.concatenate([r1, r2]), cfg)
        return delta[:n], delta[n:]

    # Always iterate at least once on a nonzero residual: accepting the
    # unchanged state whenever the previous state already sits below the
    # tolerance would freeze slow dynamics at a tolerance-dependent level.
    entry_norm = norm
    iters = 0
    while norm > 0.0 and (norm > cfg.newton_tol or iters == 0):
        if iters >= cfg.max_newton_iters:
            raise NewtonDivergedError(
                f"Newton did not reach tol={cfg.newton_tol:g} in "
                f"{cfg.max_newton_iters} iterations (residual {norm:.3g})")
        d_psi, d_theta = newton_update()

        alpha = 1.0
        accepted = False
        positivity_block = False
        for _ in range(cfg.max_halvings + 1):
            psi_try = psi + alpha * d_psi
            theta_try = theta + alpha * d_theta
            if not (theta_try > 0.0).all():
                positivity_block = True
                alpha *= 0.5
                continue
            r1_try, r2_try = residual(psi_try, theta_try)
            norm_try = max(np.abs(r1_try).max(), np.abs(r2_try).max())
            if np.isfinite(norm_try) and norm_try < norm:
                psi, theta = psi_try, theta_try
                r1, r2, norm = r1_try, r2_try, norm_try
                accepted = True
                break
            positivity_block = False
            alpha *= 0.5
        if not accepted:
            if norm <= cfg.newton_tol:
                break  # converged; refinement stalled at the round-off floor
            if positivity_block:
                raise PositivityLostError(
                    "Newton step cannot keep theta positive; the run left "
                    "the admissible temperature band")
            if not np.isfinite(norm):
                raise NonFiniteError("non-finite residual in implicit step")
            raise NewtonDivergedError(
                f"damping failed to reduce the residual (residual {norm:.3g})")
        iters += 1

    # Polish: the conservation defect per step equals the cell mean of the
    # final residual, so push a genuine step from just-below-tol down to
    # the round-off floor while full Newton steps still pay off.
    if entry_norm > cfg.newton_tol:
        for _ in range(2):
            if norm == 0.0 or iters >= cfg.max_newton_iters:
                break
            d_psi, d_theta = newton_update()
            psi_try = psi + d_psi
            theta_try = theta + d_theta
            if not (theta_try > 0.0).all():
                break
            r1_try, r2_try = residual(psi_try, theta_try)
            norm_try = max(np.abs(r1_try).max(), np.abs(r2_try).max())
            if not np.isfinite(norm_try) or norm_try >= 0.25 * norm:
                break
            psi, theta = psi_try, theta_try
            r1, r2, norm = r1_try, r2_try, norm_try
            iters += 1

    new = State(psi, theta, g)
    return StepResult(new, t=float("nan"), newton_iters=iters, residual_norm=norm,
                      dissipation_increment=_dissipation_increment(new, m, dt))


def _invert_b(m: ModelFunctions, w: np.ndarray, theta_guess: np.ndarray) -> np.ndarray:
    """Solve b(theta) = w per cell; b is strictly increasing on (0, inf)."""
    if m.b_inv is not None:
        theta = np.asarray(m.b_inv(w), dtype=float)
        if not np.isfinite(theta).all() or not (theta > 0.0).all():
            raise PositivityLostError(
                "enthalpy update left the range of b on (0, inf)")
        return theta
    theta = theta_guess.copy()
    for _ in range(60):
        f = m.b(theta) - w
        if np.abs(f).max() < 1e-13:
            return theta
        step_v = f / m.db(theta)
        theta_new = theta - step_v
        bad = theta_new <= 0.0
        while bad.any():
            step_v = np.where(bad, 0.5 * step_v, step_v)
            theta_new = theta - step_v
            bad = theta_new <= 0.0
            if np.abs(step_v).max() < 1e-300:
                raise PositivityLostError(
                    "cannot invert b at a positive temperature")
        theta = theta_new
    raise PositivityLostError("per-cell inversion of b failed to converge")


def _step_imex(s: State, cfg: StepperConfig, m: ModelFunctions) -> StepResult:
    g = s.grid
    dt = cfg.dt
    lap = laplacian_matrix(g)
    eye = sp.identity(g.n_cells, format="csr")

    mu_expl = chemical_potential(s, m)
    lhs_psi = (eye + dt * (lap @ lap)).tocsr()
    d_psi = _solve_linear(lhs_psi, dt * neumann_laplacian(mu_expl, g), cfg)
    psi_new = s.psi + d_psi

    w_old = m.b(s.theta)
    diff = sp.diags(m.a(s.theta))
    lhs_w = (eye - dt * (lap @ diff)).tocsr()
    rhs_w = dt * neumann_laplacian(s.theta, g) - (m.lam(psi_new) - m.lam(s.psi))
    d_w = _solve_linear(lhs_w, rhs_w, cfg)
    theta_new = _invert_b(m, w_old + d_w, s.theta)

    if not (np.isfinite(psi_new).all() and np.isfinite(theta_new).all()):
        raise NonFiniteError("non-finite field after imex step")

    mu_new = -neumann_laplacian(psi_new, g) + m.dphi(s.psi) - m.dlam(s.psi) * s.theta
    r1 = psi_new - s.psi - dt * neumann_laplacian(mu_new, g)
    r2 = (d_w + (m.lam(psi_new) - m.lam(s.psi))
          - dt * neumann_laplacian(s.theta + diff @ d_w, g))
    norm = max(np.abs(r1).max(), np.abs(r2).max())

    new = State(psi_new, theta_new, g)
    return StepResult(new, t=float("nan"), newton_iters=0, residual_norm=norm,
                      dissipation_increment=_dissipation_increment(new, m, dt))


# Newton failures are retried with a halved step size, recursively up to
# this depth (the interval is covered by substeps); anything smarter is
# out of scope.
_MAX_DT_HALVINGS = 3


def _step_with_retries(state: State, cfg: StepperConfig, m: ModelFunctions,
                       depth: int = _MAX_DT_HALVINGS) -> StepResult:
    try:
        return step(state, cfg, m)
    except NewtonDivergedError:
        if depth == 0:
            raise
    half = replace(cfg, dt=0.5 * cfg.dt)
    first = _step_with_retries(state, half, m, depth - 1)
    second = _step_with_retries(first.state, half, m, depth - 1)
    return StepResult(second.state, t=float("nan"),
                      newton_iters=first.newton_iters + second.newton_iters,
                      residual_norm=second.residual_norm,
                      dissipation_increment=(first.dissipation_increment
                                             + second.dissipation_increment))


def run(s0: State, t_end: float, cfg: StepperConfig, m: ModelFunctions,
        observer: Callable[[StepResult], None] | None = None, *,
        convergence_tol: float | None = None, consecutive: int = 3,
        ledger: "diagnostics.Ledger | None" = None) -> RunSummary:
    """Advance from ``s0`` to ``t_end``, recording every step in a ledger.

    ``t_end`` is rounded to a whole number of steps of size ``cfg.dt``.
    A step whose Newton iteration diverges is retried as substeps at half
    the step size (up to three halvings); the ledger still records one row
    per full step.  When ``convergence_tol`` is given, the run stops early
    once the gradient norms of mu and theta stay below it for
    ``consecutive`` recorded steps; the summary then carries the spatial
    spreads of mu and theta of the final state.  Step failures are
    re-raised with the failing time attached.
    """
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    if ledger is None:
        ledger = diagnostics.Ledger()
    ledger.record_initial(s0, m)

    n_steps = int(round(t_end / cfg.dt))
    state = s0
    converged = False
    steps_taken = 0
    t = 0.0
    for k in range(1, n_steps + 1):
        t = k * cfg.dt
        try:
            result = _step_with_retries(state, cfg, m)
        except SimulationError as err:
            err.time = t
            raise
        result.t = t
        state = result.state
        ledger.record(result, m)
        steps_taken = k
        if observer is not None:
            observer(result)
        if convergence_tol is not None:
            decision = diagnostics.convergence_detector(
                ledger, convergence_tol, consecutive=consecutive)
            if decision.fired:
                converged = True
                break

    summary = RunSummary(state, ledger, steps_taken, t if steps_taken else 0.0,
                         converged)
    if converged:
        summary.mu_spread, summary.theta_spread = diagnostics.spatial_spread(state, m)
    return summary
