"""Constrained steady states: the targets of the long-time dynamics.

At equilibrium the chemical potential and the inverse temperature are
spatially constant, leaving the second-order problem

    -lap(psi) + phi'(psi) - lam'(psi) theta_inf = mu_inf,   no-flux boundary,

for the field psi and the two scalars (theta_inf, mu_inf), pinned by the
prescribed mean of psi and the prescribed enthalpy.  The solver is a
bordered (augmented) Newton iteration on the N cell equations plus the two
scalar constraints; theta_inf is an unknown scalar rather than a field,
which removes the null direction a constant temperature field would
carry.  Which solution branch is found depends on the initial guess; the
solver makes no uniqueness claim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstraintInfeasibleError, NewtonDivergedError, NonFiniteError
from .grid import Grid, inner, laplacian_matrix, mean, neumann_laplacian
from .model import ModelFunctions
from .state import State, lagrangian_hessian_action

__all__ = [
    "SteadyProblem",
    "SteadyState",
    "constant_branch",
    "solve_steady",
    "stability_indicator",
    "hessian_form_matrix",
]


@dataclass(frozen=True)
class SteadyProblem:
    """Prescribed mean of psi (m0) and total enthalpy (h0) on a grid."""

    m0: float
    h0: float
    grid: Grid
    model: ModelFunctions


@dataclass
class SteadyState:
    psi_inf: np.ndarray
    theta_inf: float
    mu_inf: float
    residual_norm: float
    iterations: int = 0
    mu_consistency: float = 0.0

    def as_state(self, grid: Grid) -> State:
        theta = np.full(grid.n_cells, self.theta_inf)
        return State(self.psi_inf.copy(), theta, grid)


def _solve_b_equals(m: ModelFunctions, target: float) -> float:
    """Positive root of b(theta) = target, or ConstraintInfeasibleError."""
    if m.b_inv is not None:
        theta = float(m.b_inv(target))
        if np.isfinite(theta) and theta > 0.0:
            return theta
        raise ConstraintInfeasibleError(
            f"no positive temperature with b(theta) = {target:g}")
    lo, hi = 1.0, 1.0
    for _ in range(200):
        if m.b(lo) <= target:
            break
        lo *= 0.5
    else:
        raise ConstraintInfeasibleError(
            f"no positive temperature with b(theta) = {target:g}")
    for _ in range(200):
        if m.b(hi) >= target:
            break
        hi *= 2.0
    else:
        raise ConstraintInfeasibleError(
            f"no positive temperature with b(theta) = {target:g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if m.b(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def constant_branch(p: SteadyProblem) -> SteadyState:
    """Closed-form constant solution: psi = m0, theta from the enthalpy.

    Exists whenever h0/|domain| - lam(m0) lies in the range of b; used
    as the default initial guess for the full solver.
    """
    m = p.model
    target = p.h0 / p.grid.volume - float(m.lam(p.m0))
    theta = _solve_b_equals(m, target)
    mu = float(m.dphi(p.m0)) - float(m.dlam(p.m0)) * theta
    psi = np.full(p.grid.n_cells, float(p.m0))
    return SteadyState(psi, theta, mu, residual_norm=0.0)


def solve_steady(p: SteadyProblem, guess: SteadyState | None = None, *,
                 tol: float = 1e-11, max_iters: int = 60,
                 max_halvings: int = 30) -> SteadyState:
    """Bordered Newton solve of the stationary problem.

    The residual is the N cell equations together with the deviations of
    mean(psi) from m0 and of the mean enthalpy density from h0/|domain|;
    ``residual_norm`` is the max norm over all of them.  On success the
    returned mu_inf equals the mean of phi'(psi) - lam'(psi) theta_inf to
    round-off (averaging the cell equations kills the Laplacian), which is
    stored in ``mu_consistency`` as a post-hoc consistency measure.
    """
    g = p.grid
    m = p.model
    n = g.n_cells
    lap = laplacian_matrix(g)
    vol = g.cell_volume

    if guess is None:
        guess = constant_branch(p)
    psi = np.asarray(guess.psi_inf, dtype=float).copy()
    g.check_field(psi)
    theta = float(guess.theta_inf)
    mu = float(guess.mu_inf)
    if theta <= 0.0:
        raise ValueError("steady guess must have theta_inf > 0")
    # Fail early if the enthalpy constraint has no positive temperature
    # near the guessed field.
    _solve_b_equals(m, p.h0 / g.volume - mean(m.lam(psi), g))

    def residual(psi, theta, mu):
        r_field = -neumann_laplacian(psi, g) + m.dphi(psi) - m.dlam(psi) * theta - mu
        r_mean = mean(psi, g) - p.m0
        r_enth = mean(m.lam(psi), g) + float(m.b(theta)) - p.h0 / g.volume
        return r_field, r_mean, r_enth

    r_field, r_mean, r_enth = residual(psi, theta, mu)
    norm = max(np.abs(r_field).max(), abs(r_mean), abs(r_enth))
    if not np.isfinite(norm):
        raise NonFiniteError("non-finite residual at steady-solve start")

    iters = 0
    while norm > tol:
        if iters >= max_iters:
            raise NewtonDivergedError(
                f"steady Newton did not reach tol={tol:g} in {max_iters} "
                f"iterations (residual {norm:.3g})")
        j_ff = -lap + sp.diags(m.d2phi(psi) - m.d2lam(psi) * theta)
        col_theta = -np.asarray(m.dlam(psi), dtype=float).reshape(n, 1)
        col_mu = np.full((n, 1), -1.0)
        row_mean = np.full((1, n), vol / g.volume)
        row_enth = (np.asarray(m.dlam(psi), dtype=float) * vol / g.volume).reshape(1, n)
        jac = sp.bmat([
            [j_ff, sp.csr_matrix(col_theta), sp.csr_matrix(col_mu)],
            [sp.csr_matrix(row_mean), None, None],
            [sp.csr_matrix(row_enth), sp.csr_matrix([[float(m.db(theta))]]), None],
        ], format="csc")
        rhs = -np.concatenate([r_field, [r_mean, r_enth]])
        delta = spla.spsolve(jac, rhs)

        alpha = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            theta_try = theta + alpha * delta[n]
            if theta_try <= 0.0:
                alpha *= 0.5
                continue
            psi_try = psi + alpha * delta[:n]
            mu_try = mu + alpha * delta[n + 1]
            rf, rm, re = residual(psi_try, theta_try, mu_try)
            norm_try = max(np.abs(rf).max(), abs(rm), abs(re))
            if np.isfinite(norm_try) and norm_try < norm:
                psi, theta, mu = psi_try, theta_try, mu_try
                r_field, r_mean, r_enth = rf, rm, re
                norm = norm_try
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise NewtonDivergedError(
                f"steady Newton damping stalled (residual {norm:.3g})")
        iters += 1

    mu_avg = mean(m.dphi(psi) - m.dlam(psi) * theta, g)
    consistency = abs(mu - mu_avg) / max(1.0, abs(mu))
    return SteadyState(psi, theta, mu, residual_norm=norm, iterations=iters,
                       mu_consistency=consistency)


def _compatible_probes(p_state: State, m: ModelFunctions, n_modes: int,
                       n_random: int, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    """Directions tangent to the constraint set: mean-free in psi, with the
    mean of the temperature component chosen to keep the enthalpy fixed to
    first order."""
    g = p_state.grid
    n = g.n_cells
    db_bar = mean(m.db(p_state.theta), g)
    dlam_psi = m.dlam(p_state.psi)

    def compat_k_mean(h):
        return -mean(dlam_psi * h, g) / db_bar

    modes = []
    if g.dim == 1:
        xs = g.coordinates()[0]
        for j in range(1, n_modes + 1):
            modes.append(np.cos(j * np.pi * xs / g.lengths[0]))
    else:
        xs, ys = g.coordinates()
        for j in range(1, n_modes + 1):
            modes.append(np.cos(j * np.pi * xs / g.lengths[0]))
            modes.append(np.cos(j * np.pi * ys / g.lengths[1]))
    probes = []
    zero = np.zeros(n)
    for h in modes:
        h = h - mean(h, g)
        probes.append((h, np.full(n, compat_k_mean(h))))
        probes.append((zero, h.copy()))
    for _ in range(n_random):
        h = rng.standard_normal(n)
        h -= mean(h, g)
        k = rng.standard_normal(n)
        k += compat_k_mean(h) - mean(k, g)
        probes.append((h, k))
    return probes


def stability_indicator(s: SteadyState, m: ModelFunctions, grid: Grid, *,
                        n_modes: int = 8, n_random: int = 8, seed: int = 0,
                        exact: bool = False) -> float:
    """Smallest Rayleigh quotient of the second variation of L over
    constraint-compatible directions.

    A negative value flags a descent direction from the steady state (an
    instability indicator, not a theorem).  The default probes are cosine
    modes and a few random directions; with ``exact=True`` the full
    quadratic form is assembled and the minimum eigenvalue on the
    constraint subspace is computed (dense; intended for small grids).
    """
    p_state = s.as_state(grid)
    if exact:
        return _exact_indicator(p_state, m)
    rng = np.random.default_rng(seed)
    n_modes = min(n_modes, max(grid.cells) - 1)
    best = np.inf
    for h, k in _compatible_probes(p_state, m, n_modes, n_random, rng):
        denom = inner(h, h, grid) + inner(k, k, grid)
        if denom <= 0.0:
            continue
        q = lagrangian_hessian_action(p_state, h, k, h, k, m) / denom
        best = min(best, q)
    return float(best)


def hessian_form_matrix(s: State, m: ModelFunctions) -> np.ndarray:
    """Dense matrix of the second variation of L in cell coordinates.

    The quadratic form value on directions z1 = (h1, k1), z2 = (h2, k2)
    is z1 @ M @ z2.  Dense; use only at small cell counts.
    """
    g = s.grid
    n = g.n_cells
    vol = g.cell_volume
    theta_bar = mean(s.theta, g)
    lap = laplacian_matrix(g).toarray()
    m_hh = vol * (-lap + np.diag(m.d2phi(s.psi) - theta_bar * m.d2lam(s.psi)))
    m_kk = vol * np.diag(m.beta_second(s.theta) - theta_bar * m.d2b(s.theta))
    ones = np.ones(n)
    dlam = np.asarray(m.dlam(s.psi), dtype=float)
    db = np.asarray(m.db(s.theta), dtype=float)
    c = vol * vol / g.volume
    m_kk -= c * (np.outer(ones, db) + np.outer(db, ones))
    m_hk = -c * np.outer(dlam, ones)
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = m_hh
    out[:n, n:] = m_hk
    out[n:, :n] = m_hk.T
    out[n:, n:] = m_kk
    return out


def _exact_indicator(p_state: State, m: ModelFunctions) -> float:
    g = p_state.grid
    n = g.n_cells
    form = hessian_form_matrix(p_state, m)
    vol = g.cell_volume
    constraints = np.zeros((2, 2 * n))
    constraints[0, :n] = vol
    constraints[1, :n] = vol * np.asarray(m.dlam(p_state.psi), dtype=float)
    constraints[1, n:] = vol * np.asarray(m.db(p_state.theta), dtype=float)
    basis = scipy.linalg.null_space(constraints)
    projected = basis.T @ form @ basis / vol
    eigvals = np.linalg.eigvalsh(0.5 * (projected + projected.T))
    return float(eigvals[0])
