"""The simulated state and its energy functionals.

A :class:`State` pairs the order parameter ``psi`` with the positive
inverse-temperature field ``theta`` on one grid.  This module evaluates

* the chemical potential  mu = -lap(psi) + phi'(psi) - lam'(psi) theta,
* the free energy         E  = 1/2 |grad psi|^2 + int phi(psi) + int beta(theta),
* the conserved enthalpy  F  = int (lam(psi) + b(theta)),
* the constrained energy  L  = E - mean(theta) * F,

together with the first variation of L (as Riesz representatives in the
quadrature inner product) and the bilinear action of its second variation.
The mean of theta entering L is recomputed from the state at every
evaluation, and gradients are stored unprojected; mean-free projections
are applied at the point of use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, grad_sq_norm, inner, integrate, mean, neumann_laplacian
from .model import ModelFunctions

__all__ = [
    "State",
    "FunctionalGradient",
    "chemical_potential",
    "energy",
    "conserved_f",
    "lagrangian",
    "lagrangian_gradient",
    "lagrangian_hessian_action",
]


@dataclass
class State:
    """Order parameter and inverse temperature on a common grid."""

    psi: np.ndarray
    theta: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.psi = self.grid.check_field(self.psi)
        self.theta = self.grid.check_field(self.theta)
        if not (np.isfinite(self.psi).all() and np.isfinite(self.theta).all()):
            raise ValueError("state fields must be finite")
        if not (self.theta > 0.0).all():
            raise ValueError("theta must be strictly positive in every cell")

    def copy(self) -> "State":
        return State(self.psi.copy(), self.theta.copy(), self.grid)


@dataclass
class FunctionalGradient:
    """Riesz representatives of a first variation against the quadrature
    inner product: the pairing with a direction (h, k) is
    inner(d_psi, h) + inner(d_theta, k)."""

    d_psi: np.ndarray
    d_theta: np.ndarray


def chemical_potential(s: State, m: ModelFunctions) -> np.ndarray:
    return -neumann_laplacian(s.psi, s.grid) + m.dphi(s.psi) - m.dlam(s.psi) * s.theta


def energy(s: State, m: ModelFunctions) -> float:
    return (0.5 * grad_sq_norm(s.psi, s.grid)
            + integrate(m.phi(s.psi), s.grid)
            + integrate(m.beta(s.theta), s.grid))


def conserved_f(s: State, m: ModelFunctions) -> float:
    return integrate(m.lam(s.psi) + m.b(s.theta), s.grid)


def lagrangian(s: State, m: ModelFunctions) -> float:
    return energy(s, m) - mean(s.theta, s.grid) * conserved_f(s, m)


def lagrangian_gradient(s: State, m: ModelFunctions) -> FunctionalGradient:
    """First variation of L, absorbing the variation of mean(theta).

    d_psi   = -lap(psi) + phi'(psi) - mean(theta) lam'(psi)
    d_theta = beta'(theta) - F/|domain| - mean(theta) b'(theta)
    """
    g = s.grid
    theta_bar = mean(s.theta, g)
    f_val = conserved_f(s, m)
    d_psi = (-neumann_laplacian(s.psi, g) + m.dphi(s.psi)
             - theta_bar * m.dlam(s.psi))
    d_theta = m.beta_prime(s.theta) - f_val / g.volume - theta_bar * m.db(s.theta)
    return FunctionalGradient(d_psi, d_theta)


def lagrangian_hessian_action(s: State, h1, k1, h2, k2, m: ModelFunctions) -> float:
    """Second variation of L evaluated on the direction pair (h1,k1), (h2,k2).

    Symmetric in the two pairs by construction.
    """
    g = s.grid
    h1 = g.check_field(h1)
    k1 = g.check_field(k1)
    h2 = g.check_field(h2)
    k2 = g.check_field(k2)
    theta_bar = mean(s.theta, g)
    k1_bar = mean(k1, g)
    k2_bar = mean(k2, g)

    e2 = (inner(-neumann_laplacian(h1, g), h2, g)
          + integrate(m.d2phi(s.psi) * h1 * h2, g)
          + integrate(m.beta_second(s.theta) * k1 * k2, g))

    def f_prime(h, k):
        return integrate(m.dlam(s.psi) * h + m.db(s.theta) * k, g)

    f2 = integrate(m.d2lam(s.psi) * h1 * h2 + m.d2b(s.theta) * k1 * k2, g)
    return e2 - k1_bar * f_prime(h2, k2) - k2_bar * f_prime(h1, k1) - theta_bar * f2
