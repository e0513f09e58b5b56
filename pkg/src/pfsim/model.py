"""Constitutive functions of the phase-field model.

The model is fixed by three scalar functions: the bulk potential ``phi``
(default: the double well (s^2-1)^2), the coupling polynomial ``lam``
(quadratic), and the monotone temperature function ``b`` on (0, inf)
(default: b(s) = -1/s, so that the evolved field is an inverse absolute
temperature).  Two derived functions appear throughout the energy
machinery and are provided as methods: ``beta`` with beta'(s) = s*b'(s)
(thermal part of the energy, normalized so beta(1) = 0) and the
diffusivity ``a(s) = 1/b'(s)`` of the transformed heat equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "ModelFunctions",
    "make_default_model",
    "make_model",
    "check_hypotheses",
    "HypothesisCheck",
    "HypothesisReport",
]

ScalarFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelFunctions:
    """The constitutive triple with the derivatives the solvers need.

    All callables must accept numpy arrays (or floats) elementwise.
    ``b_inv`` is the inverse of ``b`` on (0, inf); it is optional and only
    required by the splitting time stepper.  Custom functions are accepted
    as closures with user-supplied derivatives; the derivative-consistency
    property tests guard against inconsistent input.
    """

    phi: ScalarFunc
    dphi: ScalarFunc
    d2phi: ScalarFunc
    d3phi: ScalarFunc
    lam: ScalarFunc
    dlam: ScalarFunc
    d2lam: ScalarFunc
    d3lam: ScalarFunc
    b: ScalarFunc
    db: ScalarFunc
    d2b: ScalarFunc
    beta: ScalarFunc
    b_inv: ScalarFunc | None = None
    lam_coeffs: tuple[float, ...] | None = None
    names: tuple[str, str] = ("double_well", "inverse")

    def beta_prime(self, s):
        """beta'(s) = s * b'(s)."""
        s = np.asarray(s, dtype=float)
        return s * self.db(s)

    def beta_second(self, s):
        """beta''(s) = b'(s) + s * b''(s)."""
        s = np.asarray(s, dtype=float)
        return self.db(s) + s * self.d2b(s)

    def a(self, s):
        """Diffusivity a(s) = 1/b'(s) of the transformed heat equation."""
        return 1.0 / self.db(np.asarray(s, dtype=float))


def _double_well():
    def phi(s):
        s = np.asarray(s, dtype=float)
        return (s * s - 1.0) ** 2

    def dphi(s):
        s = np.asarray(s, dtype=float)
        return 4.0 * s * (s * s - 1.0)

    def d2phi(s):
        s = np.asarray(s, dtype=float)
        return 12.0 * s * s - 4.0

    def d3phi(s):
        return 24.0 * np.asarray(s, dtype=float)

    return phi, dphi, d2phi, d3phi


def _quadratic_lambda(coeffs):
    c0, c1, c2 = (float(c) for c in coeffs)

    def lam(s):
        s = np.asarray(s, dtype=float)
        return c0 + c1 * s + c2 * s * s

    def dlam(s):
        s = np.asarray(s, dtype=float)
        return c1 + 2.0 * c2 * s

    def d2lam(s):
        return np.full_like(np.asarray(s, dtype=float), 2.0 * c2)

    def d3lam(s):
        return np.zeros_like(np.asarray(s, dtype=float))

    return lam, dlam, d2lam, d3lam


def _inverse_b():
    """b(s) = -1/s with beta(s) = log(s) (beta(1) = 0)."""

    def b(s):
        return -1.0 / np.asarray(s, dtype=float)

    def db(s):
        s = np.asarray(s, dtype=float)
        return 1.0 / (s * s)

    def d2b(s):
        s = np.asarray(s, dtype=float)
        return -2.0 / (s * s * s)

    def beta(s):
        return np.log(np.asarray(s, dtype=float))

    def b_inv(w):
        return -1.0 / np.asarray(w, dtype=float)

    return b, db, d2b, beta, b_inv


def _linear_b():
    """b(s) = s with beta(s) = (s^2 - 1)/2; useful for stress tests."""

    def b(s):
        return np.asarray(s, dtype=float) + 0.0

    def db(s):
        return np.ones_like(np.asarray(s, dtype=float))

    def d2b(s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def beta(s):
        s = np.asarray(s, dtype=float)
        return 0.5 * (s * s - 1.0)

    def b_inv(w):
        return np.asarray(w, dtype=float) + 0.0

    return b, db, d2b, beta, b_inv


_B_CHOICES = {"inverse": _inverse_b, "linear": _linear_b}


def make_default_model(lam_coeffs=(0.0, 1.0, 0.0)) -> ModelFunctions:
    """Double-well potential, quadratic coupling, b(s) = -1/s."""
    return make_model(lam_coeffs=lam_coeffs)


def make_model(phi: str = "double_well", lam_coeffs=(0.0, 1.0, 0.0),
               b: str = "inverse") -> ModelFunctions:
    """Build a model from named ingredients (the configuration-file path)."""
    if phi != "double_well":
        raise ValueError(f"unknown potential selector {phi!r}")
    if b not in _B_CHOICES:
        raise ValueError(f"unknown temperature-function selector {b!r}; "
                         f"choices: {sorted(_B_CHOICES)}")
    coeffs = tuple(float(c) for c in lam_coeffs)
    if len(coeffs) != 3:
        raise ValueError("lam_coeffs must have exactly 3 entries (c0, c1, c2)")
    p, dp, d2p, d3p = _double_well()
    l, dl, d2l, d3l = _quadratic_lambda(coeffs)
    bf, dbf, d2bf, beta, b_inv = _B_CHOICES[b]()
    return ModelFunctions(p, dp, d2p, d3p, l, dl, d2l, d3l,
                          bf, dbf, d2bf, beta, b_inv=b_inv,
                          lam_coeffs=coeffs, names=(phi, b))


def shift_lambda_offset(model: ModelFunctions, delta: float) -> ModelFunctions:
    """Return a copy with lam replaced by lam + delta.

    The offset changes neither the dynamics nor the energy, only the value
    of the conserved enthalpy; it is how a run is normalized to zero
    enthalpy.  Requires a polynomial coupling (``lam_coeffs`` set).
    """
    if model.lam_coeffs is None:
        raise ValueError("can only shift a polynomial coupling")
    c0, c1, c2 = model.lam_coeffs
    lam, dlam, d2lam, d3lam = _quadratic_lambda((c0 + delta, c1, c2))
    return replace(model, lam=lam, dlam=dlam, d2lam=d2lam, d3lam=d3lam,
                   lam_coeffs=(c0 + delta, c1, c2))


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    margin: float
    witness: float
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


# Growth of max|lam''| between the base and the doubled sampling range
# above this factor flags an unbounded second derivative.
_GROWTH_LIMIT = 1.1


def check_hypotheses(model: ModelFunctions, psi_range, theta_range, *,
                     eta: float = 0.0, c1: float = 0.0, grid=None,
                     samples: int = 512) -> HypothesisReport:
    """Sampling-based verification of the structural hypotheses.

    Checks, on dense sample grids over the given ranges:
      * b' > 0 on ``theta_range`` (monotone temperature function),
      * boundedness of lam'' and lam''' (flagged by growth when the
        sampling range is doubled),
      * the lower bound phi(s) >= -(eta/2) s^2 - c1 on ``psi_range``,
      * eta below the smallest nontrivial Neumann eigenvalue estimate
        (pi/L_max)^2, when a grid is supplied.

    These are configuration validations, not proofs; each check reports
    the witness point of worst margin.
    """
    p_lo, p_hi = (float(x) for x in psi_range)
    t_lo, t_hi = (float(x) for x in theta_range)
    if p_hi < p_lo or t_hi < t_lo:
        raise ValueError("empty range")
    if t_lo <= 0.0:
        raise ValueError("theta_range must lie in (0, inf)")
    samples = int(samples)
    if samples < 2:
        raise ValueError("need at least 2 samples")

    checks = []
    ts = np.linspace(t_lo, t_hi, samples)
    dbs = np.asarray(model.db(ts), dtype=float)
    i = int(np.argmin(dbs))
    checks.append(HypothesisCheck(
        "b_monotone", bool(dbs[i] > 0.0), float(dbs[i]), float(ts[i]),
        f"min b' = {dbs[i]:.6g} at s = {ts[i]:.6g}"))

    ps = np.linspace(p_lo, p_hi, samples)
    mid, half = 0.5 * (p_lo + p_hi), 0.5 * (p_hi - p_lo)
    wide = np.linspace(mid - 2.0 * max(half, 1.0), mid + 2.0 * max(half, 1.0), samples)
    for name, deriv in (("lambda_dd_bounded", model.d2lam),
                        ("lambda_ddd_bounded", model.d3lam)):
        base = float(np.max(np.abs(deriv(ps))))
        grown = np.abs(np.asarray(deriv(wide), dtype=float))
        j = int(np.argmax(grown))
        ratio = grown[j] / max(base, 1e-300)
        ok = bool(np.isfinite(grown[j]) and ratio <= _GROWTH_LIMIT)
        checks.append(HypothesisCheck(
            name, ok, float(_GROWTH_LIMIT - ratio), float(wide[j]),
            f"max on base range {base:.6g}, on doubled range {grown[j]:.6g}"))

    slack = np.asarray(model.phi(ps), dtype=float) + 0.5 * eta * ps * ps + c1
    k = int(np.argmin(slack))
    checks.append(HypothesisCheck(
        "phi_lower_bound", bool(slack[k] >= 0.0), float(slack[k]), float(ps[k]),
        f"min of phi(s) + eta/2 s^2 + c1 is {slack[k]:.6g} at s = {ps[k]:.6g}"))

    if grid is not None:
        lam1 = (np.pi / max(grid.lengths)) ** 2
        checks.append(HypothesisCheck(
            "eta_below_lambda1", bool(eta < lam1), float(lam1 - eta), float(lam1),
            f"eta = {eta:.6g} vs (pi/L_max)^2 = {lam1:.6g}"))

    return HypothesisReport(tuple(checks))
