"""Run configuration: a sectioned key=value file parsed into builders.

Sections and keys (defaults in brackets):

  [grid]     dim [1], cells (comma list per axis), lengths (comma list)
  [model]    phi [double_well], lambda_coeffs [0,1,0], b [inverse],
             normalize_enthalpy [false]
  [initial]  kind [constant_noise | tanh_interface | snapshot],
             psi_mean [0], psi_amp [0.05], theta_value [1.0], seed [0],
             tanh_center [mid], tanh_width [0.5], snapshot_path,
             theta_from_enthalpy (h0 making F equal this value)
  [stepper]  scheme [implicit], dt [1e-3], newton_tol [1e-10],
             max_newton_iters [25], linear_tol [1e-10]
  [run]      t_end [1.0], snapshot_every [0 = only first/last],
             convergence_tol [none], consecutive [3]
  [steady]   m0, h0 (both default to the initial state's values),
             guess [constant | initial], tol [1e-11]
  [sweep]    mode [dt | constraints], dt_values, m0_values, h0_values,
             workers [cpu count]

``normalize_enthalpy`` shifts the constant coefficient of the coupling
polynomial so the initial enthalpy is exactly zero; the shift changes
neither the dynamics nor the energy, only the conserved value, and makes
the constrained energy coincide with the free energy along the run.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConstraintInfeasibleError
from .grid import Grid
from .io import read_snapshot
from .model import ModelFunctions, make_model, shift_lambda_offset
from .state import State, conserved_f
from .steady import _solve_b_equals
from .stepper import StepperConfig

__all__ = ["RunConfig", "parse_config", "build_problem"]

_VALID_SECTIONS = {"grid", "model", "initial", "stepper", "run", "steady", "sweep", "output"}
_VALID_KEYS = {
    "grid": {"dim", "cells", "lengths"},
    "model": {"phi", "lambda_coeffs", "b", "normalize_enthalpy"},
    "initial": {"kind", "psi_mean", "psi_amp", "theta_value", "seed",
                "tanh_center", "tanh_width", "snapshot_path", "theta_from_enthalpy"},
    "stepper": {"scheme", "dt", "newton_tol", "max_newton_iters", "linear_tol"},
    "run": {"t_end", "snapshot_every", "convergence_tol", "consecutive"},
    "steady": {"m0", "h0", "guess", "tol"},
    "sweep": {"mode", "dt_values", "m0_values", "h0_values", "workers"},
    "output": {"dir"},
}


@dataclass
class RunConfig:
    grid: Grid
    phi_name: str = "double_well"
    lam_coeffs: tuple[float, float, float] = (0.0, 1.0, 0.0)
    b_name: str = "inverse"
    normalize_enthalpy: bool = False
    initial_kind: str = "constant_noise"
    psi_mean: float = 0.0
    psi_amp: float = 0.05
    theta_value: float = 1.0
    theta_from_enthalpy: float | None = None
    seed: int = 0
    tanh_center: float | None = None
    tanh_width: float = 0.5
    snapshot_path: str | None = None
    stepper: StepperConfig = field(default_factory=lambda: StepperConfig(dt=1e-3))
    t_end: float = 1.0
    snapshot_every: int = 0
    convergence_tol: float | None = None
    consecutive: int = 3
    steady_m0: float | None = None
    steady_h0: float | None = None
    steady_guess: str = "constant"
    steady_tol: float = 1e-11
    sweep_mode: str | None = None
    sweep_dt_values: tuple[float, ...] = ()
    sweep_m0_values: tuple[float, ...] = ()
    sweep_h0_values: tuple[float, ...] = ()
    sweep_workers: int | None = None
    out_dir: str | None = None


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def parse_config(path) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from err

    for section in parser.sections():
        if section not in _VALID_SECTIONS:
            raise ConfigError(f"[{section}]: unknown section")
        for key in parser[section]:
            if key not in _VALID_KEYS[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {err}") from err

    def get_bool(section, key, default):
        if not parser.has_option(section, key):
            return default
        try:
            return parser.getboolean(section, key)
        except ValueError as err:
            raise ConfigError(f"[{section}] {key}: {err}") from err

    try:
        dim = get("grid", "dim", int, 1)
        default_cells = (64,) if dim == 1 else (32, 32)
        cells = get("grid", "cells", lambda s: tuple(int(v) for v in s.split(",")),
                    default_cells)
        lengths = get("grid", "lengths", _floats, (1.0,) * dim)
        if len(cells) != dim or len(lengths) != dim:
            raise ConfigError(
                f"[grid]: dim={dim} but cells={cells!r}, lengths={lengths!r}")
        grid = Grid(cells, lengths)
    except ValueError as err:
        raise ConfigError(f"[grid]: {err}") from err

    cfg = RunConfig(grid=grid)
    cfg.phi_name = get("model", "phi", str, cfg.phi_name)
    coeffs = get("model", "lambda_coeffs", _floats, cfg.lam_coeffs)
    if len(coeffs) != 3:
        raise ConfigError("[model] lambda_coeffs: need exactly 3 values")
    cfg.lam_coeffs = coeffs
    cfg.b_name = get("model", "b", str, cfg.b_name)
    cfg.normalize_enthalpy = get_bool("model", "normalize_enthalpy",
                                      cfg.normalize_enthalpy)

    cfg.initial_kind = get("initial", "kind", str, cfg.initial_kind)
    if cfg.initial_kind not in ("constant_noise", "tanh_interface", "snapshot"):
        raise ConfigError(f"[initial] kind = {cfg.initial_kind!r}: unknown kind")
    cfg.psi_mean = get("initial", "psi_mean", float, cfg.psi_mean)
    cfg.psi_amp = get("initial", "psi_amp", float, cfg.psi_amp)
    cfg.theta_value = get("initial", "theta_value", float, cfg.theta_value)
    cfg.theta_from_enthalpy = get("initial", "theta_from_enthalpy", float, None)
    cfg.seed = get("initial", "seed", int, cfg.seed)
    cfg.tanh_center = get("initial", "tanh_center", float, None)
    cfg.tanh_width = get("initial", "tanh_width", float, cfg.tanh_width)
    cfg.snapshot_path = get("initial", "snapshot_path", str, None)
    if cfg.theta_value <= 0.0:
        raise ConfigError("[initial] theta_value must be positive")
    if cfg.initial_kind == "snapshot" and not cfg.snapshot_path:
        raise ConfigError("[initial] snapshot kind needs snapshot_path")

    try:
        cfg.stepper = StepperConfig(
            dt=get("stepper", "dt", float, 1e-3),
            scheme=get("stepper", "scheme", str, "implicit"),
            newton_tol=get("stepper", "newton_tol", float, 1e-10),
            max_newton_iters=get("stepper", "max_newton_iters", int, 25),
            linear_tol=get("stepper", "linear_tol", float, 1e-10),
        )
    except ValueError as err:
        raise ConfigError(f"[stepper]: {err}") from err

    cfg.t_end = get("run", "t_end", float, cfg.t_end)
    if cfg.t_end < 0.0:
        raise ConfigError("[run] t_end must be nonnegative")
    cfg.snapshot_every = get("run", "snapshot_every", int, cfg.snapshot_every)
    cfg.convergence_tol = get("run", "convergence_tol", float, None)
    cfg.consecutive = get("run", "consecutive", int, cfg.consecutive)

    cfg.steady_m0 = get("steady", "m0", float, None)
    cfg.steady_h0 = get("steady", "h0", float, None)
    cfg.steady_guess = get("steady", "guess", str, cfg.steady_guess)
    cfg.steady_tol = get("steady", "tol", float, cfg.steady_tol)

    cfg.sweep_mode = get("sweep", "mode", str, None)
    if cfg.sweep_mode is not None and cfg.sweep_mode not in ("dt", "constraints"):
        raise ConfigError(f"[sweep] mode = {cfg.sweep_mode!r}: unknown mode")
    cfg.sweep_dt_values = get("sweep", "dt_values", _floats, ())
    cfg.sweep_m0_values = get("sweep", "m0_values", _floats, ())
    cfg.sweep_h0_values = get("sweep", "h0_values", _floats, ())
    cfg.sweep_workers = get("sweep", "workers", int, None)

    cfg.out_dir = get("output", "dir", str, None)
    return cfg


def build_problem(cfg: RunConfig, seed: int | None = None
                  ) -> tuple[Grid, ModelFunctions, State]:
    """Materialize grid, model, and initial state from a configuration.

    The optional ``seed`` overrides the configured one.  With
    ``normalize_enthalpy`` the coupling offset is shifted after the state
    is built so the run starts at exactly zero enthalpy.
    """
    grid = cfg.grid
    try:
        model = make_model(cfg.phi_name, cfg.lam_coeffs, cfg.b_name)
    except ValueError as err:
        raise ConfigError(f"[model]: {err}") from err
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    if cfg.initial_kind == "snapshot":
        state, _ = read_snapshot(cfg.snapshot_path)
        if state.grid != grid:
            raise ConfigError(
                f"snapshot grid {state.grid} does not match [grid] {grid}")
    else:
        if cfg.initial_kind == "constant_noise":
            noise = rng.uniform(-1.0, 1.0, grid.n_cells)
            noise -= noise.mean()
            psi = cfg.psi_mean + cfg.psi_amp * noise
        else:
            x = grid.coordinates()[0]
            center = cfg.tanh_center
            if center is None:
                center = 0.5 * grid.lengths[0]
            psi = cfg.psi_mean + cfg.psi_amp * np.tanh((x - center) / cfg.tanh_width)
        theta_value = cfg.theta_value
        if cfg.theta_from_enthalpy is not None:
            target = cfg.theta_from_enthalpy / grid.volume - float(
                np.mean(model.lam(psi)))
            try:
                theta_value = _solve_b_equals(model, target)
            except ConstraintInfeasibleError as err:
                raise ConfigError(f"[initial] theta_from_enthalpy: {err}") from err
        theta = np.full(grid.n_cells, theta_value)
        state = State(psi, theta, grid)

    if cfg.normalize_enthalpy:
        model = shift_lambda_offset(
            model, -conserved_f(state, model) / grid.volume)
    return grid, model, state
