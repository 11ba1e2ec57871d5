"""Flat key-value experiment manifests.

The format is deliberately plain so manifests diff cleanly: one
``section.key = value`` per line, ``#`` comments, commas separating the
entries of small tuples.  Jump atoms repeat a key, one atom per line.
parse_config(render(config)) returns an equal Config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Tuple

import numpy as np

from .diagnostics import EnergyConstants
from .errors import AssumptionViolation, ConfigInvalid, ParseError
from .grid import build_grid, scalar_field, vector_field, zero_vector_field
from .model import Kinetics, ModelParams, make_noise_coefficients
from .noise import JumpSpec
from .operators import OperatorWorkspace, leray_project
from .stepper import State, StepConfig


@dataclass(frozen=True)
class GridBlock:
    dim: int = 2
    extents: Tuple[float, ...] = (1.0, 1.0)
    resolution: Tuple[int, ...] = (64, 64)
    bc: str = "periodic"


@dataclass(frozen=True)
class ModelBlock:
    kinetics: str = "prototype"
    chi: float = 1.0
    f_scale: float = 1.0
    eps: float = 0.1
    diffusion: Tuple[float, ...] = (1.0, 1.0, 0.05)
    phi: str = "zero"            # zero | cosine
    phi_amplitude: float = 0.2
    phi_axis: int = 1
    c_dagger: float = 1.0
    d1: float = 1.0
    d2: float = 1.0
    big_c: float = 0.0


@dataclass(frozen=True)
class InitBlock:
    n0: str = "gaussian-bump"    # gaussian-bump | constant | snapshot
    n0_base: float = 0.1
    n0_amplitude: float = 1.0
    n0_width: float = 0.15
    n0_value: float = 1.0
    n0_path: str = ""
    c0: str = "constant"         # constant | bump | snapshot
    c0_value: float = 1.0
    c0_base: float = 0.5
    c0_amplitude: float = 0.5
    c0_width: float = 0.2
    c0_path: str = ""
    u0: str = "zero"             # zero | taylor-green | snapshot
    u0_amplitude: float = 1.0
    u0_paths: Tuple[str, ...] = ()


@dataclass(frozen=True)
class NoiseBlock:
    modes: int = 4
    psi: str = "shear"           # shear | taylor-green
    psi_amplitude: float = 1.0
    h_gain: float = 0.0
    jump_small: Tuple[Tuple[float, float], ...] = ()
    jump_large: Tuple[Tuple[float, float], ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class RunBlock:
    t_final: float = 0.1
    dt: float = 1e-3
    cfl_safety: float = 0.9
    record_every: int = 1
    snapshot_times: Tuple[float, ...] = ()


@dataclass(frozen=True)
class EnsembleBlock:
    paths: int = 100


@dataclass(frozen=True)
class Config:
    grid: GridBlock = field(default_factory=GridBlock)
    model: ModelBlock = field(default_factory=ModelBlock)
    init: InitBlock = field(default_factory=InitBlock)
    noise: NoiseBlock = field(default_factory=NoiseBlock)
    run: RunBlock = field(default_factory=RunBlock)
    ensemble: EnsembleBlock = field(default_factory=EnsembleBlock)


def _to_int(token):
    return int(token.strip())


def _to_float(token):
    return float(token.strip())


def _to_str(token):
    return token.strip()


def _tuple_of(conv):
    def convert(token):
        parts = [p.strip() for p in token.split(",")]
        parts = [p for p in parts if p]
        return tuple(conv(p) for p in parts)
    return convert


def _atom(token):
    pair = _tuple_of(_to_float)(token)
    if len(pair) != 2:
        raise ValueError(f"jump atom needs 'z, rate', got {token!r}")
    return pair


def _converter_for(annotation):
    scalars = {"int": _to_int, "float": _to_float, "str": _to_str}
    name = str(annotation)
    if name in scalars:
        return scalars[name]
    for inner, conv in scalars.items():
        if f"[{inner}" in name:
            return _tuple_of(conv)
    raise TypeError(f"no converter for config field type {name!r}")


_BLOCKS = (("grid", GridBlock), ("model", ModelBlock), ("init", InitBlock),
           ("noise", NoiseBlock), ("run", RunBlock),
           ("ensemble", EnsembleBlock))

# dotted key -> (block name, field name, converter); built from the block
# dataclasses so the registry and render order cannot drift apart
_SCHEMA = {}
for _bname, _bcls in _BLOCKS:
    for _f in fields(_bcls):
        if _f.name in ("jump_small", "jump_large"):
            continue
        _SCHEMA[f"{_bname}.{_f.name}"] = (
            _bname, _f.name, _converter_for(_f.type))

_REPEATED = {
    "noise.jump.small": ("noise", "jump_small", _atom),
    "noise.jump.large": ("noise", "jump_large", _atom),
}


def parse_config(text):
    """Parse and fully validate a flat key-value manifest.

    Raises ParseError for malformed lines or unknown keys, and
    AssumptionViolation for configurations that violate a standing
    assumption (non-negativity of the initial data, kinetics sign
    conditions, the jump-size partition).
    """
    staged = {name: {} for name in ("grid", "model", "init", "noise",
                                    "run", "ensemble")}
    repeated = {key: [] for key in _REPEATED}
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _REPEATED:
            block, name, conv = _REPEATED[key]
            try:
                repeated[key].append(conv(value))
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
            continue
        if key not in _SCHEMA:
            raise ParseError(line_no, f"unknown key {key!r}")
        if key in seen:
            raise ParseError(line_no, f"duplicate key {key!r}")
        seen.add(key)
        block, name, conv = _SCHEMA[key]
        try:
            staged[block][name] = conv(value)
        except ValueError as exc:
            raise ParseError(line_no, f"bad value for {key}: {exc}") from None
    for key, atoms in repeated.items():
        if atoms:
            block, name, _ = _REPEATED[key]
            staged[block][name] = tuple(atoms)
    config = Config(
        grid=GridBlock(**staged["grid"]),
        model=ModelBlock(**staged["model"]),
        init=InitBlock(**staged["init"]),
        noise=NoiseBlock(**staged["noise"]),
        run=RunBlock(**staged["run"]),
        ensemble=EnsembleBlock(**staged["ensemble"]),
    )
    validate_config(config)
    return config


def _format_value(value):
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def render(config):
    """Canonical text form; parse_config(render(c)) == c."""
    lines = []
    for bname, _ in _BLOCKS:
        block = getattr(config, bname)
        for f in fields(block):
            value = getattr(block, f.name)
            if f.name == "jump_small":
                lines.extend(f"noise.jump.small = {_format_value(a)}"
                             for a in value)
            elif f.name == "jump_large":
                lines.extend(f"noise.jump.large = {_format_value(a)}"
                             for a in value)
            elif f.name == "u0_paths" and not value:
                continue
            else:
                lines.append(f"{bname}.{f.name} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def validate_config(config):
    """Eagerly build every derived object so violations surface here."""
    grid = build_grid(config.grid.dim, config.grid.extents,
                      config.grid.resolution, config.grid.bc)
    _kinetics(config.model)
    _jump_spec(config.noise)
    if config.model.eps <= 0:
        raise ConfigInvalid(f"eps must be positive, got {config.model.eps}")
    if config.run.t_final < 0:
        raise ConfigInvalid("run.t_final must be nonnegative")
    if config.ensemble.paths < 2:
        raise ConfigInvalid("ensemble.paths must be at least 2")
    if config.init.n0 not in ("gaussian-bump", "constant", "snapshot"):
        raise ConfigInvalid(f"unknown init.n0 kind {config.init.n0!r}")
    if config.init.c0 not in ("constant", "bump", "snapshot"):
        raise ConfigInvalid(f"unknown init.c0 kind {config.init.c0!r}")
    if config.init.u0 not in ("zero", "taylor-green", "snapshot"):
        raise ConfigInvalid(f"unknown init.u0 kind {config.init.u0!r}")
    if config.model.phi not in ("zero", "cosine"):
        raise ConfigInvalid(f"unknown model.phi kind {config.model.phi!r}")
    if config.noise.psi not in ("shear", "taylor-green"):
        raise ConfigInvalid(f"unknown noise.psi kind {config.noise.psi!r}")
    if config.init.n0 != "snapshot" and config.init.c0 != "snapshot":
        _initial_scalars(config, grid)
    return grid


def _kinetics(model):
    return Kinetics(chi_value=model.chi, f_scale=model.f_scale)


def _jump_spec(noise):
    if not noise.jump_small and not noise.jump_large:
        return None
    return JumpSpec(small_atoms=noise.jump_small,
                    large_atoms=noise.jump_large)


def _initial_scalars(config, grid):
    init = config.init
    meshes = grid.meshgrid()
    if init.n0 == "constant":
        n_vals = np.full(grid.resolution, float(init.n0_value))
    elif init.n0 == "gaussian-bump":
        n_vals = init.n0_base + init.n0_amplitude * _bump(
            grid, meshes, init.n0_width)
    else:
        n_vals = _load_scalar(init.n0_path, grid)
    if float(n_vals.min()) < 0.0:
        raise AssumptionViolation(
            "(A1)", f"initial density has negative cells "
                    f"(min {n_vals.min():.3e})")
    if float(n_vals.max()) <= 0.0:
        raise AssumptionViolation("(A1)", "initial density vanishes "
                                          "identically")
    if init.c0 == "constant":
        c_vals = np.full(grid.resolution, float(init.c0_value))
    elif init.c0 == "bump":
        c_vals = init.c0_base + init.c0_amplitude * _bump(
            grid, meshes, init.c0_width)
    else:
        c_vals = _load_scalar(init.c0_path, grid)
    if float(c_vals.min()) < 0.0:
        raise AssumptionViolation(
            "(A1)", f"initial substrate has negative cells "
                    f"(min {c_vals.min():.3e})")
    return n_vals, c_vals


def _bump(grid, meshes, width):
    if width <= 0:
        raise ConfigInvalid(f"bump width must be positive, got {width}")
    r_sq = sum((x - 0.5 * ext) ** 2
               for x, ext in zip(meshes, grid.extents))
    return np.exp(-r_sq / (2.0 * width**2))


def _load_scalar(path, grid):
    from .recio import read_snapshot

    if not path:
        raise ConfigInvalid("snapshot initial data needs a file path")
    snap = read_snapshot(path)
    if snap.field.grid.resolution != grid.resolution or \
            snap.field.grid.extents != grid.extents:
        raise ConfigInvalid(
            f"snapshot grid {snap.field.grid.resolution} does not match "
            f"config grid {grid.resolution}")
    return snap.field.values


@dataclass
class Setup:
    """Everything a run needs, materialized from a Config."""

    grid: object
    ws: OperatorWorkspace
    initial: State
    params: ModelParams
    step_config: StepConfig
    t_final: float
    snapshot_times: tuple
    seed: int
    ensemble_paths: int
    constants: EnergyConstants


def build_setup(config):
    """Materialize grid, fields, parameters, and stepping config.

    The initial velocity is always Leray-projected, so named data and
    snapshots alike satisfy the divergence-free requirement.
    """
    grid = validate_config(config)
    ws = OperatorWorkspace(grid)
    meshes = grid.meshgrid()
    n_vals, c_vals = _initial_scalars(config, grid)
    n0 = scalar_field(grid, n_vals)
    c0 = scalar_field(grid, c_vals)
    u0_raw = _initial_velocity(config.init, grid, meshes)
    u0, _ = leray_project(u0_raw, ws)

    model = config.model
    phi_vals = np.zeros(grid.resolution)
    if model.phi == "cosine":
        axis = model.phi_axis % grid.dim
        x = meshes[axis]
        phi_vals = model.phi_amplitude * np.cos(
            2.0 * np.pi * x / grid.extents[axis])
    phi = scalar_field(grid, phi_vals)

    psi = _psi_field(config.noise, grid, meshes)
    coeffs = make_noise_coefficients(psi, config.noise.h_gain,
                                     config.noise.modes,
                                     _jump_spec(config.noise), ws)
    params = ModelParams(_kinetics(model), phi, model.eps, coeffs,
                         tuple(model.diffusion))
    step_cfg = StepConfig(dt=config.run.dt,
                          cfl_safety=config.run.cfl_safety,
                          record_every=config.run.record_every)
    constants = EnergyConstants(c_dagger=model.c_dagger, d1=model.d1,
                                d2=model.d2, big_c=model.big_c)
    return Setup(
        grid=grid,
        ws=ws,
        initial=State(0.0, n0, c0, u0),
        params=params,
        step_config=step_cfg,
        t_final=config.run.t_final,
        snapshot_times=tuple(config.run.snapshot_times),
        seed=config.noise.seed,
        ensemble_paths=config.ensemble.paths,
        constants=constants,
    )


def _initial_velocity(init, grid, meshes):
    if init.u0 == "zero":
        return zero_vector_field(grid)
    if init.u0 == "taylor-green":
        if grid.dim != 2:
            raise ConfigInvalid("taylor-green initial velocity is 2D only")
        x = 2.0 * np.pi * meshes[0] / grid.extents[0]
        y = 2.0 * np.pi * meshes[1] / grid.extents[1]
        a = init.u0_amplitude
        return vector_field(grid, (a * np.sin(x) * np.cos(y),
                                   -a * np.cos(x) * np.sin(y)))
    from .recio import read_snapshot

    if len(init.u0_paths) != grid.dim:
        raise ConfigInvalid(f"init.u0_paths needs {grid.dim} components, "
                            f"got {len(init.u0_paths)}")
    comps = [read_snapshot(p).field.values for p in init.u0_paths]
    return vector_field(grid, tuple(comps))


def _psi_field(noise, grid, meshes):
    a = noise.psi_amplitude
    if noise.psi == "shear":
        y = 2.0 * np.pi * meshes[1 % grid.dim] / grid.extents[1 % grid.dim]
        arrays = [np.zeros(grid.resolution) for _ in range(grid.dim)]
        arrays[0] = a * np.sin(y)
        return vector_field(grid, tuple(arrays))
    if grid.dim != 2:
        raise ConfigInvalid("taylor-green noise direction is 2D only")
    x = 2.0 * np.pi * meshes[0] / grid.extents[0]
    y = 2.0 * np.pi * meshes[1] / grid.extents[1]
    return vector_field(grid, (a * np.sin(x) * np.cos(y),
                               -a * np.cos(x) * np.sin(y)))
