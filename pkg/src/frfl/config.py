"""Key-value run configuration: defaults, file loading, overrides, realization.

The file format is INI with sections mirroring the package modules.  Initial
data comes either from a mode list ("m:amp:phase" per term, wavevector first;
two integers "m1 m2" in 2D) realized as amp*cos(m.x + phase), or from field
snapshot files.  Command-line overrides ("section.key=value") win over file
values, which win over defaults; the fully resolved table is echoed into
every run summary so a run can be reproduced from its own output.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .snapshots import read_snapshot
from .spectral import Grid, ScalarField, VectorField, make_grid
from .system import RunConfig

__all__ = [
    "DEFAULTS",
    "ParticleRunSettings",
    "DiagnosticsSettings",
    "load_config",
    "apply_overrides",
    "config_echo",
    "parse_mode_list",
    "realize_modes",
    "build_run_config",
    "build_particle_settings",
    "build_diagnostics_settings",
]

DEFAULTS: dict[str, dict[str, str]] = {
    "spectral_core": {
        "dimension": "1",
        "resolution": "256",
        "box_length": repr(2.0 * math.pi),
    },
    "euler_alignment": {
        "alpha": "1.5",
        "t_final": "1.0",
        "dt": "0.005",
        "scheme": "direct",
        "duhamel_rule": "2",
        "n_max": "20",
        "n0": "",
        "stop_tol": "1e-8",
        "epsilon_gate": "1e-2",
        "eta_gate": "1e-2",
    },
    "linear_solvers": {
        "rk_order": "3",
        "cfl_max": "0.5",
    },
    "initial": {
        "sigma_modes": "",
        "u0_modes": "",
        "u1_modes": "",
        "sigma_snapshot": "",
        "u0_snapshot": "",
        "u1_snapshot": "",
    },
    "output": {
        "snapshot_stride": "0",
        "record_stride": "1",
        "iterate_store_stride": "1",
    },
    "particles": {
        "count": "64",
        "dt": "0.01",
        "t_final": "5.0",
        "delta_reg": "0.05",
        "velocity_scale": "0.1",
        "record_stride": "10",
        "kernel_width": "",
    },
    "diagnostics": {
        "harness_samples": "100",
        "harness_grids": "64 128 256",
        "decay_fraction": "0.1",
        "scaling_lambda": "2",
        "scaling_tolerance": "1e-6",
    },
}


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(DEFAULTS)
    return parser


def load_config(path: str | None) -> configparser.ConfigParser:
    """Defaults, then the file when given; unknown sections or keys fail."""
    parser = _new_parser()
    if path is None:
        return parser
    loaded = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            loaded.read_file(fh)
    except OSError as err:
        raise ConfigurationError(f"cannot read config file {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigurationError(f"cannot parse config file {path}: {err}") from err
    for section in loaded.sections():
        if section not in DEFAULTS:
            raise ConfigurationError(
                f"unknown config section [{section}]; known: {', '.join(sorted(DEFAULTS))}"
            )
        for key, value in loaded.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigurationError(
                    f"unknown key {key!r} in section [{section}]"
                )
            parser.set(section, key, value)
    return parser


def apply_overrides(parser: configparser.ConfigParser, overrides: list[str]) -> None:
    """Apply repeatable "section.key=value" entries; they win over the file."""
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigurationError(f"override target {target!r} must look like section.key")
        section, key = target.split(".", 1)
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigurationError(f"unknown override target {target!r}")
        parser.set(section, key, value)


def config_echo(parser: configparser.ConfigParser) -> dict:
    return {section: dict(parser.items(section)) for section in parser.sections()}


def _get_float(parser, section, key) -> float:
    raw = parser.get(section, key)
    try:
        return float(raw)
    except ValueError as err:
        raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a number") from err


def _get_int(parser, section, key) -> int:
    raw = parser.get(section, key)
    try:
        return int(raw)
    except ValueError as err:
        raise ConfigurationError(f"[{section}] {key} = {raw!r} is not an integer") from err


def parse_mode_list(text: str, d: int) -> list[tuple[tuple[int, ...], float, float]]:
    """Comma-separated "m:amp:phase" terms; the wavevector has d integers."""
    modes = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigurationError(
                f"mode term {chunk!r} must look like m:amplitude:phase"
            )
        wave = parts[0].split()
        if len(wave) != d:
            raise ConfigurationError(
                f"mode term {chunk!r} needs {d} wavevector components"
            )
        try:
            mvec = tuple(int(w) for w in wave)
            amp = float(parts[1])
            phase = float(parts[2])
        except ValueError as err:
            raise ConfigurationError(f"mode term {chunk!r} has a bad number") from err
        modes.append((mvec, amp, phase))
    return modes


def realize_modes(grid: Grid, modes) -> ScalarField:
    vals = np.zeros(grid.shape)
    if grid.d == 1:
        x = grid.x_axes[0]
        for mvec, amp, phase in modes:
            vals += amp * np.cos(mvec[0] * x + phase)
    else:
        xs = np.meshgrid(*[grid.x_axes[ax] for ax in range(grid.d)], indexing="ij")
        for mvec, amp, phase in modes:
            arg = sum(m * ax for m, ax in zip(mvec, xs))
            vals += amp * np.cos(arg + phase)
    return ScalarField.from_values(grid, vals)


def _load_field(parser, grid: Grid, modes_key: str, snapshot_key: str, label: str) -> ScalarField:
    modes_text = parser.get("initial", modes_key).strip()
    snap_path = parser.get("initial", snapshot_key).strip()
    if modes_text and snap_path:
        raise ConfigurationError(
            f"{label}: give either {modes_key} or {snapshot_key}, not both"
        )
    if snap_path:
        field, _ = read_snapshot(snap_path)
        if field.grid.fingerprint != grid.fingerprint:
            raise ConfigurationError(
                f"{label}: snapshot grid {field.grid.fingerprint} does not match "
                f"configured grid {grid.fingerprint}"
            )
        return field
    return realize_modes(grid, parse_mode_list(modes_text, grid.d))


def build_grid(parser) -> Grid:
    d = _get_int(parser, "spectral_core", "dimension")
    n = _get_int(parser, "spectral_core", "resolution")
    box = _get_float(parser, "spectral_core", "box_length")
    return make_grid(d, n, box)


def build_run_config(parser) -> RunConfig:
    grid = build_grid(parser)
    sigma0 = _load_field(parser, grid, "sigma_modes", "sigma_snapshot", "initial density deviation")
    comps = [_load_field(parser, grid, "u0_modes", "u0_snapshot", "initial velocity axis 0")]
    if grid.d == 2:
        comps.append(_load_field(parser, grid, "u1_modes", "u1_snapshot", "initial velocity axis 1"))
    elif parser.get("initial", "u1_modes").strip() or parser.get("initial", "u1_snapshot").strip():
        raise ConfigurationError("axis-1 initial velocity given for a one-dimensional run")
    n0_raw = parser.get("euler_alignment", "n0").strip()
    return RunConfig(
        grid=grid,
        alpha=_get_float(parser, "euler_alignment", "alpha"),
        T_final=_get_float(parser, "euler_alignment", "t_final"),
        dt=_get_float(parser, "euler_alignment", "dt"),
        sigma0=sigma0,
        u0=VectorField(comps),
        scheme=parser.get("euler_alignment", "scheme"),
        duhamel_rule=_get_int(parser, "euler_alignment", "duhamel_rule"),
        rk_order=_get_int(parser, "linear_solvers", "rk_order"),
        cfl_max=_get_float(parser, "linear_solvers", "cfl_max"),
        n_max=_get_int(parser, "euler_alignment", "n_max"),
        n0=None if not n0_raw else int(n0_raw),
        stop_tol=_get_float(parser, "euler_alignment", "stop_tol"),
        epsilon_gate=_get_float(parser, "euler_alignment", "epsilon_gate"),
        eta_gate=_get_float(parser, "euler_alignment", "eta_gate"),
        snapshot_stride=_get_int(parser, "output", "snapshot_stride"),
        record_stride=_get_int(parser, "output", "record_stride"),
        iterate_store_stride=_get_int(parser, "output", "iterate_store_stride"),
    )


@dataclass(frozen=True)
class ParticleRunSettings:
    count: int
    dt: float
    t_final: float
    alpha: float
    delta_reg: float
    velocity_scale: float
    record_stride: int
    box_length: float
    kernel_width: float | None
    dimension: int


def build_particle_settings(parser) -> ParticleRunSettings:
    kernel_raw = parser.get("particles", "kernel_width").strip()
    settings = ParticleRunSettings(
        count=_get_int(parser, "particles", "count"),
        dt=_get_float(parser, "particles", "dt"),
        t_final=_get_float(parser, "particles", "t_final"),
        alpha=_get_float(parser, "euler_alignment", "alpha"),
        delta_reg=_get_float(parser, "particles", "delta_reg"),
        velocity_scale=_get_float(parser, "particles", "velocity_scale"),
        record_stride=_get_int(parser, "particles", "record_stride"),
        box_length=_get_float(parser, "spectral_core", "box_length"),
        kernel_width=None if not kernel_raw else float(kernel_raw),
        dimension=_get_int(parser, "spectral_core", "dimension"),
    )
    if settings.count < 2:
        raise ConfigurationError(f"particle count must be >= 2, got {settings.count}")
    if settings.dt <= 0.0 or settings.t_final < 0.0:
        raise ConfigurationError("particle march needs dt > 0 and t_final >= 0")
    if settings.record_stride < 1:
        raise ConfigurationError("particle record stride must be >= 1")
    return settings


@dataclass(frozen=True)
class DiagnosticsSettings:
    harness_samples: int
    harness_grids: tuple[int, ...]
    decay_fraction: float
    scaling_lambda: int
    scaling_tolerance: float


def build_diagnostics_settings(parser) -> DiagnosticsSettings:
    grids_raw = parser.get("diagnostics", "harness_grids").split()
    try:
        grids = tuple(int(g) for g in grids_raw)
    except ValueError as err:
        raise ConfigurationError(
            f"[diagnostics] harness_grids must be integers, got {grids_raw}"
        ) from err
    if not grids:
        raise ConfigurationError("[diagnostics] harness_grids must not be empty")
    return DiagnosticsSettings(
        harness_samples=_get_int(parser, "diagnostics", "harness_samples"),
        harness_grids=grids,
        decay_fraction=_get_float(parser, "diagnostics", "decay_fraction"),
        scaling_lambda=_get_int(parser, "diagnostics", "scaling_lambda"),
        scaling_tolerance=_get_float(parser, "diagnostics", "scaling_tolerance"),
    )


def render_config(parser) -> str:
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
