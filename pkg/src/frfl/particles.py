"""Agent-based Cucker-Smale dynamics with the singular communication weight.

The ensemble lives on the same periodic box as the field solver; pairwise
distances use the minimal image convention and the weight follows the kernel
exponent d + alpha of the continuum model, capped below a regularization
radius so co-located particles stay well-defined.  A Gaussian deposition maps
an ensemble to density and velocity fields with unit total mass, which is how
particle experiments feed the spectral diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .spectral import Grid, ScalarField, VectorField

__all__ = [
    "ParticleEnsemble",
    "singular_weight",
    "cs_step",
    "velocity_diameter",
    "kinetic_fluctuation",
    "total_momentum",
    "deposit_fields",
]


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions and velocities of N >= 2 agents on a periodic box."""

    positions: np.ndarray
    velocities: np.ndarray
    box_length: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        vel = np.asarray(self.velocities, dtype=np.float64)
        if pos.ndim != 2 or vel.shape != pos.shape:
            raise ConfigurationError(
                f"positions and velocities must share shape (N, d), got {pos.shape} and {vel.shape}"
            )
        if pos.shape[0] < 2:
            raise ConfigurationError(f"ensemble needs at least two agents, got {pos.shape[0]}")
        if pos.shape[1] not in (1, 2):
            raise ConfigurationError(f"spatial dimension must be 1 or 2, got {pos.shape[1]}")
        if self.box_length <= 0.0:
            raise ConfigurationError(f"box length must be positive, got {self.box_length}")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise DomainError("ensemble state must be finite")
        pos = np.mod(pos, self.box_length)
        pos.setflags(write=False)
        vel = vel.copy()
        vel.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


def singular_weight(s, d: int, alpha: float, delta_reg: float):
    """Communication weight s^-(d+alpha), capped below the regularization radius."""
    if d not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {d}")
    if not (1.0 < alpha < 2.0):
        raise ConfigurationError(f"order must lie in (1, 2), got {alpha}")
    if delta_reg <= 0.0:
        raise ConfigurationError(f"regularization radius must be positive, got {delta_reg}")
    arr = np.asarray(s, dtype=np.float64)
    if np.any(arr < 0.0):
        raise DomainError("distances must be nonnegative")
    clipped = np.maximum(arr, delta_reg)
    out = clipped ** (-(d + alpha))
    if np.isscalar(s) or arr.ndim == 0:
        return float(out)
    return out


def _minimal_image(pos: np.ndarray, box_length: float) -> np.ndarray:
    diff = pos[np.newaxis, :, :] - pos[:, np.newaxis, :]
    return diff - box_length * np.round(diff / box_length)


def _alignment_rhs(
    pos: np.ndarray,
    vel: np.ndarray,
    box_length: float,
    alpha: float,
    delta_reg: float,
) -> tuple[np.ndarray, np.ndarray]:
    n, d = pos.shape
    diff = _minimal_image(pos, box_length)
    dist = np.sqrt(np.sum(diff**2, axis=2))
    weights = singular_weight(dist, d, alpha, delta_reg)
    np.fill_diagonal(weights, 0.0)
    dv = (weights @ vel - vel * weights.sum(axis=1)[:, np.newaxis]) / n
    return vel, dv


def cs_step(ensemble: ParticleEnsemble, dt: float, alpha: float, delta_reg: float) -> ParticleEnsemble:
    """One classical RK4 step of the pairwise alignment dynamics."""
    if dt <= 0.0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
    L = ensemble.box_length
    x0, v0 = ensemble.positions, ensemble.velocities

    k1x, k1v = _alignment_rhs(x0, v0, L, alpha, delta_reg)
    k2x, k2v = _alignment_rhs(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v, L, alpha, delta_reg)
    k3x, k3v = _alignment_rhs(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v, L, alpha, delta_reg)
    k4x, k4v = _alignment_rhs(x0 + dt * k3x, v0 + dt * k3v, L, alpha, delta_reg)

    x1 = x0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    v1 = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return ParticleEnsemble(x1, v1, L)


def velocity_diameter(ensemble: ParticleEnsemble) -> float:
    """Largest pairwise velocity distance."""
    vel = ensemble.velocities
    diff = vel[np.newaxis, :, :] - vel[:, np.newaxis, :]
    return float(np.max(np.sqrt(np.sum(diff**2, axis=2))))


def kinetic_fluctuation(ensemble: ParticleEnsemble) -> float:
    """Half the mean squared deviation from the mean velocity."""
    vel = ensemble.velocities
    centered = vel - np.mean(vel, axis=0, keepdims=True)
    return float(0.5 * np.mean(np.sum(centered**2, axis=1)))


def total_momentum(ensemble: ParticleEnsemble) -> np.ndarray:
    return np.mean(ensemble.velocities, axis=0)


def deposit_fields(
    ensemble: ParticleEnsemble,
    grid: Grid,
    kernel_width: float | None = None,
    rho_floor: float = 1e-12,
) -> tuple[ScalarField, VectorField]:
    """Gaussian deposition onto the grid: unit-mass density plus velocity.

    Each agent contributes a periodized Gaussian (images out to two boxes)
    normalized to integrate to exactly 1/N, so the total mass contract
    int rho = 1 holds at rounding level.  The velocity field is the momentum
    over the density where the density clears the floor, zero elsewhere.
    """
    if grid.d != ensemble.d:
        raise ConfigurationError(
            f"grid dimension {grid.d} does not match ensemble dimension {ensemble.d}"
        )
    if abs(grid.box_length - ensemble.box_length) > 1e-12 * grid.box_length:
        raise ConfigurationError("grid and ensemble boxes disagree")
    width = grid.spacing if kernel_width is None else float(kernel_width)
    if width < grid.spacing * (1.0 - 1e-12):
        raise ConfigurationError(
            f"kernel width {width:.3g} must be at least the grid spacing {grid.spacing:.3g}"
        )

    L = grid.box_length
    axes = [grid.x_axes[ax] for ax in range(grid.d)]
    mesh = np.meshgrid(*axes, indexing="ij") if grid.d > 1 else [axes[0]]
    images = np.arange(-2, 3) * L

    rho = np.zeros(grid.shape)
    momentum = [np.zeros(grid.shape) for _ in range(grid.d)]
    inv_two_w2 = 1.0 / (2.0 * width * width)
    for i in range(ensemble.n):
        bump = np.zeros(grid.shape)
        if grid.d == 1:
            dx = mesh[0] - ensemble.positions[i, 0]
            for sx in images:
                bump += np.exp(-((dx + sx) ** 2) * inv_two_w2)
        else:
            dx = mesh[0] - ensemble.positions[i, 0]
            dy = mesh[1] - ensemble.positions[i, 1]
            for sx in images:
                ex = np.exp(-((dx + sx) ** 2) * inv_two_w2)
                for sy in images:
                    bump += ex * np.exp(-((dy + sy) ** 2) * inv_two_w2)
        bump /= np.sum(bump) * grid.cell_volume
        rho += bump
        for ax in range(grid.d):
            momentum[ax] += ensemble.velocities[i, ax] * bump

    rho /= ensemble.n
    u_comps = []
    for ax in range(grid.d):
        mom = momentum[ax] / ensemble.n
        u_comps.append(np.where(rho > rho_floor, mom / np.where(rho > rho_floor, rho, 1.0), 0.0))
    return (
        ScalarField.from_values(grid, rho),
        VectorField.from_values(grid, u_comps),
    )
