"""Periodic grid, real fields, and Fourier-multiplier operators.

Everything lives on a uniform grid over the torus [0, L)^d with d in {1, 2}
and a power-of-two point count N per axis.  The discrete wavevectors are
k = (2*pi/L) * m with integer m in {-N/2, ..., N/2 - 1} per axis, stored in
FFT layout so multiplier arrays align with transform output.

A field keeps at most two synchronized representations: real samples
(float64, row-major) and spectral coefficients (complex128, unnormalized
numpy FFT convention).  Construction fixes which one is authoritative and the
other is materialized lazily; fields are not mutated in place, so the two can
never drift apart.  Operators that are diagonal in Fourier space (fractional
Laplacian, gradient, divergence, dealiasing, dyadic blocks) act on the
spectral representation and return fields whose spectral side is
authoritative, which keeps compositions such as div(grad(f)) exact at the
multiplier level.  Physical samples are the real part of the inverse
transform.

Discrete L^p norms carry the cell volume (L/N)^d so they approximate the
continuum integrals.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft as _fft

from .errors import ConfigurationError, DomainError
from .runtime import fft_workers

__all__ = [
    "Grid",
    "make_grid",
    "ScalarField",
    "VectorField",
    "to_spectral",
    "to_physical",
    "fractional_laplacian",
    "gradient",
    "divergence",
    "dealias",
    "dealiased_product",
    "advective_term",
]

DEFAULT_BOX_LENGTH = 2.0 * math.pi


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class Grid:
    """Uniform periodic grid with cached wavevector arrays."""

    __slots__ = (
        "d",
        "n",
        "box_length",
        "shape",
        "spacing",
        "cell_volume",
        "k_axes",
        "k_stack",
        "k_norm",
        "x_axes",
        "_pow_cache",
        "_dealias_mask",
    )

    def __init__(self, d: int, n_per_axis: int, box_length: float = DEFAULT_BOX_LENGTH):
        if d not in (1, 2):
            raise ConfigurationError(
                f"spatial dimension must be 1 or 2, got {d}"
            )
        if not isinstance(n_per_axis, (int, np.integer)) or not _is_power_of_two(int(n_per_axis)) or n_per_axis < 8:
            raise ConfigurationError(
                f"points per axis must be a power of two >= 8, got {n_per_axis}"
            )
        if not (box_length > 0.0 and math.isfinite(box_length)):
            raise ConfigurationError(f"box length must be positive and finite, got {box_length}")
        self.d = int(d)
        self.n = int(n_per_axis)
        self.box_length = float(box_length)
        self.shape = (self.n,) * self.d
        self.spacing = self.box_length / self.n
        self.cell_volume = self.spacing**self.d

        base = 2.0 * math.pi / self.box_length
        # fftfreq(n) * n is the integer mode set {-N/2, ..., N/2 - 1} in FFT order
        modes = np.fft.fftfreq(self.n) * self.n
        k1 = base * modes
        self.k_axes = [k1.copy() for _ in range(self.d)]
        if self.d == 1:
            self.k_stack = k1[np.newaxis, :].copy()
        else:
            kx, ky = np.meshgrid(k1, k1, indexing="ij")
            self.k_stack = np.stack([kx, ky])
        self.k_norm = np.sqrt(np.sum(self.k_stack**2, axis=0))
        x1 = self.spacing * np.arange(self.n)
        self.x_axes = [x1.copy() for _ in range(self.d)]
        self._pow_cache: dict[float, np.ndarray] = {}
        self._dealias_mask = None

    # -- identity ---------------------------------------------------------

    @property
    def fingerprint(self) -> tuple:
        return (self.d, self.n, self.box_length)

    def compatible(self, other: "Grid") -> bool:
        return self.fingerprint == other.fingerprint

    def __repr__(self) -> str:  # pragma: no cover
        return f"Grid(d={self.d}, n={self.n}, box_length={self.box_length!r})"

    # -- cached multiplier ingredients -----------------------------------

    def k_norm_pow(self, alpha: float) -> np.ndarray:
        """|k|^alpha with the zero mode set to zero, cached per exponent."""
        key = float(alpha)
        cached = self._pow_cache.get(key)
        if cached is None:
            with np.errstate(divide="ignore"):
                cached = np.where(self.k_norm > 0.0, self.k_norm, 1.0) ** key
            cached[self.k_norm == 0.0] = 0.0
            cached.setflags(write=False)
            self._pow_cache[key] = cached
        return cached

    def dealias_mask(self) -> np.ndarray:
        """Two-thirds-rule mask: keep modes with |k_i| <= (2/3)(N/2)(2pi/L)."""
        if self._dealias_mask is None:
            cutoff = (2.0 / 3.0) * (self.n / 2.0) * (2.0 * math.pi / self.box_length)
            mask = np.ones(self.shape, dtype=bool)
            for axis, k1 in enumerate(self.k_axes):
                shape = [1] * self.d
                shape[axis] = self.n
                mask &= np.abs(k1).reshape(shape) <= cutoff
            mask = mask.astype(np.float64)
            mask.setflags(write=False)
            self._dealias_mask = mask
        return self._dealias_mask

    def meshgrid(self) -> list[np.ndarray]:
        if self.d == 1:
            return [self.x_axes[0]]
        return list(np.meshgrid(*self.x_axes, indexing="ij"))


def make_grid(d: int, n_per_axis: int, box_length: float = DEFAULT_BOX_LENGTH) -> Grid:
    return Grid(d, n_per_axis, box_length)


def _fftn(values: np.ndarray) -> np.ndarray:
    return _fft.fftn(values, workers=fft_workers())


def _ifftn(coeffs: np.ndarray) -> np.ndarray:
    return _fft.ifftn(coeffs, workers=fft_workers())


class ScalarField:
    """Real scalar field with lazily synchronized sample/spectral data."""

    __slots__ = ("grid", "_values", "_spectral")

    def __init__(self, grid: Grid, values: np.ndarray | None, spectral: np.ndarray | None):
        if values is None and spectral is None:
            raise ConfigurationError("field needs at least one representation")
        self.grid = grid
        self._values = values
        self._spectral = spectral

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray) -> "ScalarField":
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != grid.shape:
            raise ConfigurationError(f"sample shape {arr.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("field samples must be finite")
        return cls(grid, arr.copy(), None)

    @classmethod
    def from_spectral(cls, grid: Grid, coeffs: np.ndarray) -> "ScalarField":
        arr = np.asarray(coeffs, dtype=np.complex128)
        if arr.shape != grid.shape:
            raise ConfigurationError(f"coefficient shape {arr.shape} does not match grid {grid.shape}")
        return cls(grid, None, arr.copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), None)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "ScalarField":
        return cls.from_values(grid, fn(*grid.meshgrid()))

    # -- representations --------------------------------------------------

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            samples = _ifftn(self._spectral).real
            if not np.all(np.isfinite(samples)):
                raise DomainError("field samples must be finite")
            self._values = samples
        return self._values

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            self._spectral = _fftn(self._values)
        return self._spectral

    def has_values(self) -> bool:
        return self._values is not None

    def has_spectral(self) -> bool:
        return self._spectral is not None

    # -- reductions -------------------------------------------------------

    def mean(self) -> float:
        if self._values is not None:
            return float(np.mean(self._values))
        return float(self._spectral.flat[0].real) / self.grid.n**self.grid.d

    def lp_norm(self, p: float) -> float:
        """Cell-volume-weighted discrete L^p norm."""
        v = self.values
        if math.isinf(p):
            return float(np.max(np.abs(v)))
        return float((np.sum(np.abs(v) ** p) * self.grid.cell_volume) ** (1.0 / p))

    def l2_norm(self) -> float:
        return self.lp_norm(2.0)

    def linf(self) -> float:
        return self.lp_norm(math.inf)

    # -- algebra ----------------------------------------------------------

    def _binary(self, other: "ScalarField", op) -> "ScalarField":
        if not self.grid.compatible(other.grid):
            raise ConfigurationError("fields live on incompatible grids")
        spectral_ready = self._spectral is not None and other._spectral is not None
        values_ready = self._values is not None and other._values is not None
        if spectral_ready and not values_ready:
            return ScalarField(self.grid, None, op(self._spectral, other._spectral))
        return ScalarField.from_values(self.grid, op(self.values, other.values))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return self._binary(other, np.add)
        return ScalarField.from_values(self.grid, self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return self._binary(other, np.subtract)
        return ScalarField.from_values(self.grid, self.values - float(other))

    def __rsub__(self, other):
        return ScalarField.from_values(self.grid, float(other) - self.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            # plain pointwise product; use dealiased_product for solver terms
            return ScalarField.from_values(self.grid, self.values * other.values)
        c = float(other)
        if self._spectral is not None and self._values is None:
            return ScalarField(self.grid, None, self._spectral * c)
        return ScalarField.from_values(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    # -- spectral surgery -------------------------------------------------

    def apply_multiplier(self, multiplier: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, None, self.spectral * multiplier)

    def remove_mean(self) -> "ScalarField":
        coeffs = self.spectral.copy()
        coeffs.flat[0] = 0.0
        return ScalarField(self.grid, None, coeffs)

    def copy(self) -> "ScalarField":
        return ScalarField(
            self.grid,
            None if self._values is None else self._values.copy(),
            None if self._spectral is None else self._spectral.copy(),
        )

    def as_values_only(self) -> "ScalarField":
        """Canonical handoff form: samples authoritative, spectral dropped.

        Stepping loops end every step here so a run restarted from a sample
        snapshot retraces the original run bit for bit.
        """
        return ScalarField(self.grid, self.values.copy(), None)


class VectorField:
    """Tuple of scalar components sharing one grid."""

    __slots__ = ("components",)

    def __init__(self, components: Sequence[ScalarField]):
        comps = tuple(components)
        if not comps:
            raise ConfigurationError("vector field needs at least one component")
        grid = comps[0].grid
        for c in comps[1:]:
            if not grid.compatible(c.grid):
                raise ConfigurationError("vector components live on incompatible grids")
        self.components = comps

    @classmethod
    def zeros(cls, grid: Grid, n_components: int | None = None) -> "VectorField":
        n = grid.d if n_components is None else n_components
        return cls([ScalarField.zeros(grid) for _ in range(n)])

    @classmethod
    def from_values(cls, grid: Grid, stacked: np.ndarray) -> "VectorField":
        arr = np.asarray(stacked, dtype=np.float64)
        return cls([ScalarField.from_values(grid, arr[i]) for i in range(arr.shape[0])])

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def n_components(self) -> int:
        return len(self.components)

    def stacked_values(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    def linf(self) -> float:
        mag2 = sum(c.values**2 for c in self.components)
        return float(math.sqrt(np.max(mag2)))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField([a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, scalar) -> "VectorField":
        return VectorField([c * scalar for c in self.components])

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return self * (-1.0)

    def __truediv__(self, scalar) -> "VectorField":
        return self * (1.0 / float(scalar))

    def as_values_only(self) -> "VectorField":
        return VectorField([c.as_values_only() for c in self.components])


FieldLike = ScalarField | VectorField


def _per_component(f: FieldLike, op) -> FieldLike:
    if isinstance(f, VectorField):
        return VectorField([op(c) for c in f.components])
    return op(f)


# -- transforms ------------------------------------------------------------


def to_spectral(f: ScalarField) -> ScalarField:
    """Synchronize the spectral representation (no-op if already present)."""
    f.spectral
    return f


def to_physical(f: ScalarField) -> ScalarField:
    """Synchronize the sample representation (no-op if already present)."""
    f.values
    return f


# -- multiplier operators --------------------------------------------------


def fractional_laplacian(f: FieldLike, alpha: float) -> FieldLike:
    """(-Laplacian)^(alpha/2): Fourier multiplier |k|^alpha, zero mode -> 0."""
    if not (0.0 < alpha <= 2.0):
        raise ConfigurationError(f"fractional Laplacian order must lie in (0, 2], got {alpha}")

    def op(g: ScalarField) -> ScalarField:
        return g.apply_multiplier(g.grid.k_norm_pow(alpha))

    return _per_component(f, op)


def gradient(f: ScalarField) -> VectorField:
    """Componentwise multiplier i*k_i."""
    coeffs = f.spectral
    comps = []
    for axis in range(f.grid.d):
        shape = [1] * f.grid.d
        shape[axis] = f.grid.n
        k1 = f.grid.k_axes[axis].reshape(shape)
        comps.append(ScalarField(f.grid, None, 1j * k1 * coeffs))
    return VectorField(comps)


def divergence(v: VectorField) -> ScalarField:
    grid = v.grid
    if v.n_components != grid.d:
        raise ConfigurationError(
            f"divergence needs {grid.d} components, got {v.n_components}"
        )
    total = np.zeros(grid.shape, dtype=np.complex128)
    for axis, comp in enumerate(v.components):
        shape = [1] * grid.d
        shape[axis] = grid.n
        k1 = grid.k_axes[axis].reshape(shape)
        total = total + 1j * k1 * comp.spectral
    return ScalarField(grid, None, total)


def dealias(f: FieldLike) -> FieldLike:
    """Zero every coefficient with any |k_i| above the two-thirds cutoff.

    Retained coefficients are multiplied by 1.0, i.e. unchanged bit-exactly.
    """

    def op(g: ScalarField) -> ScalarField:
        return g.apply_multiplier(g.grid.dealias_mask())

    return _per_component(f, op)


def dealiased_product(f: ScalarField, g: ScalarField) -> ScalarField:
    """Alias-free pointwise product via the two-thirds rule.

    Both inputs are truncated to the kept band, multiplied on the grid, and
    the result is truncated again; images of the in-band product fall
    entirely in the removed band, so retained modes match the exact product
    of the truncated inputs.
    """
    ft = dealias(f)
    gt = dealias(g)
    prod = ScalarField.from_values(f.grid, ft.values * gt.values)
    return dealias(prod)


def advective_term(u: VectorField, w: FieldLike) -> FieldLike:
    """(u . grad) w with dealiased products, componentwise for vector w."""

    def op(comp: ScalarField) -> ScalarField:
        grad = gradient(comp)
        pieces = [dealiased_product(u.components[i], grad.components[i]) for i in range(u.n_components)]
        total = pieces[0]
        for piece in pieces[1:]:
            total = total + piece
        return total

    return _per_component(w, op)
