"""Grid construction, transforms, and multiplier operators."""
import math

import numpy as np
import pytest

from frfl import (
    ConfigurationError,
    ScalarField,
    VectorField,
    dealias,
    dealiased_product,
    divergence,
    fractional_laplacian,
    gradient,
    make_grid,
)


def random_band_limited(grid, rng, max_mode=None, n_components=0):
    """Field synthesized from random low modes; smooth on every refinement."""
    if max_mode is None:
        max_mode = grid.n // 4
    x = grid.meshgrid()

    def scalar():
        vals = np.zeros(grid.shape)
        for _ in range(6):
            if grid.d == 1:
                m = rng.integers(1, max_mode + 1)
                phase = rng.uniform(0, 2 * np.pi)
                vals += rng.normal() * np.cos(2 * np.pi * m * x[0] / grid.box_length + phase)
            else:
                m1 = rng.integers(0, max_mode + 1)
                m2 = rng.integers(1, max_mode + 1)
                phase = rng.uniform(0, 2 * np.pi)
                arg = 2 * np.pi * (m1 * x[0] + m2 * x[1]) / grid.box_length
                vals += rng.normal() * np.cos(arg + phase)
        return ScalarField.from_values(grid, vals)

    if n_components:
        return VectorField([scalar() for _ in range(n_components)])
    return scalar()


class TestMakeGrid:
    def test_wavevector_set_1d(self):
        g = make_grid(1, 16)
        modes = np.sort(np.round(g.k_axes[0] / (2 * np.pi / g.box_length)).astype(int))
        assert modes.tolist() == list(range(-8, 8))

    def test_wavevector_scaling_with_box(self):
        g = make_grid(1, 16, box_length=np.pi)
        assert g.k_axes[0][1] == pytest.approx(2.0)

    def test_rejects_d3(self):
        with pytest.raises(ConfigurationError):
            make_grid(3, 16)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ConfigurationError):
            make_grid(1, 48)

    def test_rejects_too_small(self):
        with pytest.raises(ConfigurationError):
            make_grid(1, 4)

    def test_cell_volume(self):
        g = make_grid(2, 32, box_length=1.0)
        assert g.cell_volume == pytest.approx((1.0 / 32) ** 2)


class TestTransforms:
    @pytest.mark.parametrize("d,n", [(1, 64), (1, 256), (2, 32)])
    def test_roundtrip(self, d, n):
        rng = np.random.default_rng(11)
        g = make_grid(d, n)
        f = ScalarField.from_values(g, rng.standard_normal(g.shape))
        back = ScalarField.from_spectral(g, f.spectral).values
        assert np.max(np.abs(back - f.values)) <= 1e-12 * np.max(np.abs(f.values))

    def test_parseval_against_direct_summation(self):
        # oracle: spectral coefficients by explicit O(N^2) summation
        rng = np.random.default_rng(12)
        g = make_grid(1, 64)
        vals = rng.standard_normal(g.shape)
        f = ScalarField.from_values(g, vals)
        n = g.n
        idx = np.arange(n)
        direct = np.array([np.sum(vals * np.exp(-2j * np.pi * k * idx / n)) for k in range(n)])
        assert np.max(np.abs(direct - f.spectral)) <= 1e-10 * np.max(np.abs(direct))
        # Parseval with the cell-volume weighting
        phys = np.sum(vals**2) * g.cell_volume
        spec = np.sum(np.abs(f.spectral) ** 2) / n * g.cell_volume
        assert phys == pytest.approx(spec, rel=1e-10)

    def test_single_mode_coefficient_placement(self):
        g = make_grid(1, 32)
        f = ScalarField.from_function(g, lambda x: np.cos(3 * x))
        coeffs = f.spectral / g.n
        assert coeffs[3] == pytest.approx(0.5, abs=1e-13)
        assert coeffs[-3] == pytest.approx(0.5, abs=1e-13)
        others = np.delete(coeffs, [3, g.n - 3])
        assert np.max(np.abs(others)) < 1e-13


class TestFractionalLaplacian:
    def test_cosine_eigenmode(self):
        # cos(2x) on L = 2*pi: |k| = 2, alpha = 1.5 -> 2^1.5 * cos(2x)
        g = make_grid(1, 64)
        f = ScalarField.from_function(g, lambda x: np.cos(2 * x))
        out = fractional_laplacian(f, 1.5)
        expected = 2.0**1.5 * np.cos(2 * g.x_axes[0])
        assert np.max(np.abs(out.values - expected)) <= 1e-12 * 2.0**1.5
        assert 2.0**1.5 == pytest.approx(2.8284271247461903)

    def test_constant_annihilated_exactly(self):
        g = make_grid(1, 32)
        f = ScalarField.from_values(g, np.full(g.shape, 3.7))
        out = fractional_laplacian(f, 1.3)
        assert np.max(np.abs(out.values)) == 0.0

    def test_alpha2_matches_k_squared(self):
        rng = np.random.default_rng(5)
        g = make_grid(2, 32)
        f = random_band_limited(g, rng)
        out = fractional_laplacian(f, 2.0)
        ref = f.apply_multiplier(g.k_norm**2)
        assert np.max(np.abs(out.values - ref.values)) <= 1e-12 * max(ref.linf(), 1.0)

    def test_linearity(self):
        rng = np.random.default_rng(7)
        g = make_grid(1, 64)
        f, h = random_band_limited(g, rng), random_band_limited(g, rng)
        combo = fractional_laplacian(2.0 * f + (-3.0) * h, 1.5)
        ref = 2.0 * fractional_laplacian(f, 1.5) + (-3.0) * fractional_laplacian(h, 1.5)
        assert np.max(np.abs(combo.values - ref.values)) <= 1e-12 * max(ref.linf(), 1.0)

    def test_rejects_bad_order(self):
        g = make_grid(1, 32)
        f = ScalarField.zeros(g)
        for alpha in (0.0, -1.0, 2.5):
            with pytest.raises(ConfigurationError):
                fractional_laplacian(f, alpha)


class TestDerivatives:
    def test_gradient_of_sine(self):
        g = make_grid(1, 64)
        f = ScalarField.from_function(g, lambda x: np.sin(x))
        out = gradient(f)
        assert np.max(np.abs(out.components[0].values - np.cos(g.x_axes[0]))) < 1e-12

    def test_gradient_2d(self):
        g = make_grid(2, 32)
        f = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.cos(2 * y))
        out = gradient(f)
        x, y = g.meshgrid()
        assert np.max(np.abs(out.components[0].values - np.cos(x) * np.cos(2 * y))) < 1e-11
        assert np.max(np.abs(out.components[1].values + 2 * np.sin(x) * np.sin(2 * y))) < 1e-11

    @pytest.mark.parametrize("d,n", [(1, 64), (2, 32)])
    def test_div_grad_is_minus_k_squared(self, d, n):
        rng = np.random.default_rng(21)
        g = make_grid(d, n)
        f = ScalarField.from_values(g, rng.standard_normal(g.shape))
        composed = divergence(gradient(f))
        ref = f.apply_multiplier(-(g.k_norm**2))
        scale = np.max(np.abs(ref.spectral))
        assert np.max(np.abs(composed.spectral - ref.spectral)) <= 1e-12 * scale

    def test_divergence_needs_matching_components(self):
        g = make_grid(2, 32)
        v = VectorField([ScalarField.zeros(g)])
        with pytest.raises(ConfigurationError):
            divergence(v)


class TestDealias:
    def test_low_modes_bit_exact(self):
        rng = np.random.default_rng(31)
        g = make_grid(1, 64)
        f = ScalarField.from_values(g, rng.standard_normal(g.shape))
        out = dealias(f)
        cutoff = (2.0 / 3.0) * (g.n / 2.0)
        modes = np.round(g.k_axes[0] / (2 * np.pi / g.box_length)).astype(int)
        keep = np.abs(modes) <= cutoff
        assert np.array_equal(out.spectral[keep], f.spectral[keep])
        assert np.all(out.spectral[~keep] == 0.0)

    def test_aliased_image_removed(self):
        # k = 20 on N = 64 sits in the upper third of the kept band: the grid
        # product cos(20x)^2 = 1/2 + cos(40x)/2 aliases 40 -> -24, and the
        # mask removes the image, leaving the exact retained product 1/2.
        g = make_grid(1, 64)
        f = ScalarField.from_function(g, lambda x: np.cos(20 * x))
        prod = dealiased_product(f, f)
        assert np.max(np.abs(prod.values - 0.5)) < 1e-13

    def test_product_matches_exact_trig_product(self):
        g = make_grid(1, 64)
        f = ScalarField.from_function(g, lambda x: np.cos(3 * x))
        h = ScalarField.from_function(g, lambda x: np.sin(5 * x))
        prod = dealiased_product(f, h)
        x = g.x_axes[0]
        exact = 0.5 * (np.sin(8 * x) + np.sin(2 * x))
        assert np.max(np.abs(prod.values - exact)) < 1e-13


class TestFieldInvariants:
    def test_from_values_rejects_nan(self):
        g = make_grid(1, 32)
        bad = np.zeros(g.shape)
        bad[3] = np.nan
        with pytest.raises(Exception):
            ScalarField.from_values(g, bad)

    def test_mixed_grid_arithmetic_rejected(self):
        a = ScalarField.zeros(make_grid(1, 32))
        b = ScalarField.zeros(make_grid(1, 64))
        with pytest.raises(ConfigurationError):
            a + b

    def test_mean(self):
        g = make_grid(1, 64)
        f = ScalarField.from_function(g, lambda x: 1.25 + np.cos(x))
        assert f.mean() == pytest.approx(1.25, abs=1e-14)
        assert f.remove_mean().mean() == pytest.approx(0.0, abs=1e-14)

    def test_restart_handoff_is_values_authoritative(self):
        g = make_grid(1, 32)
        f = ScalarField.from_function(g, lambda x: np.sin(x)).apply_multiplier(g.k_norm_pow(1.0))
        h = f.as_values_only()
        assert h.has_values() and not h.has_spectral()
