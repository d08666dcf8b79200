"""Tests for the nonlocal alignment operators and their quadrature oracle."""
import math

import numpy as np
import pytest
import scipy.special

from frfl.alignment import (
    AlignmentParams,
    alignment_force,
    c_alpha,
    i_alpha,
    i_alpha_oracle,
    ray_table,
    t_multiplier_scalar,
    t_operator,
)
from frfl.errors import ConfigurationError, DomainError
from frfl.spectral import (
    ScalarField,
    VectorField,
    fractional_laplacian,
    make_grid,
)

from test_spectral import random_band_limited


def rel_l2(a: ScalarField, b: ScalarField) -> float:
    diff = a.values - b.values
    scale = max(a.l2_norm(), b.l2_norm(), 1e-300)
    return float(np.sqrt(np.sum(diff**2) * a.grid.cell_volume)) / scale


class TestKernelConstant:
    def test_alpha_one_closed_form(self):
        signed, mag = c_alpha(1, 1.0)
        assert signed == pytest.approx(-1.0 / math.pi, rel=1e-14)
        assert mag == pytest.approx(1.0 / math.pi, rel=1e-14)

    @pytest.mark.parametrize("d", [1, 2])
    def test_negative_throughout_range(self, d):
        for alpha in np.linspace(0.05, 1.95, 39):
            signed, mag = c_alpha(d, float(alpha))
            assert signed < 0.0
            assert mag == -signed

    @pytest.mark.parametrize("alpha", [0.0, 2.0, 2.5, -0.5])
    def test_poles_and_out_of_range_rejected(self, alpha):
        with pytest.raises(ConfigurationError):
            c_alpha(1, alpha)

    def test_params_use_magnitude(self):
        p = AlignmentParams.create(1, 1.5)
        assert p.c_signed < 0.0
        assert p.mu == pytest.approx(1.0 / p.c_mag, rel=1e-15)
        assert p.mu > 0.0

    @pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5, 2.3])
    def test_params_order_window(self, alpha):
        with pytest.raises(ConfigurationError):
            AlignmentParams.create(1, alpha)


class TestLeibnizIdentity:
    """The dealiased multiplier composition against direct quadrature."""

    def test_single_mode_pair(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        x = grid.x_axes[0]
        u = VectorField([ScalarField.from_values(grid, np.cos(x))])
        sigma = ScalarField.from_values(grid, np.sin(x))
        assert rel_l2(i_alpha(u, sigma, p).components[0],
                      i_alpha_oracle(u, sigma, p).components[0]) < 1e-4

    def test_random_band_limited_pairs(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(20):
            u = random_band_limited(grid, rng, max_mode=8, n_components=1)
            sigma = random_band_limited(grid, rng, max_mode=8)
            got = i_alpha(u, sigma, p).components[0]
            want = i_alpha_oracle(u, sigma, p).components[0]
            worst = max(worst, rel_l2(got, want))
        assert worst < 1e-3

    def test_bilinear_in_each_argument(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.7, box_length=grid.box_length)
        rng = np.random.default_rng(11)
        u = random_band_limited(grid, rng, n_components=1)
        v = random_band_limited(grid, rng, n_components=1)
        sigma = random_band_limited(grid, rng)
        tau = random_band_limited(grid, rng)
        a, b = 0.7, -1.3
        left = i_alpha(u * a + v * b, sigma, p).components[0]
        right = i_alpha(u, sigma, p).components[0] * a + i_alpha(v, sigma, p).components[0] * b
        assert np.max(np.abs(left.values - right.values)) < 1e-12 * left.linf()
        left = i_alpha(u, sigma * a + tau * b, p).components[0]
        right = i_alpha(u, sigma, p).components[0] * a + i_alpha(u, tau, p).components[0] * b
        assert np.max(np.abs(left.values - right.values)) < 1e-12 * left.linf()

    def test_constant_density_gives_bitwise_zero(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(5)
        u = random_band_limited(grid, rng, n_components=1)
        sigma = ScalarField.from_values(grid, np.full(grid.shape, 0.37))
        out = i_alpha(u, sigma, p).components[0].values
        assert np.all(out == 0.0)

    def test_mean_shift_invariance(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(17)
        u = random_band_limited(grid, rng, n_components=1)
        sigma = random_band_limited(grid, rng)
        base = i_alpha(u, sigma, p).components[0]
        shifted = i_alpha(u + VectorField([ScalarField.from_values(u.grid, np.full(u.grid.shape, 2.5))]),
                          sigma + 0.9, p).components[0]
        assert np.max(np.abs(base.values - shifted.values)) < 1e-12


class TestOracle:
    def test_pv_cutoff_refinement_is_cauchy(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(3)
        u = random_band_limited(grid, rng, n_components=1)
        sigma = random_band_limited(grid, rng)
        deltas = [p.pv_cutoff * 2.0**k for k in (3, 2, 1, 0, -1)]
        outs = [i_alpha_oracle(u, sigma, p, pv_cutoff=d).components[0].values for d in deltas]
        diffs = [float(np.linalg.norm(outs[i + 1] - outs[i])) for i in range(len(outs) - 1)]
        assert all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1))

    def test_constant_density_near_zero(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(5)
        u = random_band_limited(grid, rng, n_components=1)
        sigma = ScalarField.from_values(grid, np.full(grid.shape, 0.37))
        out = i_alpha_oracle(u, sigma, p).components[0].values
        assert np.max(np.abs(out)) < 1e-15

    def test_cost_guard(self):
        grid = make_grid(1, 256)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(1)
        u = random_band_limited(grid, rng, n_components=1)
        sigma = random_band_limited(grid, rng)
        with pytest.raises(ConfigurationError):
            i_alpha_oracle(u, sigma, p)

    def test_bad_cutoff_rejected(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(1)
        u = random_band_limited(grid, rng, n_components=1)
        sigma = random_band_limited(grid, rng)
        with pytest.raises(ConfigurationError):
            i_alpha_oracle(u, sigma, p, pv_cutoff=grid.box_length)

    def test_two_dimensional_agreement(self):
        grid = make_grid(2, 32)
        p = AlignmentParams.create(
            2, 1.5, box_length=grid.box_length, tail_radius=8.0 * grid.box_length
        )
        X, Y = grid.meshgrid()
        u = VectorField(
            [
                ScalarField.from_values(grid, np.cos(X) * np.sin(Y)),
                ScalarField.from_values(grid, np.sin(2.0 * X)),
            ]
        )
        sigma = ScalarField.from_values(grid, np.cos(X + Y) + 0.3 * np.sin(Y))
        got = i_alpha(u, sigma, p)
        want = i_alpha_oracle(u, sigma, p)
        for i in range(2):
            assert rel_l2(got.components[i], want.components[i]) < 1e-2


class TestAlignmentForce:
    def test_uniform_density_reduces_to_fractional_diffusion(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(9)
        u = random_band_limited(grid, rng, n_components=1)
        rho = ScalarField.from_values(grid, np.ones(grid.shape))
        force = alignment_force(rho, u, p)
        expect = fractional_laplacian(u.components[0], p.alpha) * (-p.mu)
        assert np.max(np.abs(force.components[0].values - expect.values)) < 1e-12

    def test_eigenmode_decay_rate(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        x = grid.x_axes[0]
        u = VectorField([ScalarField.from_values(grid, np.sin(3.0 * x))])
        rho = ScalarField.from_values(grid, np.ones(grid.shape))
        force = alignment_force(rho, u, p)
        expect = -p.mu * 3.0**p.alpha * np.sin(3.0 * x)
        assert np.max(np.abs(force.components[0].values - expect)) < 1e-12

    def test_nonpositive_density_rejected(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        rng = np.random.default_rng(2)
        u = random_band_limited(grid, rng, n_components=1)
        rho = ScalarField.from_values(grid, np.full(grid.shape, -0.1))
        with pytest.raises(DomainError):
            alignment_force(rho, u, p)


class TestDirectionOperator:
    def test_quadrature_matches_closed_form(self):
        for alpha in (1.2, 1.5, 1.8):
            quad = t_multiplier_scalar(1, alpha)
            closed = 2.0 * scipy.special.gamma(1.0 - alpha) * math.cos(math.pi * alpha / 2.0)
            assert quad == pytest.approx(closed, rel=1e-8)

    @pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
    def test_mode_doubling_amplitude_ratio(self, alpha):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, alpha, box_length=grid.box_length)
        x = grid.x_axes[0]
        one = t_operator(ScalarField.from_values(grid, np.cos(x)), p)
        two = t_operator(ScalarField.from_values(grid, np.cos(2.0 * x)), p)
        ratio = two.components[0].linf() / one.components[0].linf()
        assert ratio == pytest.approx(2.0 ** (alpha - 1.0), rel=1e-12)

    def test_single_mode_closed_form(self):
        grid = make_grid(1, 64)
        alpha = 1.5
        p = AlignmentParams.create(1, alpha, box_length=grid.box_length)
        x = grid.x_axes[0]
        rho = t_multiplier_scalar(1, alpha)
        out = t_operator(ScalarField.from_values(grid, np.cos(3.0 * x)), p)
        expect = -rho * 3.0 ** (alpha - 1.0) * np.sin(3.0 * x)
        assert np.max(np.abs(out.components[0].values - expect)) < 1e-10

    def test_constant_maps_to_zero(self):
        grid = make_grid(1, 64)
        p = AlignmentParams.create(1, 1.5, box_length=grid.box_length)
        out = t_operator(ScalarField.from_values(grid, np.full(grid.shape, 4.0)), p)
        assert np.max(np.abs(out.components[0].values)) < 1e-14

    def test_symbol_constant_along_rays(self):
        grid = make_grid(2, 32)
        _, mults = ray_table(grid, 1.5)
        radial = grid.k_norm_pow(0.5)
        with np.errstate(invalid="ignore", divide="ignore"):
            reduced = np.where(radial > 0.0, mults / radial[np.newaxis], 0.0)
        # doubling every wavevector reaches the same ray, so the reduced
        # symbol at (m1, m2) and (2 m1, 2 m2) must agree where both exist
        n = grid.n
        for ax in range(2):
            for m1 in (1, 3, 5):
                for m2 in (0, 2, 7):
                    a = reduced[ax, m1, m2]
                    b = reduced[ax, 2 * m1, 2 * m2]
                    assert a == pytest.approx(b, rel=1e-12)

    def test_two_dimensional_diagonal_mode(self):
        grid = make_grid(2, 32)
        alpha = 1.5
        p = AlignmentParams.create(2, alpha, box_length=grid.box_length)
        X, Y = grid.meshgrid()
        rho = t_multiplier_scalar(2, alpha)
        out = t_operator(ScalarField.from_values(grid, np.cos(X + Y)), p)
        amp = rho * (1.0 / math.sqrt(2.0)) * math.sqrt(2.0) ** (alpha - 1.0)
        expect = -amp * np.sin(X + Y)
        for i in range(2):
            assert np.max(np.abs(out.components[i].values - expect)) < 1e-10

    def test_cross_section_constant_positive(self):
        # 2d angular reduction: sqrt(pi) Gamma((1+a)/2) / Gamma(1+a/2)
        for alpha in (1.2, 1.5, 1.8):
            ratio = t_multiplier_scalar(2, alpha) / t_multiplier_scalar(1, alpha)
            expect = (
                math.sqrt(math.pi)
                * scipy.special.gamma((1.0 + alpha) / 2.0)
                / scipy.special.gamma(1.0 + alpha / 2.0)
            )
            assert ratio == pytest.approx(expect, rel=1e-12)
