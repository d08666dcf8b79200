"""Diagnostics tests: the energy balance against a double-integral quadrature
oracle, decay verdicts, inequality harness structure, contraction monitoring,
and the report writers."""
import csv
import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.fft

from frfl.alignment import AlignmentParams, _oracle_quadrature
from frfl.diagnostics import (
    CSV_COLUMNS,
    DiagnosticRecord,
    attach_residuals,
    cauchy_monitor,
    energy_balance,
    flocking_report,
    inequality_harness,
    kinetic_energy,
    linf_embedding_ratio,
    state_record,
    write_diagnostics_csv,
    write_iterate_csv,
    write_run_summary,
)
from frfl.dyadic import BesovSpec, besov_norm, get_decomposition
from frfl.errors import ConfigurationError
from frfl.spectral import (
    ScalarField,
    VectorField,
    advective_term,
    gradient,
    make_grid,
)
from frfl.system import RunConfig, SolverState, simulate


def dissipation_quadrature(sigma, u, params):
    """Symmetric double integral int int |u(x)-u(y)|^2 rho(x) rho(y) psi(x-y)
    via the same graded offset quadrature the coupling oracle uses."""
    grid = sigma.grid
    delta = params.pv_cutoff
    Y, W, tail_mass = _oracle_quadrature(grid, params, delta)
    rho = ScalarField.from_values(grid, 1.0 + sigma.values)
    rho_hat = rho.spectral
    k = grid.k_axes[0]
    phase = np.exp(1j * k[np.newaxis, :] * Y[:, 0:1])
    rho_shift = scipy.fft.ifft(rho_hat[np.newaxis, :] * phase, axis=1).real
    core = np.zeros(grid.shape)
    for comp in u.components:
        du = scipy.fft.ifft(comp.spectral[np.newaxis, :] * (phase - 1.0), axis=1).real
        core += np.einsum("qx,qx,q->x", du**2, rho_shift, W)
    total = float(np.sum(core * rho.values) * grid.cell_volume)

    rho_vals = rho.values
    mean_rho = float(np.mean(rho_vals))
    tail = np.zeros(grid.shape)
    grad_sq = np.zeros(grid.shape)
    for comp in u.components:
        uv = comp.values
        tail += (
            float(np.mean(uv**2 * rho_vals))
            - 2.0 * uv * float(np.mean(uv * rho_vals))
            + uv**2 * mean_rho
        )
        grad_sq += gradient(comp).components[0].values ** 2
    total += float(np.sum(tail * rho_vals) * grid.cell_volume) * tail_mass
    inner = 2.0 * delta ** (2.0 - params.alpha) / (grid.d * (2.0 - params.alpha))
    total += float(np.sum(grad_sq * rho_vals**2) * grid.cell_volume) * inner
    return total


class TestEnergyBalance:
    def test_zero_velocity_is_trivial(self):
        grid = make_grid(1, 64)
        params = AlignmentParams.create(1, 1.5)
        state = SolverState(
            0.0,
            ScalarField.from_values(grid, 0.2 * np.cos(grid.x_axes[0])),
            VectorField.zeros(grid),
            params,
        )
        bal = energy_balance(state, before=state, after=state, dt=0.1)
        assert bal.kinetic == 0.0
        assert bal.dissipation == 0.0
        assert bal.residual == 0.0

    def test_residual_nan_without_neighbors(self):
        grid = make_grid(1, 64)
        params = AlignmentParams.create(1, 1.5)
        state = SolverState(
            0.0,
            ScalarField.zeros(grid),
            VectorField.from_values(grid, [0.1 * np.sin(grid.x_axes[0])]),
            params,
        )
        bal = energy_balance(state)
        assert bal.kinetic > 0.0
        assert math.isnan(bal.residual)

    def test_dissipation_nonnegative(self):
        grid = make_grid(1, 128)
        rng = np.random.default_rng(5)
        x = grid.x_axes[0]
        params = AlignmentParams.create(1, 1.5)
        for _ in range(10):
            sigma_vals = sum(
                0.05 * rng.normal() * np.cos(m * x + rng.uniform(0, 2 * np.pi))
                for m in range(1, 8)
            )
            u_vals = sum(
                0.1 * rng.normal() * np.cos(m * x + rng.uniform(0, 2 * np.pi))
                for m in range(1, 8)
            )
            state = SolverState(
                0.0,
                ScalarField.from_values(grid, sigma_vals),
                VectorField.from_values(grid, [u_vals]),
                params,
            )
            bal = energy_balance(state)
            assert bal.dissipation > -1e-12

    def test_dissipation_matches_double_integral(self):
        # one quadrature validation per suite: the momentum-equation inner
        # product must equal the symmetric pairwise-difference integral
        grid = make_grid(1, 64)
        x = grid.x_axes[0]
        params = AlignmentParams.create(1, 1.5, tail_radius=8.0 * grid.box_length)
        sigma = ScalarField.from_values(grid, 0.3 * np.cos(x) + 0.1 * np.sin(2 * x))
        u = VectorField.from_values(grid, [0.5 * np.sin(x) + 0.2 * np.cos(3 * x)])
        state = SolverState(0.0, sigma, u, params)
        fft_side = energy_balance(state).dissipation
        quad_side = dissipation_quadrature(sigma, u, params)
        assert fft_side > 0.0
        assert abs(fft_side - quad_side) <= 1e-3 * abs(fft_side)

    def test_kinetic_energy_weighting(self):
        grid = make_grid(1, 64)
        sigma = ScalarField.from_values(grid, 0.5 * np.ones(grid.shape))
        u = VectorField.from_values(grid, [2.0 * np.ones(grid.shape)])
        # rho = 1.5, |u|^2 = 4 over a box of length 2 pi
        assert kinetic_energy(sigma, u) == pytest.approx(1.5 * 4.0 * 2.0 * np.pi)

    def test_residual_refines_at_second_order(self):
        grid = make_grid(1, 64)
        x = grid.x_axes[0]
        sigma0 = ScalarField.from_values(grid, 0.05 * np.cos(x))
        u0 = VectorField.from_values(grid, [0.05 * np.sin(x) + 0.02 * np.cos(2 * x)])

        def worst_residual(dt):
            cfg = RunConfig(
                grid=grid, alpha=1.5, T_final=0.4, dt=dt, sigma0=sigma0, u0=u0
            )
            traj = simulate(cfg)
            vals = [abs(r.balance_residual) for r in traj.records[1:-1]]
            return max(vals)

        coarse = worst_residual(0.02)
        fine = worst_residual(0.01)
        assert np.log2(coarse / fine) >= 1.6


class TestResidualAttachment:
    def make_record(self, t, kin, dis):
        return DiagnosticRecord(
            t=t,
            kinetic_energy=kin,
            dissipation=dis,
            balance_residual=math.nan,
            linf_u=0.0,
            crit_norm_sigma=0.0,
            crit_norm_u=0.0,
            high_norm_sigma=0.0,
            high_norm_u=0.0,
            mean_sigma=0.0,
        )

    def test_centered_difference_exact_for_quadratic(self):
        dt = 0.5
        records = [self.make_record(i * dt, (i * dt) ** 2, 3.0) for i in range(5)]
        out = attach_residuals(records, dt)
        for i in (1, 2, 3):
            assert out[i].balance_residual == pytest.approx(2.0 * i * dt + 3.0, abs=1e-12)
        # one-sided ends
        assert out[0].balance_residual == pytest.approx(dt + 3.0, abs=1e-12)

    def test_single_record_passes_through(self):
        records = [self.make_record(0.0, 1.0, 2.0)]
        out = attach_residuals(records, 0.1)
        assert math.isnan(out[0].balance_residual)


class TestFlocking:
    def run_small(self, T):
        grid = make_grid(1, 64)
        x = grid.x_axes[0]
        cfg = RunConfig(
            grid=grid,
            alpha=1.5,
            T_final=T,
            dt=0.01,
            sigma0=ScalarField.zeros(grid),
            u0=VectorField.from_values(grid, [1e-4 * np.sin(x)]),
        )
        return simulate(cfg)

    def test_exponential_decay_matches_linear_rate(self):
        traj = self.run_small(1.4)
        mu = traj.params.mu
        for rec in traj.records:
            expect = 1e-4 * np.exp(-mu * rec.t)
            assert abs(rec.linf_u - expect) <= 1e-3 * expect

    def test_verdict_after_long_horizon(self):
        report = flocking_report(self.run_small(1.4).records)
        assert report.decayed
        assert report.final <= 0.1 * report.initial

    def test_verdict_negative_when_short(self):
        report = flocking_report(self.run_small(0.1).records)
        assert not report.decayed

    def test_zero_initial_velocity_trivially_decayed(self):
        grid = make_grid(1, 64)
        cfg = RunConfig(
            grid=grid,
            alpha=1.5,
            T_final=0.05,
            dt=0.01,
            sigma0=ScalarField.from_values(grid, 1e-3 * np.cos(grid.x_axes[0])),
            u0=VectorField.zeros(grid),
        )
        report = flocking_report(simulate(cfg).records)
        assert report.initial == 0.0
        assert report.decayed

    def test_empty_records_rejected(self):
        with pytest.raises(ConfigurationError):
            flocking_report([])


class TestEmbedding:
    def test_ratio_bounded_over_random_fields(self):
        grid = make_grid(1, 128)
        rng = np.random.default_rng(19)
        x = grid.x_axes[0]
        worst = 0.0
        for _ in range(20):
            vals = sum(
                rng.normal() * np.cos(m * x + rng.uniform(0, 2 * np.pi))
                for m in range(1, 20)
            )
            worst = max(worst, linf_embedding_ratio(ScalarField.from_values(grid, vals)))
        assert 0.0 < worst <= 2.0

    def test_zero_field(self):
        grid = make_grid(1, 64)
        assert linf_embedding_ratio(VectorField.zeros(grid)) == 0.0


class TestInequalityHarness:
    def test_report_structure_and_stability(self):
        reports = inequality_harness(seed=3, n_samples=10, grid_sizes=(32, 64), alpha=1.5)
        names = [r.inequality for r in reports]
        assert names[0] == "product_b1"
        assert "advection_commutator" in names
        assert sum(n.startswith("product_critical") for n in names) == 3
        assert sum(n.startswith("coupling_bound") for n in names) == 3
        for rep in reports:
            assert rep.n_samples == 10
            assert set(rep.per_resolution) == {32, 64}
            assert 0.0 < rep.constant < 50.0
            assert not rep.growth_flag
            assert 0 <= rep.worst_sample < 10

    def test_deterministic_for_fixed_seed(self):
        a = inequality_harness(seed=9, n_samples=4, grid_sizes=(32,), alpha=1.5)
        b = inequality_harness(seed=9, n_samples=4, grid_sizes=(32,), alpha=1.5)
        assert [r.constant for r in a] == [r.constant for r in b]

    def test_constant_velocity_commutator_vanishes(self):
        # multiplier operators commute with constant-coefficient advection,
        # so each block commutator sits at rounding level
        grid = make_grid(1, 128)
        x = grid.x_axes[0]
        w = VectorField.from_values(grid, [0.7 * np.ones(grid.shape)])
        u = ScalarField.from_values(grid, np.sin(3 * x) + 0.4 * np.cos(7 * x))
        dec = get_decomposition(grid)
        space = BesovSpec(s=1.0, p=1, q=1)
        scale = besov_norm(u, space)
        advected = advective_term(w, u)
        for j in dec.j_indices:
            mult = dec.block_multiplier(j)
            comm = advective_term(w, u.apply_multiplier(mult)) - advected.apply_multiplier(
                mult
            )
            assert besov_norm(comm.remove_mean(), space) <= 1e-13 * scale


class TestCauchyMonitor:
    def test_geometric_sequence(self):
        records = [
            SimpleNamespace(delta_u=2.0**-n, delta_sigma=3.0**-n) for n in range(1, 7)
        ]
        report = cauchy_monitor(records)
        assert report.contracting
        assert report.fitted_rate == pytest.approx(0.5, rel=1e-12)
        assert all(r == pytest.approx(0.5) for r in report.u_ratios)

    def test_growth_flagged(self):
        records = [SimpleNamespace(delta_u=2.0**n, delta_sigma=1.0) for n in range(4)]
        report = cauchy_monitor(records)
        assert not report.contracting

    def test_short_input_rejected(self):
        with pytest.raises(ConfigurationError):
            cauchy_monitor([SimpleNamespace(delta_u=1.0, delta_sigma=1.0)] * 2)

    def test_exact_zero_tail(self):
        records = [
            SimpleNamespace(delta_u=v, delta_sigma=v) for v in (1.0, 0.0, 0.0)
        ]
        report = cauchy_monitor(records)
        assert report.contracting
        assert report.fitted_rate == 0.0


class TestReportWriters:
    def small_records(self):
        grid = make_grid(1, 64)
        sigma, u = (
            ScalarField.from_values(grid, 3e-3 * np.cos(grid.x_axes[0])),
            VectorField.from_values(grid, [2e-3 * np.sin(grid.x_axes[0])]),
        )
        cfg = RunConfig(grid=grid, alpha=1.5, T_final=0.05, dt=0.01, sigma0=sigma, u0=u)
        return simulate(cfg).records

    def test_csv_roundtrip(self, tmp_path):
        records = self.small_records()
        path = tmp_path / "diag.csv"
        write_diagnostics_csv(path, records)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == len(records) + 1
        for row, rec in zip(rows[1:], records):
            assert float(row[0]) == rec.t
            assert float(row[1]) == rec.kinetic_energy
            assert float(row[5]) == rec.crit_norm_sigma

    def test_iterate_csv(self, tmp_path):
        recs = [
            SimpleNamespace(
                n=1,
                norm_sigma_crit=0.1,
                norm_u_crit_sup=0.2,
                norm_u_crit_l1=0.3,
                norm_grad_sigma=0.4,
                norm_grad_u=0.5,
                delta_u=0.6,
                delta_sigma=0.7,
            )
        ]
        path = tmp_path / "iters.csv"
        write_iterate_csv(path, recs)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "n"
        assert float(rows[1][6]) == 0.6

    def test_run_summary_roundtrip(self, tmp_path):
        payload = {"alpha": 1.5, "gates": {"u_pass": True}, "records": 11}
        path = tmp_path / "summary.json"
        write_run_summary(path, payload)
        with open(path) as fh:
            assert json.load(fh) == payload
