"""Numerical witnesses for the solver: energy bookkeeping, decay verdicts,
randomized inequality constants, contraction monitoring, scaling equivariance,
and the CSV/JSON report writers.

Records are pure functions of solver states.  The dissipation rate is the
momentum-equation inner product -2 int rho u . a(u, rho), which equals the
symmetric double integral int int |u(x)-u(y)|^2 rho(x) rho(y) / |x-y|^(d+a);
a small-grid quadrature oracle in the test suite validates that identity once.
The inequality harness draws band-limited fields from a seeded generator and
realizes the same continuum field on every grid of a refinement ladder, so
per-resolution constants are directly comparable.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .alignment import AlignmentParams, alignment_force, i_alpha
from .dyadic import BesovSpec, besov_norm, get_decomposition
from .errors import ConfigurationError
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    advective_term,
    dealiased_product,
    gradient,
    make_grid,
)

__all__ = [
    "DiagnosticRecord",
    "EnergyBalance",
    "FlockingReport",
    "InequalityReport",
    "ContractionReport",
    "CSV_COLUMNS",
    "ITERATE_CSV_COLUMNS",
    "kinetic_energy",
    "energy_balance",
    "state_record",
    "attach_residuals",
    "flocking_report",
    "linf_embedding_ratio",
    "inequality_harness",
    "cauchy_monitor",
    "scaling_check",
    "write_diagnostics_csv",
    "write_iterate_csv",
    "write_run_summary",
]


@dataclass(frozen=True)
class DiagnosticRecord:
    t: float
    kinetic_energy: float
    dissipation: float
    balance_residual: float
    linf_u: float
    crit_norm_sigma: float
    crit_norm_u: float
    high_norm_sigma: float
    high_norm_u: float
    mean_sigma: float


CSV_COLUMNS = (
    "t",
    "kinetic",
    "dissipation",
    "residual",
    "linf_u",
    "crit_sigma",
    "crit_u",
    "high_sigma",
    "high_u",
    "mean_sigma",
)

ITERATE_CSV_COLUMNS = (
    "n",
    "sigma_crit",
    "u_crit_sup",
    "u_crit_l1",
    "grad_sigma",
    "grad_u",
    "delta_u",
    "delta_sigma",
)


@dataclass(frozen=True)
class EnergyBalance:
    kinetic: float
    dissipation: float
    residual: float


def kinetic_energy(sigma: ScalarField, u: VectorField) -> float:
    """int rho |u|^2 with rho = 1 + sigma."""
    rho = 1.0 + sigma.values
    speed2 = sum(c.values**2 for c in u.components)
    return float(np.sum(rho * speed2) * sigma.grid.cell_volume)


def _dissipation(sigma: ScalarField, u: VectorField, params: AlignmentParams) -> float:
    rho_vals = 1.0 + sigma.values
    force = alignment_force(ScalarField.from_values(sigma.grid, rho_vals), u, params)
    inner = sum(c.values * fc.values for c, fc in zip(u.components, force.components))
    return float(-2.0 * np.sum(rho_vals * inner) * sigma.grid.cell_volume)


def energy_balance(state, before=None, after=None, dt: float | None = None) -> EnergyBalance:
    """Kinetic energy, nonlocal dissipation rate, and the balance residual.

    The residual is the centered time derivative of the kinetic energy plus
    the dissipation, estimated from the neighbor states when given; without
    neighbors it is reported as nan.
    """
    kin = kinetic_energy(state.sigma, state.u)
    dis = _dissipation(state.sigma, state.u, state.params)
    if before is not None and after is not None:
        if not (dt is not None and dt > 0.0):
            raise ConfigurationError("neighbor states need the time spacing dt > 0")
        k_before = kinetic_energy(before.sigma, before.u)
        k_after = kinetic_energy(after.sigma, after.u)
        residual = (k_after - k_before) / (2.0 * dt) + dis
    else:
        residual = math.nan
    return EnergyBalance(kin, dis, residual)


def _mean_free(f: ScalarField) -> ScalarField:
    return f.remove_mean()


def _mean_free_vector(v: VectorField) -> VectorField:
    return VectorField([c.remove_mean() for c in v.components])


def state_record(state) -> DiagnosticRecord:
    """Diagnostic row for one state; the residual is patched in afterwards."""
    params = state.params
    grid = state.sigma.grid
    space_sigma = BesovSpec(s=1.0, p=grid.d, q=1)
    space_u = BesovSpec(s=2.0 - params.alpha, p=grid.d, q=1)
    bal = energy_balance(state)
    high_u = sum(
        besov_norm(gradient(c), space_u) for c in state.u.components
    )
    return DiagnosticRecord(
        t=state.t,
        kinetic_energy=bal.kinetic,
        dissipation=bal.dissipation,
        balance_residual=math.nan,
        linf_u=state.u.linf(),
        crit_norm_sigma=besov_norm(_mean_free(state.sigma), space_sigma),
        crit_norm_u=besov_norm(_mean_free_vector(state.u), space_u),
        high_norm_sigma=besov_norm(gradient(state.sigma), space_sigma),
        high_norm_u=high_u,
        mean_sigma=state.sigma.mean(),
    )


def attach_residuals(records: Sequence[DiagnosticRecord], dt_record: float) -> list[DiagnosticRecord]:
    """Fill balance residuals from adjacent kinetic energies (centered inside,
    one-sided at the ends); fewer than two records pass through unchanged."""
    n = len(records)
    if n < 2:
        return list(records)
    kin = [r.kinetic_energy for r in records]
    out = []
    for i, r in enumerate(records):
        if i == 0:
            dkdt = (kin[1] - kin[0]) / dt_record
        elif i == n - 1:
            dkdt = (kin[-1] - kin[-2]) / dt_record
        else:
            dkdt = (kin[i + 1] - kin[i - 1]) / (2.0 * dt_record)
        out.append(
            DiagnosticRecord(**{**asdict(r), "balance_residual": dkdt + r.dissipation})
        )
    return out


@dataclass(frozen=True)
class FlockingReport:
    times: tuple
    linf_series: tuple
    initial: float
    final: float
    decay_fraction: float
    decayed: bool


def flocking_report(records: Sequence[DiagnosticRecord], decay_fraction: float = 0.1) -> FlockingReport:
    """Sup-norm decay verdict: final |u| at or below the configured fraction."""
    if len(records) < 1:
        raise ConfigurationError("flocking report needs at least one record")
    times = tuple(r.t for r in records)
    series = tuple(r.linf_u for r in records)
    initial, final = series[0], series[-1]
    decayed = final <= decay_fraction * initial or initial == 0.0
    return FlockingReport(times, series, initial, final, decay_fraction, decayed)


def linf_embedding_ratio(u: VectorField | ScalarField) -> float:
    """|u|_inf over the mean-free critical norm at regularity one."""
    if isinstance(u, VectorField):
        grid = u.grid
        mean_free = _mean_free_vector(u)
        sup = u.linf()
    else:
        grid = u.grid
        mean_free = _mean_free(u)
        sup = u.linf()
    denom = besov_norm(mean_free, BesovSpec(s=1.0, p=grid.d, q=1))
    if denom == 0.0:
        return 0.0 if sup == 0.0 else math.inf
    return sup / denom


# -- randomized inequality harness ----------------------------------------


@dataclass(frozen=True)
class InequalityReport:
    inequality: str
    n_samples: int
    constant: float
    per_resolution: dict
    worst_sample: int
    growth_flag: bool


def _draw_mode_lists(rng: np.random.Generator, n_fields: int, n_modes: int = 6, max_mode: int = 8):
    fields = []
    for _ in range(n_fields):
        modes = []
        for _ in range(n_modes):
            m = int(rng.integers(1, max_mode + 1))
            amp = float(rng.normal())
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            modes.append((m, amp, phase))
        fields.append(tuple(modes))
    return tuple(fields)


def _realize(grid: Grid, modes) -> ScalarField:
    x = grid.x_axes[0]
    vals = np.zeros(grid.shape)
    for m, amp, phase in modes:
        vals += amp * np.cos(m * x + phase)
    return ScalarField.from_values(grid, vals)


def _ratio_product_law(grid: Grid, fields, alpha: float) -> float:
    f, g = _realize(grid, fields[0]), _realize(grid, fields[1])
    space = BesovSpec(s=1.0, p=grid.d, q=1)
    den = besov_norm(f, space) * besov_norm(g, space)
    num = besov_norm(dealiased_product(f, g).remove_mean(), space)
    return num / den


def _ratio_product_alpha(grid: Grid, fields, alpha: float, theta: float) -> float:
    f, g = _realize(grid, fields[0]), _realize(grid, fields[1])
    num = besov_norm(
        dealiased_product(f, g).remove_mean(), BesovSpec(s=2.0 - alpha, p=grid.d, q=1)
    )
    den = besov_norm(f, BesovSpec(s=1.0 - theta, p=grid.d, q=1)) * besov_norm(
        g, BesovSpec(s=2.0 + theta - alpha, p=grid.d, q=1)
    )
    return num / den


def _ratio_commutator(grid: Grid, fields, alpha: float, s: float = 1.0) -> float:
    w = VectorField([_realize(grid, fields[0])])
    u = _realize(grid, fields[1])
    space = BesovSpec(s=s, p=grid.d, q=1)
    den = besov_norm(gradient(w.components[0]), BesovSpec(s=1.0, p=grid.d, q=1)) * besov_norm(
        u, space
    )
    dec = get_decomposition(grid)
    advected = advective_term(w, u)
    worst = 0.0
    for j in range(dec.j_min, dec.j_max + 1):
        mult = dec.block_multipliers[j - dec.j_min]
        commutator = advective_term(w, u.apply_multiplier(mult)) - advected.apply_multiplier(mult)
        worst = max(worst, besov_norm(commutator.remove_mean(), space))
    return worst / den


def _ratio_coupling_bound(grid: Grid, fields, alpha: float, theta: float) -> float:
    u = VectorField([_realize(grid, fields[0])])
    sigma = _realize(grid, fields[1])
    params = AlignmentParams.create(grid.d, alpha, box_length=grid.box_length)
    coupling = _mean_free_vector(i_alpha(u, sigma, params))
    num = besov_norm(coupling, BesovSpec(s=2.0 - alpha, p=grid.d, q=1))
    den = besov_norm(
        gradient(u.components[0]), BesovSpec(s=1.0 - theta, p=grid.d, q=1)
    ) * besov_norm(sigma, BesovSpec(s=1.0 + theta, p=grid.d, q=1))
    return num / den


def inequality_harness(
    seed: int,
    n_samples: int,
    grid_sizes: Sequence[int] = (64, 128, 256),
    alpha: float = 1.5,
    growth_limit: float = 0.25,
) -> list[InequalityReport]:
    """Empirical constants for the bilinear estimates, per grid refinement.

    Each sample is one continuum field pair realized on every grid of the
    ladder; a report flags constants growing more than growth_limit per
    refinement.  One-dimensional fields; theta sweeps cover the admissible
    interpolation range for the given alpha.
    """
    rng = np.random.default_rng(seed)
    samples = [_draw_mode_lists(rng, 2) for _ in range(n_samples)]
    grids = [make_grid(1, n) for n in grid_sizes]

    theta_top = min(2.0 - alpha, alpha - 1.0)
    cases = [("product_b1", lambda g, f: _ratio_product_law(g, f, alpha))]
    for theta in (0.0, 0.5 * (alpha - 1.0), alpha - 1.0):
        cases.append(
            (
                f"product_critical_theta_{theta:g}",
                lambda g, f, th=theta: _ratio_product_alpha(g, f, alpha, th),
            )
        )
    cases.append(("advection_commutator", lambda g, f: _ratio_commutator(g, f, alpha)))
    for theta in (0.0, 0.5 * theta_top, theta_top):
        cases.append(
            (
                f"coupling_bound_theta_{theta:g}",
                lambda g, f, th=theta: _ratio_coupling_bound(g, f, alpha, th),
            )
        )

    reports = []
    for name, fn in cases:
        per_res = {}
        worst_idx = 0
        for grid in grids:
            ratios = [fn(grid, fields) for fields in samples]
            per_res[grid.n] = max(ratios)
            if grid.n == grids[-1].n:
                worst_idx = int(np.argmax(ratios))
        cs = [per_res[g.n] for g in grids]
        growth = any(b > (1.0 + growth_limit) * a for a, b in zip(cs[:-1], cs[1:]))
        reports.append(
            InequalityReport(
                inequality=name,
                n_samples=n_samples,
                constant=max(cs),
                per_resolution=per_res,
                worst_sample=worst_idx,
                growth_flag=growth,
            )
        )
    return reports


# -- contraction monitoring ------------------------------------------------


@dataclass(frozen=True)
class ContractionReport:
    delta_u: tuple
    delta_sigma: tuple
    u_ratios: tuple
    sigma_ratios: tuple
    fitted_rate: float
    contracting: bool


def cauchy_monitor(records) -> ContractionReport:
    """Successive-difference ratios and a geometric-fit contraction rate."""
    if len(records) < 3:
        raise ConfigurationError("contraction monitoring needs at least three iterates")
    du = [r.delta_u for r in records]
    ds = [r.delta_sigma for r in records]
    u_ratios = tuple(b / a if a > 0.0 else math.inf for a, b in zip(du[:-1], du[1:]))
    s_ratios = tuple(b / a if a > 0.0 else math.inf for a, b in zip(ds[:-1], ds[1:]))
    if all(d == 0.0 for d in du[1:]):
        return ContractionReport(tuple(du), tuple(ds), u_ratios, s_ratios, 0.0, True)
    finite = [r for r in u_ratios if math.isfinite(r) and r > 0.0]
    rate = float(np.exp(np.mean(np.log(finite)))) if finite else math.inf
    contracting = all(r < 1.0 for r in u_ratios)
    return ContractionReport(tuple(du), tuple(ds), u_ratios, s_ratios, rate, contracting)


# -- scaling equivariance --------------------------------------------------


def scaling_check(config, lam: int) -> float:
    """Relative mismatch between a run and its parabolically rescaled twin.

    The rescaling sends the box length to L/lam, time to t/lam^alpha, and
    velocity amplitudes up by lam^(alpha-1); grid samples then match index
    by index at matched times.
    """
    from . import system as _system

    if lam < 1 or (lam & (lam - 1)) != 0:
        raise ConfigurationError(f"scaling factor must be a power of two >= 1, got {lam}")
    base = _system.simulate(config)
    if lam == 1:
        return 0.0
    alpha = config.alpha
    grid = config.grid
    small = make_grid(grid.d, grid.n, grid.box_length / lam)
    amp = float(lam) ** (alpha - 1.0)
    sigma0 = ScalarField.from_values(small, config.sigma0.values.copy())
    u0 = VectorField(
        [ScalarField.from_values(small, amp * c.values) for c in config.u0.components]
    )
    rescaled_cfg = _system.RunConfig(
        grid=small,
        alpha=alpha,
        T_final=config.T_final / float(lam) ** alpha,
        dt=config.dt / float(lam) ** alpha,
        sigma0=sigma0,
        u0=u0,
        scheme="direct",
        duhamel_rule=config.duhamel_rule,
        rk_order=config.rk_order,
        cfl_max=config.cfl_max,
        snapshot_stride=config.snapshot_stride,
        record_stride=config.record_stride,
        epsilon_gate=config.epsilon_gate,
        eta_gate=config.eta_gate,
    )
    twin = _system.simulate(rescaled_cfg)
    if base.aborted or twin.aborted:
        raise ConfigurationError("scaling comparison needs both runs to finish")

    u_scale = max(amp * max(s.u.linf() for s in base.states), 1e-300)
    s_scale = max(max(s.sigma.linf() for s in base.states), 1e-300)
    worst = 0.0
    for sb, st in zip(base.states, twin.states):
        du = max(
            float(np.max(np.abs(st.u.components[i].values - amp * sb.u.components[i].values)))
            for i in range(grid.d)
        )
        dsig = float(np.max(np.abs(st.sigma.values - sb.sigma.values)))
        worst = max(worst, du / u_scale, dsig / s_scale)
    return worst


# -- report files ----------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_diagnostics_csv(path, records: Sequence[DiagnosticRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    _fmt(r.t),
                    _fmt(r.kinetic_energy),
                    _fmt(r.dissipation),
                    _fmt(r.balance_residual),
                    _fmt(r.linf_u),
                    _fmt(r.crit_norm_sigma),
                    _fmt(r.crit_norm_u),
                    _fmt(r.high_norm_sigma),
                    _fmt(r.high_norm_u),
                    _fmt(r.mean_sigma),
                ]
            )


def write_iterate_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ITERATE_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    str(r.n),
                    _fmt(r.norm_sigma_crit),
                    _fmt(r.norm_u_crit_sup),
                    _fmt(r.norm_u_crit_l1),
                    _fmt(r.norm_grad_sigma),
                    _fmt(r.norm_grad_u),
                    _fmt(r.delta_u),
                    _fmt(r.delta_sigma),
                ]
            )


def write_run_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
