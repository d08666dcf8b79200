"""Command-line front end: subcommand dispatch, run directories, reports.

Exit codes: 0 success, 1 domain failure (strict-gate failure, aborted march,
failed verification), 2 configuration problems.  Every simulate/iterate/
particles/verify/scaling-check run writes run_summary.json with the fully
resolved configuration; numeric outputs are deterministic for a fixed config
and seed, independent of FRFL_THREADS.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from .alignment import AlignmentParams, i_alpha, i_alpha_oracle
from .config import (
    apply_overrides,
    build_diagnostics_settings,
    build_grid,
    build_particle_settings,
    build_run_config,
    config_echo,
    load_config,
)
from .diagnostics import (
    cauchy_monitor,
    flocking_report,
    inequality_harness,
    scaling_check,
    write_diagnostics_csv,
    write_iterate_csv,
    write_run_summary,
)
from .dyadic import BesovSpec, besov_block_rows, besov_norm, besov_norm_fd, get_decomposition
from .errors import CflViolation, ConfigurationError, DensityPositivityError, DomainError, FrflError
from .particles import (
    ParticleEnsemble,
    cs_step,
    deposit_fields,
    kinetic_fluctuation,
    total_momentum,
    velocity_diameter,
)
from .snapshots import read_snapshot, write_snapshot, write_state_fields
from .spectral import ScalarField, VectorField, make_grid
from .steppers import HeatStepperConfig, get_heat_stepper, maximal_regularity_ratio
from .system import RunConfig, iterate_scheme, simulate

__all__ = ["main"]


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _prepare_out_dir(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise ConfigurationError(f"output path {out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise ConfigurationError(
                f"output directory {out} is not empty; pass --force to reuse it"
            )
    else:
        out.mkdir(parents=True)
    return out


def _gate_dict(gates) -> dict:
    return dataclasses.asdict(gates)


def _bounded_2x(series) -> bool:
    initial = series[0]
    if initial == 0.0:
        return all(v == 0.0 for v in series)
    return max(series) <= 2.0 * initial


# -- simulate --------------------------------------------------------------


def cmd_simulate(args, parser) -> int:
    run_cfg = dataclasses.replace(build_run_config(parser), scheme="direct")
    diag = build_diagnostics_settings(parser)
    out = _prepare_out_dir(args.out, args.force)
    try:
        traj = simulate(run_cfg)
    except (DensityPositivityError, CflViolation) as err:
        write_run_summary(
            out / "run_summary.json",
            {
                "command": "simulate",
                "seed": args.seed,
                "config": config_echo(parser),
                "aborted": True,
                "abort_reason": f"{type(err).__name__}: {err}",
            },
        )
        print(f"run aborted: {err}", file=sys.stderr)
        return 1

    write_diagnostics_csv(out / "diagnostics.csv", traj.records)
    write_state_fields(out, traj.final_state.sigma, traj.final_state.u, prefix="final_")
    flock = flocking_report(traj.records, diag.decay_fraction)
    sigma_series = [r.crit_norm_sigma for r in traj.records]
    u_series = [r.crit_norm_u for r in traj.records]
    mean0 = traj.records[0].mean_sigma
    summary = {
        "command": "simulate",
        "seed": args.seed,
        "config": config_echo(parser),
        "gates": _gate_dict(traj.gates),
        "aborted": traj.aborted,
        "abort_reason": traj.abort_reason,
        "t_end": traj.final_state.t,
        "n_records": len(traj.records),
        "verdicts": {
            "flocking_decayed": flock.decayed,
            "flocking_initial": flock.initial,
            "flocking_final": flock.final,
            "sigma_norm_bounded_2x": _bounded_2x(sigma_series),
            "u_norm_bounded_2x": _bounded_2x(u_series),
            "min_dissipation": min(r.dissipation for r in traj.records),
            "max_mean_sigma_drift": max(abs(r.mean_sigma - mean0) for r in traj.records),
        },
    }
    write_run_summary(out / "run_summary.json", summary)
    if traj.aborted:
        print(f"run aborted: {traj.abort_reason}", file=sys.stderr)
        return 1
    if args.strict_gates and not traj.gates.global_pass:
        print(
            "smallness gates failed in strict mode: "
            f"u {traj.gates.u_norm:.3e} vs {traj.gates.epsilon_gate:.3e}, "
            f"sigma {traj.gates.sigma_norm:.3e} vs {traj.gates.eta_gate:.3e}",
            file=sys.stderr,
        )
        return 1
    return 0


# -- iterate ---------------------------------------------------------------


def cmd_iterate(args, parser) -> int:
    run_cfg = dataclasses.replace(build_run_config(parser), scheme="iterate")
    out = _prepare_out_dir(args.out, args.force)
    from .system import smallness_gates

    gates = smallness_gates(
        run_cfg.sigma0, run_cfg.u0, run_cfg.epsilon_gate, run_cfg.eta_gate, run_cfg.alpha
    )
    result = iterate_scheme(run_cfg)
    write_iterate_csv(out / "iterates.csv", result.records)
    if result.u_trajectory:
        write_state_fields(
            out, result.sigma_trajectory[-1], result.u_trajectory[-1], prefix="final_"
        )
    contraction = None
    if len(result.records) >= 3:
        report = cauchy_monitor(result.records)
        contraction = {
            "fitted_rate": report.fitted_rate,
            "contracting": report.contracting,
            "u_ratios": list(report.u_ratios),
        }
    summary = {
        "command": "iterate",
        "seed": args.seed,
        "config": config_echo(parser),
        "gates": _gate_dict(gates),
        "converged": result.converged,
        "diverged": result.diverged,
        "n_iterations": result.n_iterations,
        "delta_u": [r.delta_u for r in result.records],
        "delta_sigma": [r.delta_sigma for r in result.records],
        "contraction": contraction,
    }
    write_run_summary(out / "run_summary.json", summary)
    if args.strict_gates and not gates.global_pass:
        print("smallness gates failed in strict mode", file=sys.stderr)
        return 1
    return 0


# -- particles -------------------------------------------------------------

PARTICLE_CSV_BASE = ("t", "velocity_diameter", "kinetic_fluctuation")


def cmd_particles(args, parser) -> int:
    settings = build_particle_settings(parser)
    out = _prepare_out_dir(args.out, args.force)
    rng = np.random.default_rng(args.seed)
    positions = rng.uniform(0.0, settings.box_length, size=(settings.count, settings.dimension))
    velocities = settings.velocity_scale * rng.normal(
        size=(settings.count, settings.dimension)
    )
    ensemble = ParticleEnsemble(positions, velocities, settings.box_length)

    n_steps = int(round(settings.t_final / settings.dt))
    if abs(n_steps * settings.dt - settings.t_final) > 1e-9 * max(settings.t_final, settings.dt):
        raise ConfigurationError(
            f"particle horizon {settings.t_final} is not a whole number of steps of {settings.dt}"
        )
    columns = PARTICLE_CSV_BASE + tuple(
        f"momentum_{ax}" for ax in range(settings.dimension)
    )

    def row(t, ens):
        mom = total_momentum(ens)
        return [_fmt(t), _fmt(velocity_diameter(ens)), _fmt(kinetic_fluctuation(ens))] + [
            _fmt(m) for m in mom
        ]

    rows = [row(0.0, ensemble)]
    momentum0 = total_momentum(ensemble)
    diameter0 = velocity_diameter(ensemble)
    for k in range(1, n_steps + 1):
        ensemble = cs_step(ensemble, settings.dt, settings.alpha, settings.delta_reg)
        if k % settings.record_stride == 0 or k == n_steps:
            rows.append(row(k * settings.dt, ensemble))

    with open(out / "particles.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)

    grid = build_grid(parser)
    rho, u = deposit_fields(ensemble, grid, kernel_width=settings.kernel_width)
    write_snapshot(out / "deposited_rho.snap", rho, "rho")
    for ax, comp in enumerate(u.components):
        write_snapshot(out / f"deposited_u{ax}.snap", comp, f"u{ax}")

    summary = {
        "command": "particles",
        "seed": args.seed,
        "config": config_echo(parser),
        "n_agents": settings.count,
        "t_end": n_steps * settings.dt,
        "initial_velocity_diameter": diameter0,
        "final_velocity_diameter": velocity_diameter(ensemble),
        "final_kinetic_fluctuation": kinetic_fluctuation(ensemble),
        "momentum_drift": float(np.max(np.abs(total_momentum(ensemble) - momentum0))),
    }
    write_run_summary(out / "run_summary.json", summary)
    return 0


# -- verify ----------------------------------------------------------------


def _verify_checks(seed: int):
    checks = []
    grid = make_grid(1, 64)
    dec = get_decomposition(grid)
    checks.append(("partition_of_unity", dec.partition_error, 1e-12))

    worst_overlap = 0.0
    mults = dec.block_multipliers
    for a in range(mults.shape[0]):
        for b in range(a + 2, mults.shape[0]):
            worst_overlap = max(worst_overlap, float(np.max(mults[a] * mults[b])))
    checks.append(("block_orthogonality", worst_overlap, 0.0))

    x = grid.x_axes[0]
    params = AlignmentParams.create(1, 1.5)
    u_mode = VectorField.from_values(grid, [np.cos(3.0 * x)])
    hcfg = HeatStepperConfig(mu=params.mu, alpha=1.5, dt=0.01, duhamel_rule=2)
    stepper = get_heat_stepper(grid, hcfg)
    state = u_mode
    for _ in range(10):
        state = stepper.step(state, VectorField.zeros(grid), VectorField.zeros(grid))
    expect = np.exp(-params.mu * 3.0**1.5 * 0.1) * np.cos(3.0 * x)
    rel = float(
        np.max(np.abs(state.components[0].values - expect)) / np.max(np.abs(expect))
    )
    checks.append(("semigroup_eigenmode", rel, 1e-12))

    half = get_heat_stepper(grid, HeatStepperConfig(mu=params.mu, alpha=1.5, dt=0.005, duhamel_rule=2))
    twice = half.step(
        half.step(u_mode, VectorField.zeros(grid), VectorField.zeros(grid)),
        VectorField.zeros(grid),
        VectorField.zeros(grid),
    )
    once = stepper.step(u_mode, VectorField.zeros(grid), VectorField.zeros(grid))
    gap = float(
        np.max(np.abs(twice.components[0].values - once.components[0].values))
        / np.max(np.abs(once.components[0].values))
    )
    checks.append(("semigroup_composition", gap, 1e-12))

    rng = np.random.default_rng(seed)
    worst_pair = 0.0
    params_small = AlignmentParams.create(1, 1.5, tail_radius=8.0 * grid.box_length)
    for _ in range(3):
        su = sum(
            rng.normal() * np.cos(m * x + rng.uniform(0, 2 * np.pi)) for m in range(1, 7)
        )
        ss = sum(
            rng.normal() * np.cos(m * x + rng.uniform(0, 2 * np.pi)) for m in range(1, 7)
        )
        uu = VectorField.from_values(grid, [su])
        sig = ScalarField.from_values(grid, ss)
        spectral_side = i_alpha(uu, sig, params_small).components[0].values
        oracle_side = i_alpha_oracle(uu, sig, params_small).components[0].values
        scale = float(np.sqrt(np.mean(spectral_side**2)))
        gap = float(np.sqrt(np.mean((spectral_side - oracle_side) ** 2))) / max(scale, 1e-300)
        worst_pair = max(worst_pair, gap)
    checks.append(("coupling_vs_quadrature", worst_pair, 1e-3))

    mode = VectorField.from_values(grid, [np.cos(4.0 * x)])
    lam = params.mu * 4.0**1.5
    result = maximal_regularity_ratio(
        mode,
        lambda t: VectorField.zeros(grid),
        0.5,
        HeatStepperConfig(mu=params.mu, alpha=1.5, dt=0.0005, duhamel_rule=2),
    )
    low = besov_norm(mode, BesovSpec(s=0.5, p=1, q=1))
    high = besov_norm(mode, BesovSpec(s=2.0, p=1, q=1))
    expect_ratio = 1.0 + (high / low) * (1.0 - math.exp(-lam * 0.5)) / lam
    ratio_gap = abs(result.ratio - expect_ratio) / expect_ratio
    checks.append(("maximal_regularity_closed_form", ratio_gap, 1e-2))

    reports = inequality_harness(seed=seed, n_samples=5, grid_sizes=(32, 64), alpha=1.5)
    checks.append(("harness_max_constant", max(r.constant for r in reports), 50.0))
    checks.append(("harness_growth_flags", float(sum(r.growth_flag for r in reports)), 0.0))
    return checks


def cmd_verify(args, parser) -> int:
    out = _prepare_out_dir(args.out, args.force)
    checks = _verify_checks(args.seed)
    all_pass = True
    with open(out / "verify.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("check", "value", "threshold", "passed"))
        for name, value, threshold in checks:
            ok = value <= threshold
            all_pass = all_pass and ok
            writer.writerow((name, _fmt(value), _fmt(threshold), str(ok).lower()))
    write_run_summary(
        out / "run_summary.json",
        {
            "command": "verify",
            "seed": args.seed,
            "config": config_echo(parser),
            "all_passed": all_pass,
            "checks": {
                name: {"value": value, "threshold": threshold, "passed": value <= threshold}
                for name, value, threshold in checks
            },
        },
    )
    if not all_pass:
        print("verification failures; see verify.csv", file=sys.stderr)
        return 1
    return 0


# -- scaling-check ---------------------------------------------------------


def cmd_scaling_check(args, parser) -> int:
    run_cfg = dataclasses.replace(build_run_config(parser), scheme="direct")
    diag = build_diagnostics_settings(parser)
    out = _prepare_out_dir(args.out, args.force)
    mismatch = scaling_check(run_cfg, diag.scaling_lambda)
    passed = mismatch <= diag.scaling_tolerance
    write_run_summary(
        out / "run_summary.json",
        {
            "command": "scaling-check",
            "seed": args.seed,
            "config": config_echo(parser),
            "lambda": diag.scaling_lambda,
            "mismatch": mismatch,
            "tolerance": diag.scaling_tolerance,
            "passed": passed,
        },
    )
    if not passed:
        print(
            f"scaling mismatch {mismatch:.3e} above tolerance {diag.scaling_tolerance:.3e}",
            file=sys.stderr,
        )
        return 1
    return 0


# -- besov-norm ------------------------------------------------------------


def cmd_besov_norm(args, parser) -> int:
    field, name = read_snapshot(args.snapshot)
    p = args.p if args.p is not None else float(field.grid.d)
    spec = BesovSpec(s=args.smoothness, p=p, q=args.q)
    rows = besov_block_rows(field, spec)
    total = besov_norm(field, spec)
    writer = csv.writer(sys.stdout)
    writer.writerow(("j", "block_norm", "weighted_term"))
    for j, block, weighted in rows:
        writer.writerow((str(j), _fmt(block), _fmt(weighted)))
    writer.writerow(("total", name, _fmt(total)))
    if args.fd:
        writer.writerow(("fd_oracle", name, _fmt(besov_norm_fd(field, spec))))
    return 0


# -- dispatch --------------------------------------------------------------


def _add_common(sub, out_required=True):
    sub.add_argument("--config", default=None, help="path to an INI run configuration")
    if out_required:
        sub.add_argument("--out", required=True, help="output directory (empty, or --force)")
        sub.add_argument("--force", action="store_true", help="reuse a non-empty output directory")
    sub.add_argument("--seed", type=int, default=0, help="seed for randomized pieces")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable; wins over the file)",
    )
    sub.add_argument(
        "--strict-gates",
        action="store_true",
        help="exit 1 when the smallness gates fail",
    )


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="frfl",
        description="Pseudospectral fractional Euler alignment toolkit",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("simulate", help="direct time integration"))
    _add_common(sub.add_parser("iterate", help="linearization sequence with difference monitoring"))
    _add_common(sub.add_parser("particles", help="agent-based alignment dynamics"))
    _add_common(sub.add_parser("verify", help="deterministic self-checks"))
    _add_common(sub.add_parser("scaling-check", help="parabolic rescaling comparison"))

    bn = sub.add_parser("besov-norm", help="print dyadic block rows for a snapshot")
    bn.add_argument("snapshot", help="field snapshot file")
    bn.add_argument("-s", "--smoothness", type=float, required=True)
    bn.add_argument("-p", type=float, default=None, help="integrability (default: dimension)")
    bn.add_argument("-q", type=float, default=1.0, help="summation exponent (default 1)")
    bn.add_argument("--fd", action="store_true", help="also print the finite-difference oracle")
    bn.add_argument("--config", default=None)
    bn.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE"
    )
    return ap


_COMMANDS = {
    "simulate": cmd_simulate,
    "iterate": cmd_iterate,
    "particles": cmd_particles,
    "verify": cmd_verify,
    "scaling-check": cmd_scaling_check,
    "besov-norm": cmd_besov_norm,
}


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        parser = load_config(args.config)
        apply_overrides(parser, args.overrides)
        return _COMMANDS[args.command](args, parser)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except (DomainError, FrflError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
