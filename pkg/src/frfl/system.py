"""Coupled density-velocity solver for the fractional Euler alignment system.

State variables are the density deviation sigma = rho - 1 and the velocity u
on a periodic grid.  The velocity equation is integrated with the exponential
(Duhamel) stepper for the linear fractional dissipation, with the nonlinear
forcing assembled term by term; the density deviation rides along with an
explicit Runge-Kutta transport step whose source keeps the total mass exact.

Two marching modes are provided: a direct predictor-corrector in time, and a
linearization sequence that freezes the previous approximation inside the
forcing, marches the velocity and then the density, and tracks successive
differences until they contract below tolerance.  Smallness gates compare the
initial critical norms against configured thresholds and, when only the
density gate passes, report a guaranteed local horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentParams, i_alpha
from .diagnostics import attach_residuals, state_record
from .dyadic import BesovSpec, besov_norm, get_decomposition
from .errors import CflViolation, ConfigurationError, DensityPositivityError
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    advective_term,
    dealiased_product,
    divergence,
    fractional_laplacian,
    gradient,
)
from .steppers import (
    HeatStepperConfig,
    TransportStepperConfig,
    get_heat_stepper,
    transport_step,
)

__all__ = [
    "SolverState",
    "ForcingTerms",
    "GateReport",
    "RunConfig",
    "Trajectory",
    "IterateRecord",
    "IterateResult",
    "assemble_forcing",
    "direct_step",
    "simulate",
    "smallness_gates",
    "init_truncated_data",
    "iterate_scheme",
]


@dataclass(frozen=True)
class SolverState:
    """One time slice (t, sigma, u) plus the nonlocal-operator parameters."""

    t: float
    sigma: ScalarField
    u: VectorField
    params: AlignmentParams

    def __post_init__(self):
        if self.sigma.grid.fingerprint != self.u.grid.fingerprint:
            raise ConfigurationError("state fields must share one grid")
        if not math.isfinite(self.t):
            raise ConfigurationError(f"state time must be finite, got {self.t}")

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    def density_min(self) -> float:
        return float(np.min(1.0 + self.sigma.values))

    def validate(self) -> "SolverState":
        dmin = self.density_min()
        if not dmin > 0.0:
            raise DensityPositivityError(
                f"density lost positivity at t = {self.t:.6g}: min rho = {dmin:.6g}",
                state=self,
            )
        return self


@dataclass(frozen=True)
class ForcingTerms:
    """Velocity forcing split into its three contributions."""

    alignment_coupling: VectorField
    weighted_diffusion: VectorField
    advection: VectorField

    @property
    def total(self) -> VectorField:
        return self.alignment_coupling + self.weighted_diffusion - self.advection


def assemble_forcing(u: VectorField, sigma: ScalarField, params: AlignmentParams) -> ForcingTerms:
    """Nonlinear velocity forcing: coupling + density-weighted dissipation - advection.

    The linear dissipation -mu Lambda^alpha u is NOT included here; the
    exponential stepper integrates it exactly.
    """
    coupling = i_alpha(u, sigma, params)
    lam_u = fractional_laplacian(u, params.alpha)
    weighted = VectorField(
        [
            dealiased_product(sigma, lam_u.components[i]) * (-params.mu)
            for i in range(u.n_components)
        ]
    )
    advection = advective_term(u, u)
    return ForcingTerms(coupling, weighted, advection)


def direct_step(
    state: SolverState,
    dt: float,
    duhamel_rule: int = 2,
    rk_order: int = 3,
    cfl_max: float = 0.5,
) -> SolverState:
    """One predictor-corrector step of the coupled system.

    Rule 1 freezes the forcing and velocity at the step start; rule 2 runs an
    exponential-Euler and transport predictor, re-evaluates the forcing, and
    closes with the trapezoidal Duhamel weights, transporting the density with
    the time-centered velocity.  The returned state is values-authoritative so
    restarted runs reproduce the original bitwise.
    """
    params = state.params
    grid = state.grid
    hcfg = HeatStepperConfig(mu=params.mu, alpha=params.alpha, dt=dt, duhamel_rule=duhamel_rule)
    tcfg = TransportStepperConfig(dt=dt, rk_order=rk_order, cfl_max=cfl_max)
    stepper = get_heat_stepper(grid, hcfg)

    f0 = assemble_forcing(state.u, state.sigma, params).total
    if duhamel_rule == 1:
        u1 = stepper.step(state.u, f0, None)
        sigma1 = transport_step(state.sigma, state.u, -divergence(state.u), tcfg)
    else:
        predictor = get_heat_stepper(
            grid, HeatStepperConfig(mu=params.mu, alpha=params.alpha, dt=dt, duhamel_rule=1)
        )
        u_pred = predictor.step(state.u, f0, None)
        sigma_pred = transport_step(state.sigma, state.u, -divergence(state.u), tcfg)
        f1 = assemble_forcing(u_pred, sigma_pred, params).total
        u1 = stepper.step(state.u, f0, f1)
        u_mid = (state.u + u1) * 0.5
        sigma1 = transport_step(state.sigma, u_mid, -divergence(u_mid), tcfg)

    new = SolverState(
        t=state.t + dt,
        sigma=sigma1.as_values_only(),
        u=u1.as_values_only(),
        params=params,
    )
    return new.validate()


@dataclass(frozen=True)
class GateReport:
    u_norm: float
    sigma_norm: float
    epsilon_gate: float
    eta_gate: float
    u_pass: bool
    sigma_pass: bool
    global_pass: bool
    local_horizon: float | None


def smallness_gates(
    sigma0: ScalarField,
    u0: VectorField,
    epsilon_gate: float,
    eta_gate: float,
    alpha: float,
) -> GateReport:
    """Compare initial critical norms against the thresholds.

    Velocity is measured at regularity 2 - alpha and density deviation at
    regularity one, both mean-free.  When only the density gate passes, the
    report carries the horizon up to which the velocity smallness can still
    be enforced, shrinking as the gradients of the data grow.
    """
    if not (1.0 < alpha < 2.0):
        raise ConfigurationError(f"order must lie in (1, 2), got {alpha}")
    if epsilon_gate <= 0.0 or eta_gate <= 0.0:
        raise ConfigurationError("gate thresholds must be positive")
    grid = sigma0.grid
    space_u = BesovSpec(s=2.0 - alpha, p=grid.d, q=1)
    space_sigma = BesovSpec(s=1.0, p=grid.d, q=1)
    u_norm = besov_norm(VectorField([c.remove_mean() for c in u0.components]), space_u)
    sigma_norm = besov_norm(sigma0.remove_mean(), space_sigma)
    u_pass = u_norm < epsilon_gate
    sigma_pass = sigma_norm < eta_gate

    local_horizon = None
    if sigma_pass and not u_pass:
        grad_u = sum(besov_norm(gradient(c), space_u) for c in u0.components)
        grad_sigma = besov_norm(gradient(sigma0), space_sigma)
        base = grad_sigma + grad_u
        if base == 0.0:
            local_horizon = math.inf
        else:
            t_linear = (epsilon_gate / base) ** alpha
            t_mixed = (
                epsilon_gate * u_norm ** (-1.0 / alpha) * base ** (-(alpha - 1.0) / alpha)
            ) ** (alpha**2 / (alpha - 1.0))
            local_horizon = min(t_linear, t_mixed)
    return GateReport(
        u_norm=u_norm,
        sigma_norm=sigma_norm,
        epsilon_gate=epsilon_gate,
        eta_gate=eta_gate,
        u_pass=u_pass,
        sigma_pass=sigma_pass,
        global_pass=u_pass and sigma_pass,
        local_horizon=local_horizon,
    )


@dataclass(frozen=True)
class RunConfig:
    """Resolved description of one run; fields carry the realized initial data."""

    grid: Grid
    alpha: float
    T_final: float
    dt: float
    sigma0: ScalarField
    u0: VectorField
    scheme: str = "direct"
    duhamel_rule: int = 2
    rk_order: int = 3
    cfl_max: float = 0.5
    n_max: int = 20
    n0: int | None = None
    stop_tol: float = 1e-8
    epsilon_gate: float = 1e-2
    eta_gate: float = 1e-2
    snapshot_stride: int = 0
    record_stride: int = 1
    iterate_store_stride: int = 1

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise ConfigurationError(f"order must lie in (1, 2), got {self.alpha}")
        if self.T_final < 0.0:
            raise ConfigurationError(f"final time must be >= 0, got {self.T_final}")
        if self.dt <= 0.0:
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        if self.scheme not in ("direct", "iterate"):
            raise ConfigurationError(f"scheme must be direct or iterate, got {self.scheme!r}")
        if self.sigma0.grid.fingerprint != self.grid.fingerprint:
            raise ConfigurationError("initial density deviation lives on a different grid")
        if self.u0.grid.fingerprint != self.grid.fingerprint:
            raise ConfigurationError("initial velocity lives on a different grid")
        if self.record_stride < 1 or self.iterate_store_stride < 1:
            raise ConfigurationError("strides must be >= 1 (snapshot stride 0 keeps ends only)")
        if self.snapshot_stride < 0:
            raise ConfigurationError("snapshot stride must be >= 0")
        if self.n_max < 0:
            raise ConfigurationError("iteration cap must be >= 0")
        if self.stop_tol < 0.0:
            raise ConfigurationError("stopping tolerance must be >= 0")
        n = self.n_steps()
        if abs(n * self.dt - self.T_final) > 1e-9 * max(self.T_final, self.dt):
            raise ConfigurationError(
                f"final time {self.T_final} is not a whole number of steps of {self.dt}"
            )

    def n_steps(self) -> int:
        return int(round(self.T_final / self.dt))

    @property
    def params(self) -> AlignmentParams:
        return AlignmentParams.create(self.grid.d, self.alpha, box_length=self.grid.box_length)


@dataclass
class Trajectory:
    config: RunConfig
    params: AlignmentParams
    gates: GateReport
    record_times: np.ndarray
    records: list
    snapshot_times: np.ndarray
    states: list
    final_state: SolverState
    aborted: bool = False
    abort_reason: str | None = None


def simulate(config: RunConfig) -> Trajectory:
    """March the direct scheme to the final time, collecting diagnostics.

    A zero final time yields the initial-data trajectory.  Positivity or CFL
    failures abort the run and are reported on the trajectory rather than
    raised, so partial output stays available.  Nothing is written to disk;
    the command-line layer owns serialization.
    """
    params = config.params
    state = SolverState(0.0, config.sigma0.as_values_only(), config.u0.as_values_only(), params)
    state.validate()
    gates = smallness_gates(
        config.sigma0, config.u0, config.epsilon_gate, config.eta_gate, config.alpha
    )

    n_steps = config.n_steps()
    records = [state_record(state)]
    record_times = [0.0]
    states = [state]
    snapshot_times = [0.0]
    final_state = state
    aborted = False
    abort_reason = None

    for k in range(1, n_steps + 1):
        try:
            state = direct_step(
                state,
                config.dt,
                duhamel_rule=config.duhamel_rule,
                rk_order=config.rk_order,
                cfl_max=config.cfl_max,
            )
        except (CflViolation, DensityPositivityError) as err:
            aborted = True
            abort_reason = f"{type(err).__name__}: {err}"
            break
        final_state = state
        if k % config.record_stride == 0 or k == n_steps:
            records.append(state_record(state))
            record_times.append(state.t)
        if (config.snapshot_stride > 0 and k % config.snapshot_stride == 0) or k == n_steps:
            states.append(state)
            snapshot_times.append(state.t)

    if final_state is not states[-1]:
        states.append(final_state)
        snapshot_times.append(final_state.t)

    dt_record = config.dt * config.record_stride
    records = attach_residuals(records, dt_record)
    return Trajectory(
        config=config,
        params=params,
        gates=gates,
        record_times=np.asarray(record_times),
        records=records,
        snapshot_times=np.asarray(snapshot_times),
        states=states,
        final_state=final_state,
        aborted=aborted,
        abort_reason=abort_reason,
    )


# -- linearization sequence ------------------------------------------------


def init_truncated_data(
    sigma0: ScalarField,
    u0: VectorField,
    n: int,
    n0: int | None = None,
) -> tuple[ScalarField, VectorField]:
    """Frequency-truncated initial data for stage n of the iteration.

    Keeps the dyadic blocks with |j| <= n + n0 of the mean-free part and
    preserves the mean exactly.  When the retained range covers every block
    on the grid the inputs are returned unchanged, bit for bit.
    """
    if n < 0:
        raise ConfigurationError(f"stage index must be >= 0, got {n}")
    grid = sigma0.grid
    dec = get_decomposition(grid)
    if n0 is None:
        n0 = max(abs(dec.j_min), abs(dec.j_max))
    if n0 < 0:
        raise ConfigurationError(f"truncation offset must be >= 0, got {n0}")
    cut = n + n0
    if cut >= max(abs(dec.j_min), abs(dec.j_max)):
        return sigma0, u0
    kept = [j for j in dec.j_indices if abs(j) <= cut]
    mult = np.zeros(grid.shape)
    for j in kept:
        mult = mult + dec.block_multiplier(j)

    def trunc(f: ScalarField) -> ScalarField:
        return f.remove_mean().apply_multiplier(mult) + f.mean()

    return trunc(sigma0), VectorField([trunc(c) for c in u0.components])


@dataclass(frozen=True)
class IterateRecord:
    n: int
    norm_sigma_crit: float
    norm_u_crit_sup: float
    norm_u_crit_l1: float
    norm_grad_sigma: float
    norm_grad_u: float
    delta_u: float
    delta_sigma: float


@dataclass
class IterateResult:
    config: RunConfig
    records: list
    times: np.ndarray
    sigma_trajectory: list
    u_trajectory: list
    converged: bool
    diverged: bool
    n_iterations: int


def _lerp_scalar(a: ScalarField, b: ScalarField, frac: float) -> ScalarField:
    if frac == 0.0:
        return a
    if frac == 1.0:
        return b
    return ScalarField.from_values(a.grid, (1.0 - frac) * a.values + frac * b.values)


def _lerp_vector(a: VectorField, b: VectorField, frac: float) -> VectorField:
    if frac == 0.0:
        return a
    if frac == 1.0:
        return b
    return VectorField(
        [
            ScalarField.from_values(
                a.grid, (1.0 - frac) * ac.values + frac * bc.values
            )
            for ac, bc in zip(a.components, b.components)
        ]
    )


def _trapezoid_sum(samples: list, h: float) -> float:
    if len(samples) < 2:
        return 0.0
    arr = np.asarray(samples)
    return float(h * (np.sum(arr) - 0.5 * (arr[0] + arr[-1])))


def iterate_scheme(config: RunConfig) -> IterateResult:
    """Linearization sequence with frozen forcing from the previous stage.

    Stage zero is the zero velocity with the (stage-zero truncated) initial
    density deviation held constant in time.  Each later stage marches the
    velocity with the exponential stepper under forcing evaluated on the
    previous stage's trajectory, then transports the density deviation with
    the new stage's time-centered velocity.  Iteration stops at the cap, on
    contraction below the stopping tolerance, or when the velocity increment
    grows three times in a row (flagged, not raised).
    """
    grid = config.grid
    params = config.params
    dt = config.dt
    n_steps = config.n_steps()
    stride = config.iterate_store_stride
    if n_steps % stride != 0 and n_steps > 0:
        raise ConfigurationError(
            f"store stride {stride} must divide the step count {n_steps}"
        )
    n_stored = (n_steps // stride) + 1 if n_steps > 0 else 1
    times = np.array([dt * stride * i for i in range(n_stored)])

    space_sigma = BesovSpec(s=1.0, p=grid.d, q=1)
    space_u_low = BesovSpec(s=2.0 - config.alpha, p=grid.d, q=1)
    space_u_high = BesovSpec(s=2.0, p=grid.d, q=1)
    dec = get_decomposition(grid)
    h_store = dt * stride

    def mean_free_u(v: VectorField) -> VectorField:
        return VectorField([c.remove_mean() for c in v.components])

    sigma_init, u_init = init_truncated_data(config.sigma0, config.u0, 0, config.n0)
    sigma_prev = [sigma_init.as_values_only() for _ in range(n_stored)]
    u_prev = [VectorField.zeros(grid) for _ in range(n_stored)]

    def prev_at(step: int) -> tuple[VectorField, ScalarField]:
        idx, rem = divmod(step, stride)
        frac = rem / stride
        if rem == 0:
            return u_prev[idx], sigma_prev[idx]
        return (
            _lerp_vector(u_prev[idx], u_prev[idx + 1], frac),
            _lerp_scalar(sigma_prev[idx], sigma_prev[idx + 1], frac),
        )

    hcfg = HeatStepperConfig(mu=params.mu, alpha=config.alpha, dt=dt, duhamel_rule=config.duhamel_rule)
    stepper = get_heat_stepper(grid, hcfg)
    tcfg = TransportStepperConfig(dt=dt, rk_order=config.rk_order, cfl_max=config.cfl_max)

    records: list[IterateRecord] = []
    converged = False
    diverged = False
    n_done = 0
    grow_streak = 0
    prev_delta_u = None

    for n in range(1, config.n_max + 1):
        sigma_init_n, u_init_n = init_truncated_data(config.sigma0, config.u0, n, config.n0)

        # velocity march under frozen forcing from the previous stage
        u = u_init_n.as_values_only()
        u_traj = [u]
        pu, ps = prev_at(0)
        f_now = assemble_forcing(pu, ps, params).total
        u_sup = besov_norm(mean_free_u(u), space_u_low, dec)
        u_high_samples = [besov_norm(mean_free_u(u), space_u_high, dec)]
        grad_u_sup = sum(besov_norm(gradient(c), space_u_low, dec) for c in u.components)
        du_sup = besov_norm(mean_free_u(u - u_prev[0]), space_u_low, dec)
        du_high_samples = [besov_norm(mean_free_u(u - u_prev[0]), space_u_high, dec)]
        for k in range(1, n_steps + 1):
            pu, ps = prev_at(k)
            f_next = assemble_forcing(pu, ps, params).total
            u = stepper.step(u, f_now, f_next)
            f_now = f_next
            if k % stride == 0:
                u = u.as_values_only()
                u_traj.append(u)
                idx = k // stride
                u_sup = max(u_sup, besov_norm(mean_free_u(u), space_u_low, dec))
                u_high_samples.append(besov_norm(mean_free_u(u), space_u_high, dec))
                grad_u_sup = max(
                    grad_u_sup,
                    sum(besov_norm(gradient(c), space_u_low, dec) for c in u.components),
                )
                diff = mean_free_u(u - u_prev[idx])
                du_sup = max(du_sup, besov_norm(diff, space_u_low, dec))
                du_high_samples.append(besov_norm(diff, space_u_high, dec))

        # density march with the new stage's time-centered velocity
        def cur_at(step: int) -> VectorField:
            i, r = divmod(step, stride)
            if r == 0:
                return u_traj[i]
            return _lerp_vector(u_traj[i], u_traj[i + 1], r / stride)

        sigma = sigma_init_n.as_values_only()
        sigma_traj = [sigma]
        sigma_sup = besov_norm(sigma.remove_mean(), space_sigma, dec)
        grad_sigma_sup = besov_norm(gradient(sigma), space_sigma, dec)
        dsigma_sup = besov_norm((sigma - sigma_prev[0]).remove_mean(), space_sigma, dec)
        for k in range(1, n_steps + 1):
            u_mid = (cur_at(k - 1) + cur_at(k)) * 0.5
            sigma = transport_step(sigma, u_mid, -divergence(u_mid), tcfg)
            if k % stride == 0:
                sigma = sigma.as_values_only()
                sigma_traj.append(sigma)
                idx = k // stride
                sigma_sup = max(sigma_sup, besov_norm(sigma.remove_mean(), space_sigma, dec))
                grad_sigma_sup = max(grad_sigma_sup, besov_norm(gradient(sigma), space_sigma, dec))
                dsigma_sup = max(
                    dsigma_sup,
                    besov_norm((sigma - sigma_prev[idx]).remove_mean(), space_sigma, dec),
                )

        delta_u = _trapezoid_sum(du_high_samples, h_store) + du_sup
        records.append(
            IterateRecord(
                n=n,
                norm_sigma_crit=sigma_sup,
                norm_u_crit_sup=u_sup,
                norm_u_crit_l1=_trapezoid_sum(u_high_samples, h_store),
                norm_grad_sigma=grad_sigma_sup,
                norm_grad_u=grad_u_sup,
                delta_u=delta_u,
                delta_sigma=dsigma_sup,
            )
        )
        u_prev = u_traj
        sigma_prev = sigma_traj
        n_done = n

        if prev_delta_u is not None and delta_u > prev_delta_u:
            grow_streak += 1
        else:
            grow_streak = 0
        prev_delta_u = delta_u
        if grow_streak >= 3:
            diverged = True
            break
        if delta_u < config.stop_tol:
            converged = True
            break

    return IterateResult(
        config=config,
        records=records,
        times=times,
        sigma_trajectory=sigma_prev,
        u_trajectory=u_prev,
        converged=converged,
        diverged=diverged,
        n_iterations=n_done,
    )
