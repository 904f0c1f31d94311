"""Time integration: the scaled Kramers-Smoluchowski equation and its limit.

The KS equation is integrated in the normalized variable u = rho/sigma,
which satisfies u_t - a Delta_x u = (1/sigma) div_xi[(sigma/tau) D_xi u].
Each step splits into an implicit (backward Euler) solve of the stiff xi
operator - self-adjoint in the sigma-weighted inner product and assembled
from the elliptic module's finite-volume operator - followed by an implicit
diffusion step in x with zero-flux (reflection) boundaries. Both substeps
are M-matrix solves, so positivity, the discrete maximum principle, and
exact conservation of the sigma-weighted mass hold step by step.

The limiting reaction-diffusion system for the valley masses alpha_i(x,t)
uses Strang splitting: half an exact reaction step (matrix exponential of
the chain generator), a Crank-Nicolson diffusion step, half a reaction step.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .asymptotics import scale_set
from .elliptic import build_weighted_operator
from .errors import SchemeError, StabilityError
from .grids import Grid
from .landscape import ValleyDecomposition
from .rates import ChainSpec, build_chain, chain_marginal, reaction_propagator

_BOUND_SLACK = 1e-10


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def _neumann_bands(nx, hx):
    """Main and off diagonal of the FV Neumann operator -Delta_h (1-d)."""
    main = np.full(nx, 2.0)
    main[0] = main[-1] = 1.0
    return main / hx**2, -np.ones(nx - 1) / hx**2


def _diffusion_values(a, grid_x):
    if grid_x is None:
        return None
    if callable(a):
        return np.asarray([float(a(x)) for x in grid_x.axis_centers(0)])
    return np.full(grid_x.shape[0], float(a))


def _alpha0_values(alpha0, K, grid_x):
    nx = 1 if grid_x is None else grid_x.shape[0]
    xs = np.zeros(1) if grid_x is None else grid_x.axis_centers(0)
    out = np.empty((K, nx))
    for i, spec in enumerate(alpha0):
        if callable(spec):
            out[i] = [float(spec(x)) for x in xs]
        else:
            out[i] = float(spec)
    return out


def _segment_plan(T, dt_bound, output_times):
    """Uniform substeps landing exactly on every output time."""
    times = sorted(set(float(t) for t in output_times))
    if not times or abs(times[-1] - T) > 1e-12:
        times = times + [float(T)]
    if any(t <= 0 or t > T + 1e-12 for t in times):
        raise ValueError("output times must lie in (0, T]")
    plan = []
    prev = 0.0
    for t in times:
        span = t - prev
        n = max(1, int(np.ceil(span / dt_bound - 1e-12)))
        plan.append((t, n, span / n))
        prev = t
    return plan


# ---------------------------------------------------------------------------
# limiting reaction-diffusion system
# ---------------------------------------------------------------------------

@dataclass
class LimitTrajectory:
    times: list
    alphas: list                 # (K, nx) arrays at the output times
    grid_x: Grid
    chain: ChainSpec
    dt_bound: float
    total_mass: np.ndarray       # sum_i int alpha_i at the output times


def limit_dt_bound(chain: ChainSpec, grid_x, a):
    """Accuracy budget dt <= 0.01 min(1/max r, h_x^2 / max a)."""
    max_r = float(np.max(chain.r)) if chain.K > 1 else 0.0
    bound = np.inf
    if max_r > 0:
        bound = min(bound, 1.0 / max_r)
    a_values = _diffusion_values(a, grid_x)
    if a_values is not None and float(np.max(a_values)) > 0:
        bound = min(bound, grid_x.spacing[0] ** 2 / float(np.max(a_values)))
    return 0.01 * bound


def solve_limit_system(chain: ChainSpec, alpha0, grid_x: Grid, T,
                       dt=None, output_times=None, a=1.0):
    """Integrate the K-component linear reaction-diffusion system.

    Neumann boundary in x; the reaction step is the exact matrix exponential
    of the chain generator, diffusion is Crank-Nicolson, combined by Strang
    splitting. ``a`` is a scalar or a function of x applied to every
    component.
    """
    if grid_x is not None and grid_x.ndim != 1:
        raise ValueError("limit system expects a 1-d x grid")
    bound = limit_dt_bound(chain, grid_x, a)
    if dt is not None and dt > bound * (1 + 1e-9):
        raise StabilityError(f"dt={dt} exceeds the accuracy budget {bound:.3e}")
    dt_bound = dt if dt is not None else (bound if np.isfinite(bound) else T / 100.0)
    if output_times is None:
        output_times = [T]
    plan = _segment_plan(T, dt_bound, output_times)

    alphas = _alpha0_values(alpha0, chain.K, grid_x)
    nx = alphas.shape[1]
    hx = 1.0 if grid_x is None else grid_x.spacing[0]
    a_values = _diffusion_values(a, grid_x)
    diffusive = a_values is not None and float(np.max(np.abs(a_values))) > 0 and nx > 1

    out_times, out_fields, masses = [], [], []
    requested = set(float(t) for t in output_times)
    for (t_end, nsteps, step) in plan:
        propagator_half = reaction_propagator(chain, step / 2.0)
        if diffusive:
            main, off = _neumann_bands(nx, hx)
            ab = np.zeros((3, nx))
            ab[1] = 1.0 + step / 2.0 * a_values * main
            ab[0, 1:] = step / 2.0 * a_values[1:] * off
            ab[2, :-1] = step / 2.0 * a_values[:-1] * off
        for _ in range(nsteps):
            alphas = propagator_half @ alphas
            if diffusive:
                lap = main * alphas
                lap[:, :-1] += off * alphas[:, 1:]
                lap[:, 1:] += off * alphas[:, :-1]
                rhs = alphas - step / 2.0 * a_values * lap
                alphas = solve_banded((1, 1), ab, rhs.T).T
            alphas = propagator_half @ alphas
        if t_end in requested:
            out_times.append(t_end)
            out_fields.append(alphas.copy())
            masses.append(float(alphas.sum() * hx))
    return LimitTrajectory(
        times=out_times,
        alphas=out_fields,
        grid_x=grid_x,
        chain=chain,
        dt_bound=dt_bound,
        total_mass=np.asarray(masses),
    )


# ---------------------------------------------------------------------------
# Kramers-Smoluchowski solve
# ---------------------------------------------------------------------------

@dataclass
class StepMonitors:
    """Per-step extrema and sigma-weighted norms collected while stepping."""

    times: list = field(default_factory=list)
    sup_u: list = field(default_factory=list)
    inf_u: list = field(default_factory=list)
    l2_sigma: list = field(default_factory=list)
    ut_accumulated: list = field(default_factory=list)


@dataclass
class KSTrajectory:
    times: list
    snapshots: list              # (nx, n_xi) arrays at the output times
    epsilon: float
    decomposition: ValleyDecomposition
    grid_x: Grid                 # may be None (x-independent run)
    a_values: np.ndarray         # may be None
    dt: float
    sup_u0: float
    monitors: StepMonitors
    dx_norms: list = None        # int int |D_x u|^2 sigma at output times
    dxi_energy: list = None      # int int (sigma/tau) |D_xi u|^2 at output times

    @property
    def hx(self):
        return 1.0 if self.grid_x is None else self.grid_x.spacing[0]


def ks_dt_bound(decomposition: ValleyDecomposition, epsilon):
    """dt resolving the intra-well relaxation: 0.1 tau_eps * (eps / max curvature)."""
    lam_max = max(float(m.eigenvalues[-1]) for m in decomposition.minima)
    tau = np.exp(-decomposition.barrier / epsilon) / epsilon
    return 0.1 * tau * epsilon / lam_max


def initial_profile(decomposition: ValleyDecomposition, chain: ChainSpec,
                    alpha0_values):
    """Normalized initial data u_0 = (mu/mu_i) alpha_i^0 on the valleys.

    Constant in xi on each wide valley core, blended by a cosine ramp over
    the shell Phi in (H - eta, H - eta/2) into the neutral level
    sum_j alpha_j^0, which fills the transition region.
    """
    phi = decomposition.phi.ravel()
    H, eta = decomposition.H, decomposition.eta
    theta = np.clip((phi - (H - eta)) / (eta / 2.0), 0.0, 1.0)
    ramp = 0.5 * (1.0 - np.cos(np.pi * theta))

    alpha0_values = np.asarray(alpha0_values, dtype=float)
    nx = alpha0_values.shape[1]
    ubar = alpha0_values.sum(axis=0)            # (nx,)
    level = chain.mu / chain.mu_i               # (K,)

    u0 = np.repeat(ubar[:, None], phi.size, axis=1)
    for i, mask in enumerate(decomposition.wide_masks):
        flat = mask.ravel()
        valley_value = level[i] * alpha0_values[i]          # (nx,)
        mix = (1.0 - ramp[flat])[None, :] * valley_value[:, None] \
            + ramp[flat][None, :] * ubar[:, None]
        u0[:, flat] = mix
    return u0


def solve_ks(decomposition: ValleyDecomposition, epsilon, a, alpha0,
             grid_x: Grid, T, dt=None, output_times=None):
    """Integrate the time-rescaled KS equation in the variable u = rho/sigma.

    ``grid_x`` may be None for x-independent scenarios (then ``a`` must be 0).
    Raises StabilityError when a user dt exceeds the fast-relaxation budget
    and SchemeError if positivity or the maximum principle fail.
    """
    if decomposition.grid.ndim != 1:
        raise ValueError("the evolution solver supports 1-d xi grids")
    if grid_x is not None and grid_x.ndim != 1:
        raise ValueError("the x domain must be an interval")

    chain = build_chain(decomposition)
    scales = scale_set(decomposition, epsilon)
    op = build_weighted_operator(decomposition, epsilon)

    bound = ks_dt_bound(decomposition, epsilon)
    if dt is not None and dt > bound * (1 + 1e-9):
        raise StabilityError(
            f"dt={dt} exceeds the fast-relaxation budget {bound:.3e} at eps={epsilon}"
        )
    dt_bound = dt if dt is not None else min(bound, T / 20.0)
    if output_times is None:
        output_times = [T]
    plan = _segment_plan(T, dt_bound, output_times)

    alpha0_values = _alpha0_values(alpha0, decomposition.K, grid_x)
    u = initial_profile(decomposition, chain, alpha0_values)
    nx, n = u.shape
    sup_u0 = float(u.max())
    if float(u.min()) < 0:
        raise SchemeError("initial data is negative")

    masses = scales.sigma_cell_masses()          # (n,)
    a_values = _diffusion_values(a, grid_x)
    diffusive = a_values is not None and float(np.max(np.abs(a_values))) > 0 and nx > 1
    # physical xi operator bands: A = weight_factor * matrix (tridiagonal)
    a_diag = op.matrix.diagonal() * op.weight_factor
    a_off = op.matrix.diagonal(1) * op.weight_factor

    hx = 1.0 if grid_x is None else grid_x.spacing[0]
    monitors = StepMonitors()
    out_times, snapshots, dx_norms, dxi_energy = [], [], [], []
    requested = set(float(t) for t in output_times)

    t = 0.0
    for (t_end, nsteps, step) in plan:
        ab = np.zeros((2, n))
        ab[1] = masses + step * a_diag
        ab[0, 1:] = step * a_off
        chol = cholesky_banded(ab)
        if diffusive:
            main, off = _neumann_bands(nx, hx)
            abx = np.zeros((3, nx))
            abx[1] = 1.0 + step * a_values * main
            abx[0, 1:] = step * a_values[1:] * off
            abx[2, :-1] = step * a_values[:-1] * off
        for _ in range(nsteps):
            previous = u
            u = cho_solve_banded((chol, False), (masses * u).T).T
            if diffusive:
                u = solve_banded((1, 1), abx, u)
            t += step
            sup = float(u.max())
            inf = float(u.min())
            if inf < -1e-12:
                raise SchemeError(f"negative density {inf:.3e} at t={t:.6g}")
            if sup > sup_u0 * (1 + _BOUND_SLACK) + _BOUND_SLACK:
                raise SchemeError(
                    f"maximum principle violated: sup u = {sup:.6g} > sup u0 = "
                    f"{sup_u0:.6g} at t={t:.6g}"
                )
            monitors.times.append(t)
            monitors.sup_u.append(sup)
            monitors.inf_u.append(inf)
            monitors.l2_sigma.append(float(np.sum(u * u * masses) * hx))
            increment = float(np.sum((u - previous) ** 2 * masses) * hx) / step
            last = monitors.ut_accumulated[-1] if monitors.ut_accumulated else 0.0
            monitors.ut_accumulated.append(last + increment)
        if t_end in requested:
            out_times.append(t_end)
            snapshots.append(u.copy())
            energy = sum(
                float(op.weight_factor * (row @ (op.matrix @ row))) for row in u
            ) * hx
            dxi_energy.append(energy)
            if nx > 1:
                diff = (u[1:] - u[:-1]) / hx
                dx_norms.append(float(np.sum(diff**2 * masses[None, :]) * hx))
            else:
                dx_norms.append(0.0)

    return KSTrajectory(
        times=out_times,
        snapshots=snapshots,
        epsilon=epsilon,
        decomposition=decomposition,
        grid_x=grid_x,
        a_values=a_values,
        dt=dt_bound,
        sup_u0=sup_u0,
        monitors=monitors,
        dx_norms=dx_norms,
        dxi_energy=dxi_energy,
    )


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@dataclass
class MassSeries:
    times: np.ndarray
    masses: np.ndarray           # (n_times, K)
    delta_mass: np.ndarray
    total: np.ndarray


def valley_masses(trajectory: KSTrajectory, decomposition: ValleyDecomposition):
    """Valley-localized integrals of rho = u sigma, plus the Delta remainder."""
    masses = scale_set(decomposition, trajectory.epsilon).sigma_cell_masses()
    hx = trajectory.hx
    flat_masks = [m.ravel() for m in decomposition.valley_masks]
    delta = decomposition.delta_mask.ravel()
    rows, deltas, totals = [], [], []
    for u in trajectory.snapshots:
        weighted = u * masses[None, :]
        rows.append([float(weighted[:, m].sum() * hx) for m in flat_masks])
        deltas.append(float(weighted[:, delta].sum() * hx))
        totals.append(float(weighted.sum() * hx))
    return MassSeries(
        times=np.asarray(trajectory.times),
        masses=np.asarray(rows),
        delta_mass=np.asarray(deltas),
        total=np.asarray(totals),
    )


def x_resolved_densities(trajectory: KSTrajectory,
                         decomposition: ValleyDecomposition):
    """alpha_i^eps(x, t) = int_{V_i} u sigma dxi at the output times."""
    masses = scale_set(decomposition, trajectory.epsilon).sigma_cell_masses()
    flat_masks = [m.ravel() for m in decomposition.valley_masks]
    out = np.empty((len(trajectory.snapshots), decomposition.K,
                    trajectory.snapshots[0].shape[0]))
    for k, u in enumerate(trajectory.snapshots):
        weighted = u * masses[None, :]
        for i, mask in enumerate(flat_masks):
            out[k, i] = weighted[:, mask].sum(axis=1)
    return np.asarray(trajectory.times), out


# ---------------------------------------------------------------------------
# convergence experiment and monitors
# ---------------------------------------------------------------------------

@dataclass
class EvolutionScenario:
    """Fixed problem data for a convergence sweep."""

    decomposition: ValleyDecomposition
    a: object                    # scalar or callable on x
    alpha0: object               # list of K scalars or callables on x
    T: float
    output_times: list
    grid_x: Grid = None
    dt: float = None

    def x_independent(self):
        scalar_a = (not callable(self.a)) and float(self.a) == 0.0
        scalar_alpha = all(not callable(v) for v in self.alpha0)
        return scalar_a and scalar_alpha


@dataclass
class ConvergenceEntry:
    epsilon: float
    error: float
    masses: MassSeries
    dt: float


@dataclass
class ConvergenceReport:
    entries: list
    monotone: bool
    mode: str                    # "masses" or "l2x"

    @property
    def errors(self):
        return {e.epsilon: e.error for e in self.entries}


def convergence_report(epsilon_list, scenario: EvolutionScenario):
    """Run the KS solve across epsilons against the limiting dynamics.

    In the x-independent case the error is the worst valley-mass deviation
    from the chain marginals over the output times; with diffusion it is the
    space-time L2 distance of the x-resolved valley densities from the limit
    reaction-diffusion solution.
    """
    decomposition = scenario.decomposition
    # a lives on the x domain, so it enters the limit solver directly and is
    # not evaluated at the xi-space minima here
    chain = build_chain(decomposition)
    x_independent = scenario.x_independent()

    if x_independent:
        alpha_ref = None
    else:
        limit = solve_limit_system(
            chain, scenario.alpha0, scenario.grid_x, scenario.T,
            output_times=scenario.output_times, a=scenario.a,
        )
        alpha_ref = {t: a for t, a in zip(limit.times, limit.alphas)}

    entries = []
    for eps in epsilon_list:
        trajectory = solve_ks(
            decomposition, eps, scenario.a, scenario.alpha0,
            None if x_independent else scenario.grid_x,
            scenario.T, dt=scenario.dt, output_times=scenario.output_times,
        )
        series = valley_masses(trajectory, decomposition)
        if x_independent:
            alpha0_values = _alpha0_values(scenario.alpha0, decomposition.K, None)
            reference = chain_marginal(chain, alpha0_values[:, 0],
                                       np.asarray(trajectory.times))
            error = float(np.max(np.abs(series.masses - reference)))
        else:
            _, densities = x_resolved_densities(trajectory, decomposition)
            hx = trajectory.hx
            total = 0.0
            prev_t = 0.0
            for k, t in enumerate(trajectory.times):
                diff = densities[k] - alpha_ref[t]
                total += (t - prev_t) * float(np.sum(diff**2) * hx)
                prev_t = t
            error = float(np.sqrt(total))
        entries.append(ConvergenceEntry(epsilon=float(eps), error=error,
                                        masses=series, dt=trajectory.dt))
    errors = [e.error for e in entries]
    monotone = all(a > b for a, b in zip(errors, errors[1:]))
    return ConvergenceReport(entries=entries, monotone=monotone,
                             mode="masses" if x_independent else "l2x")


@dataclass
class MonitorReport:
    times: np.ndarray
    sup_u: np.ndarray
    inf_u: np.ndarray
    l2_sigma: np.ndarray
    ut_accumulated: np.ndarray
    sup_u0: float
    bounds_ok: bool
    lyapunov_monotone: bool      # meaningful for a = 0 runs


def energy_monitor(trajectory: KSTrajectory):
    """Summarize the per-step bounds and dissipation monitors of a run."""
    m = trajectory.monitors
    sup = np.asarray(m.sup_u)
    inf = np.asarray(m.inf_u)
    l2 = np.asarray(m.l2_sigma)
    bounds_ok = bool(
        np.all(inf >= -1e-12)
        and np.all(sup <= trajectory.sup_u0 * (1 + _BOUND_SLACK) + _BOUND_SLACK)
    )
    lyapunov = bool(np.all(np.diff(l2) <= l2[:-1] * 1e-12 + 1e-300))
    return MonitorReport(
        times=np.asarray(m.times),
        sup_u=sup,
        inf_u=inf,
        l2_sigma=l2,
        ut_accumulated=np.asarray(m.ut_accumulated),
        sup_u0=trajectory.sup_u0,
        bounds_ok=bounds_ok,
        lyapunov_monotone=lyapunov,
    )
