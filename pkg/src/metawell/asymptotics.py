"""Gibbs scales at finite epsilon and their Laplace asymptotics.

The scale set holds tau = eps^{-1} exp(-(H-h)/eps), the partition function
Z = integral of exp(-Phi/eps), and evaluators for the Gibbs density sigma
and the weight sigma/tau. Everything is computed from the shifted integrand
exp(-(Phi-h)/eps) (bounded by 1) so a large |h| cannot overflow; the global
prefactor is carried separately in log form.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ResolutionError
from .grids import Grid
from .landscape import ValleyDecomposition


def require_resolution(grid: Grid, epsilon):
    limit = np.sqrt(epsilon) / 4.0
    worst = max(grid.spacing)
    if worst > limit * (1 + 1e-12):
        raise ResolutionError(
            f"grid spacing {worst:.6g} exceeds sqrt(eps)/4 = {limit:.6g} "
            f"at eps = {epsilon}"
        )


@dataclass
class ScaleSet:
    """tau, Z, sigma, and sigma/tau for one epsilon on one grid."""

    epsilon: float
    H: float
    h: float
    grid: Grid
    phi: np.ndarray
    what: np.ndarray = field(init=False)       # exp(-(Phi-h)/eps), in (0, 1]
    zhat: float = field(init=False)            # integral of what = Z * exp(h/eps)
    log_weight_factor: float = field(init=False)

    def __post_init__(self):
        require_resolution(self.grid, self.epsilon)
        self.what = np.exp(-(self.phi - self.h) / self.epsilon)
        self.zhat = self.grid.integrate(self.what)
        if not (np.isfinite(self.zhat) and self.zhat > 0):
            raise PreconditionError("partition function is not finite and positive")
        # sigma/tau = weight_factor * what, weight_factor = eps e^{(H-h)/eps}/zhat
        self.log_weight_factor = (
            np.log(self.epsilon) + (self.H - self.h) / self.epsilon - np.log(self.zhat)
        )

    @property
    def tau(self):
        return np.exp(-(self.H - self.h) / self.epsilon) / self.epsilon

    @property
    def log_Z(self):
        return float(np.log(self.zhat) - self.h / self.epsilon)

    @property
    def Z(self):
        return float(np.exp(self.log_Z))

    @property
    def weight_factor(self):
        return float(np.exp(self.log_weight_factor))

    def sigma_values(self):
        """Gibbs density at cell centers; integrates to 1 on the grid exactly."""
        return self.what / self.zhat

    def sigma_cell_masses(self):
        """sigma integrated over each cell (midpoint rule)."""
        return self.what * (self.grid.cell_volume / self.zhat)

    def ratio_values(self):
        """sigma/tau at cell centers."""
        return self.weight_factor * self.what


def scale_set(decomposition: ValleyDecomposition, epsilon):
    return ScaleSet(
        epsilon=float(epsilon),
        H=decomposition.H,
        h=decomposition.h,
        grid=decomposition.grid,
        phi=decomposition.phi,
    )


def partition_function(potential, epsilon, grid: Grid):
    """Midpoint-rule Z_eps = integral of exp(-Phi/eps) over the truncation box."""
    require_resolution(grid, epsilon)
    phi = potential.value_on(grid)
    return grid.integrate(np.exp(-phi / epsilon))


@dataclass
class LaplaceRow:
    epsilon: float
    Z: float
    rho_Z: float
    rho_V: np.ndarray
    rho_delta: float


@dataclass
class LaplaceReport:
    rows: list
    rho_Z_decreasing: bool
    rho_V_decreasing: list      # per valley
    rho_delta_decreasing: bool

    @property
    def converged(self):
        return (
            self.rho_Z_decreasing
            and all(self.rho_V_decreasing)
            and self.rho_delta_decreasing
        )


def laplace_check(decomposition: ValleyDecomposition, epsilon_list):
    """Ratios of the valley/Delta/Z integrals to their Laplace leading terms.

    rho_Vi and rho_Z should approach 1 and rho_delta should approach 0 as
    epsilon decreases; non-monotone trends are flagged in the report, not
    raised.
    """
    grid = decomposition.grid
    d = grid.ndim
    mu_i = np.array([1.0 / np.sqrt(m.det) for m in decomposition.minima])
    mu = mu_i.sum()
    rows = []
    for eps in epsilon_list:
        scales = scale_set(decomposition, eps)
        what = scales.what
        pref = (2.0 * np.pi * eps) ** (d / 2.0)
        rho_v = np.array(
            [
                grid.integrate(np.where(mask, what, 0.0)) / (pref * mu_i[i])
                for i, mask in enumerate(decomposition.valley_masks)
            ]
        )
        rho_delta = grid.integrate(np.where(decomposition.delta_mask, what, 0.0)) / (
            eps ** (d / 2.0)
        )
        rows.append(
            LaplaceRow(
                epsilon=float(eps),
                Z=scales.Z,
                rho_Z=scales.zhat / (pref * mu),
                rho_V=rho_v,
                rho_delta=rho_delta,
            )
        )

    def decreasing(seq):
        return all(a > b for a, b in zip(seq, seq[1:]))

    return LaplaceReport(
        rows=rows,
        rho_Z_decreasing=decreasing([abs(r.rho_Z - 1.0) for r in rows]),
        rho_V_decreasing=[
            decreasing([abs(r.rho_V[i] - 1.0) for r in rows])
            for i in range(decomposition.K)
        ],
        rho_delta_decreasing=decreasing([r.rho_delta for r in rows]),
    )


@dataclass
class TailMassResult:
    value: float
    c: float            # margin min_region Phi - H
    bound: float        # |A| * eps (2 pi eps)^{-d/2} mu^{-1} e^{-c/eps}


def tail_mass(decomposition: ValleyDecomposition, epsilon, region_mask):
    """Integral of sigma/tau over a region where Phi >= H + c for some c > 0."""
    region_mask = np.asarray(region_mask, dtype=bool)
    grid = decomposition.grid
    if not region_mask.any():
        return TailMassResult(value=0.0, c=np.inf, bound=0.0)
    c = float(np.min(decomposition.phi[region_mask]) - decomposition.H)
    if c <= 0:
        raise PreconditionError(
            f"region violates Phi >= H + c: min Phi - H = {c:.6g} <= 0"
        )
    scales = scale_set(decomposition, epsilon)
    value = grid.integrate(np.where(region_mask, scales.ratio_values(), 0.0))
    mu = sum(1.0 / np.sqrt(m.det) for m in decomposition.minima)
    d = grid.ndim
    bound = (
        grid.mask_measure(region_mask)
        * epsilon
        * (2.0 * np.pi * epsilon) ** (-d / 2.0)
        / mu
        * np.exp(-c / epsilon)
    )
    return TailMassResult(value=value, c=c, bound=float(bound))
