"""Weighted Dirichlet energy, capacity problems, and the elliptic test function.

The energy (1/2) int (sigma/tau) |D psi|^2 is discretized by finite volumes on
the cell-centered grid: face weights are geometric means of the adjacent cell
weights (this keeps the operator symmetric and mirrors the self-adjoint
continuous structure), and the operator A approximates
psi -> -div((sigma/tau) D psi) with zero-flux boundary, scaled by the cell
volume so that psi^T A psi equals the discrete form int (sigma/tau)|D psi|^2
exactly.

Weights are assembled from exp(-(Phi-h)/eps) with the global prefactor
eps e^{(H-h)/eps}/zhat factored out (kept in log form), so steep barriers
cannot underflow the matrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .asymptotics import ScaleSet, scale_set
from .errors import RangeError, SolverError
from .grids import GridField
from .landscape import ValleyDecomposition
from . import rates


@dataclass
class WeightedOperator:
    """Finite-volume discretization of -div((sigma/tau) D psi), factored form.

    ``matrix`` holds the operator assembled from the scaled weights
    exp(-(Phi-h)/eps); the physical operator is ``weight_factor * matrix``.
    """

    scales: ScaleSet
    matrix: sp.csr_matrix

    @property
    def grid(self):
        return self.scales.grid

    @property
    def epsilon(self):
        return self.scales.epsilon

    @property
    def weight_factor(self):
        return self.scales.weight_factor

    def weights(self):
        """Cell weights w = sigma/tau at cell centers."""
        return self.scales.ratio_values()

    def apply(self, psi):
        """A psi on flat arrays, in the physical normalization."""
        return self.weight_factor * (self.matrix @ np.ravel(psi))

    def quadratic_form(self, psi):
        """int (sigma/tau) |D psi|^2 (no 1/2), i.e. psi^T A psi."""
        flat = np.ravel(psi)
        return float(self.weight_factor * (flat @ (self.matrix @ flat)))

    def energy(self, psi):
        """E(psi) = (1/2) int (sigma/tau) |D psi|^2."""
        return 0.5 * self.quadratic_form(psi)


def build_weighted_operator(decomposition: ValleyDecomposition, epsilon):
    """Assemble the weighted operator for one epsilon (spacing <= sqrt(eps)/4)."""
    scales = scale_set(decomposition, epsilon)
    grid = decomposition.grid
    phi = decomposition.phi
    n = grid.size
    idx = np.arange(n).reshape(grid.shape)
    vol = grid.cell_volume

    rows, cols, vals = [], [], []
    for k in range(grid.ndim):
        nk = grid.shape[k]
        left = idx.take(range(0, nk - 1), axis=k).ravel()
        right = idx.take(range(1, nk), axis=k).ravel()
        phi_l = phi.take(range(0, nk - 1), axis=k).ravel()
        phi_r = phi.take(range(1, nk), axis=k).ravel()
        # geometric mean of cell weights = exp at the face-average potential
        wf = np.exp(-((phi_l + phi_r) / 2.0 - decomposition.h) / epsilon)
        coef = wf * (vol / grid.spacing[k] ** 2)
        rows.extend([left, right, left, right])
        cols.extend([left, right, right, left])
        vals.extend([coef, coef, -coef, -coef])
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    return WeightedOperator(scales=scales, matrix=matrix)


def _jacobi(matrix):
    d = matrix.diagonal()
    if np.any(d <= 0):
        raise SolverError("operator diagonal not positive")
    return d


def _scaled_cg(matrix, rhs, *, rtol, maxiter, deflation=None):
    """Conjugate gradients with symmetric Jacobi scaling and optional deflation.

    Solves ``matrix @ x = rhs`` as S y = b with S = D^{-1/2} A D^{-1/2}
    (unit diagonal), which is Jacobi-preconditioned CG in its numerically
    robust form: weights spanning many orders of magnitude otherwise push
    the raw-residual tolerance below the attainable floor. ``deflation``
    is an optional (n, m) array of coarse vectors (in the unscaled cell
    basis) solved directly in each iteration; for the singular valley
    problems these are the valley-basin indicators, whose span contains
    both the null constant and the metastable inter-valley modes that
    stall plain CG. Returns (x, iterations, scaled relative residual).
    """
    d = _jacobi(matrix)
    sq = np.sqrt(d)
    scaled = sp.diags(1.0 / sq) @ matrix @ sp.diags(1.0 / sq)
    b = rhs / sq
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros_like(b), 0, 0.0

    if deflation is not None:
        w = deflation * sq[:, None]
        coarse = np.linalg.pinv(w.T @ (scaled @ w), rcond=1e-12)

        def project(v):
            return v - scaled @ (w @ (coarse @ (w.T @ v)))

        y = w @ (coarse @ (w.T @ b))
        r = b - scaled @ y
    else:
        def project(v):
            return v

        y = np.zeros_like(b)
        r = b.copy()

    r = project(r)
    p = r.copy()
    rho = float(r @ r)
    iterations = 0
    target = rtol * norm_b
    while np.sqrt(rho) > target:
        if iterations >= maxiter:
            raise SolverError(
                f"conjugate gradients stalled at relative residual "
                f"{np.sqrt(rho) / norm_b:.3e} after {iterations} iterations",
                iterations=iterations,
                residual=float(np.sqrt(rho) / norm_b),
            )
        q = project(scaled @ p)
        alpha = rho / float(p @ q)
        y += alpha * p
        r -= alpha * q
        r = project(r)
        rho_next = float(r @ r)
        p = r + (rho_next / rho) * p
        rho = rho_next
        iterations += 1

    if deflation is not None:
        # x = Q b + P^T y_iter, with Q the coarse solve and P^T = I - Q S
        y = y - w @ (coarse @ (w.T @ (scaled @ y))) + w @ (coarse @ (w.T @ b))
    residual = float(np.linalg.norm(scaled @ y - b) / norm_b)
    return y / sq, iterations, residual


def _basin_indicators(decomposition):
    """Voronoi partition of the grid by nearest minimum, as indicator columns."""
    grid = decomposition.grid
    points = grid.points().reshape(-1, grid.ndim)
    centers = np.stack([m.location for m in decomposition.minima])
    dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    nearest = np.argmin(dist, axis=1)
    out = np.zeros((points.shape[0], decomposition.K))
    out[np.arange(points.shape[0]), nearest] = 1.0
    return out


@dataclass
class CapacityResult:
    energy: float            # int (sigma/tau) |D psi|^2 at the minimizer
    minimizer: GridField
    iterations: int
    residual: float


def capacity(op: WeightedOperator, decomposition: ValleyDecomposition, b,
             rtol=1e-10, maxiter=50_000):
    """Minimize int (sigma/tau)|D psi|^2 over fields pinned to b_i on V_i.

    Conjugate gradients with Jacobi preconditioning on the free cells.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (decomposition.K,):
        raise ValueError(f"b must have shape ({decomposition.K},)")
    grid = op.grid
    n = grid.size
    pinned = np.zeros(n, dtype=bool)
    psi = np.zeros(n)
    for bi, mask in zip(b, decomposition.valley_masks):
        flat = mask.ravel()
        pinned |= flat
        psi[flat] = bi
    free = ~pinned

    if np.unique(b).size == 1:
        # the constant extension is the exact minimizer
        psi[free] = b[0]
        return CapacityResult(
            energy=op.quadratic_form(psi),
            minimizer=GridField(grid, psi.reshape(grid.shape)),
            iterations=0,
            residual=0.0,
        )

    a_ff = op.matrix[free][:, free]
    rhs = -(op.matrix[free][:, pinned] @ psi[pinned])
    iterations = 0
    residual = 0.0
    if rhs.size and float(np.linalg.norm(rhs)) > 0.0:
        x, iterations, residual = _scaled_cg(a_ff, rhs, rtol=rtol,
                                             maxiter=maxiter)
        psi[free] = x

    return CapacityResult(
        energy=op.quadratic_form(psi),
        minimizer=GridField(grid, psi.reshape(grid.shape)),
        iterations=iterations,
        residual=residual,
    )


def equilibrium_potential(op, decomposition, i, rtol=1e-10, maxiter=50_000):
    """Capacity minimizer with boundary data 1 on V_i and 0 on the others."""
    b = np.zeros(decomposition.K)
    b[i] = 1.0
    return capacity(op, decomposition, b, rtol=rtol, maxiter=maxiter)


@dataclass
class CrossEnergyResult:
    value: float             # int (sigma/tau) D phi_i . D phi_j
    reference: float         # -kappa_ij / mu, the leading-order value
    ratio: float             # value / reference, None when kappa_ij = 0


def cross_energy(op: WeightedOperator, decomposition: ValleyDecomposition, i, j,
                 rtol=1e-10, maxiter=50_000):
    """Bilinear weighted form of the two equilibrium potentials phi_i, phi_j."""
    if i == j:
        raise ValueError("cross_energy needs i != j")
    phi_i = equilibrium_potential(op, decomposition, i, rtol, maxiter).minimizer
    phi_j = equilibrium_potential(op, decomposition, j, rtol, maxiter).minimizer
    value = float(
        op.weight_factor
        * (phi_i.values.ravel() @ (op.matrix @ phi_j.values.ravel()))
    )
    chain = rates.build_chain(decomposition)
    reference = -chain.kappa[i, j] / chain.mu
    ratio = value / reference if reference != 0.0 else None
    return CrossEnergyResult(value=value, reference=float(reference), ratio=ratio)


@dataclass
class TestFunctionResult:
    psi: GridField           # solution shifted so valley averages track b
    lambda_i: np.ndarray     # valley averages of the shifted solution
    lam: float               # (sum_i c_i lambda_i)/2; the symmetrized value
    energy: float            # int (sigma/tau) |D psi|^2
    mu_eps: float            # max over constrained valleys of sup |psi|
    flatness_i: np.ndarray   # sup over V_i of |psi - b_i|
    shift: float             # subtracted constant t_eps
    iterations: int
    residual: float

    @property
    def identity_gap(self):
        """|energy - sum_i c_i lambda_i| (discrete integration by parts)."""
        return abs(self.energy - 2.0 * self.lam)


def test_function(op: WeightedOperator, decomposition: ValleyDecomposition, c, b,
                  rtol=1e-10, maxiter=200_000):
    """Solve -div((sigma/tau) D psi) = sum_i (c_i/|V_i|) chi_{V_i} and shift.

    The singular compatible system is solved by conjugate gradients in the
    mean-zero subspace with Jacobi preconditioning; the zero-mean solution is
    then shifted by the least-squares constant matching the valley averages
    to b (which should solve M b = c).
    """
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    K = decomposition.K
    if c.shape != (K,) or b.shape != (K,):
        raise ValueError(f"c and b must have shape ({K},)")
    if abs(c.sum()) > 1e-12 * max(1.0, float(np.abs(c).max())):
        raise RangeError(f"sum(c) = {c.sum():.3e} != 0: incompatible right-hand side")

    grid = op.grid
    n = grid.size
    vol = grid.cell_volume
    rhs = np.zeros(n)
    for ci, mask, measure in zip(c, decomposition.valley_masks,
                                 decomposition.measures):
        rhs[mask.ravel()] += ci / measure * vol
    rhs -= rhs.mean()                      # exact compatibility
    rhs_hat = rhs / op.weight_factor       # solve with the scaled matrix

    psi, iterations, residual = _scaled_cg(
        op.matrix, rhs_hat, rtol=rtol, maxiter=maxiter,
        deflation=_basin_indicators(decomposition),
    )
    psi -= psi.mean()

    masks = [m.ravel() for m in decomposition.valley_masks]
    averages = np.array(
        [psi[mask].sum() * vol / measure
         for mask, measure in zip(masks, decomposition.measures)]
    )
    lam = float(c @ averages) / 2.0
    shift = float(np.mean(averages - b))
    psi -= shift
    averages -= shift

    flatness = np.array(
        [float(np.max(np.abs(psi[mask] - bi))) for mask, bi in zip(masks, b)]
    )
    constrained = [k for k in range(K) if c[k] != 0.0]
    mu_eps = max(float(np.max(np.abs(psi[masks[k]]))) for k in constrained) \
        if constrained else 0.0

    return TestFunctionResult(
        psi=GridField(grid, psi.reshape(grid.shape)),
        lambda_i=averages,
        lam=lam,
        energy=op.quadratic_form(psi),
        mu_eps=mu_eps,
        flatness_i=flatness,
        shift=shift,
        iterations=iterations,
        residual=residual,
    )
