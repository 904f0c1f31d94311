"""Kramers constants, well weights, rate matrix, and the valley Markov chain.

For an index-one saddle sigma the Kramers constant is
``kappa_sigma = |lambda^-| / (2 pi sqrt(|det D^2 Phi(sigma)|))`` with
lambda^- the unique negative Hessian eigenvalue; absolute values resolve the
sign convention since det D^2 Phi(sigma) < 0. Well weights are
``mu_i = 1/sqrt(det D^2 Phi(m_i))``. The chain jumps from valley i to j at
rate ``r_ij = kappa_ij / mu_i`` and is reversible with respect to the
normalized weights mu_hat.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, RangeError, SingularityError, SolverError
from .landscape import CriticalKind, ValleyDecomposition


def kramers_constant(saddle, degeneracy_tol=1e-8):
    """Rate prefactor at an index-one saddle."""
    if saddle.kind is not CriticalKind.INDEX_ONE_SADDLE:
        raise ValueError(f"kramers_constant needs an index-one saddle, got {saddle.kind}")
    det = saddle.det
    if abs(det) < degeneracy_tol:
        raise DegeneracyError(f"|det Hessian| = {abs(det):.3e} below tolerance at saddle")
    return abs(saddle.negative_eigenvalue) / (2.0 * np.pi * np.sqrt(abs(det)))


@dataclass
class ChainSpec:
    """All derived rate/chain quantities of a valley decomposition."""

    K: int
    kappa: np.ndarray     # symmetric, zero diagonal
    mu_i: np.ndarray
    a_i: np.ndarray

    @property
    def mu(self):
        return float(self.mu_i.sum())

    @property
    def mu_hat(self):
        return self.mu_i / self.mu

    @property
    def r(self):
        rates = self.kappa / self.mu_i[:, None]
        np.fill_diagonal(rates, 0.0)
        return rates

    @property
    def M(self):
        m = -self.kappa / self.mu
        np.fill_diagonal(m, self.kappa.sum(axis=1) / self.mu)
        return m

    @property
    def generator(self):
        """L with L_ij = r_ij off-diagonal and zero row sums."""
        gen = self.r.copy()
        np.fill_diagonal(gen, -gen.sum(axis=1))
        return gen

    def connected(self):
        seen = {0}
        frontier = [0]
        while frontier:
            cur = frontier.pop()
            for j in range(self.K):
                if j not in seen and self.kappa[cur, j] > 0:
                    seen.add(j)
                    frontier.append(j)
        return len(seen) == self.K


def build_chain(decomposition: ValleyDecomposition, a=1.0, degeneracy_tol=1e-8):
    """Assemble the ChainSpec from a valley decomposition.

    ``a`` is the diffusion field on the slow variable; a scalar or a callable
    evaluated at the well minima (the stored ``a_i``).
    """
    K = decomposition.K
    mu_i = np.empty(K)
    for i, m in enumerate(decomposition.minima):
        det = m.det
        if det < degeneracy_tol:
            raise DegeneracyError(f"degenerate Hessian at minimum {m.location}")
        mu_i[i] = 1.0 / np.sqrt(det)

    kappa = np.zeros((K, K))
    for (i, j), saddles in decomposition.saddle_partition.items():
        total = sum(kramers_constant(s, degeneracy_tol) for s in saddles)
        kappa[i, j] = kappa[j, i] = total

    if callable(a):
        a_i = np.array([float(a(m.location)) for m in decomposition.minima])
    else:
        a_i = np.full(K, float(a))
    return ChainSpec(K=K, kappa=kappa, mu_i=mu_i, a_i=a_i)


def dirichlet_form(chain: ChainSpec, b):
    """D(b) = (1/2mu) sum_ij kappa_ij (b_j - b_i)^2, equal to b^T M b."""
    b = np.asarray(b, dtype=float)
    diff = b[None, :] - b[:, None]
    return float(np.sum(chain.kappa * diff**2) / (2.0 * chain.mu))


@dataclass
class BalanceResult:
    b: np.ndarray        # minimum-norm solution of M b = c
    d_c: float           # D_c(b) = D(b) - 2 c.b = -D(b)
    residual: float


def solve_balance(chain: ChainSpec, c, tol=1e-12):
    """Minimum-norm solution of M b = c for c with zero component sum.

    Any b + t(1,...,1) also solves; the pseudoinverse representative is
    orthogonal to the constants, which makes outputs deterministic.
    """
    c = np.asarray(c, dtype=float)
    if abs(c.sum()) > tol * max(1.0, float(np.abs(c).max())):
        raise RangeError(f"sum(c) = {c.sum():.3e} != 0: c not in the range of M")
    if not chain.connected():
        raise SingularityError("valley graph disconnected: M has extra null vectors")
    m = chain.M
    b = np.linalg.pinv(m) @ c
    residual = float(np.linalg.norm(m @ b - c))
    limit = 1e-10 * max(float(np.linalg.norm(c)), 1e-300)
    if np.linalg.norm(c) > 0 and residual > limit:
        raise SolverError("pseudoinverse solve failed", residual=residual)
    d_b = dirichlet_form(chain, b)
    return BalanceResult(b=b, d_c=d_b - 2.0 * float(c @ b), residual=residual)


def _symmetrized_eig(chain: ChainSpec):
    """Eigendecomposition of S = D^{1/2} L D^{-1/2}, D = diag(mu_hat)."""
    sq = np.sqrt(chain.mu_hat)
    s = (chain.generator * sq[:, None]) / sq[None, :]
    s = 0.5 * (s + s.T)   # reversibility makes this symmetric; enforce exactly
    eigenvalues, vectors = np.linalg.eigh(s)
    return sq, eigenvalues, vectors


def chain_marginal(chain: ChainSpec, alpha0, t):
    """Valley marginals alpha(t) of the chain started from alpha0.

    Solves d(alpha_i/mu_hat_i)/dt = (L alpha_hat)_i through the symmetrized
    eigendecomposition of the generator. ``t`` may be a scalar or an array;
    the result has shape (K,) or (len(t), K).
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    sq, eigenvalues, vectors = _symmetrized_eig(chain)
    y0 = vectors.T @ (sq * (alpha0 / chain.mu_hat))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((ts.size, chain.K))
    for k, tk in enumerate(ts):
        y = vectors @ (np.exp(eigenvalues * tk) * y0)
        out[k] = chain.mu_hat * (y / sq)
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def generator_eigenvalues(chain: ChainSpec):
    """Eigenvalues of L (real by reversibility), sorted ascending."""
    _, eigenvalues, _ = _symmetrized_eig(chain)
    return eigenvalues


def reaction_propagator(chain: ChainSpec, dt):
    """exp(dt * Q) for the forward system d alpha/dt = Q alpha, Q = L^T."""
    sq, eigenvalues, vectors = _symmetrized_eig(chain)
    core = vectors @ (np.exp(eigenvalues * dt)[:, None] * vectors.T)
    return (core * sq[:, None]) / sq[None, :]
