"""Analytic multi-well potentials and their valley structure.

A potential is given in closed form (value, gradient, Hessian all exact).
Critical points are located by Newton iteration from a seed lattice,
classified through the Hessian eigendecomposition, and assembled into a
valley decomposition: the common minimum level h, the barrier level H
(the common height of the relevant index-one saddles), a margin eta with
no critical values in (H - eta, H), the valley cores
V_i = {Phi < H - eta} around each minimum, the saddle sets S_ij connecting
adjacent valleys, and the transition region Delta = complement of the V_i.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import (
    DegeneracyError,
    LandscapeError,
    PotentialOverflow,
    UnequalDepthError,
)
from .grids import Grid


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

class Potential:
    """Base class: exact value/gradient/Hessian evaluators on R^d."""

    dimension = 1

    def value(self, point):
        raise NotImplementedError

    def gradient(self, point):
        raise NotImplementedError

    def hessian(self, point):
        raise NotImplementedError

    def value_many(self, points):
        """Vectorized value over an array of points of shape (..., d)."""
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, self.dimension)
        return np.array([self.value(p) for p in flat]).reshape(pts.shape[:-1])

    def value_on(self, grid: Grid):
        """Field of values at the cell centers of ``grid``."""
        vals = self.value_many(grid.points())
        if not np.all(np.isfinite(vals)):
            raise PotentialOverflow("potential is non-finite on the grid")
        return vals

    def shifted(self, offset):
        return ShiftedPotential(self, float(offset))


class ShiftedPotential(Potential):
    """Phi + constant; gradients and Hessians are unchanged."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = offset
        self.dimension = base.dimension

    def value(self, point):
        return self.base.value(point) + self.offset

    def gradient(self, point):
        return self.base.gradient(point)

    def hessian(self, point):
        return self.base.hessian(point)

    def value_many(self, points):
        return self.base.value_many(points) + self.offset


class PolynomialPotential(Potential):
    """Multivariate polynomial given as a list of (exponents, coefficient) terms.

    For d=1 the convenience constructor :meth:`from_coefficients` accepts the
    coefficient list [c0, c1, ...] of sum_k c_k xi^k.
    """

    def __init__(self, dimension, terms):
        self.dimension = int(dimension)
        clean = []
        for exps, coef in terms:
            exps = tuple(int(e) for e in np.atleast_1d(exps))
            if len(exps) != self.dimension:
                raise ValueError("term exponent length != dimension")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            if coef != 0.0:
                clean.append((exps, float(coef)))
        self.terms = clean
        self._grad_terms = [self._derive(self.terms, k) for k in range(self.dimension)]
        self._hess_terms = [
            [self._derive(self._grad_terms[k], l) for l in range(self.dimension)]
            for k in range(self.dimension)
        ]

    @classmethod
    def from_coefficients(cls, coefficients):
        terms = [((k,), c) for k, c in enumerate(coefficients)]
        return cls(1, terms)

    @staticmethod
    def _derive(terms, axis):
        out = []
        for exps, coef in terms:
            e = exps[axis]
            if e > 0:
                new = list(exps)
                new[axis] = e - 1
                out.append((tuple(new), coef * e))
        return out

    @staticmethod
    def _eval_terms(terms, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for exps, coef in terms:
            mono = np.full(pts.shape[:-1], coef)
            for k, e in enumerate(exps):
                if e:
                    mono = mono * pts[..., k] ** e
            out += mono
        return out

    def value(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return float(self._eval_terms(self.terms, p))

    def gradient(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return np.array([self._eval_terms(t, p) for t in self._grad_terms])

    def hessian(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return np.array(
            [[self._eval_terms(self._hess_terms[k][l], p) for l in range(self.dimension)]
             for k in range(self.dimension)]
        )

    def value_many(self, points):
        pts = np.asarray(points, dtype=float)
        return self._eval_terms(self.terms, pts)


class GaussianWellsPotential(Potential):
    """Sum of inverted Gaussian wells plus a confining polynomial."""

    def __init__(self, dimension, wells, confining: PolynomialPotential):
        self.dimension = int(dimension)
        self.wells = [
            (np.atleast_1d(np.asarray(c, dtype=float)), float(a), float(s))
            for c, a, s in wells
        ]
        for c, a, s in self.wells:
            if len(c) != self.dimension or a <= 0 or s <= 0:
                raise ValueError("bad Gaussian well parameters")
        if confining.dimension != self.dimension:
            raise ValueError("confining polynomial dimension mismatch")
        self.confining = confining

    def value(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        v = self.confining.value(p)
        for c, a, s in self.wells:
            v -= a * np.exp(-np.sum((p - c) ** 2) / (2 * s * s))
        return float(v)

    def gradient(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        g = self.confining.gradient(p)
        for c, a, s in self.wells:
            q = np.exp(-np.sum((p - c) ** 2) / (2 * s * s))
            g = g + a * q * (p - c) / (s * s)
        return g

    def hessian(self, point):
        p = np.atleast_1d(np.asarray(point, dtype=float))
        hmat = self.confining.hessian(p)
        for c, a, s in self.wells:
            q = np.exp(-np.sum((p - c) ** 2) / (2 * s * s))
            dp = (p - c) / (s * s)
            hmat = hmat + a * q * (np.eye(self.dimension) / (s * s) - np.outer(dp, dp))
        return hmat

    def value_many(self, points):
        pts = np.asarray(points, dtype=float)
        v = self.confining.value_many(pts)
        for c, a, s in self.wells:
            v = v - a * np.exp(-np.sum((pts - c) ** 2, axis=-1) / (2 * s * s))
        return v


#: default truncation boxes for the builtin potentials (Phi >= H+1 on the boundary)
BUILTIN_BOXES = {
    "double_well": ((-2.0,), (2.0,)),
    "triple_well": ((-1.6,), (1.6,)),
    "asym2d": ((-2.0, -2.0), (2.0, 2.0)),
}


def builtin_potential(name, gamma=0.25):
    """Construct a builtin potential by name.

    double_well: (xi^2-1)^2/4, minima at +-1, saddle at 0.
    triple_well: xi^2 (xi^2-1)^2, minima at -1,0,1, saddles at +-1/sqrt(3).
    asym2d: (xi1^2-1)^2/4 + (1+gamma*xi1) xi2^2/2 - equal-depth wells at
        (+-1, 0) with different Hessians, index-one saddle at the origin.
    """
    if name == "double_well":
        return PolynomialPotential.from_coefficients([0.25, 0.0, -0.5, 0.0, 0.25])
    if name == "triple_well":
        return PolynomialPotential.from_coefficients([0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0])
    if name == "asym2d":
        g = float(gamma)
        if not -0.4 <= g <= 0.4:
            raise ValueError("asym2d gamma must lie in [-0.4, 0.4]")
        terms = [
            ((0, 0), 0.25),
            ((2, 0), -0.5),
            ((4, 0), 0.25),
            ((0, 2), 0.5),
            ((1, 2), g / 2.0),
        ]
        return PolynomialPotential(2, terms)
    raise ValueError(f"unknown builtin potential {name!r}")


def evaluate(potential, point):
    """Exact (value, gradient, Hessian) at a point; rejects non-finite output."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if not np.all(np.isfinite(point)):
        raise PotentialOverflow("evaluation point is not finite")
    v = potential.value(point)
    g = potential.gradient(point)
    hmat = potential.hessian(point)
    if not (np.isfinite(v) and np.all(np.isfinite(g)) and np.all(np.isfinite(hmat))):
        raise PotentialOverflow(f"potential non-finite at {point}")
    return v, g, hmat


def derivative_consistency(potential, points, step):
    """Worst relative mismatch of gradient/Hessian vs. central differences of Phi.

    Relative to the largest gradient/Hessian magnitude over the sample, so
    points near critical points do not inflate the ratio.
    """
    points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    scale_g = max(
        (float(np.max(np.abs(potential.gradient(p)))) for p in points),
        default=0.0,
    )
    scale_h = max(
        (float(np.max(np.abs(potential.hessian(p)))) for p in points),
        default=0.0,
    )
    scale_g = max(scale_g, 1e-12)
    scale_h = max(scale_h, 1e-12)
    worst = 0.0
    d = potential.dimension
    for p in points:
        _, g, hmat = evaluate(potential, p)
        for k in range(d):
            ek = np.zeros(d)
            ek[k] = step
            fd = (potential.value(p + ek) - potential.value(p - ek)) / (2 * step)
            worst = max(worst, abs(fd - g[k]) / scale_g)
            fdd = (
                potential.value(p + ek) - 2 * potential.value(p) + potential.value(p - ek)
            ) / step**2
            worst = max(worst, abs(fdd - hmat[k, k]) / scale_h)
            for l in range(k + 1, d):
                el = np.zeros(d)
                el[l] = step
                fdm = (
                    potential.value(p + ek + el)
                    - potential.value(p + ek - el)
                    - potential.value(p - ek + el)
                    + potential.value(p - ek - el)
                ) / (4 * step**2)
                worst = max(worst, abs(fdm - hmat[k, l]) / scale_h)
    return worst


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

class CriticalKind(Enum):
    MINIMUM = "minimum"
    INDEX_ONE_SADDLE = "index_one_saddle"
    OTHER = "other"


@dataclass
class CriticalPoint:
    """A converged critical point with its Hessian eigendecomposition."""

    location: np.ndarray
    kind: CriticalKind
    value: float
    eigenvalues: np.ndarray      # ascending
    eigenvectors: np.ndarray     # columns match eigenvalues
    grad_norm: float

    @property
    def det(self):
        return float(np.prod(self.eigenvalues))

    @property
    def negative_eigenvalue(self):
        """The signed negative Hessian eigenvalue of an index-one saddle."""
        return float(self.eigenvalues[0])

    @property
    def unstable_direction(self):
        return self.eigenvectors[:, 0]


def _classify(eigenvalues, degeneracy_tol):
    if np.all(eigenvalues > degeneracy_tol):
        return CriticalKind.MINIMUM
    if eigenvalues[0] < -degeneracy_tol and np.all(eigenvalues[1:] > degeneracy_tol):
        return CriticalKind.INDEX_ONE_SADDLE
    return CriticalKind.OTHER


def find_critical_points(
    potential,
    box,
    seed_spacing=None,
    newton_tol=None,
    merge_tol=None,
    degeneracy_tol=1e-8,
    max_iterations=60,
):
    """Newton search for critical points from a uniform seed lattice.

    Diverging seeds are dropped silently; converged locations closer than
    ``merge_tol`` are merged. Raises LandscapeError if no minimum is found.
    """
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    d = potential.dimension
    scale = float(np.max(hi - lo))
    if seed_spacing is None:
        seed_spacing = 0.05 * scale
    if newton_tol is None:
        newton_tol = 1e-10 * scale
    if merge_tol is None:
        merge_tol = 1e-6 * scale

    axes = [np.arange(lo[k] + seed_spacing / 2, hi[k], seed_spacing) for k in range(d)]
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)

    margin = 0.5 * scale
    converged = []
    for seed in seeds:
        x = seed.copy()
        ok = False
        for _ in range(max_iterations):
            g = potential.gradient(x)
            if not np.all(np.isfinite(g)):
                break
            if np.linalg.norm(g) <= newton_tol:
                ok = True
                break
            hmat = potential.hessian(x)
            try:
                step = np.linalg.solve(hmat, g)
            except np.linalg.LinAlgError:
                break
            x = x - step
            if np.any(x < lo - margin) or np.any(x > hi + margin):
                break
        if not ok:
            continue
        # one polishing step: quadratic convergence leaves machine-level residual
        hmat = potential.hessian(x)
        try:
            x = x - np.linalg.solve(hmat, potential.gradient(x))
        except np.linalg.LinAlgError:
            pass
        if np.any(x < lo) or np.any(x > hi):
            continue
        converged.append(x)

    # deterministic dedup: lexicographic sort, then cluster within merge_tol
    converged.sort(key=lambda p: tuple(p))
    unique = []
    for x in converged:
        if unique and np.linalg.norm(x - unique[-1]) <= merge_tol:
            continue
        if any(np.linalg.norm(x - u) <= merge_tol for u in unique):
            continue
        unique.append(x)

    points = []
    for x in unique:
        v, g, hmat = evaluate(potential, x)
        eigenvalues, eigenvectors = np.linalg.eigh(hmat)
        points.append(
            CriticalPoint(
                location=x,
                kind=_classify(eigenvalues, degeneracy_tol),
                value=v,
                eigenvalues=eigenvalues,
                eigenvectors=eigenvectors,
                grad_norm=float(np.linalg.norm(g)),
            )
        )
    if not any(p.kind is CriticalKind.MINIMUM for p in points):
        raise LandscapeError("no minimum found in the search box")
    return points


# ---------------------------------------------------------------------------
# valley decomposition
# ---------------------------------------------------------------------------

@dataclass
class ValleyDecomposition:
    """Valley cores, saddle partition, and transition region on a grid."""

    potential: Potential
    grid: Grid
    minima: list            # CriticalPoint, ordered lexicographically by location
    saddles: list           # index-one saddles at the barrier level H
    excluded_saddles: list  # index-one saddles strictly above H
    H: float
    h: float
    eta: float
    phi: np.ndarray                      # potential at cell centers
    valley_masks: list = field(default_factory=list)
    wide_masks: list = field(default_factory=list)   # components of {Phi < H - eta/2}
    measures: np.ndarray = None          # |V_i|
    saddle_partition: dict = field(default_factory=dict)  # (i,j), i<j -> [saddle,...]
    delta_mask: np.ndarray = None

    @property
    def K(self):
        return len(self.minima)

    @property
    def barrier(self):
        return self.H - self.h

    def saddles_between(self, i, j):
        if i == j:
            return []
        key = (min(i, j), max(i, j))
        return self.saddle_partition.get(key, [])

    def adjacency(self):
        adj = np.zeros((self.K, self.K), dtype=bool)
        for (i, j) in self.saddle_partition:
            adj[i, j] = adj[j, i] = True
        return adj


def _masks_at_level(phi, grid, minima, level):
    """Connected component of {Phi < level} around each minimum, as boolean masks."""
    sub = phi < level
    labels, _ = ndimage.label(sub)
    masks = []
    for m in minima:
        lab = labels[grid.point_index(m.location)]
        if lab == 0:
            raise LandscapeError(
                f"minimum at {m.location} not inside a sublevel component; "
                "grid too coarse or eta too large"
            )
        masks.append(labels == lab)
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if np.any(masks[i] & masks[j]):
                raise LandscapeError(
                    f"valleys {i} and {j} merge on the grid; refine the grid"
                )
    return masks


def _descend_to_valley(potential, start, label_field, grid, step, max_steps=200_000):
    """Unit-speed steepest descent (RK4) until a valley-core cell is entered."""
    def direction(x):
        g = potential.gradient(x)
        n = np.linalg.norm(g)
        return -g / n if n > 1e-300 else np.zeros_like(g)

    x = np.array(start, dtype=float)
    for _ in range(max_steps):
        k1 = direction(x)
        k2 = direction(x + 0.5 * step * k1)
        k3 = direction(x + 0.5 * step * k2)
        k4 = direction(x + step * k3)
        x = x + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not grid.contains(x):
            raise LandscapeError(f"descent from {start} left the box at {x}")
        lab = label_field[grid.point_index(x)]
        if lab > 0:
            return int(lab - 1)
    raise LandscapeError(f"descent from {start} did not reach a valley core")


def decompose_valleys(
    potential,
    critical_points,
    grid: Grid,
    eta=None,
    value_tol_factor=1e-8,
    degeneracy_tol=1e-8,
    check_coercivity=True,
):
    """Build the valley decomposition from classified critical points.

    The barrier level H is the lowest index-one-saddle value (for a single
    well, one below the boundary minimum of Phi so the coercivity condition
    Phi >= H+1 still holds). eta defaults to half the gap between H and the
    largest critical value strictly below H.
    """
    points = sorted(critical_points, key=lambda p: tuple(p.location))
    minima_all = [p for p in points if p.kind is CriticalKind.MINIMUM]
    saddles_all = [p for p in points if p.kind is CriticalKind.INDEX_ONE_SADDLE]
    if not minima_all:
        raise LandscapeError("no minima among the critical points")

    h = min(p.value for p in minima_all)
    phi = potential.value_on(grid)

    if saddles_all:
        H = min(p.value for p in saddles_all)
    else:
        H = float(np.min(phi[grid.boundary_mask()])) - 1.0
        if H <= h:
            raise LandscapeError("box too small: boundary values do not clear h+1")

    value_tol = value_tol_factor * max(H - h, 1e-300)

    minima = [p for p in minima_all if p.value < H - value_tol]
    for p in minima:
        if abs(p.value - h) > value_tol:
            raise UnequalDepthError(
                f"minimum at {p.location} has depth {p.value - h:.3e} above h"
            )
        if abs(p.det) < degeneracy_tol:
            raise DegeneracyError(f"degenerate Hessian at minimum {p.location}")

    saddles = [p for p in saddles_all if abs(p.value - H) <= value_tol]
    excluded = [p for p in saddles_all if p.value > H + value_tol]
    for p in saddles:
        if abs(p.det) < degeneracy_tol:
            raise DegeneracyError(f"degenerate Hessian at saddle {p.location}")
    for p in points:
        if p.kind is CriticalKind.OTHER and abs(p.value - H) <= value_tol:
            raise LandscapeError(
                f"critical point of index >= 2 (or degenerate) on the barrier at "
                f"{p.location}"
            )

    below = [p.value for p in points if p.value < H - value_tol]
    if eta is None:
        eta = 0.5 * (H - max(below))
    else:
        eta = float(eta)
        if not 0.0 < eta < H - h:
            raise LandscapeError(f"eta={eta} outside (0, H-h)=(0, {H - h})")
        bad = [v for v in below if v > H - eta + value_tol]
        if bad:
            raise LandscapeError(
                f"eta={eta} not admissible: critical value {max(bad)} in (H-eta, H)"
            )

    valley_masks = _masks_at_level(phi, grid, minima, H - eta)
    wide_masks = _masks_at_level(phi, grid, minima, H - eta / 2.0)
    measures = np.array([grid.mask_measure(m) for m in valley_masks])

    label_field = np.zeros(grid.shape, dtype=int)
    for i, m in enumerate(valley_masks):
        label_field[m] = i + 1

    scale = grid.extent
    partition = {}
    for s in saddles:
        delta = 1e-3 * scale
        targets = []
        for sign in (+1.0, -1.0):
            start = s.location + sign * delta * s.unstable_direction
            targets.append(
                _descend_to_valley(potential, start, label_field, grid, 1e-3 * scale)
            )
        i, j = sorted(targets)
        if i == j:
            raise LandscapeError(
                f"saddle at {s.location} descends into valley {i} on both sides"
            )
        partition.setdefault((i, j), []).append(s)

    if minima and len(minima) > 1:
        seen = {0}
        frontier = [0]
        while frontier:
            cur = frontier.pop()
            for (i, j) in partition:
                for a, b in ((i, j), (j, i)):
                    if a == cur and b not in seen:
                        seen.add(b)
                        frontier.append(b)
        if len(seen) != len(minima):
            raise LandscapeError("valley graph is disconnected")

    delta_mask = np.ones(grid.shape, dtype=bool)
    for m in valley_masks:
        delta_mask &= ~m

    if check_coercivity:
        boundary_min = float(np.min(phi[grid.boundary_mask()]))
        if boundary_min <= H + 1.0:
            raise LandscapeError(
                f"truncation box too small: min boundary Phi = {boundary_min:.6g} "
                f"<= H+1 = {H + 1.0:.6g}"
            )

    return ValleyDecomposition(
        potential=potential,
        grid=grid,
        minima=minima,
        saddles=saddles,
        excluded_saddles=excluded,
        H=H,
        h=h,
        eta=eta,
        phi=phi,
        valley_masks=valley_masks,
        wide_masks=wide_masks,
        measures=measures,
        saddle_partition=partition,
        delta_mask=delta_mask,
    )


def analyze(potential, grid: Grid, eta=None, seed_spacing=None):
    """Convenience wrapper: critical-point search + valley decomposition."""
    points = find_critical_points(potential, (grid.lo, grid.hi), seed_spacing=seed_spacing)
    return decompose_valleys(potential, points, grid, eta=eta)
