"""Uniform cell-centered grids on rectangular boxes.

All fields live at cell centers; integrals use the midpoint rule, which is
what the finite-volume operators in :mod:`metawell.elliptic` are built on,
so discrete integration-by-parts identities hold exactly.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Cell-centered grid on the box [lo_k, hi_k] with shape[k] cells per axis."""

    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", tuple(float(v) for v in np.atleast_1d(self.hi)))
        object.__setattr__(self, "shape", tuple(int(v) for v in np.atleast_1d(self.shape)))
        if not (len(self.lo) == len(self.hi) == len(self.shape)):
            raise ValueError("lo, hi, shape must have equal lengths")
        if any(n < 2 for n in self.shape):
            raise ValueError("need at least 2 cells per axis")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("hi must exceed lo on every axis")

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def spacing(self):
        return tuple((h - l) / n for l, h, n in zip(self.lo, self.hi, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def extent(self):
        """Largest box side length; the length scale used for tolerances."""
        return max(h - l for l, h in zip(self.lo, self.hi))

    def axis_centers(self, k):
        h = self.spacing[k]
        return self.lo[k] + (np.arange(self.shape[k]) + 0.5) * h

    def points(self):
        """Cell-center coordinates, shape ``(*shape, ndim)``."""
        axes = [self.axis_centers(k) for k in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def integrate(self, values):
        """Midpoint-rule integral of a cell-centered field."""
        return float(np.sum(values) * self.cell_volume)

    def mask_measure(self, mask):
        return float(np.count_nonzero(mask) * self.cell_volume)

    def point_index(self, point):
        """Multi-index of the cell containing ``point`` (clipped to the box)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for k in range(self.ndim):
            i = int(np.floor((point[k] - self.lo[k]) / self.spacing[k]))
            idx.append(min(max(i, 0), self.shape[k] - 1))
        return tuple(idx)

    def contains(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return all(self.lo[k] <= point[k] <= self.hi[k] for k in range(self.ndim))

    def boundary_mask(self):
        """True on cells whose stencil touches the box boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.ndim):
            sl = [slice(None)] * self.ndim
            sl[k] = 0
            mask[tuple(sl)] = True
            sl[k] = -1
            mask[tuple(sl)] = True
        return mask

    def field(self, values):
        return GridField(self, np.asarray(values, dtype=float))


@dataclass
class GridField:
    """A scalar field sampled at the cell centers of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    def integrate(self):
        return self.grid.integrate(self.values)


def interval_grid(lo, hi, cells):
    """Convenience constructor for 1-d grids."""
    return Grid((lo,), (hi,), (cells,))
