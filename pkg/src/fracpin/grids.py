"""Periodic grids and sampled fields.

All computations live on uniform periodic grids, 1D circles of length l or
flat 2D tori of side lengths (a1, a2).  Node n along an axis of length L sits
at x = -L/2 + n*h with h = L/N, identified modulo L.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_POINTS = 8


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Uniform periodic grid on a circle (dim 1) or flat torus (dim 2).

    ``n`` is the number of points per axis; a tuple gives each axis its own
    count (used for reduced-height torus computations that exploit
    periodicity of the obstacle rows).
    """

    lengths: tuple[float, ...]
    n: int | tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(l) for l in np.atleast_1d(self.lengths))
        object.__setattr__(self, "lengths", lengths)
        if isinstance(self.n, (tuple, list, np.ndarray)):
            ns = tuple(int(v) for v in self.n)
        else:
            ns = (int(self.n),) * len(lengths)
        if len(ns) != len(lengths):
            raise ValueError("per-axis point counts must match the number of lengths")
        object.__setattr__(self, "n", ns[0] if len(set(ns)) == 1 else ns)
        object.__setattr__(self, "_ns", ns)
        if self.dim not in (1, 2):
            raise ValueError(f"only 1D/2D grids supported, got dim={self.dim}")
        if any(l <= 0 for l in lengths):
            raise ValueError("grid lengths must be positive")
        if any(m < MIN_POINTS for m in ns):
            raise ValueError(f"need at least {MIN_POINTS} points per axis, got {ns}")

    def __hash__(self):
        return hash((self.lengths, self._ns))

    def __eq__(self, other):
        return (isinstance(other, PeriodicGrid)
                and self.lengths == other.lengths and self._ns == other._ns)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def ns(self) -> tuple[int, ...]:
        return self._ns

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / m for l, m in zip(self.lengths, self._ns))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._ns

    @property
    def node_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int = 0) -> np.ndarray:
        l = self.lengths[i]
        return -l / 2 + np.arange(self._ns[i]) * (l / self._ns[i])

    def coords(self) -> list[np.ndarray]:
        """Coordinate arrays broadcastable to ``shape``."""
        axes = [self.axis(i) for i in range(self.dim)]
        if self.dim == 1:
            return axes
        return list(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumber arrays (fft layout), broadcastable to ``shape``."""
        ks = [2 * np.pi * np.fft.fftfreq(self._ns[i], d=self.spacing[i])
              for i in range(self.dim)]
        if self.dim == 1:
            return ks
        return list(np.meshgrid(*ks, indexing="ij"))

    def kmag(self) -> np.ndarray:
        ks = self.wavenumbers()
        return np.sqrt(sum(k ** 2 for k in ks))

    def periodic_delta(self, a, b, i: int = 0):
        """Signed displacement a-b wrapped into [-L/2, L/2) along axis i."""
        l = self.lengths[i]
        return (np.asarray(a) - np.asarray(b) + l / 2) % l - l / 2

    def periodic_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Torus distance between points given as (..., dim) arrays."""
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        d2 = 0.0
        for i in range(self.dim):
            d2 = d2 + self.periodic_delta(a[..., i], b[..., i], i) ** 2
        return np.sqrt(d2)


@dataclass
class Field:
    """Real values sampled at the nodes of a :class:`PeriodicGrid`."""

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    def check_finite(self) -> "Field":
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("field contains non-finite values")
        return self

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.node_volume)

    def mean(self) -> float:
        return float(self.values.mean())

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, f) -> "Field":
        return cls(grid, np.asarray(f(*grid.coords()), dtype=float))
