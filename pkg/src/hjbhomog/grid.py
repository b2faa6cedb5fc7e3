"""Interface-aligned periodic grids and grid functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control_model import DomainPartition, Region, classify_point


class GridAlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on ``[0, length)``.

    ``scale`` maps grid coordinates to cell coordinates (``y = position / scale``);
    it is 1 for the cell problem and ``eps`` for the oscillating problem.
    """

    n: int
    length: float
    interface_indices: tuple[int, ...]
    scale: float = 1.0

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @classmethod
    def aligned(
        cls, partition: DomainPartition, n: int, length: float | None = None, scale: float = 1.0
    ) -> "PeriodicGrid":
        cell = scale * partition.period
        length = cell if length is None else float(length)
        copies = length / cell
        if n < 2 or abs(copies - round(copies)) > 1e-9 or round(copies) < 1:
            raise GridAlignmentError(f"length {length} is not a multiple of the scaled period {cell}")
        h = length / n
        idx = []
        for k in range(int(round(copies))):
            for q in partition.interface_points:
                pos = (q + k * partition.period) * scale / h
                j = int(round(pos))
                if abs(pos - j) > 1e-7:
                    raise GridAlignmentError(f"interface point {q} (copy {k}) is not a node for n={n}")
                idx.append(j % n)
        return cls(n=n, length=length, interface_indices=tuple(sorted(idx)), scale=scale)

    def regions(self, partition: DomainPartition) -> list[Region]:
        tags = []
        iface = set(self.interface_indices)
        for j, y in enumerate(self.nodes):
            if j in iface:
                tags.append(Region.INTERFACE)
            else:
                r = classify_point(partition, y / self.scale)
                tags.append(r)
        return tags

    def refine(self, factor: int = 2) -> "PeriodicGrid":
        return PeriodicGrid(
            n=self.n * factor,
            length=self.length,
            interface_indices=tuple(j * factor for j in self.interface_indices),
            scale=self.scale,
        )


@dataclass(frozen=True)
class ValueField:
    """Node values on a periodic grid with periodic piecewise-linear interpolation."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("value field must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, y):
        g = self.grid
        s = np.mod(np.asarray(y, dtype=float), g.length) / g.h
        j = np.floor(s).astype(int)
        t = s - j
        j %= g.n
        return (1 - t) * self.values[j] + t * self.values[(j + 1) % g.n]

    def shifted(self, c: float) -> "ValueField":
        return ValueField(self.grid, self.values + c)

    def max_slope(self) -> float:
        v = self.values
        return float(np.max(np.abs(np.roll(v, -1) - v)) / self.grid.h)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))
