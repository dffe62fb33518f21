"""Torus geometry, grid functions and the norms the observables are built from.

The torus R/2Z is identified with [-1, 1) and discretised by ``n`` cells of
width ``2/n``; grid point ``j`` is the left endpoint ``-1 + j * 2/n``, so for
even ``n`` the index ``n // 2`` is exactly ``x = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidFieldError(ValueError):
    """A field holds NaN/Inf or has the wrong shape."""


class PositivityError(ValueError):
    """A strictly positive field was required; ``index`` is the first offender."""

    def __init__(self, index: int, value: float):
        super().__init__(f"non-positive value {value!r} at cell {index}")
        self.index = index
        self.value = value


class DegenerateFieldError(ValueError):
    """The field has zero total mass."""


@dataclass(frozen=True)
class TorusGrid:
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 4 or self.n_points % 2:
            raise ValueError(f"n_points must be an even integer >= 4, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return 2.0 / self.n_points

    @property
    def points(self) -> np.ndarray:
        return -1.0 + self.spacing * np.arange(self.n_points)

    @property
    def origin_index(self) -> int:
        """Index of the grid point ``x = 0``."""
        return self.n_points // 2

    def index_of(self, x: float) -> int:
        """Index of the cell whose left endpoint is nearest to ``x`` (mod 2)."""
        return int(np.rint((x + 1.0) / self.spacing)) % self.n_points

    def sample(self, func) -> "GridFunction":
        return GridFunction(self, func(self.points))


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise InvalidFieldError(
                f"expected {self.grid.n_points} values, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, c * self.values)

    __rmul__ = __mul__


def _finite(f: GridFunction) -> np.ndarray:
    v = f.values
    if not np.all(np.isfinite(v)):
        raise InvalidFieldError(f"field has {np.count_nonzero(~np.isfinite(v))} non-finite values")
    return v


def norm_l1(f: GridFunction) -> float:
    """Left-endpoint quadrature of the integral of ``|f|`` over the torus."""
    return f.grid.spacing * float(np.sum(np.abs(_finite(f))))


def norm_sup(f: GridFunction) -> float:
    return float(np.max(np.abs(_finite(f))))


def osc_log(f: GridFunction) -> float:
    """``max log f - min log f``; rejects any non-positive value."""
    v = _finite(f)
    bad = np.flatnonzero(v <= 0)
    if bad.size:
        raise PositivityError(int(bad[0]), float(v[bad[0]]))
    # log(max/min) keeps scale invariance exact when both are rescaled alike
    return float(np.log(v.max()) - np.log(v.min()))


def ratio_sup_l1(f: GridFunction) -> float:
    mass = norm_l1(f)
    if mass == 0:
        raise DegenerateFieldError("zero total mass")
    return norm_sup(f) / mass
