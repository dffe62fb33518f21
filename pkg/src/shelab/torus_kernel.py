"""Periodic heat kernel on the torus of circumference 2 and its semigroup.

Two representations of the same function are used::

    p_t(d) = (4 pi t)^(-1/2) sum_n exp(-(d + 2n)^2 / (4t))        (images)
           = 1/2 + sum_{m>=1} exp(-pi^2 m^2 t) cos(pi m d)          (spectral)

Small times use the image sum, large times the cosine series. In both cases
the number of retained terms comes from an a-priori bound on the omitted
tail, never from a fixed count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .fields import GridFunction, norm_l1

#: P{1/sqrt(2) <= Z <= 3/sqrt(2)} for a standard normal Z
BALL_MASS_CONSTANT = float(ndtr(3 / math.sqrt(2)) - ndtr(1 / math.sqrt(2)))


@dataclass(frozen=True)
class KernelConfig:
    tail_tolerance: float = 1e-15
    crossover_time: float = 0.25

    def __post_init__(self):
        if not 0 < self.tail_tolerance <= 1e-6:
            raise ValueError(f"tail_tolerance must be in (0, 1e-6], got {self.tail_tolerance}")
        if not 0 < self.crossover_time <= 1:
            raise ValueError(f"crossover_time must be in (0, 1], got {self.crossover_time}")


DEFAULT_KERNEL = KernelConfig()


def _check_time(t):
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")


def wrap(d):
    """Reduce a displacement to [-1, 1)."""
    return np.mod(np.asarray(d, dtype=float) + 1.0, 2.0) - 1.0


def image_terms(t: float, tol: float) -> int:
    """Smallest ``N`` such that the images with ``|n| > N`` contribute at most ``tol``.

    For ``|d| <= 1`` every omitted term is below ``exp(-(2|n| - 1)^2 / 4t)`` and
    successive bounds shrink by at least ``exp(-2(N + 1) / t)``.
    """
    pref = 1.0 / math.sqrt(4 * math.pi * t)
    big_n = 0
    while True:
        ratio = math.exp(-2.0 * (big_n + 1) / t)
        tail = 2 * pref * math.exp(-((2 * big_n + 1) ** 2) / (4 * t)) / (1 - ratio)
        if tail <= tol:
            return big_n
        big_n += 1


def spectral_terms(t: float, tol: float) -> int:
    """Smallest ``M`` with ``sum_{m > M} exp(-pi^2 m^2 t) <= tol`` (geometric bound)."""
    big_m = 0
    while True:
        ratio = math.exp(-math.pi**2 * (2 * big_m + 3) * t)
        tail = math.exp(-math.pi**2 * (big_m + 1) ** 2 * t) / (1 - ratio)
        if tail <= tol:
            return big_m
        big_m += 1


def kernel_images(t: float, d, tol: float = DEFAULT_KERNEL.tail_tolerance) -> np.ndarray:
    _check_time(t)
    d = wrap(d)
    big_n = image_terms(t, tol)
    n = np.arange(-big_n, big_n + 1)
    shifted = d[..., None] + 2.0 * n
    return np.exp(-shifted**2 / (4 * t)).sum(axis=-1) / math.sqrt(4 * math.pi * t)


def kernel_spectral(t: float, d, tol: float = DEFAULT_KERNEL.tail_tolerance) -> np.ndarray:
    _check_time(t)
    d = wrap(d)
    big_m = spectral_terms(t, tol)
    m = np.arange(1, big_m + 1)
    weights = np.exp(-math.pi**2 * m**2 * t)
    return 0.5 + (weights * np.cos(math.pi * m * d[..., None])).sum(axis=-1)


def heat_kernel(t: float, x, y, cfg: KernelConfig = DEFAULT_KERNEL):
    """``p_t(x, y)``; accepts scalars or broadcastable arrays."""
    _check_time(t)
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if t <= cfg.crossover_time:
        out = kernel_images(t, d, cfg.tail_tolerance)
    else:
        out = kernel_spectral(t, d, cfg.tail_tolerance)
    return float(out) if out.ndim == 0 else out


def kernel_matrix(t: float, grid, cfg: KernelConfig = DEFAULT_KERNEL) -> np.ndarray:
    """Dense ``dx * p_t(x_i, x_j)`` on the grid (circulant)."""
    x = grid.points
    row = heat_kernel(t, x - x[0], 0.0, cfg)
    idx = (np.arange(grid.n_points)[:, None] - np.arange(grid.n_points)[None, :]) % grid.n_points
    return grid.spacing * row[idx]


def semigroup_apply(t: float, f: GridFunction, cfg: KernelConfig = DEFAULT_KERNEL) -> GridFunction:
    """Discrete ``(P_t f)(x_i) = dx * sum_j p_t(x_i, x_j) f(x_j)``."""
    _check_time(t)
    return GridFunction(f.grid, kernel_matrix(t, f.grid, cfg) @ f.values)


def semigroup_apply_fft(t: float, f: GridFunction, cfg: KernelConfig = DEFAULT_KERNEL) -> GridFunction:
    """Same operator as :func:`semigroup_apply`, applied as a circular convolution."""
    _check_time(t)
    grid = f.grid
    row = grid.spacing * heat_kernel(t, grid.points - grid.points[0], 0.0, cfg)
    return GridFunction(grid, np.fft.irfft(np.fft.rfft(row) * np.fft.rfft(f.values), grid.n_points))


# --------------------------------------------------------------------------- lemma checks


@dataclass(frozen=True)
class LipschitzReport:
    measured_lip: float
    bound: float
    passed: bool


def lipschitz_bound(t: float, mass: float) -> float:
    return 7 / math.sqrt(t) * (1 + 1 / math.sqrt(t)) * mass


def check_lipschitz_bound(t: float, f: GridFunction, cfg: KernelConfig = DEFAULT_KERNEL) -> LipschitzReport:
    """Largest adjacent difference quotient of ``P_t f`` against ``7/sqrt(t) (1 + 1/sqrt(t)) |f|_1``."""
    g = semigroup_apply(t, f, cfg).values
    measured = float(np.max(np.abs(np.roll(g, -1) - g)) / f.grid.spacing)
    bound = lipschitz_bound(t, norm_l1(f))
    return LipschitzReport(measured, bound, measured <= bound)


@dataclass(frozen=True)
class BallMassReport:
    min_over_ball: float
    A: float
    passed: bool
    n_points_checked: int
    min_riemann: float
    # two readings of the exponent constant built from A
    chi_log: float = math.log(8) - math.log(BALL_MASS_CONSTANT)
    chi_linear: float = math.log(8) - BALL_MASS_CONSTANT


def torus_distance(x, y):
    return np.abs(wrap(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def ball_mass(t: float, x, a: float, radius: float, tol: float = DEFAULT_KERNEL.tail_tolerance):
    """Exact ``int_{B(a, radius)} p_t(x, y) dy`` through normal CDFs of the images."""
    _check_time(t)
    d = wrap(np.asarray(x, dtype=float) - a)
    big_n = image_terms(t, tol) + 1
    n = np.arange(-big_n, big_n + 1)
    s = math.sqrt(2 * t)
    shifted = d[..., None] + 2.0 * n
    return (ndtr((radius - shifted) / s) - ndtr((-radius - shifted) / s)).sum(axis=-1)


# summing erf differences loses a few ulps; equality at the outer boundary must pass
_BALL_ROUNDING = 1e-13


def check_ball_mass(t: float, a: float, c: float, grid, cfg: KernelConfig = DEFAULT_KERNEL) -> BallMassReport:
    """Minimum over grid ``x`` in ``B(a, (c+1) sqrt t)`` of the mass of ``B(a, c sqrt t)``.

    The ball mass is integrated exactly; the plain Riemann sum over grid ``y``
    is reported alongside as ``min_riemann`` (its O(dx) error can exceed the
    margin above ``A`` at the outer boundary). Points outside the outer ball
    carry no constraint.
    """
    _check_time(t)
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    if c * math.sqrt(t) > 1:
        raise ValueError("ball radius c*sqrt(t) must not exceed 1")
    x = grid.points
    r = c * math.sqrt(t)
    inner = torus_distance(x, a) <= r
    outer = torus_distance(x, a) <= (c + 1) * math.sqrt(t)
    if not outer.any():
        raise ValueError("outer ball contains no grid point; refine the grid")
    exact = ball_mass(t, x[outer], a, r, cfg.tail_tolerance)
    lo = float(exact.min())
    riemann = kernel_matrix(t, grid, cfg)[np.ix_(outer, inner)].sum(axis=1)
    return BallMassReport(
        lo, BALL_MASS_CONSTANT, lo >= BALL_MASS_CONSTANT - _BALL_ROUNDING,
        int(outer.sum()), float(riemann.min()) if inner.any() else 0.0,
    )
