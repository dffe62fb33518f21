"""Invariant suite for the periodic heat kernel (the ``kernel-check`` subcommand)."""

from __future__ import annotations

import math

import numpy as np

from ..fields import GridFunction, TorusGrid
from ..torus_kernel import (
    BALL_MASS_CONSTANT,
    DEFAULT_KERNEL,
    KernelConfig,
    check_ball_mass,
    check_lipschitz_bound,
    heat_kernel,
    kernel_images,
    kernel_matrix,
    kernel_spectral,
    semigroup_apply,
)
from .experiments import Check


def random_fields(rng: np.random.Generator, grid: TorusGrid, count: int) -> list[GridFunction]:
    """Non-negative test fields: smooth bumps, rough noise and single-cell spikes."""
    x = grid.points
    out = []
    for i in range(count):
        kind = i % 3
        if kind == 0:
            centre, width = rng.uniform(-1, 1), rng.uniform(0.02, 0.5)
            d = np.mod(x - centre + 1, 2) - 1
            vals = np.exp(-(d / width) ** 2) * rng.uniform(0.1, 10)
        elif kind == 1:
            vals = rng.random(grid.n_points) ** rng.uniform(1, 8)
        else:
            vals = np.zeros(grid.n_points)
            vals[rng.integers(grid.n_points)] = rng.uniform(0.1, 10) / grid.spacing
        out.append(GridFunction(grid, vals))
    return out


def kernel_suite(seed: int = 0, n_fields: int = 100, times=(0.01, 0.1, 1.0),
                 n_points: int = 256, cfg: KernelConfig = DEFAULT_KERNEL) -> list[Check]:
    rng = np.random.default_rng(seed)
    grid = TorusGrid(n_points)
    x = grid.points
    checks = []

    worst = 0.0
    for t in np.geomspace(1e-3, 10, 13):
        worst = max(worst, float(np.max(np.abs(kernel_matrix(t, grid, cfg).sum(axis=1) - 1))))
    checks.append(Check("normalization", worst, 1e-9, worst <= 1e-9))

    pts = rng.uniform(-1, 1, size=(200, 2))
    worst = 0.0
    for t in (1e-3, 0.05, 0.25, 0.3, 2.0):
        a = heat_kernel(t, pts[:, 0], pts[:, 1], cfg)
        b = heat_kernel(t, pts[:, 1], pts[:, 0], cfg)
        worst = max(worst, float(np.max(np.abs(a - b))))
    checks.append(Check("symmetry", worst, 1e-12, worst <= 1e-12))

    f = GridFunction(grid, 1 + 0.5 * np.cos(np.pi * x) + 0.25 * np.sin(3 * np.pi * x))
    worst = 0.0
    for s, t in ((0.01, 0.02), (0.1, 0.2), (0.3, 0.7)):
        lhs = semigroup_apply(s, semigroup_apply(t, f, cfg), cfg).values
        rhs = semigroup_apply(s + t, f, cfg).values
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    checks.append(Check("semigroup", worst, 1e-7, worst <= 1e-7))

    d = np.linspace(-1, 1, 101)
    worst = 0.0
    for t in np.linspace(0.1, 0.5, 9):
        worst = max(worst, float(np.max(np.abs(kernel_images(t, d, cfg.tail_tolerance)
                                                - kernel_spectral(t, d, cfg.tail_tolerance)))))
    checks.append(Check("dual_representation", worst, 1e-10, worst <= 1e-10))

    worst = float(np.max(np.abs(heat_kernel(10.0, d, 0.0, cfg) - 0.5)))
    checks.append(Check("long_time_limit", worst, 1e-12, worst <= 1e-12))

    worst = 0.0
    low = math.inf
    for t in np.geomspace(1e-3, 2, 12):
        vals = heat_kernel(t, d, 0.0, cfg)
        worst = max(worst, float(vals.max() / (2 * max(1.0, t**-0.5))))
        low = min(low, float(vals.min()))
    checks.append(Check("pointwise_bound", worst, 1.0, worst <= 1.0))
    checks.append(Check("positivity", low, 0.0, low > 0))

    fields = random_fields(rng, grid, n_fields)
    failures, worst = 0, 0.0
    for t in times:
        for g in fields:
            rep = check_lipschitz_bound(t, g, cfg)
            failures += not rep.passed
            if rep.bound > 0:
                worst = max(worst, rep.measured_lip / rep.bound)
    checks.append(Check("lipschitz_bound", failures, 0, failures == 0,
                        detail=f"{n_fields} fields x {len(times)} times, max measured/bound {worst:.3g}"))

    a_err = abs(BALL_MASS_CONSTANT - 0.222802)
    checks.append(Check("ball_mass_constant", a_err, 1e-6, a_err <= 1e-6))
    failures, margin = 0, math.inf
    centres = rng.uniform(-1, 1, 10)
    for t in times:
        for a in centres:
            rep = check_ball_mass(t, float(a), 1.0, grid, cfg)
            failures += not rep.passed
            margin = min(margin, rep.min_over_ball - rep.A)
    checks.append(Check("ball_mass_bound", failures, 0, failures == 0,
                        detail=f"min margin above A {margin:.3g}"))
    return checks
