"""Worker pool over independent paths.

Each task is self-contained (config, sigma, seed, path id), and the noise of a
path depends only on ``(seed, path_id)``, so the merged result is the same for
any number of workers and any completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..noise import NoiseStream
from ..solver import PathSeries, RenormSchedule, SigmaSpec, SimulationConfig, run_path


@dataclass(frozen=True)
class PathTask:
    group: str
    path_id: int
    config: SimulationConfig
    sigma: SigmaSpec
    seed: int
    schedule: RenormSchedule | None
    observer: Callable | None = None


def _run(task: PathTask) -> tuple[str, PathSeries]:
    stream = NoiseStream(task.seed, task.path_id, task.config.grid, task.config.dt)
    return task.group, run_path(task.config, task.sigma, stream, task.schedule, task.observer)


def run_tasks(tasks: Sequence[PathTask], workers: int = 1) -> list[tuple[str, PathSeries]]:
    """Run every task and return ``(group, series)`` sorted by group order then path id."""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    order = {}
    for t in tasks:
        order.setdefault(t.group, len(order))
    if workers == 1 or len(tasks) <= 1:
        results = [_run(t) for t in tasks]
    else:
        chunk = max(1, math.ceil(len(tasks) / (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, tasks, chunksize=chunk))
    return sorted(results, key=lambda gp: (order[gp[0]], gp[1].path_id))


@dataclass
class Exclusions:
    """Paths dropped by the failure semantics and why."""

    total: int
    excluded: dict

    @property
    def fraction(self) -> float:
        return len(self.excluded) / self.total if self.total else 0.0

    def as_dict(self) -> dict:
        return {
            "total_paths": self.total,
            "excluded_paths": len(self.excluded),
            "excluded_fraction": self.fraction,
            "reasons": {f"{g}:{pid}": why for (g, pid), why in sorted(self.excluded.items())},
        }


def screen(results, clamp_budget: float) -> tuple[list, Exclusions]:
    """Drop failed paths and paths whose clamp rate exceeds ``clamp_budget``."""
    kept, excluded = [], {}
    for group, path in results:
        rate = path["clamp_count"][-1] / path.total_cells if len(path["time"]) and path.total_cells else 0.0
        if not path.ok:
            excluded[(group, path.path_id)] = path.failure
        elif rate > clamp_budget:
            excluded[(group, path.path_id)] = f"clamp rate {rate:.3g} above budget {clamp_budget:g}"
        else:
            kept.append((group, path))
    return kept, Exclusions(len(results), excluded)


def clamp_rate(results) -> float:
    cells = sum(p.total_cells for _, p in results)
    clamps = sum(int(p["clamp_count"][-1]) for _, p in results if len(p["time"]))
    return clamps / cells if cells else 0.0


def stack(paths: Sequence[PathSeries], column: str) -> np.ndarray:
    """``(n_paths, n_samples)`` array of one column; all paths must share the sampling."""
    return np.vstack([p.columns[column] for p in paths])
