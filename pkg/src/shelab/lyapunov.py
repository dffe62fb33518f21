"""Lyapunov exponent of the linear equation: closed-form quadrature and estimators.

``gk_lambda`` evaluates::

    lambda(Q) = (1/pi) (Q/2)^6 exp((pi/Q)^2)
                * int_0^inf sinh(y) / cosh(y/2)^6 * sin(2 pi y / Q^2) * exp(-(y/Q)^2) dy

The integral is tiny next to the exponential prefactor when Q is small, so
for ``Q < 1`` it is computed in mpmath arithmetic with enough digits to
absorb the cancellation. The simulation side fits the slope of
``log sup u(t)`` over a late window, path by path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np
from scipy import stats

from .quadrature import QuadratureResult, gauss_kronrod, integration_limit

Q_MIN, Q_MAX = 0.5, 8.0
_TAIL_TOL = 1e-16


class DiagnosticError(ValueError):
    """The CLT sample is degenerate or too small."""


def _prefactor_log(q: float) -> float:
    return 6 * math.log(q / 2) + (math.pi / q) ** 2 - math.log(math.pi)


def _integrand_float(q: float):
    inv_q2 = 1.0 / (q * q)
    omega = 2 * math.pi * inv_q2

    def f(y):
        h = 0.5 * y
        # sinh(y) / cosh(y/2)^6 == 2 tanh(y/2) / cosh(y/2)^4
        return 2 * math.tanh(h) / math.cosh(h) ** 4 * math.sin(omega * y) * math.exp(-y * y * inv_q2)

    return f


def _integrand_mp(q, ctx):
    q = ctx.mpf(q)
    inv_q2 = 1 / (q * q)
    omega = 2 * ctx.pi * inv_q2

    def f(y):
        h = y / 2
        return 2 * ctx.tanh(h) / ctx.cosh(h) ** 4 * ctx.sin(omega * y) * ctx.exp(-y * y * inv_q2)

    return f


def tail_bound(q: float, upper: float) -> float:
    """Bound on the integrand's absolute integral beyond ``upper``.

    Uses ``sinh(y)/cosh(y/2)^6 <= 32 exp(-2y)`` and drops nothing else.
    """
    return 16.0 * math.exp(-2.0 * upper - (upper / q) ** 2)


def gk_lambda(q: float, rel_tol: float = 1e-13, extended: bool | None = None) -> QuadratureResult:
    """Closed-form Lyapunov exponent of the linear equation with ``sigma(z) = Q z``."""
    if not Q_MIN <= q <= Q_MAX:
        raise ValueError(
            f"Q={q} outside [{Q_MIN}, {Q_MAX}]: below the window exp((pi/Q)^2) overflows "
            "the cancellation budget, above it the oscillation is under-resolved"
        )
    upper = integration_limit(q, _TAIL_TOL)
    if extended is None:
        extended = q < 1.0
    if extended:
        lost = (math.pi / q) ** 2 / math.log(10)
        ctx = mpmath.mp.clone() if hasattr(mpmath.mp, "clone") else mpmath.MPContext()
        ctx.dps = int(30 + lost)
        res = gauss_kronrod(_integrand_mp(q, ctx), 0, upper, rel_tol=rel_tol, ctx=ctx)
        pref = ctx.exp(ctx.mpf(_prefactor_log(q)))
        value = float(pref * res.value)
        err = float(pref * (res.error_estimate + tail_bound(q, upper)))
    else:
        res = gauss_kronrod(_integrand_float(q), 0.0, upper, rel_tol=rel_tol)
        pref = math.exp(_prefactor_log(q))
        value = pref * res.value
        err = pref * (res.error_estimate + tail_bound(q, upper))
    return QuadratureResult(value, err, res.nodes_used)


def gk_lambda_oracle(q: float, dps: int = 60) -> float:
    """Independent evaluation by mpmath's tanh-sinh quadrature at high precision.

    Only used to produce and check fixtures.
    """
    ctx = mpmath.MPContext()
    ctx.dps = dps
    f = _integrand_mp(q, ctx)
    upper = integration_limit(q, _TAIL_TOL)
    # one breakpoint per half period keeps tanh-sinh on smooth pieces
    pieces = max(8, int(math.ceil(upper / (q * q / 2))))
    pts = ctx.linspace(0, upper, pieces + 1)
    integral = ctx.quad(f, pts, method="tanh-sinh")
    return float(ctx.exp(ctx.mpf(_prefactor_log(q))) * integral)


# --------------------------------------------------------------------------- estimators


@dataclass
class SlopeEstimate:
    lambda_hat: float
    stderr: float
    window: tuple
    per_path_slopes: np.ndarray
    observable: str = "sup"


def _paths(records) -> list:
    out = []
    for r in records:
        if hasattr(r, "paths"):
            out.extend(r.paths)
        else:
            out.append(r)
    return [p for p in out if p.ok]


def _log_series(path, observable: str) -> np.ndarray:
    if observable == "sup":
        return path.log_sup_u
    if observable == "inf":
        return path.log_inf_u
    if observable == "l1":
        return path.log_l1_u
    raise ValueError(f"unknown observable {observable!r}")


def estimate_lambda(records: Iterable, window: tuple | None = None, observable: str = "sup",
                    min_paths: int = 8) -> SlopeEstimate:
    """``-`` mean over paths of the least-squares slope of ``log sup u`` on ``window``.

    The default window is ``[T/2, T]``; shorter windows are rejected.
    """
    paths = _paths(records)
    if len(paths) < min_paths:
        raise ValueError(f"need at least {min_paths} complete paths, got {len(paths)}")
    horizon = float(max(p["time"][-1] for p in paths))
    if window is None:
        window = (horizon / 2, horizon)
    lo, hi = window
    if hi - lo < horizon / 2 - 1e-12 or hi > horizon + 1e-12 or lo < 0:
        raise ValueError(f"window {window} must lie in [0, {horizon}] and span half of it")
    slopes = []
    for p in paths:
        t = p["time"]
        mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        if mask.sum() < 2:
            raise ValueError("fewer than two samples in the slope window")
        slopes.append(np.polyfit(t[mask], _log_series(p, observable)[mask], 1)[0])
    slopes = np.asarray(slopes)
    return SlopeEstimate(
        float(-slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(len(slopes))),
        (lo, hi), slopes, observable,
    )


@dataclass
class SubadditiveEstimate:
    """Ensemble means of ``log S_n`` at integer times and their running infimum of ``/n``."""

    epochs: np.ndarray
    mean_log_sup: np.ndarray
    stderr: np.ndarray
    running_inf: np.ndarray = field(init=False)

    def __post_init__(self):
        self.running_inf = np.minimum.accumulate(self.mean_log_sup / self.epochs)

    @property
    def lambda_upper(self) -> float:
        """``-`` the last running infimum: the subadditive estimate of the exponent."""
        return float(-self.running_inf[-1])


def estimate_lambda_subadditive(config, sigma, seeds: Sequence[int], n_epochs: int) -> SubadditiveEstimate:
    """Run ``u0 = 1`` on each seed and average ``log S_n`` for ``n = 1..n_epochs``."""
    from .fields import GridFunction
    from .noise import NoiseStream
    from .solver import SimulationConfig, run_path

    if sigma.kind not in ("linear", "zero"):
        raise ValueError("the subadditive estimator needs linear sigma")
    grid = config.grid
    ones = GridFunction(grid, np.ones(grid.n_points))
    cfg = SimulationConfig(
        grid, config.dt, float(n_epochs), ones, config.scheme,
        sample_times=tuple(float(n) for n in range(1, n_epochs + 1)),
        band=config.band, clamp_rel=config.clamp_rel,
    )
    rows = []
    for seed in seeds:
        series = run_path(cfg, sigma, NoiseStream(int(seed), 0, grid, config.dt))
        if not series.ok:
            continue
        t = series["time"]
        keep = t >= 1 - 1e-9
        rows.append(series.log_sup_u[keep])
    data = np.asarray(rows)
    epochs = np.arange(1, n_epochs + 1, dtype=float)
    stderr = data.std(axis=0, ddof=1) / math.sqrt(len(data)) if len(data) > 1 else np.zeros(n_epochs)
    return SubadditiveEstimate(epochs, data.mean(axis=0), stderr)


@dataclass
class CLTReport:
    ks_statistic: float
    p_value: float
    sample: np.ndarray
    time: float


def clt_diagnostic(records: Iterable, lam: float, t: float, min_paths: int = 200) -> CLTReport:
    """KS distance of the standardised ``(log u(t, 0) + lam t) / sqrt(t)`` to N(0, 1)."""
    paths = _paths(records)
    if len(paths) < min_paths:
        raise DiagnosticError(f"need at least {min_paths} paths, got {len(paths)}")
    horizon = float(max(p["time"][-1] for p in paths))
    if t < horizon / 2:
        raise DiagnosticError(f"t={t} is earlier than half the horizon {horizon}")
    values = []
    for p in paths:
        times = p["time"]
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > 1e-9 * max(1.0, t):
            raise DiagnosticError(f"no sample at t={t}")
        values.append(p["log_mass"][k] + p["log_origin"][k])
    sample = (np.asarray(values) + lam * t) / math.sqrt(t)
    spread = sample.std(ddof=1)
    if not spread > 1e-12 * max(1.0, abs(sample.mean())):
        raise DiagnosticError("degenerate sample: zero variance")
    z = (sample - sample.mean()) / spread
    ks = stats.kstest(z, "norm")
    return CLTReport(float(ks.statistic), float(ks.pvalue), sample, t)
