"""Counter-based space-time white noise on the torus grid.

Every cell increment is a pure function of ``(seed, path_id, step, cell)``.
The bits come from Philox4x32-10 keyed by the seed and indexed by a counter
built from ``(cell // 2, step, path_id)``; each Philox block yields two
53-bit uniforms that the AS241 normal quantile turns into the normals of two
adjacent cells.
Nothing is sequential, so time shifts are exact and paths can be generated
in any order by any number of workers.

Generator version ``philox4x32-10/as241-53/v1`` is written into every run
manifest; changing the bit layout or the Gaussian transform must bump it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import math

import numba as nb
import numpy as np

from .fields import TorusGrid

GENERATOR_VERSION = "philox4x32-10/as241-53/v1"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S21 = np.uint64(21)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds (Salmon et al., Random123).

    Words are carried in uint64 registers holding 32-bit values.
    """
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            ((p1 >> _S32) ^ c1 ^ k0) & _MASK32,
            p1 & _MASK32,
            ((p0 >> _S32) ^ c3 ^ k1) & _MASK32,
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


@nb.njit(inline="always")
def _unit53(hi, lo):
    # 53-bit uniform on the open interval (0, 1)
    bits = np.int64((hi << _S21) ^ (lo >> _S11))
    return (np.float64(bits) + 0.5) * _INV_2_53


@nb.njit(inline="always")
def ppnd16(p):
    """Standard normal quantile, Wichura's AS241 (PPND16); ~1e-16 relative accuracy."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    z = num / den
    return -z if q < 0 else z


@nb.njit
def fill_normals(out, seed, path_id, step):
    """Write the standard normals of one ``(path_id, step)`` row into ``out``.

    Counter ``(j // 2, step mod 2^32, step >> 32, path_id)``, key = the two
    32-bit halves of ``seed``. One Philox block gives two 53-bit uniforms,
    mapped through the normal quantile to cells ``j`` and ``j + 1``.
    """
    n = out.shape[0]
    s = np.uint64(seed)
    k0 = s & _MASK32
    k1 = s >> _S32
    st = np.uint64(step)
    c1 = st & _MASK32
    c2 = st >> _S32
    c3 = np.uint64(path_id)
    for b in range(n // 2):
        x0, x1, x2, x3 = philox4x32(np.uint64(b), c1, c2, c3, k0, k1)
        out[2 * b] = _unit53(x0, x1)
        out[2 * b + 1] = _unit53(x2, x3)
    for j in range(n):
        out[j] = ppnd16(out[j])


@dataclass(frozen=True)
class NoiseStream:
    """Immutable handle on the increments of one noise path.

    ``offset`` is the number of whole steps this stream is shifted by with
    respect to the underlying sheet; step ``m`` of the stream reads global
    step ``m + offset``.
    """

    seed: int
    path_id: int
    grid: TorusGrid
    dt: float
    offset: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not 0 <= self.path_id < 2**32:
            raise ValueError(f"path_id must fit in 32 unsigned bits, got {self.path_id}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")

    @property
    def scale(self) -> float:
        """Standard deviation ``sqrt(dt * dx)`` of one cell increment."""
        return float(np.sqrt(self.dt * self.grid.spacing))

    def normals(self, step: int) -> np.ndarray:
        if step < 0:
            raise ValueError(f"step must be non-negative, got {step}")
        out = np.empty(self.grid.n_points)
        fill_normals(out, self.seed, self.path_id, step + self.offset)
        return out

    def increments(self, step: int) -> np.ndarray:
        """Brownian-sheet increments of the cells at ``step``; variance ``dt * dx``."""
        return self.scale * self.normals(step)

    def shifted(self, shift_steps: int) -> "NoiseStream":
        """The time-shifted stream whose step ``m`` is this stream's step ``m + shift_steps``."""
        if shift_steps < 0:
            raise ValueError(f"shift must be non-negative, got {shift_steps}")
        return replace(self, offset=self.offset + int(shift_steps))

    def increment_block(self, steps: int, start: int = 0) -> np.ndarray:
        """Increments of ``steps`` consecutive rows as a ``(steps, n_points)`` array."""
        rows = np.empty((steps, self.grid.n_points))
        for m in range(steps):
            fill_normals(rows[m], self.seed, self.path_id, start + m + self.offset)
        return self.scale * rows


def increments(stream: NoiseStream, step: int) -> np.ndarray:
    return stream.increments(step)


def shifted(stream: NoiseStream, shift_steps: int) -> NoiseStream:
    return stream.shifted(shift_steps)


def wiener_integral(stream: NoiseStream, phi, steps: int | None = None) -> float:
    """Discrete Wiener integral ``sum_{m,j} phi[m, j] * dW[m, j]``.

    ``phi`` must have shape ``(steps, n_points)``.
    """
    phi = np.asarray(phi, dtype=float)
    if steps is None:
        steps = phi.shape[0] if phi.ndim == 2 else -1
    if phi.shape != (steps, stream.grid.n_points):
        raise ValueError(
            f"phi has shape {phi.shape}, expected {(steps, stream.grid.n_points)}"
        )
    return float(np.sum(phi * stream.increment_block(steps)))
