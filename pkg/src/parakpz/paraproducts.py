"""Bony decomposition, time-smoothed paraproduct and commutators.

Conventions (with ``S_i = sum_{j <= i-1} Delta_j``):

    lower(f, g)    = sum_{i >= 1}  S_{i-1} f * Delta_i g      (low modulates high)
    resonant(f, g) = sum_{|i-j| <= 1} Delta_i f * Delta_j g   (diagonal part)
    upper(f, g)    = lower(g, f)

so that ``f*g = lower(f,g) + resonant(f,g) + upper(f,g)`` is exact on the
grid.  The time-smoothed variant replaces ``S_{i-1} f`` by ``S_{i-1} Q_i f``
where ``Q_i`` is causal mollification over a window of length ``2^{-2i}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import DyadicPartition, GridField, derivative_multiplier
from .spaces import TimeField

__all__ = [
    "TimeSmoother",
    "make_time_smoother",
    "para_lower",
    "para_upper",
    "resonant",
    "para_modified",
    "commutator_C",
    "commutator_modified",
    "commutator_time",
    "heat_apply",
]


# ---------------------------------------------------------------------------
# block machinery on raw coefficient arrays (vectorized over leading axes)
# ---------------------------------------------------------------------------

def _blocks(coeffs: np.ndarray, part: DyadicPartition) -> np.ndarray:
    """Point values of all blocks: shape (j_max+2,) + coeffs.shape."""
    w = part.rho[(slice(None),) + (None,) * (coeffs.ndim - 1)]
    return part.grid.to_values(w * coeffs[None])


def _lowpassed(coeffs: np.ndarray, part: DyadicPartition) -> np.ndarray:
    """Point values of S_{i-1} f for i = 1 .. j_max (shape (j_max,) + shape).

    Row r corresponds to i = r + 1, i.e. the window sum of blocks -1 .. i-2.
    """
    cum = np.cumsum(part.rho, axis=0)[:-2]  # rows: blocks -1..i-2 for i=1..j_max
    w = cum[(slice(None),) + (None,) * (coeffs.ndim - 1)]
    return part.grid.to_values(w * coeffs[None])


def para_lower_values(fc: np.ndarray, gc: np.ndarray,
                      part: DyadicPartition) -> np.ndarray:
    """f < g on coefficient arrays of shape (..., N); returns point values."""
    low = _lowpassed(fc, part)
    high = _blocks(gc, part)[2:]  # blocks i = 1 .. j_max
    return np.einsum("i...,i...->...", low, high)


def resonant_values(fc: np.ndarray, gc: np.ndarray,
                    part: DyadicPartition) -> np.ndarray:
    bf = _blocks(fc, part)
    bg = _blocks(gc, part)
    near = bg.copy()
    near[:-1] += bg[1:]
    near[1:] += bg[:-1]
    return np.einsum("i...,i...->...", bf, near)


def _check_grid(f: GridField, g: GridField, part: DyadicPartition) -> None:
    if f.grid != g.grid or f.grid != part.grid:
        raise ValueError("fields and partition must share one grid")


def para_lower(f: GridField, g: GridField, part: DyadicPartition) -> GridField:
    """Paraproduct f < g = sum_i S_{i-1} f * Delta_i g."""
    _check_grid(f, g, part)
    return GridField(f.grid, values=para_lower_values(f.coeffs, g.coeffs, part))


def para_upper(f: GridField, g: GridField, part: DyadicPartition) -> GridField:
    """Paraproduct f > g = g < f with the roles swapped."""
    return para_lower(g, f, part)


def resonant(f: GridField, g: GridField, part: DyadicPartition) -> GridField:
    """Resonant product f o g = sum over |i-j| <= 1 of Delta_i f Delta_j g."""
    _check_grid(f, g, part)
    return GridField(f.grid, values=resonant_values(f.coeffs, g.coeffs, part))


# ---------------------------------------------------------------------------
# causal time smoothing
# ---------------------------------------------------------------------------

def _bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    v = u[inside]
    out[inside] = np.exp(-1.0 / (v * (1.0 - v)))
    return out


@dataclass(frozen=True)
class TimeSmoother:
    """Per-level causal mollifiers Q_i on a uniform time mesh.

    Q_i convolves a time series with the unit-mass bump scaled to the window
    [0, 2^{-2i}]; the series is extended into negative times by its value at 0
    ('clamp') or by zero ('zero', used for fields carrying a blow-up at 0).
    Levels whose window is shorter than the mesh step act as the identity.
    """

    dt: float
    j_max: int
    weights: tuple  # weights[i+1] = quadrature weights for level i, or None

    def smooth(self, series: np.ndarray, level: int,
               extend: str = "clamp") -> np.ndarray:
        """Apply Q_level along axis 0 of ``series`` (shape (M+1, ...))."""
        w = self.weights[level + 1]
        if w is None:
            return series
        m = series.shape[0]
        out = np.zeros_like(series)
        for r, wr in enumerate(w):
            if r == 0:
                out += wr * series
            elif r >= m:
                if extend == "clamp":
                    out += wr * series[0]
            elif extend == "clamp":
                shifted = series[np.maximum(np.arange(m) - r, 0)]
                out += wr * shifted
            else:
                out[r:] += wr * series[:m - r]
                # zero extension: nothing added for indices < r
        return out


def make_time_smoother(dt: float, part: DyadicPartition) -> TimeSmoother:
    """Tabulate trapezoidal quadrature weights of the bump at every level."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    mass, err = _bump_mass()
    if err > 1e-10:
        raise AssertionError("bump normalization drifted")
    weights = []
    for j in range(-1, part.j_max + 1):
        width = 2.0 ** (-2 * j) if j >= 0 else 4.0
        if width < dt:
            weights.append(None)
            continue
        r_max = int(np.ceil(width / dt))
        s = np.arange(r_max + 1) * dt / width
        w = _bump(s) / (mass * width)
        trap = np.full(r_max + 1, dt)
        trap[0] = trap[-1] = dt / 2.0
        w = w * trap
        total = w.sum()
        if total <= 0:
            weights.append(None)
            continue
        weights.append(tuple(w / total))  # exact unit mass -> Q_i 1 = 1
    return TimeSmoother(dt=dt, j_max=part.j_max, weights=tuple(weights))


def _bump_mass() -> tuple[float, float]:
    u = np.linspace(0.0, 1.0, 4001)
    vals = _bump(u)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    coarse = trapezoid(vals[::2], u[::2])
    fine = trapezoid(vals, u)
    return float(fine), abs(fine - coarse)


def _uniform_dt(mesh: np.ndarray) -> float:
    steps = np.diff(mesh)
    if len(steps) == 0:
        return 1.0
    if np.max(np.abs(steps - steps[0])) > 1e-10 * steps[0]:
        raise ValueError("time smoothing requires a uniform mesh")
    return float(steps[0])


def para_modified(f: TimeField, g: TimeField, sm: TimeSmoother,
                  part: DyadicPartition) -> TimeField:
    """Time-smoothed paraproduct f << g = sum_i (S_{i-1} Q_i f) Delta_i g."""
    f.check_mesh(g)
    if abs(_uniform_dt(f.mesh) - sm.dt) > 1e-12 * sm.dt:
        raise ValueError("smoother was built for a different mesh step")
    extend = "zero" if f.blowup > 0 else "clamp"
    fc = f.grid.to_coeffs(f.frames)          # (M+1, N)
    gb = _blocks(f.grid.to_coeffs(g.frames), part)  # (J, M+1, N)
    cum = np.cumsum(part.rho, axis=0)
    out = np.zeros_like(f.frames)
    for i in range(1, part.j_max + 1):
        sf = sm.smooth(fc, i, extend)
        low = f.grid.to_values(cum[i - 1][None] * sf)
        out += low * gb[i + 1]
    return g.like(out)


# ---------------------------------------------------------------------------
# commutators
# ---------------------------------------------------------------------------

def commutator_C(f: GridField, g: GridField, h: GridField,
                 part: DyadicPartition) -> GridField:
    """C(f,g,h) = (f < g) o h - f * (g o h)."""
    first = resonant(para_lower(f, g, part), h, part)
    second = f * resonant(g, h, part)
    return first - second


def commutator_modified(f: TimeField, g: TimeField, sm: TimeSmoother,
                        part: DyadicPartition) -> TimeField:
    """C2(f,g) = f << g - f < g (framewise plain paraproduct)."""
    f.check_mesh(g)
    plain = para_lower_values(f.grid.to_coeffs(f.frames),
                              f.grid.to_coeffs(g.frames), part)
    return para_modified(f, g, sm, part) - g.like(plain)


def heat_apply(u: TimeField) -> TimeField:
    """The parabolic operator (d/dt - Laplacian/2) u.

    Time derivative by second-order finite differences on the mesh, space
    part spectrally.
    """
    if len(u.mesh) < 2:
        raise ValueError("need at least two mesh points for d/dt")
    dtu = np.gradient(u.frames, u.mesh, axis=0)
    lap = u.grid.to_values(derivative_multiplier(u.grid, 2)
                           * u.grid.to_coeffs(u.frames))
    return u.like(dtu - 0.5 * lap)


def commutator_time(f: TimeField, g: TimeField, sm: TimeSmoother,
                    part: DyadicPartition) -> tuple[TimeField, TimeField]:
    """Returns (f << g - f < g,  L(f << g) - f << (L g)) with L = d/dt - Lap/2."""
    diff = commutator_modified(f, g, sm, part)
    smoothed = para_modified(f, g, sm, part)
    second = heat_apply(smoothed) - para_modified(f, heat_apply(g), sm, part)
    return diff, second
