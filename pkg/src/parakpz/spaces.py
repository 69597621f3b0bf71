"""Time-indexed fields and estimators for the weighted norms.

A :class:`TimeField` stores one spatial frame per mesh time plus the
bookkeeping needed by the parabolic norms: a blow-up exponent ``beta``
(the field is measured through t^beta * f(t)) and a weight descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .spectral import (
    DyadicPartition,
    Grid,
    GridField,
    WeightSpec,
    lp_blocks,
    weight_eval,
)

__all__ = [
    "TimeField",
    "besov_norm",
    "besov_norm_values",
    "parabolic_norm",
    "holder_equiv_norm",
    "interpolation_probe",
    "write_timefield",
    "read_timefield",
]


@dataclass
class TimeField:
    """A field on a shared grid sampled on a strictly increasing time mesh."""

    grid: Grid
    mesh: np.ndarray          # (M+1,) times
    frames: np.ndarray        # (M+1, N) complex point values
    blowup: float = 0.0
    weight: WeightSpec = field(default_factory=WeightSpec)

    def __post_init__(self) -> None:
        self.mesh = np.asarray(self.mesh, dtype=float)
        self.frames = np.asarray(self.frames, dtype=complex)
        if self.frames.shape != (len(self.mesh), self.grid.num_points):
            raise ValueError(f"frames shape {self.frames.shape} does not match "
                             f"mesh {len(self.mesh)} x grid {self.grid.num_points}")
        if len(self.mesh) >= 2 and np.any(np.diff(self.mesh) <= 0):
            raise ValueError("time mesh must be strictly increasing")
        if not (0.0 <= self.blowup < 1.0):
            raise ValueError(f"blow-up exponent must lie in [0,1), got {self.blowup}")

    @classmethod
    def constant(cls, grid: Grid, mesh: np.ndarray, f: GridField | None = None,
                 **kw) -> "TimeField":
        vals = np.zeros(grid.num_points, dtype=complex) if f is None else f.values
        return cls(grid, np.asarray(mesh, float),
                   np.tile(vals, (len(mesh), 1)), **kw)

    def frame(self, i: int) -> GridField:
        return GridField(self.grid, values=self.frames[i])

    def like(self, frames: np.ndarray) -> "TimeField":
        return replace(self, frames=np.asarray(frames, dtype=complex))

    def restrict(self, i_lo: int, i_hi: int) -> "TimeField":
        return replace(self, mesh=self.mesh[i_lo:i_hi + 1],
                       frames=self.frames[i_lo:i_hi + 1])

    def check_mesh(self, other: "TimeField") -> None:
        if self.grid != other.grid or len(self.mesh) != len(other.mesh) or \
                np.max(np.abs(self.mesh - other.mesh)) > 1e-12:
            raise ValueError("time fields live on different meshes")

    def __add__(self, other):
        if isinstance(other, TimeField):
            self.check_mesh(other)
            return self.like(self.frames + other.frames)
        return self.like(self.frames + np.asarray(other))

    def __sub__(self, other):
        if isinstance(other, TimeField):
            self.check_mesh(other)
            return self.like(self.frames - other.frames)
        return self.like(self.frames - np.asarray(other))

    def __mul__(self, other):
        if isinstance(other, TimeField):
            self.check_mesh(other)
            return self.like(self.frames * other.frames)
        return self.like(self.frames * other)

    __rmul__ = __mul__

    def derivative(self, order: int = 1) -> "TimeField":
        from .spectral import derivative_multiplier
        mult = derivative_multiplier(self.grid, order)
        coeffs = self.grid.to_coeffs(self.frames)
        return self.like(self.grid.to_values(mult * coeffs))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.frames)))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def besov_norm_values(values: np.ndarray, grid: Grid, alpha: float,
                      part: DyadicPartition, w: WeightSpec | None = None,
                      t: float = 0.0, exclude_seam: int = 0) -> np.ndarray:
    """Block-sup Besov norm of one or many rows of point values.

    Accepts values of shape (..., N) and returns the norms of shape (...).
    """
    coeffs = grid.to_coeffs(np.asarray(values, dtype=complex))
    blocks = lp_blocks(coeffs, part)                       # (J, ..., N)
    mags = np.abs(blocks)
    if w is not None:
        mags = mags / weight_eval(w, grid.points, t)
    if exclude_seam > 0:
        mags = mags[..., exclude_seam:-exclude_seam]
    sups = mags.max(axis=-1)                               # (J, ...)
    j = np.arange(-1, part.j_max + 1)
    scale = 2.0 ** (alpha * j)
    return (scale[(slice(None),) + (None,) * (sups.ndim - 1)] * sups).max(axis=0)


def besov_norm(f: GridField, alpha: float, part: DyadicPartition,
               w: WeightSpec | None = None, t: float = 0.0,
               exclude_seam: int = 0) -> float:
    """max_j 2^(alpha j) sup_x |Delta_j f(x) / z(x)|."""
    return float(besov_norm_values(f.values, f.grid, alpha, part, w, t,
                                   exclude_seam))


def _time_weight_rates(u: TimeField) -> np.ndarray:
    return u.mesh if u.weight.time_coupled else np.zeros_like(u.mesh)


def parabolic_norm(u: TimeField, alpha: float, part: DyadicPartition,
                   max_pairs: int = 512, exclude_seam: int = 0) -> float:
    """Blow-up-weighted parabolic norm: time-Hoelder part + sup of Besov norms.

    The Hoelder part measures t^beta u(t) in the alpha/2 time-Hoelder seminorm
    of the weighted sup norm (weight taken at the later time); the space part
    is sup_t t^beta * besov(u(t)).  Pairwise scans are subsampled above
    ``max_pairs`` mesh points.
    """
    if len(u.mesh) < 1:
        raise ValueError("empty mesh")
    tb = u.mesh ** u.blowup if u.blowup > 0 else np.ones_like(u.mesh)
    space = 0.0
    for i, t in enumerate(u.mesh):
        space = max(space, tb[i] * besov_norm(u.frame(i), alpha, part,
                                              u.weight, t, exclude_seam))
    if len(u.mesh) < 2:
        return space

    idx = np.arange(len(u.mesh))
    if len(idx) > max_pairs:
        idx = np.unique(np.linspace(0, len(u.mesh) - 1, max_pairs).astype(int))
    z = np.stack([weight_eval(u.weight, u.grid.points, t) for t in u.mesh[idx]])
    weighted = tb[idx, None] * u.frames[idx]
    if exclude_seam > 0:
        weighted = weighted[:, exclude_seam:-exclude_seam]
        z = z[:, exclude_seam:-exclude_seam]
    hold = 0.0
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            dt = u.mesh[idx[b]] - u.mesh[idx[a]]
            inc = np.max(np.abs(weighted[b] - weighted[a]) / z[b])
            hold = max(hold, inc / dt ** (alpha / 2.0))
    return space + hold


def holder_equiv_norm(f: GridField, alpha: float, w: WeightSpec | None = None,
                      t: float = 0.0) -> float:
    """Classical weighted Hoelder norm: sup norm + increment seminorm.

    For alpha in (1, 2) the seminorm is applied to the first derivative.
    """
    if not (0.0 < alpha < 2.0) or alpha == 1.0:
        raise ValueError(f"alpha must lie in (0,2) minus 1, got {alpha}")
    grid = f.grid
    z = np.ones(grid.num_points) if w is None else weight_eval(w, grid.points, t)
    base = float(np.max(np.abs(f.values) / z))
    if alpha > 1.0:
        from .spectral import spectral_derivative
        g = spectral_derivative(f).values
        base += float(np.max(np.abs(g) / z))
        frac = alpha - 1.0
    else:
        g = f.values
        frac = alpha
    sem = 0.0
    max_shift = max(1, min(grid.num_points // 2, int(np.ceil(1.0 / grid.spacing))))
    for s in range(1, max_shift + 1):
        h = s * grid.spacing
        if h > 1.0:
            break
        inc = np.max(np.abs(np.roll(g, -s) - g) / z)
        sem = max(sem, inc / h ** frac)
    return base + sem


def write_timefield(u: TimeField, path) -> None:
    """Binary record: {M+1: u64, N: u64, L: f64, blowup: f64, mesh, frames}."""
    import struct
    from pathlib import Path
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQdd", len(u.mesh), u.grid.num_points,
                             u.grid.half_length, u.blowup))
        fh.write(u.mesh.astype("<f8").tobytes())
        inter = np.empty(2 * u.frames.size)
        inter[0::2] = u.frames.real.ravel()
        inter[1::2] = u.frames.imag.ravel()
        fh.write(inter.astype("<f8").tobytes())


def read_timefield(path) -> TimeField:
    import struct
    from pathlib import Path
    from .spectral import Grid
    path = Path(path)
    with open(path, "rb") as fh:
        m1, n, half_length, blowup = struct.unpack("<QQdd", fh.read(32))
        mesh = np.frombuffer(fh.read(8 * m1), dtype="<f8")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * m1 * n:
        raise ValueError(f"corrupt time-field file {path}")
    frames = (raw[0::2] + 1j * raw[1::2]).reshape(int(m1), int(n))
    return TimeField(Grid(int(n), half_length), mesh.copy(), frames,
                     blowup=blowup)


def interpolation_probe(u: TimeField, alpha: float, eps: float,
                        part: DyadicPartition) -> dict:
    """Measure both sides of the blow-up/regularity interpolation bound.

    Checks || u ||_{beta - eps/2, zeta} <= C || u ||_{beta, alpha} for
    zeta slightly below alpha - eps and reports the measured constant.
    """
    if not (0.0 <= eps <= min(alpha, 2.0 * u.blowup) + 1e-15):
        raise ValueError(f"eps={eps} outside [0, min(alpha, 2 beta)]")
    zeta = max(alpha - eps - 0.05, 0.01)
    strong = parabolic_norm(u, alpha, part)
    from dataclasses import replace as _rep
    weak_field = _rep(u, blowup=max(u.blowup - eps / 2.0, 0.0))
    weak = parabolic_norm(weak_field, zeta, part)
    return {
        "alpha": alpha, "eps": eps, "zeta": zeta,
        "strong_norm": strong, "weak_norm": weak,
        "ratio": weak / strong if strong > 0 else 0.0,
    }
