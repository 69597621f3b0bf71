"""Periodic grid, Fourier transforms, dyadic frequency blocks and weights.

Everything downstream is built on a uniform grid over the torus [-L, L),
which stands in for the full real line.  Fields are stored by their complex
point values; Fourier coefficients follow the convention

    f(x_m) = sum_k  fhat_k  exp(i k x_m),        k = pi * j / L,

i.e. ``coeffs = fft(values) / N`` in numpy ordering.  With this convention a
coefficient is the amplitude of a plane wave, which keeps all the multiplier
formulas (derivatives, heat flow, mollifiers) free of grid-size factors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "GridField",
    "DyadicPartition",
    "WeightSpec",
    "make_dyadic_partition",
    "lp_block",
    "lp_blocks",
    "spectral_derivative",
    "weight_eval",
    "weighted_sup_norm",
    "read_field",
    "write_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus [-L, L) with N points.

    Wavenumbers are k_j = pi*j/L for j = -N/2 .. N/2-1 (numpy fft ordering).
    """

    num_points: int
    half_length: float

    def __post_init__(self) -> None:
        n, L = self.num_points, self.half_length
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"num_points must be a power of two >= 8, got {n}")
        if L <= 0:
            raise ValueError(f"half_length must be positive, got {L}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.num_points

    @property
    def points(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.num_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Wavenumbers in fft ordering: pi/L * [0, 1, ..., -N/2, ..., -1]."""
        return 2.0 * np.pi * np.fft.fftfreq(self.num_points, d=self.spacing)

    @property
    def max_wavenumber(self) -> float:
        return np.pi * (self.num_points // 2) / self.half_length

    @property
    def _phase(self) -> np.ndarray:
        # the grid starts at x = -L, so plane-wave amplitudes differ from raw
        # DFT coefficients by e^{ikL} = (-1)^j
        sign = np.ones(self.num_points)
        sign[1::2] = -1.0
        return sign

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        return self._phase * np.fft.fft(values, axis=-1) / self.num_points

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifft(self._phase * coeffs, axis=-1) * self.num_points


class GridField:
    """A complex field on a Grid with lazily synchronized Fourier coefficients."""

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid: Grid, values: np.ndarray | None = None,
                 coeffs: np.ndarray | None = None):
        if values is None and coeffs is None:
            raise ValueError("need values or coeffs")
        self.grid = grid
        for arr in (values, coeffs):
            if arr is not None and arr.shape != (grid.num_points,):
                raise ValueError(f"bad shape {arr.shape} for grid N={grid.num_points}")
        self._values = None if values is None else np.asarray(values, dtype=complex)
        self._coeffs = None if coeffs is None else np.asarray(coeffs, dtype=complex)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self.grid.to_values(self._coeffs)
        return self._values

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = self.grid.to_coeffs(self._values)
        return self._coeffs

    @property
    def real_values(self) -> np.ndarray:
        return self.values.real

    def __add__(self, other: "GridField") -> "GridField":
        return GridField(self.grid, values=self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        return GridField(self.grid, values=self.values - other.values)

    def __mul__(self, c) -> "GridField":
        if isinstance(c, GridField):
            return GridField(self.grid, values=self.values * c.values)
        return GridField(self.grid, values=self.values * c)

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class DyadicPartition:
    """Tabulated dyadic partition of unity on the grid wavenumbers.

    ``rho[j + 1]`` is the window of block j (j = -1 .. j_max), so the array has
    j_max + 2 rows.  The base window is flat (= 1) for |k| <= 3/4 * k0 and
    ramps to zero at 4/3 * k0 with a raised-cosine profile; block j >= 0 is the
    dyadic dilation rho_0(2^{-j} k).  The rows sum to 1 at every wavenumber.
    """

    grid: Grid
    k0: float
    j_max: int
    rho: np.ndarray

    def window(self, j: int) -> np.ndarray:
        if j < -1 or j > self.j_max:
            raise ValueError(f"block index {j} outside [-1, {self.j_max}]")
        return self.rho[j + 1]

    def lowpass(self, i: int) -> np.ndarray:
        """Window of S_i = sum_{j <= i-1} Delta_j (zero for i <= -1)."""
        if i <= -1:
            return np.zeros(self.grid.num_points)
        top = min(i - 1, self.j_max)
        return self.rho[: top + 2].sum(axis=0)


def _flat_top_window(u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """1 for |u| <= lo, raised-cosine ramp to 0 at |u| = hi."""
    a = np.abs(u)
    out = np.zeros_like(a)
    out[a <= lo] = 1.0
    ramp = (a > lo) & (a < hi)
    s = (a[ramp] - lo) / (hi - lo)
    out[ramp] = np.cos(0.5 * np.pi * s) ** 2
    return out


def make_dyadic_partition(grid: Grid, k0: float = 1.0) -> DyadicPartition:
    """Build the dyadic partition of unity on the grid spectrum.

    Block -1 owns |k| <= 4/3*k0; block j >= 0 lives on the annulus
    3/4*2^j*k0 <= |k| <= 8/3*2^j*k0.
    """
    if k0 <= 0 or k0 > grid.max_wavenumber / 4:
        raise ValueError(f"k0={k0} must lie in (0, {grid.max_wavenumber / 4}]")
    kmax = grid.max_wavenumber
    # smallest J with the cumulative window flat across the whole spectrum
    j_max = int(np.ceil(np.log2(kmax / (0.75 * k0)))) - 1
    if j_max < 2:
        raise ValueError(
            f"grid too coarse for dyadic analysis: j_max={j_max} < 2 "
            f"(kmax={kmax}, k0={k0})")
    k = grid.wavenumbers

    def chi(scale: float) -> np.ndarray:
        return _flat_top_window(k / scale, 0.75 * k0, 4.0 / 3.0 * k0)

    rows = [chi(1.0)]
    for j in range(j_max + 1):
        rows.append(chi(2.0 ** (j + 1)) - chi(2.0 ** j))
    rho = np.array(rows)
    total = rho.sum(axis=0)
    if np.max(np.abs(total - 1.0)) > 1e-12:
        raise AssertionError("partition of unity failed to telescope")
    return DyadicPartition(grid=grid, k0=k0, j_max=j_max, rho=rho)


def lp_block(f: GridField, j: int, part: DyadicPartition) -> GridField:
    """Frequency block Delta_j f."""
    return GridField(f.grid, coeffs=part.window(j) * f.coeffs)


def lp_blocks(coeffs: np.ndarray, part: DyadicPartition) -> np.ndarray:
    """All blocks of (possibly vectorized) coefficient rows.

    Returns an array of shape (j_max + 2,) + coeffs.shape of point values.
    """
    windows = part.rho  # (J, N)
    stacked = windows[(slice(None),) + (None,) * (coeffs.ndim - 1)] * coeffs[None]
    return part.grid.to_values(stacked)


def spectral_derivative(f: GridField, order: int = 1) -> GridField:
    """Exact spectral derivative; the Nyquist mode is zeroed for odd orders."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return GridField(f.grid, coeffs=derivative_multiplier(f.grid, order) * f.coeffs)


def derivative_multiplier(grid: Grid, order: int = 1) -> np.ndarray:
    mult = (1j * grid.wavenumbers) ** order
    if order % 2 == 1:
        mult[grid.num_points // 2] = 0.0
    return mult


@dataclass(frozen=True)
class WeightSpec:
    """Growth envelope for norms on the (approximated) real line.

    kind 'poly' is (1+|x|)^a; kind 'subexp' is exp((l+t)|x|^delta), where the
    time coupling is active only when ``time_coupled`` is set.
    """

    kind: str = "poly"
    a: float = 0.0
    l: float = 0.0
    delta: float = 0.9
    time_coupled: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("poly", "subexp"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0,1), got {self.delta}")


def weight_eval(w: WeightSpec, x: np.ndarray | float, t: float = 0.0) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    ax = np.abs(np.asarray(x, dtype=float))
    if w.kind == "poly":
        return (1.0 + ax) ** w.a
    rate = w.l + (t if w.time_coupled else 0.0)
    return np.exp(rate * ax ** w.delta)


def weighted_sup_norm(f: GridField, w: WeightSpec, t: float = 0.0,
                      exclude_seam: int = 0) -> float:
    """sup over grid points of |f(x)| / z(x), optionally skipping seam cells."""
    z = weight_eval(w, f.grid.points, t)
    ratio = np.abs(f.values) / z
    if exclude_seam > 0:
        ratio = ratio[exclude_seam:-exclude_seam] if exclude_seam < len(ratio) // 2 \
            else ratio
    return float(np.max(ratio))


# ---------------------------------------------------------------------------
# serialization: little-endian binary record {N: u64, L: f64, values} + JSON
# ---------------------------------------------------------------------------

def write_field(f: GridField, path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    vals = f.values
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Qd", f.grid.num_points, f.grid.half_length))
        interleaved = np.empty(2 * len(vals))
        interleaved[0::2] = vals.real
        interleaved[1::2] = vals.imag
        fh.write(interleaved.astype("<f8").tobytes())
    sidecar = {"format": "parakpz-gridfield", "version": 1}
    sidecar.update(meta or {})
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def read_field(path: str | Path) -> tuple[GridField, dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        n, L = struct.unpack("<Qd", fh.read(16))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if len(raw) != 2 * n:
        raise ValueError(f"corrupt field file {path}: want {2 * n} doubles, got {len(raw)}")
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return GridField(Grid(int(n), L), values=raw[0::2] + 1j * raw[1::2]), meta
