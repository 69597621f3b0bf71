"""Space-time white noise, mollification, renormalized enhanced data.

Normalization.  Noise increments are stored as point values
``dW = sqrt(dt/dx) * N(0,1)`` per cell, so each Fourier coefficient increment
has variance ``sigma2 = dt / (2L)`` and the spatial integral of one increment
has variance ``dt * 2L`` — the discrete counterpart of
E[xi(t,x) xi(s,y)] = delta(t-s) delta(x-y).

Integration scheme.  The linear tree integrates
``Yhat(m+1) = E_k Yhat(m) + dWhat_k(m)`` with ``E_k = exp(-k^2 dt / 2)``;
forced trees use the exact-per-mode exponential rule with linear-in-time
forcing, coefficients ``a_k = dt (phi1 - phi2)(z)``, ``b_k = dt phi2(z)``,
``z = k^2 dt / 2``.  Renormalization constants are evaluated in closed form
for this exact discrete scheme (no Monte Carlo), assuming the stationary
start where each mode of the linear tree carries its invariant variance
``v_k = sigma2 / (1 - E_k^2)`` (mollified).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .heat import phi1, phi2
from .paraproducts import resonant_values
from .spaces import TimeField, parabolic_norm, read_timefield, write_timefield
from .spectral import (
    DyadicPartition,
    Grid,
    GridField,
    WeightSpec,
    _flat_top_window,
    derivative_multiplier,
    make_dyadic_partition,
)

__all__ = [
    "NoisePath",
    "EnhancedData",
    "TREE_NAMES",
    "sample_noise",
    "mollify",
    "mollifier_multiplier",
    "sample_initial",
    "stationary_initial",
    "mode_variances",
    "renorm_constants",
    "build_trees",
    "zero_enhanced",
    "asymmetric_resonant",
    "rescale_translate",
    "ydist",
    "save_enhanced",
    "load_enhanced",
]

TREE_NAMES = ("base", "quad", "cubic", "quart_res", "quart_sq", "ctrl",
              "slope", "mixed_res")


# ---------------------------------------------------------------------------
# noise sampling and mollification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoisePath:
    """White-noise increments on a grid x uniform time mesh."""

    grid: Grid
    mesh: np.ndarray         # (M+1,)
    increments: np.ndarray   # (M, N) real point values
    seed: int
    level: float = np.inf    # mollification level; inf = unmollified

    @property
    def dt(self) -> float:
        return float(self.mesh[1] - self.mesh[0])


def sample_noise(grid: Grid, horizon: float, dt: float, seed: int,
                 stream: int = 0) -> NoisePath:
    if dt <= 0 or horizon <= 0:
        raise ValueError("horizon and dt must be positive")
    m = int(round(horizon / dt))
    rng = np.random.default_rng([seed, stream])
    scale = np.sqrt(dt / grid.spacing)
    incr = scale * rng.standard_normal((m, grid.num_points))
    return NoisePath(grid=grid, mesh=dt * np.arange(m + 1), increments=incr,
                     seed=seed)


def mollifier_multiplier(grid: Grid, n: float) -> np.ndarray:
    """phi(k/n): 1 for |k| <= n/2, raised-cosine ramp to 0 at |k| = n."""
    if n <= 0:
        raise ValueError("mollification level must be positive")
    return _flat_top_window(grid.wavenumbers / n, 0.5, 1.0)


def mollify(xi: NoisePath, n: float) -> NoisePath:
    grid = xi.grid
    mult = mollifier_multiplier(grid, n)
    coeffs = grid.to_coeffs(xi.increments)
    smoothed = grid.to_values(mult[None] * coeffs).real
    return replace(xi, increments=smoothed, level=float(n))


def sample_initial(grid: Grid, drift: float, seed: int,
                   stream: int = 1) -> GridField:
    """Two-sided Brownian motion pinned at x = 0 plus the linear profile.

    The linear part drift*x is the exact profile on [-L, L) with its jump at
    the torus seam; weighted-norm scans exclude the seam cells.
    """
    rng = np.random.default_rng([seed, stream])
    steps = np.sqrt(grid.spacing) * rng.standard_normal(grid.num_points)
    b = np.concatenate([[0.0], np.cumsum(steps[:-1])])
    b -= b[grid.num_points // 2]  # pin B(0) = 0
    return GridField(grid, values=(b + drift * grid.points).astype(complex))


def mode_variances(grid: Grid, dt: float, n: float) -> np.ndarray:
    """Invariant per-mode variance of the mollified linear tree.

    v_k = phi(k/n)^2 sigma2 / (1 - E_k^2) with sigma2 = dt/(2L); the zero mode
    (a random walk, no invariant law) is assigned variance 0.
    """
    k = grid.wavenumbers
    e2 = np.exp(-k ** 2 * dt)
    phi = mollifier_multiplier(grid, n)
    sigma2 = dt / (2.0 * grid.half_length)
    v = np.zeros(grid.num_points)
    nz = k != 0
    v[nz] = phi[nz] ** 2 * sigma2 / (1.0 - e2[nz])
    return v


def stationary_initial(grid: Grid, dt: float, n: float, seed: int,
                       stream: int = 2) -> GridField:
    """Sample the linear tree's exact invariant law for the discrete scheme."""
    rng = np.random.default_rng([seed, stream])
    v = mode_variances(grid, dt, n)
    nn = grid.num_points
    half = nn // 2
    coeffs = np.zeros(nn, dtype=complex)
    # conjugate-symmetric Gaussian coefficients for a real field
    re = rng.standard_normal(half - 1)
    im = rng.standard_normal(half - 1)
    coeffs[1:half] = np.sqrt(v[1:half] / 2.0) * (re + 1j * im)
    coeffs[half + 1:] = np.conj(coeffs[1:half][::-1])
    coeffs[half] = np.sqrt(v[half]) * rng.standard_normal()
    return GridField(grid, coeffs=coeffs)


# ---------------------------------------------------------------------------
# renormalization constants (closed form for the discrete scheme)
# ---------------------------------------------------------------------------

def renorm_constants(n: float, grid: Grid, dt: float,
                     num_steps: int | None = None) -> tuple[float, float]:
    """Stationary renormalization constants of the discrete scheme.

    c_lr = E[(d_x Y^n)^2] / 2 (time-independent at stationarity); the
    second constant is E[(d_x quad-tree)^2] / 2 evaluated at step
    ``num_steps`` (default 256) through the exact second-moment recursion of
    the integrator — it converges geometrically in the step count.
    """
    v = mode_variances(grid, dt, n)
    k = grid.wavenumbers
    c_lr = 0.5 * float(np.sum(k ** 2 * v))
    c_dbl = _second_constant(grid, dt, v, 256 if num_steps is None else num_steps)
    return c_lr, c_dbl


def _second_constant(grid: Grid, dt: float, v: np.ndarray, m_steps: int) -> float:
    """Exact E[(d_x quad)^2]/2 at step m for the stationary-start scheme.

    Per output mode k the quad tree obeys
    qhat(m+1) = E_k qhat(m) + a_k fhat(m) + b_k fhat(m+1), with second-chaos
    forcing fhat = (1/2) sum_p Xhat_p Xhat_{k-p}.  Wick pairing gives the
    recursion below for V_k(m) = E|qhat_k(m)|^2 and the cross moments
    A_{k,p}(m) = E[qhat_k(m) conj(Xhat_p Xhat_{k-p})(m)].
    """
    nn = grid.num_points
    k = grid.wavenumbers
    vx = k ** 2 * v                                   # slope mode variances
    e = np.exp(-0.5 * k ** 2 * dt)
    z = 0.5 * k ** 2 * dt
    a = dt * (phi1(z) - phi2(z))
    b = dt * phi2(z)

    # pair quantities on the (k, p) ring: q = (k - p) mod N in index space
    idx = np.arange(nn)
    pair = (idx[:, None] - idx[None, :]) % nn         # index of k - p
    vv = vx[None, :] * vx[pair]                       # v^X_p v^X_{k-p}
    rho = e[None, :] * e[pair]                        # one-step pair decay

    f0 = 0.5 * vv.sum(axis=1)                         # E|f_k|^2
    f1 = 0.5 * (vv * rho).sum(axis=1)                 # E[f_k(m) conj(f_k(m+1))]

    ek = e
    big_a = np.zeros((nn, nn))
    big_v = np.zeros(nn)
    drive = (a[:, None] * rho + b[:, None]) * vv
    for _ in range(m_steps):
        s0 = big_a.sum(axis=1)
        s1 = (big_a * rho).sum(axis=1)
        big_v = (ek ** 2 * big_v + (a ** 2 + b ** 2) * f0 + 2 * a * b * f1
                 + ek * a * s0 + ek * b * s1)
        big_a = ek[:, None] * rho * big_a + drive
    big_v[0] = 0.0  # zero mode excluded (random-walk mode, no invariant law)
    return 0.5 * float(np.sum(k ** 2 * big_v))


# ---------------------------------------------------------------------------
# enhanced data
# ---------------------------------------------------------------------------

@dataclass
class EnhancedData:
    """The renormalized tree family driven by one mollified noise sample.

    Trees: base (the linear tree Y), quad (forced by (d_x base)^2/2 - c_lr),
    cubic (slope * d_x quad), quart_res (resonant(d_x cubic, slope) + c_dbl),
    quart_sq ((d_x quad)^2/2 - c_dbl), ctrl (forced by slope, the controller),
    slope = d_x base, and the stored resonant product
    mixed_res = resonant(d_x ctrl, slope).
    """

    level: float
    grid: Grid
    mesh: np.ndarray
    dt: float
    seed: int
    base: TimeField
    quad: TimeField
    cubic: TimeField
    quart_res: TimeField
    quart_sq: TimeField
    ctrl: TimeField
    slope: TimeField
    mixed_res: TimeField
    c_lr: float
    c_dbl: float
    drift: float = 0.0
    init_kind: str = "brownian"
    params: dict | None = None

    def tree(self, name: str) -> TimeField:
        if name not in TREE_NAMES:
            raise KeyError(name)
        return getattr(self, name)


def _integrate_noise(grid: Grid, dt: float, incr_coeffs: np.ndarray,
                     y0_coeffs: np.ndarray) -> np.ndarray:
    decay = np.exp(-0.5 * grid.wavenumbers ** 2 * dt)
    m = incr_coeffs.shape[0]
    out = np.empty((m + 1, grid.num_points), dtype=complex)
    out[0] = y0_coeffs
    for i in range(m):
        out[i + 1] = decay * out[i] + incr_coeffs[i]
    return out


def _integrate_forced(grid: Grid, dt: float, forcing_coeffs: np.ndarray) -> np.ndarray:
    """Exponential rule with linear-in-time forcing, zero initial condition."""
    z = 0.5 * grid.wavenumbers ** 2 * dt
    decay = np.exp(-z)
    a = dt * (phi1(z) - phi2(z))
    b = dt * phi2(z)
    m = forcing_coeffs.shape[0] - 1
    out = np.zeros_like(forcing_coeffs)
    for i in range(m):
        out[i + 1] = decay * out[i] + a * forcing_coeffs[i] + b * forcing_coeffs[i + 1]
    return out


def _dx(grid: Grid, frames: np.ndarray) -> np.ndarray:
    mult = derivative_multiplier(grid)
    return grid.to_values(mult[None] * grid.to_coeffs(frames))


def _guard(name: str, frames: np.ndarray) -> None:
    if not np.all(np.isfinite(frames)):
        raise FloatingPointError(f"tree '{name}' overflowed or produced NaN")


def build_trees(xi: NoisePath, y0: GridField, c_lr: float, c_dbl: float,
                part: DyadicPartition | None = None, seed: int | None = None,
                drift: float = 0.0, init_kind: str = "brownian",
                params: dict | None = None) -> EnhancedData:
    """Integrate the full tree family from one (mollified) noise path."""
    grid = xi.grid
    if y0.grid != grid:
        raise ValueError("initial condition grid mismatch")
    if part is None:
        part = make_dyadic_partition(grid)
    dt = xi.dt
    mesh = xi.mesh

    incr_coeffs = grid.to_coeffs(xi.increments)
    base_c = _integrate_noise(grid, dt, incr_coeffs, y0.coeffs)
    base = grid.to_values(base_c)
    _guard("base", base)
    slope = _dx(grid, base)

    quad_f = 0.5 * slope ** 2 - c_lr
    quad = grid.to_values(_integrate_forced(grid, dt, grid.to_coeffs(quad_f)))
    _guard("quad", quad)
    x_quad = _dx(grid, quad)

    cubic_f = slope * x_quad
    cubic = grid.to_values(_integrate_forced(grid, dt, grid.to_coeffs(cubic_f)))
    _guard("cubic", cubic)
    x_cubic = _dx(grid, cubic)

    qr_f = resonant_values(grid.to_coeffs(x_cubic), grid.to_coeffs(slope),
                           part) + c_dbl
    quart_res = grid.to_values(_integrate_forced(grid, dt, grid.to_coeffs(qr_f)))
    _guard("quart_res", quart_res)

    qs_f = 0.5 * x_quad ** 2 - c_dbl
    quart_sq = grid.to_values(_integrate_forced(grid, dt, grid.to_coeffs(qs_f)))
    _guard("quart_sq", quart_sq)

    ctrl = grid.to_values(_integrate_forced(grid, dt, grid.to_coeffs(slope)))
    _guard("ctrl", ctrl)
    x_ctrl = _dx(grid, ctrl)
    mixed = resonant_values(grid.to_coeffs(x_ctrl), grid.to_coeffs(slope), part)

    def tf(frames):
        return TimeField(grid, mesh, frames)

    return EnhancedData(
        level=xi.level, grid=grid, mesh=mesh, dt=dt,
        seed=xi.seed if seed is None else seed,
        base=tf(base), quad=tf(quad), cubic=tf(cubic),
        quart_res=tf(quart_res), quart_sq=tf(quart_sq), ctrl=tf(ctrl),
        slope=tf(slope), mixed_res=tf(mixed),
        c_lr=c_lr, c_dbl=c_dbl, drift=drift, init_kind=init_kind,
        params=params)


def zero_enhanced(grid: Grid, mesh: np.ndarray) -> EnhancedData:
    """The trivial tree family (all trees zero, constants zero)."""
    mesh = np.asarray(mesh, dtype=float)
    frames = np.zeros((len(mesh), grid.num_points), dtype=complex)
    zero = TimeField(grid, mesh, frames)
    dt = float(mesh[1] - mesh[0]) if len(mesh) > 1 else 1.0
    return EnhancedData(
        level=np.inf, grid=grid, mesh=mesh, dt=dt, seed=0,
        base=zero, quad=zero.like(frames), cubic=zero.like(frames),
        quart_res=zero.like(frames), quart_sq=zero.like(frames),
        ctrl=zero.like(frames), slope=zero.like(frames),
        mixed_res=zero.like(frames), c_lr=0.0, c_dbl=0.0,
        init_kind="zero")


def asymmetric_resonant(ctrl: TimeField, slope: TimeField,
                        part: DyadicPartition) -> TimeField:
    """resonant(d_x ctrl, slope) with the factors at different mollification
    levels; no renormalization constant (the zeroth chaos vanishes)."""
    ctrl.check_mesh(slope)
    grid = ctrl.grid
    x_ctrl = _dx(grid, ctrl.frames)
    out = resonant_values(grid.to_coeffs(x_ctrl),
                          grid.to_coeffs(slope.frames), part)
    return slope.like(out)


# ---------------------------------------------------------------------------
# rescale / translate
# ---------------------------------------------------------------------------

def _spatial_compress(grid: Grid, frames: np.ndarray, j: int) -> np.ndarray:
    """Values of f(x/2^j ...) — evaluate f at the points lam*x_m (lam = 2^-j)
    by zero-padded trigonometric interpolation."""
    if j == 0:
        return frames.copy()
    factor = 2 ** j
    nn = grid.num_points
    coeffs = grid.to_coeffs(frames)
    fine = Grid(nn * factor, grid.half_length)
    padded = np.zeros(frames.shape[:-1] + (nn * factor,), dtype=complex)
    half = nn // 2
    padded[..., :half] = coeffs[..., :half]
    padded[..., -half:] = coeffs[..., -half:]
    fine_vals = fine.to_values(padded)
    offset = (factor - 1) * half
    take = offset + np.arange(nn)
    return fine_vals[..., take]


def rescale_translate(data: EnhancedData, tau: float, lam: float,
                      part: DyadicPartition | None = None) -> EnhancedData:
    """Parabolic rescaling: new field (t, x) -> old field (tau + lam^2 t, lam x).

    The three lowest trees compose directly; the controller and the two
    quartic trees are re-solved from the rescaled data with zero initial
    conditions, matching the shifted-data convention.  lam must be a dyadic
    fraction 2^-j; constants pick up lam^2 and lam^4.
    """
    j = int(round(-np.log2(lam)))
    if not (0 < lam <= 1.0) or abs(lam - 2.0 ** (-j)) > 1e-12:
        raise ValueError(f"lam={lam} must be a dyadic fraction 2^-j in (0, 1]")
    horizon = data.mesh[-1]
    if not (0.0 <= tau < horizon):
        raise ValueError(f"tau={tau} outside [0, {horizon})")
    m0 = int(round(tau / data.dt))
    if abs(m0 * data.dt - tau) > 1e-9 * max(data.dt, 1.0):
        raise ValueError("tau must sit on the time mesh")
    grid = data.grid
    if part is None:
        part = make_dyadic_partition(grid)

    new_dt = data.dt / lam ** 2
    sub = slice(m0, len(data.mesh))
    new_mesh = (data.mesh[sub] - tau) / lam ** 2

    def compose(tf: TimeField) -> np.ndarray:
        return _spatial_compress(grid, tf.frames[sub], j)

    base = compose(data.base)
    quad = compose(data.quad)   # trees compose without any prefactor
    cubic = compose(data.cubic)
    slope = _dx(grid, base)

    def tf(frames):
        return TimeField(grid, new_mesh - new_mesh[0], frames)

    c_lr = lam ** 2 * data.c_lr
    c_dbl = lam ** 4 * data.c_dbl

    x_quad = _dx(grid, quad)
    x_cubic = _dx(grid, cubic)
    qr_f = resonant_values(grid.to_coeffs(x_cubic), grid.to_coeffs(slope),
                           part) + c_dbl
    quart_res = grid.to_values(_integrate_forced(grid, new_dt,
                                                 grid.to_coeffs(qr_f)))
    qs_f = 0.5 * x_quad ** 2 - c_dbl
    quart_sq = grid.to_values(_integrate_forced(grid, new_dt,
                                                grid.to_coeffs(qs_f)))
    ctrl = grid.to_values(_integrate_forced(grid, new_dt, grid.to_coeffs(slope)))
    x_ctrl = _dx(grid, ctrl)
    mixed = resonant_values(grid.to_coeffs(x_ctrl), grid.to_coeffs(slope), part)

    return EnhancedData(
        level=data.level / lam, grid=grid, mesh=new_mesh - new_mesh[0],
        dt=new_dt, seed=data.seed,
        base=tf(base), quad=tf(quad), cubic=tf(cubic),
        quart_res=tf(quart_res), quart_sq=tf(quart_sq), ctrl=tf(ctrl),
        slope=tf(slope), mixed_res=tf(mixed),
        c_lr=c_lr, c_dbl=c_dbl, drift=data.drift * lam,
        init_kind=data.init_kind, params=data.params)


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def ydist(y1: EnhancedData, y2: EnhancedData, alpha: float = 0.45,
          a: float = 0.03, part: DyadicPartition | None = None,
          exclude_seam: int = 2) -> float:
    """Product-space distance: max over components of the norm of differences.

    Component regularities: base alpha (weight p(1+a)); quad 2*alpha; cubic
    and ctrl alpha+1; the quartic trees 2*alpha+1; slope alpha-1 and
    mixed_res 2*alpha-1 in the plain sup-in-time Besov norm; all with weight
    p(a) unless noted.
    """
    if y1.grid != y2.grid or len(y1.mesh) != len(y2.mesh) or \
            np.max(np.abs(y1.mesh - y2.mesh)) > 1e-10:
        raise ValueError("enhanced data live on different meshes")
    if part is None:
        part = make_dyadic_partition(y1.grid)
    wa = WeightSpec(kind="poly", a=a)
    w1a = WeightSpec(kind="poly", a=1.0 + a)
    spec = [
        ("base", alpha, w1a, True),
        ("quad", 2 * alpha, wa, True),
        ("cubic", alpha + 1, wa, True),
        ("quart_res", 2 * alpha + 1, wa, True),
        ("quart_sq", 2 * alpha + 1, wa, True),
        ("ctrl", alpha + 1, wa, True),
        ("slope", alpha - 1, wa, False),
        ("mixed_res", 2 * alpha - 1, wa, False),
    ]
    worst = 0.0
    for name, reg, w, parabolic in spec:
        d = y1.tree(name) - y2.tree(name)
        d.weight = w
        if parabolic:
            val = parabolic_norm(d, reg, part, exclude_seam=exclude_seam)
        else:
            from .spaces import besov_norm_values
            vals = besov_norm_values(d.frames, d.grid, reg, part, w,
                                     exclude_seam=exclude_seam)
            val = float(np.max(vals))
        worst = max(worst, val)
    return worst


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_enhanced(data: EnhancedData, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in TREE_NAMES:
        write_timefield(data.tree(name), directory / f"{name}.tf")
    params = dict(data.params or {})
    manifest = {
        "n": data.level if np.isfinite(data.level) else "inf",
        "seed": data.seed,
        "grid": {"num_points": data.grid.num_points,
                 "half_length": data.grid.half_length},
        "dt": data.dt,
        "c_lr": data.c_lr,
        "c_dbl": data.c_dbl,
        "delta": params.get("delta", 0.9),
        "alpha": params.get("alpha", 0.45),
        "a": params.get("a", 0.03),
        "drift": data.drift,
        "init_kind": data.init_kind,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_enhanced(directory) -> EnhancedData:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    trees = {name: read_timefield(directory / f"{name}.tf")
             for name in TREE_NAMES}
    grid = trees["base"].grid
    mesh = trees["base"].mesh
    level = manifest["n"]
    return EnhancedData(
        level=np.inf if level == "inf" else float(level),
        grid=grid, mesh=mesh,
        dt=float(manifest["dt"]), seed=int(manifest["seed"]),
        c_lr=float(manifest["c_lr"]), c_dbl=float(manifest["c_dbl"]),
        drift=float(manifest.get("drift", 0.0)),
        init_kind=manifest.get("init_kind", "brownian"),
        params={k: manifest[k] for k in ("delta", "alpha", "a")},
        **trees)
