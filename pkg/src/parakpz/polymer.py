"""Directed-polymer measure built on the multiplicative heat propagator.

Transition kernels come from terminal-value solves of the factored heat
equation (one solve per terminal point, Gaussian-regularized delta of width
sigma0 = 2 * kernel spacing); they are conjugated into probability kernels by
the time-reversed height field.  The module also provides path sampling,
exponential-moment diagnostics, the drift-transformed SDE sampler, the
explicit density between the two path measures, the free-energy identity, and
the stochastic-control gap report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equations import _dx, solve_rhe, truncate_data
from .kpz import KPZResult
from .noise import EnhancedData, rescale_translate
from .spaces import TimeField
from .spectral import Grid, GridField

__all__ = [
    "KernelRejectedError",
    "TransitionKernel",
    "PolymerPath",
    "transition_kernel",
    "compose_kernels",
    "sample_polymer",
    "exp_moment_estimate",
    "girsanov_sde_sample",
    "radon_nikodym_weight",
    "free_energy_check",
    "variational_gap",
]


class KernelRejectedError(ValueError):
    """Kernel normalization residual above tolerance (resolution too coarse)."""


@dataclass
class TransitionKernel:
    """Normalized polymer transition density between two times.

    ``matrix[i, j]`` approximates the probability density of moving from
    ``points[i]`` at time ``s`` to ``points[j]`` at time ``t``; row sums times
    ``spacing`` equal one.  ``raw`` keeps the unconjugated propagator columns
    so kernels can be composed without double-counting the terminal
    regularization.
    """

    grid: Grid
    s: float
    t: float
    points: np.ndarray
    spacing: float
    stride: int
    sigma0: float
    matrix: np.ndarray
    raw: np.ndarray
    left_norm: np.ndarray      # discrete normalizer at time s (on points)
    right_weights: np.ndarray  # deconvolved conjugation samples at time t
    residual: float            # consistency gap against the supplied height

    def __post_init__(self) -> None:
        rows = self.matrix.sum(axis=1) * self.spacing
        if np.max(np.abs(rows - 1.0)) > 1e-6:
            raise ValueError("kernel rows are not normalized")
        if self.matrix.min() < -1e-8:
            raise ValueError("kernel has entries below the undershoot floor")


@dataclass
class PolymerPath:
    """One sampled polymer trajectory on the kernel time grid."""

    times: np.ndarray
    positions: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("polymer path has non-finite positions")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _mesh_index(mesh: np.ndarray, t: float, what: str) -> int:
    dt = mesh[1] - mesh[0]
    i = int(round(t / dt))
    if not (0 <= i < len(mesh)) or abs(mesh[i] - t) > 1e-9 * max(t, dt):
        raise ValueError(f"{what}={t} is not on the time mesh")
    return i


def _window_data(data: EnhancedData, s: float, t: float) -> EnhancedData:
    """Propagation data for the reversed-time window [s, t].

    Integrating a terminal profile at polymer time t down to time s is the
    forward solve over original times [T - t, T - s]."""
    big_t = float(data.mesh[-1])
    shifted = rescale_translate(data, big_t - t, 1.0)
    return truncate_data(shifted, t - s)


def _gauss_filter(grid: Grid, stride: int, sigma: float) -> np.ndarray:
    k = grid.wavenumbers
    filt = np.exp(-0.5 * (sigma * k) ** 2)
    if stride > 1:
        # band-limit to the Nyquist wavenumber of the strided point set
        kc = grid.max_wavenumber / stride
        filt = filt * (np.abs(k) <= kc)
    return filt


def _delta_columns(grid: Grid, y: np.ndarray, filt: np.ndarray) -> np.ndarray:
    # unit-mass regularized deltas: coefficients e^{-iky} filt(k) / (2L)
    k = grid.wavenumbers
    coeffs = np.exp(-1j * np.outer(y, k)) * filt[None, :] \
        / (2 * grid.half_length)
    return grid.to_values(coeffs)


def transition_kernel(data: EnhancedData, h: TimeField, s: float, t: float,
                      stride: int = 1, sigma0: float | None = None,
                      reject_tol: float = 1e-4,
                      tol: float = 1e-8) -> TransitionKernel:
    """Polymer transition kernel between times s < t.

    Each column is a terminal-value (backward) solve of the factored heat
    equation from a regularized delta; the left/right conjugation fields come
    from the supplied height solution evaluated in reversed time.  The
    reported residual compares the internally propagated normalizer against
    the supplied height; above ``reject_tol`` the kernel is rejected.
    """
    grid, mesh = data.grid, data.mesh
    if not (0.0 <= s < t <= mesh[-1] + 1e-12):
        raise ValueError(f"need 0 <= s < t <= T, got s={s}, t={t}")
    i_s = _mesh_index(mesh, s, "s")
    i_t = _mesh_index(mesh, t, "t")
    m_total = len(mesh) - 1

    spacing = grid.spacing * stride
    if sigma0 is None:
        sigma0 = 2.0 * spacing
    pts = grid.points[::stride]
    filt = _gauss_filter(grid, stride, sigma0)

    window = _window_data(data, s, t)
    # the full multiplicative propagator factors through the solver as
    # e^{G} S e^{-G} with G the sum of the three explicit trees
    g_all = np.real(data.base.frames + data.quad.frames + data.cubic.frames)
    exp_g_bot = np.exp(-g_all[m_total - i_t])
    exp_g_top = np.exp(g_all[m_total - i_s])
    v0 = _delta_columns(grid, pts, filt) * exp_g_bot[None, :]
    raw = np.empty((len(pts), len(pts)))
    for j in range(len(pts)):
        pf, _ = solve_rhe(window, GridField(grid, values=v0[j]), tol=tol)
        raw[:, j] = (exp_g_top * np.real(pf.u.frames[-1]))[::stride]

    # conjugation: reversed-time height at the two endpoints
    e_t = np.exp(np.real(h.frames[m_total - i_t]))
    e_s = np.exp(np.real(h.frames[m_total - i_s]))
    pf_norm, _ = solve_rhe(
        window, GridField(grid, values=(e_t * exp_g_bot).astype(complex)),
        tol=tol)
    left_norm = (exp_g_top * np.real(pf_norm.u.frames[-1]))[::stride]

    # deconvolve the terminal regularization from the right conjugation so
    # that the quadrature over columns reproduces the normalizer exactly
    with np.errstate(over="ignore"):
        inv = np.where(filt > 0, 1.0 / np.where(filt > 0, filt, 1.0), 0.0)
    v_coeffs = grid.to_coeffs(e_t.astype(complex)) * inv
    right_weights = np.real(grid.to_values(v_coeffs))[::stride]

    residual = float(np.max(np.abs(left_norm / e_s[::stride] - 1.0)))
    if residual > reject_tol:
        raise KernelRejectedError(
            f"kernel ({s}, {t}) rejected: normalization residual "
            f"{residual:.3e} > {reject_tol:.1e} (resolution too coarse)")

    matrix = raw * right_weights[None, :] / left_norm[:, None]
    return TransitionKernel(grid=grid, s=s, t=t, points=pts, spacing=spacing,
                            stride=stride, sigma0=sigma0, matrix=matrix,
                            raw=raw, left_norm=left_norm,
                            right_weights=right_weights, residual=residual)


def compose_kernels(k1: TransitionKernel, k2: TransitionKernel
                    ) -> TransitionKernel:
    """Contraction of two kernels over the intermediate time.

    The interior terminal regularization is removed spectrally before the
    quadrature, so composition reproduces the one-shot kernel up to solver
    tolerance."""
    if abs(k1.t - k2.s) > 1e-12:
        raise ValueError("kernels are not time-adjacent")
    if k1.stride != k2.stride or k1.grid is not k2.grid:
        raise ValueError("kernels live on different grids")
    grid, stride = k1.grid, k1.stride
    filt = _gauss_filter(grid, stride, k1.sigma0)
    inv = np.where(filt > 0, 1.0 / np.where(filt > 0, filt, 1.0), 0.0)
    if stride > 1:
        raise NotImplementedError("composition requires stride 1")
    # deconvolve each column of k2 in its starting-point variable
    decon = np.real(grid.to_values(
        (grid.to_coeffs(k2.raw.T.astype(complex)) * inv[None, :])).T)
    raw = k1.raw @ decon * k1.spacing
    left = k1.raw @ (np.real(grid.to_values(
        grid.to_coeffs(k2.left_norm.astype(complex)) * inv))) * k1.spacing
    matrix = raw * k2.right_weights[None, :] / left[:, None]
    return TransitionKernel(grid=grid, s=k1.s, t=k2.t, points=k1.points,
                            spacing=k1.spacing, stride=stride,
                            sigma0=k1.sigma0, matrix=matrix, raw=raw,
                            left_norm=left, right_weights=k2.right_weights,
                            residual=max(k1.residual, k2.residual))


# ---------------------------------------------------------------------------
# path sampling and moments
# ---------------------------------------------------------------------------

def sample_polymer(kernels: list[TransitionKernel], x0: float, n_paths: int,
                   seed: int) -> list[PolymerPath]:
    """Sample paths through a time-consistent kernel chain from x0."""
    if not kernels:
        raise ValueError("empty kernel chain")
    if abs(kernels[0].s) > 1e-12:
        raise ValueError("kernel chain must start at time 0")
    for a, b in zip(kernels, kernels[1:]):
        if abs(a.t - b.s) > 1e-12:
            raise ValueError("kernel chain has a time gap")
    pts = kernels[0].points
    rng = np.random.default_rng(seed)
    idx = np.full(n_paths, int(np.argmin(np.abs(pts - x0))))
    times = [kernels[0].s]
    trace = [pts[idx].copy()]
    for ker in kernels:
        probs = np.clip(ker.matrix[idx], 0.0, None) * ker.spacing
        probs /= probs.sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        u = rng.random((n_paths, 1))
        idx = (u > cum).sum(axis=1)
        times.append(ker.t)
        trace.append(ker.points[idx].copy())
    times = np.asarray(times)
    pos = np.stack(trace, axis=1)
    return [PolymerPath(times=times, positions=pos[p], seed=seed)
            for p in range(n_paths)]


def _positions_matrix(paths: list[PolymerPath]) -> tuple[np.ndarray,
                                                         np.ndarray]:
    times = paths[0].times
    return times, np.stack([p.positions for p in paths])


def exp_moment_estimate(paths: list[PolymerPath], l: float,
                        delta: float = 0.9) -> float:
    """Monte Carlo sup over sampled times of E[exp(l |gamma_t|^delta)]."""
    _, pos = _positions_matrix(paths)
    return float(np.max(np.mean(np.exp(l * np.abs(pos) ** delta), axis=0)))


# ---------------------------------------------------------------------------
# drift-transformed SDE
# ---------------------------------------------------------------------------

_UPSAMPLE = 8


def _upsample(grid: Grid, frames: np.ndarray) -> np.ndarray:
    """Spectral zero-padding upsample of real frames by _UPSAMPLE."""
    n = grid.num_points
    coeffs = np.fft.fftshift(grid.to_coeffs(frames.astype(complex)), axes=-1)
    wide = np.zeros(frames.shape[:-1] + (n * _UPSAMPLE,), dtype=complex)
    lo = (n * _UPSAMPLE - n) // 2
    wide[..., lo:lo + n] = coeffs
    # inverse FFT on the fine grid; the sign flip accounts for x0 = -L
    sign = np.ones(n * _UPSAMPLE)
    sign[1::2] = -1.0
    vals = np.fft.ifft(sign * np.fft.ifftshift(wide, axes=-1), axis=-1) \
        * (n * _UPSAMPLE)
    return np.real(vals)


def _eval_frames(grid: Grid, fine_frames: np.ndarray, i: int,
                 x: np.ndarray) -> np.ndarray:
    """Periodic linear interpolation of an upsampled frame at positions x."""
    n_fine = fine_frames.shape[-1]
    dx = 2 * grid.half_length / n_fine
    pos = np.mod(x + grid.half_length, 2 * grid.half_length) / dx
    i0 = np.floor(pos).astype(int) % n_fine
    i1 = (i0 + 1) % n_fine
    w = pos - np.floor(pos)
    row = fine_frames[i]
    return row[i0] * (1 - w) + row[i1] * w


def girsanov_sde_sample(data: EnhancedData, x0: float, dt: float,
                        n_paths: int, seed: int,
                        control_frames: np.ndarray | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama paths of d gamma = (d_x U + nu) dt + dW from x0.

    The drift potential U(t, x) is the time-reversed sum of the first two
    trees; ``control_frames`` optionally adds nu, given on the same reversed
    mesh.  Returns (positions (n_paths, steps+1), increments (n_paths, steps))
    so stochastic integrals can reuse the same driving noise.
    """
    grid, mesh = data.grid, data.mesh
    sub = int(round(dt / (mesh[1] - mesh[0])))
    if sub < 1 or abs(sub * (mesh[1] - mesh[0]) - dt) > 1e-12:
        raise ValueError("dt must be a positive multiple of the data step")
    steps = (len(mesh) - 1) // sub
    dx_u = _dx(grid, np.real(data.base.frames + data.quad.frames))[::-1]
    drift = dx_u[::sub]
    if control_frames is not None:
        drift = drift + control_frames[::sub]
    fine = _upsample(grid, drift)
    rng = np.random.default_rng(seed)
    pos = np.empty((n_paths, steps + 1))
    pos[:, 0] = x0
    dW = np.sqrt(dt) * rng.standard_normal((n_paths, steps))
    for i in range(steps):
        b = _eval_frames(grid, fine, i, pos[:, i])
        if not np.all(np.isfinite(b)):
            raise FloatingPointError("drift evaluation produced non-finite "
                                     f"values at step {i}")
        pos[:, i + 1] = pos[:, i] + b * dt + dW[:, i]
    return pos, dW


# ---------------------------------------------------------------------------
# density between the path measures, free energy, control gap
# ---------------------------------------------------------------------------

def _reversed_dx(grid: Grid, frames: np.ndarray) -> np.ndarray:
    return _dx(grid, np.real(frames))[::-1]


def radon_nikodym_weight(positions: np.ndarray, increments: np.ndarray,
                         data: EnhancedData, h: TimeField, yr: TimeField
                         ) -> tuple[np.ndarray, int]:
    """Density of the polymer measure against the drift-transformed one.

    weight = exp( int_0^T Xr(s, gamma_s) dW_s
                  + [U + Yr_rev - h_rev](0, x0) - [...](T, gamma_T) )
    with Xr the reversed slope of the remainder tree.  Forward (Ito) Riemann
    sums on the simulation mesh.  Returns (weights, n_overflowed); overflowed
    paths carry weight 0 and are excluded from the count.
    """
    grid, mesh = data.grid, data.mesh
    pos = np.atleast_2d(positions)
    dw = np.atleast_2d(increments)
    steps = dw.shape[1]
    sub = (len(mesh) - 1) // steps
    xr_rev = _reversed_dx(grid, yr.frames)[::sub]
    fine = _upsample(grid, xr_rev)
    integral = np.zeros(pos.shape[0])
    for i in range(steps):
        integral += _eval_frames(grid, fine, i, pos[:, i]) * dw[:, i]

    combo_top = np.real(data.base.frames[-1] + data.quad.frames[-1]
                        + yr.frames[-1] - h.frames[-1])
    combo_bot = np.real(data.base.frames[0] - h.frames[0])
    fine_top = _upsample(grid, combo_top[None])
    fine_bot = _upsample(grid, combo_bot[None])
    start = _eval_frames(grid, fine_top, 0, pos[:, 0])
    end = _eval_frames(grid, fine_bot, 0, pos[:, -1])
    with np.errstate(over="ignore"):
        w = np.exp(integral + start - end)
    bad = ~np.isfinite(w)
    w[bad] = 0.0
    return w, int(bad.sum())


def free_energy_check(data: EnhancedData, res: KPZResult, yr: TimeField,
                      x0: float, n_paths: int = 2000, seed: int = 0,
                      dt: float | None = None) -> dict:
    """Free-energy identity: the remainder height at (T, x0) against the
    log-expectation over drift-transformed paths."""
    grid, mesh = data.grid, data.mesh
    if dt is None:
        dt = mesh[1] - mesh[0]
    j0 = int(np.argmin(np.abs(grid.points - x0)))
    x0 = float(grid.points[j0])
    lhs = float(np.real(res.h.frames[-1][j0] - data.base.frames[-1][j0]
                        - data.quad.frames[-1][j0] - yr.frames[-1][j0]))

    pos, dw = girsanov_sde_sample(data, x0, dt, n_paths, seed)
    steps = dw.shape[1]
    sub = (len(mesh) - 1) // steps
    xr_rev = _reversed_dx(grid, yr.frames)[::sub]
    fine = _upsample(grid, xr_rev)
    integral = np.zeros(n_paths)
    for i in range(steps):
        integral += _eval_frames(grid, fine, i, pos[:, i]) * dw[:, i]
    terminal = np.real(res.h.frames[0] - data.base.frames[0])
    fine_term = _upsample(grid, terminal[None])
    samples = np.exp(integral + _eval_frames(grid, fine_term, 0, pos[:, -1]))
    mean = float(samples.mean())
    sig = float(samples.std(ddof=1) / np.sqrt(n_paths))
    return {
        "lhs": lhs,
        "rhs": float(np.log(mean)),
        "gap": float(abs(lhs - np.log(mean))),
        "mc_sigma_log": sig / mean,
        "n_paths": n_paths,
    }


def variational_gap(data: EnhancedData, res: KPZResult, yr: TimeField,
                    x0: float, n_paths: int = 2000, seed: int = 0,
                    control_scales: tuple = (1.0, 0.0, 1.5),
                    dt: float | None = None) -> dict:
    """Stochastic-control report: the value of each control against the
    remainder height at (T, x0); scale 1.0 is the optimal control."""
    grid, mesh = data.grid, data.mesh
    if dt is None:
        dt = mesh[1] - mesh[0]
    j0 = int(np.argmin(np.abs(grid.points - x0)))
    x0 = float(grid.points[j0])
    lhs = float(np.real(res.h.frames[-1][j0] - data.base.frames[-1][j0]
                        - data.quad.frames[-1][j0] - yr.frames[-1][j0]))

    nu_opt = _reversed_dx(grid, np.real(res.h.frames - data.base.frames
                                        - data.quad.frames))
    xr_rev = _reversed_dx(grid, yr.frames)
    terminal = np.real(res.h.frames[0] - data.base.frames[0])
    fine_term = _upsample(grid, terminal[None])

    values = {}
    for scale in control_scales:
        nu = scale * nu_opt
        pos, _ = girsanov_sde_sample(data, x0, dt, n_paths,
                                     seed + int(100 * scale),
                                     control_frames=nu)
        steps = pos.shape[1] - 1
        sub = (len(mesh) - 1) // steps
        fine_xr = _upsample(grid, xr_rev[::sub])
        fine_nu = _upsample(grid, nu[::sub])
        run = np.zeros(n_paths)
        for i in range(steps):
            xr_i = _eval_frames(grid, fine_xr, i, pos[:, i])
            nu_i = _eval_frames(grid, fine_nu, i, pos[:, i])
            run += 0.5 * (xr_i ** 2 - (nu_i - xr_i) ** 2) * dt
        samples = run + _eval_frames(grid, fine_term, 0, pos[:, -1])
        values[scale] = (float(samples.mean()),
                         float(samples.std(ddof=1) / np.sqrt(n_paths)))
    opt_mean, opt_sig = values[1.0]
    return {
        "lhs": lhs,
        "values": values,
        "optimal_gap": float(abs(lhs - opt_mean)),
        "optimal_sigma": opt_sig,
        "dominates": all(values[1.0][0] >= values[s][0]
                         for s in control_scales if s != 1.0),
    }
