"""Tests for the paracontrolled linear solver and its instantiations.

Oracles: exact per-mode heat/Duhamel formulas for the degenerate cases; a
10x-refined Crank-Nicolson stepper with linearly interpolated coefficients
for the smooth classical cases; exact grid identities for the product
decomposition.
"""

import numpy as np
import pytest

from parakpz.equations import (
    reverse_field,
    solve_kolmogorov,
    solve_rhe,
    solve_rhe_backward,
    solve_YR,
    truncate_data,
)
from parakpz.noise import (
    build_trees,
    mollify,
    renorm_constants,
    sample_noise,
    stationary_initial,
    zero_enhanced,
)
from parakpz.paraproducts import make_time_smoother, para_modified, resonant_values
from parakpz.solver import (
    LinearProblem,
    ParaFunction,
    paracontrolled_product,
    reconstruction_residual,
    solve_linear,
)
from parakpz.spaces import TimeField
from parakpz.spectral import Grid, GridField, make_dyadic_partition


@pytest.fixture(scope="module")
def grid():
    return Grid(256, np.pi)


@pytest.fixture(scope="module")
def part(grid):
    return make_dyadic_partition(grid)


@pytest.fixture(scope="module")
def mesh():
    return 2e-3 * np.arange(101)


@pytest.fixture(scope="module")
def zero_data(grid, mesh):
    return zero_enhanced(grid, mesh)


@pytest.fixture(scope="module")
def smooth_data(grid, mesh):
    dt = mesh[1] - mesh[0]
    xi = mollify(sample_noise(grid, mesh[-1], dt, seed=21), 4.0)
    y0 = stationary_initial(grid, dt, 4.0, seed=21)
    c_lr, c_dbl = renorm_constants(4.0, grid, dt, num_steps=32)
    return build_trees(xi, y0, c_lr, c_dbl, init_kind="stationary")


def _gaussian_bump(grid, width=0.7):
    return GridField(grid, values=np.exp(-(grid.points / width) ** 2)
                     .astype(complex))


# ---------------------------------------------------------------------------
# degenerate solves (exact oracles)
# ---------------------------------------------------------------------------

def test_pure_heat_flow(zero_data, grid):
    u0 = _gaussian_bump(grid)
    problem = LinearProblem(
        forcing=lambda pf: pf.u.like(np.zeros_like(pf.u.frames)),
        derivative=None, u0=u0)
    pf, report = solve_linear(problem, zero_data)
    k2 = 0.5 * grid.wavenumbers ** 2
    c0 = u0.coeffs
    for i in (0, 30, 100):
        t = zero_data.mesh[i]
        expected = grid.to_values(np.exp(-k2 * t) * c0)
        np.testing.assert_allclose(pf.u.frames[i], expected, atol=1e-10)
    assert report.residual < 1e-10


def test_fixed_forcing_duhamel(zero_data, grid):
    # R = g constant in u: solution per mode is the exact exponential rule
    g = np.cos(3 * grid.points) + 0.5
    gtf = TimeField(grid, zero_data.mesh,
                    np.tile(g, (len(zero_data.mesh), 1)))
    zero0 = GridField(grid, values=np.zeros(grid.num_points, complex))
    problem = LinearProblem(forcing=lambda pf: gtf, derivative=None, u0=zero0)
    pf, _ = solve_linear(problem, zero_data)
    k2 = 0.5 * grid.wavenumbers ** 2
    gc = grid.to_coeffs(g.astype(complex))
    t = zero_data.mesh[-1]
    safe = np.where(k2 == 0, 1.0, k2)
    expected_c = np.where(k2 == 0, t * gc, gc * (1 - np.exp(-k2 * t)) / safe)
    np.testing.assert_allclose(pf.u.frames[-1],
                               grid.to_values(expected_c), atol=1e-9)


def test_exponent_validation():
    zero0 = GridField(Grid(8, 1.0), values=np.zeros(8, complex))
    problem = LinearProblem(forcing=lambda pf: pf.u, derivative=None,
                            u0=zero0, exponents={"eps": 0.9})
    from parakpz.config import ConfigError
    with pytest.raises(ConfigError):
        problem.validate()


# ---------------------------------------------------------------------------
# paracontrolled product decomposition
# ---------------------------------------------------------------------------

def _make_parafunction(data, part, sm, seed=3):
    grid = data.grid
    rng = np.random.default_rng(seed)
    m = len(data.mesh)
    uprime = TimeField(grid, data.mesh,
                       rng.standard_normal((m, grid.num_points)))
    usharp = TimeField(grid, data.mesh,
                       rng.standard_normal((m, grid.num_points)))
    u = para_modified(uprime, data.ctrl, sm, part) + usharp
    return ParaFunction(u=u, u_prime=uprime, u_sharp=usharp,
                        controller=data.ctrl)


def test_product_equals_plain_resonant(smooth_data, part):
    # the four-term split telescopes back to resonant(X, d_x u) exactly
    data = smooth_data
    sm = make_time_smoother(data.dt, part)
    pf = _make_parafunction(data, part, sm)
    out = paracontrolled_product(data.slope, pf, data, sm, part)
    grid = data.grid
    from parakpz.spectral import derivative_multiplier
    du = grid.to_values(derivative_multiplier(grid)[None]
                        * grid.to_coeffs(pf.u.frames))
    direct = resonant_values(grid.to_coeffs(data.slope.frames),
                             grid.to_coeffs(du), part)
    scale = max(np.max(np.abs(direct)), 1.0)
    assert np.max(np.abs(out.frames - direct)) < 1e-8 * scale


def test_product_collapses_without_controller_part(smooth_data, part):
    data = smooth_data
    grid = data.grid
    sm = make_time_smoother(data.dt, part)
    m = len(data.mesh)
    rng = np.random.default_rng(5)
    usharp = TimeField(grid, data.mesh,
                       rng.standard_normal((m, grid.num_points)))
    zero = TimeField(grid, data.mesh,
                     np.zeros((m, grid.num_points)))
    pf = ParaFunction(u=usharp, u_prime=zero, u_sharp=usharp,
                      controller=data.ctrl)
    out = paracontrolled_product(data.slope, pf, data, sm, part)
    from parakpz.spectral import derivative_multiplier
    du = grid.to_values(derivative_multiplier(grid)[None]
                        * grid.to_coeffs(usharp.frames))
    direct = resonant_values(grid.to_coeffs(data.slope.frames),
                             grid.to_coeffs(du), part)
    np.testing.assert_allclose(out.frames, direct, atol=1e-10)


def test_product_zero_candidate(smooth_data, part):
    data = smooth_data
    grid = data.grid
    sm = make_time_smoother(data.dt, part)
    m = len(data.mesh)
    zero = TimeField(grid, data.mesh, np.zeros((m, grid.num_points)))
    pf = ParaFunction(u=zero, u_prime=zero.like(zero.frames),
                      u_sharp=zero.like(zero.frames), controller=data.ctrl)
    out = paracontrolled_product(data.slope, pf, data, sm, part)
    assert np.max(np.abs(out.frames)) == 0.0


def test_controller_mismatch_raises(smooth_data, zero_data, part):
    data = smooth_data
    sm = make_time_smoother(data.dt, part)
    pf = _make_parafunction(data, part, sm)
    with pytest.raises(ValueError, match="controller"):
        paracontrolled_product(zero_data.slope, pf, zero_data, sm, part)


# ---------------------------------------------------------------------------
# classical equivalence of the instantiations
# ---------------------------------------------------------------------------

def _refined_classical(grid, mesh, coeff_frames, grad_frames, u0_vals,
                       refine=10, forcing_frames=None):
    """Crank-Nicolson solve of L u = coeff*u + grad*d_x u + forcing at
    refine x time resolution, linear interpolation of coefficient frames."""
    k = grid.wavenumbers
    lam = 0.5 * k ** 2
    m = len(mesh) - 1
    dtr = (mesh[1] - mesh[0]) / refine
    den = 1.0 + 0.5 * dtr * lam
    num = 1.0 - 0.5 * dtr * lam
    mult = 1j * k.copy()
    mult[grid.num_points // 2] = 0.0

    def interp(frames, s):
        i = min(int(s), m - 1)
        w = s - i
        return (1 - w) * frames[i] + w * frames[i + 1]

    def rhs(vals, s):
        du = grid.to_values(mult * grid.to_coeffs(vals))
        out = interp(coeff_frames, s) * vals + interp(grad_frames, s) * du
        if forcing_frames is not None:
            out = out + interp(forcing_frames, s)
        return out

    u = np.asarray(u0_vals, dtype=complex)
    out = [u.copy()]
    for i in range(m * refine):
        s = i / refine
        s1 = (i + 1) / refine
        # semi-implicit CN: diffusion implicit, reaction via midpoint predictor
        f0 = grid.to_coeffs(rhs(u, s))
        upred_c = (num * grid.to_coeffs(u) + dtr * f0) / den
        f1 = grid.to_coeffs(rhs(grid.to_values(upred_c), s1))
        uc = (num * grid.to_coeffs(u) + 0.5 * dtr * (f0 + f1)) / den
        u = grid.to_values(uc)
        if (i + 1) % refine == 0:
            out.append(u.copy())
    return np.stack(out)


def _dx_frames(grid, frames):
    from parakpz.spectral import derivative_multiplier
    return grid.to_values(derivative_multiplier(grid)[None]
                          * grid.to_coeffs(frames))


def test_rhe_matches_classical_oracle(smooth_data, grid):
    data = smooth_data
    w0 = GridField(grid, values=_gaussian_bump(grid).values + 1.0)
    pf, report = solve_rhe(data, w0)
    assert report.residual < 1e-9
    x = data.slope.frames
    xp = _dx_frames(grid, data.quad.frames)
    xc = _dx_frames(grid, data.cubic.frames)
    coeff = x * xc + xp * xc + 0.5 * xp ** 2 + 0.5 * xc ** 2
    grad = x + xp + xc
    ref = _refined_classical(grid, data.mesh, coeff, grad, w0.values)
    scale = np.max(np.abs(ref))
    err = np.max(np.abs(pf.u.frames - ref)) / scale
    assert err < 1e-3, f"relative sup error {err}"


def test_yr_matches_classical_oracle(smooth_data, grid):
    data = smooth_data
    yr, pf, report = solve_YR(data)
    x = data.slope.frames
    xp = _dx_frames(grid, data.quad.frames)
    coeff = np.zeros_like(x)
    grad = x + xp
    forcing = 0.5 * xp ** 2 + x * xp
    ref = _refined_classical(grid, data.mesh, coeff, grad,
                             np.zeros(grid.num_points),
                             forcing_frames=forcing)
    scale = max(np.max(np.abs(ref)), 1e-10)
    err = np.max(np.abs(yr.frames - ref)) / scale
    assert err < 1e-3, f"relative sup error {err}"


def test_yr_zero_data(zero_data):
    yr, pf, _ = solve_YR(zero_data)
    assert np.max(np.abs(yr.frames)) < 1e-12


def test_kolmogorov_zero_data_terminal(zero_data, grid):
    phi0 = _gaussian_bump(grid)
    m = len(zero_data.mesh)
    f = TimeField(grid, zero_data.mesh,
                  np.zeros((m, grid.num_points)))
    tau = float(zero_data.mesh[-1])
    pf, _ = solve_kolmogorov(zero_data, f, phi0, tau)
    k2 = 0.5 * grid.wavenumbers ** 2
    for i in (0, 50, 100):
        t = zero_data.mesh[i]
        expected = grid.to_values(np.exp(-k2 * (tau - t)) * phi0.coeffs)
        np.testing.assert_allclose(pf.u.frames[i], expected, atol=1e-9)


def test_kolmogorov_constant_forcing(zero_data, grid):
    phi0 = GridField(grid, values=np.zeros(grid.num_points, complex))
    m = len(zero_data.mesh)
    f = TimeField(grid, zero_data.mesh,
                  np.ones((m, grid.num_points)))
    tau = float(zero_data.mesh[-1])
    pf, _ = solve_kolmogorov(zero_data, f, phi0, tau)
    # (d_t + Lap/2) phi = 1, phi(tau) = 0  =>  phi(t) = -(tau - t)
    for i in (0, 40, 100):
        t = zero_data.mesh[i]
        np.testing.assert_allclose(pf.u.frames[i], -(tau - t)
                                   * np.ones(grid.num_points), atol=1e-9)


def test_kolmogorov_matches_classical_oracle(smooth_data, grid):
    data = smooth_data
    tau = float(data.mesh[-1]) / 2
    m_tau = int(round(tau / data.dt))
    phi0 = _gaussian_bump(grid)
    mesh_tau = data.mesh[:m_tau + 1]
    f = TimeField(grid, mesh_tau,
                  np.zeros((m_tau + 1, grid.num_points)))
    pf, _ = solve_kolmogorov(data, f, phi0, tau)
    # forward clock v(r) = phi(tau - r): L v = b(T - tau + r) d_x v
    x = data.slope.frames
    xp = _dx_frames(grid, data.quad.frames)
    shift = len(data.mesh) - 1 - m_tau
    grad = (x + xp)[shift:]
    coeff = np.zeros_like(grad)
    ref_v = _refined_classical(grid, mesh_tau, coeff, grad, phi0.values)
    scale = np.max(np.abs(ref_v))
    err = np.max(np.abs(pf.u.frames - ref_v[::-1])) / scale
    assert err < 1e-3, f"relative sup error {err}"


def test_backward_rhe_zero_data(zero_data, grid):
    kmode = 5
    g = GridField(grid, values=np.exp(1j * kmode * grid.points))
    t_end = float(zero_data.mesh[-1])
    pf, _ = solve_rhe_backward(zero_data, g, t_end)
    for i in (0, 60, 100):
        s = zero_data.mesh[i]
        expected = np.exp(-(t_end - s) * kmode ** 2 / 2) * g.values
        np.testing.assert_allclose(pf.u.frames[i], expected, atol=1e-9)


def test_backward_rhe_involution(smooth_data, grid):
    # solving forward on reversed data and flipping equals the backward solve
    data = smooth_data
    g = GridField(grid, values=_gaussian_bump(grid).values + 1.0)
    t_end = float(data.mesh[-1])
    pf_b, _ = solve_rhe_backward(data, g, t_end)
    from parakpz.equations import _reverse_data
    pf_f, _ = solve_rhe(_reverse_data(data), g)
    np.testing.assert_allclose(pf_b.u.frames, pf_f.u.frames[::-1],
                               atol=1e-12)


def test_truncate_and_reverse_helpers(smooth_data):
    data = smooth_data
    half = truncate_data(data, float(data.mesh[50]))
    assert len(half.mesh) == 51
    np.testing.assert_allclose(half.base.frames, data.base.frames[:51])
    rev = reverse_field(data.slope)
    np.testing.assert_allclose(rev.frames, data.slope.frames[::-1])


def test_report_contraction_and_windows(smooth_data, grid):
    w0 = GridField(grid, values=_gaussian_bump(grid).values + 1.0)
    pf, report = solve_rhe(smooth_data, w0)
    assert report.windows[0][0] == 0.0
    assert report.windows[-1][1] == pytest.approx(smooth_data.mesh[-1])
    assert all(c < 0.5 for c in report.contraction)
    assert np.isfinite(report.norm_bound)
    d = report.as_dict()
    assert set(d) == {"windows", "iterations", "contraction", "residual",
                      "norm_bound", "nu_norm"}
