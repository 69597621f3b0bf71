"""Tests for the directed-polymer module.

Oracles: wrapped-Gaussian closed forms for the free transition kernel and
path statistics, Gaussian quadrature for exponential moments, an
Ornstein-Uhlenbeck closed form for the drift SDE, and exact probabilistic
identities (density normalization, martingale property, the free-energy and
control representations in the deterministic case).
"""

import numpy as np
import pytest

from parakpz.equations import solve_kolmogorov, solve_YR
from parakpz.kpz import solve_kpz
from parakpz.noise import (
    build_trees,
    mollify,
    renorm_constants,
    sample_noise,
    stationary_initial,
    zero_enhanced,
)
from parakpz.polymer import (
    KernelRejectedError,
    compose_kernels,
    exp_moment_estimate,
    free_energy_check,
    girsanov_sde_sample,
    radon_nikodym_weight,
    sample_polymer,
    transition_kernel,
    variational_gap,
)
from parakpz.spaces import TimeField
from parakpz.spectral import Grid, GridField


@pytest.fixture(scope="module")
def grid():
    return Grid(64, np.pi)


@pytest.fixture(scope="module")
def mesh():
    return 2e-3 * np.arange(81)  # T = 0.16


@pytest.fixture(scope="module")
def zero_data(grid, mesh):
    return zero_enhanced(grid, mesh)


@pytest.fixture(scope="module")
def zero_h(grid, mesh):
    return TimeField(grid, mesh, np.zeros((len(mesh), grid.num_points)))


@pytest.fixture(scope="module")
def smooth(grid, mesh):
    dt = mesh[1] - mesh[0]
    xi = mollify(sample_noise(grid, mesh[-1], dt, seed=13), 4.0)
    y0 = stationary_initial(grid, dt, 4.0, seed=13)
    c1, c2 = renorm_constants(4.0, grid, dt, num_steps=32)
    data = build_trees(xi, y0, c1, c2, init_kind="stationary")
    hbar = GridField(grid, values=np.real(data.base.frames[0])
                     .astype(complex))
    res = solve_kpz(data, hbar, cross_check=False)
    return data, res


def _wrapped_gaussian(x, var):
    out = np.zeros_like(x)
    for m in range(-6, 7):
        out += np.exp(-(x + 2 * np.pi * m) ** 2 / (2 * var))
    return out / np.sqrt(2 * np.pi * var)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_free_kernel_is_gaussian(zero_data, zero_h):
    ker = transition_kernel(zero_data, zero_h, 0.0, 0.08)
    rows = ker.matrix.sum(axis=1) * ker.spacing
    assert np.max(np.abs(rows - 1.0)) < 1e-6
    assert ker.matrix.min() >= -1e-8
    var = 0.08 + ker.sigma0 ** 2
    expected = _wrapped_gaussian(ker.points[:, None] - ker.points[None, :],
                                 var)
    assert np.max(np.abs(ker.matrix - expected)) < 1e-6


def test_chapman_kolmogorov_free(zero_data, zero_h):
    k1 = transition_kernel(zero_data, zero_h, 0.0, 0.08)
    k2 = transition_kernel(zero_data, zero_h, 0.08, 0.16)
    k12 = transition_kernel(zero_data, zero_h, 0.0, 0.16)
    comp = compose_kernels(k1, k2)
    rel = (np.linalg.norm(comp.matrix - k12.matrix)
           / np.linalg.norm(k12.matrix))
    assert rel < 1e-5


def test_chapman_kolmogorov_smooth(smooth):
    data, res = smooth
    k1 = transition_kernel(data, res.h, 0.0, 0.08)
    k2 = transition_kernel(data, res.h, 0.08, 0.16)
    k12 = transition_kernel(data, res.h, 0.0, 0.16)
    comp = compose_kernels(k1, k2)
    rel = (np.linalg.norm(comp.matrix - k12.matrix)
           / np.linalg.norm(k12.matrix))
    assert rel < 1e-5
    rows = k12.matrix.sum(axis=1) * k12.spacing
    assert np.max(np.abs(rows - 1.0)) < 1e-6


def test_kernel_rejects_inconsistent_height(smooth, grid, mesh):
    data, res = smooth
    wrong = res.h.like(2.0 * np.real(res.h.frames))
    with pytest.raises(KernelRejectedError):
        transition_kernel(data, wrong, 0.0, 0.08)


def test_kernel_time_validation(zero_data, zero_h):
    with pytest.raises(ValueError):
        transition_kernel(zero_data, zero_h, 0.08, 0.08)
    with pytest.raises(ValueError):
        transition_kernel(zero_data, zero_h, 0.0, 0.0801)


# ---------------------------------------------------------------------------
# path sampling and moments
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def free_chain(zero_data, zero_h):
    return [transition_kernel(zero_data, zero_h, 0.0, 0.08),
            transition_kernel(zero_data, zero_h, 0.08, 0.16)]


def test_free_paths_variance(free_chain):
    paths = sample_polymer(free_chain, 0.0, 10_000, seed=5)
    pos = np.stack([p.positions for p in paths])
    sigma0 = free_chain[0].sigma0
    expected = 0.16 + 2 * sigma0 ** 2
    assert pos[:, -1].var() == pytest.approx(expected, rel=0.05)


def test_sampling_deterministic(free_chain):
    a = sample_polymer(free_chain, 0.5, 100, seed=9)
    b = sample_polymer(free_chain, 0.5, 100, seed=9)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.positions, pb.positions)


def test_moment_ratio_bounded(free_chain):
    paths = sample_polymer(free_chain, 0.0, 4000, seed=2)
    times, pos = paths[0].times, np.stack([p.positions for p in paths])
    sigma0sq = free_chain[0].sigma0 ** 2
    for i in range(1, len(times)):
        ratio = np.mean((pos[:, i] - pos[:, i - 1]) ** 2) \
            / (times[i] - times[i - 1] + sigma0sq)
        assert 0.8 < ratio < 1.25


def test_exp_moment_trivial_and_monotone(free_chain):
    paths = sample_polymer(free_chain, 0.0, 2000, seed=3)
    assert exp_moment_estimate(paths, 0.0) == 1.0
    vals = [exp_moment_estimate(paths, l) for l in (0.05, 0.1, 0.2)]
    assert vals[0] < vals[1] < vals[2]


def test_exp_moment_matches_quadrature(free_chain):
    n = 8000
    paths = sample_polymer(free_chain, 0.0, n, seed=4)
    l, delta = 0.1, 0.9
    est = exp_moment_estimate(paths, l, delta)
    ker = free_chain[0]
    var = 0.16 + 2 * ker.sigma0 ** 2
    dens = _wrapped_gaussian(ker.points, var)
    dens /= dens.sum() * ker.spacing
    quad = np.sum(dens * np.exp(l * np.abs(ker.points) ** delta)) \
        * ker.spacing
    samp = np.exp(l * np.abs(np.stack([p.positions for p in paths])[:, -1])
                  ** delta)
    sigma = samp.std(ddof=1) / np.sqrt(n)
    assert abs(est - quad) < 3 * sigma + 1e-3


def test_exp_moment_stable_under_doubling(free_chain):
    a = exp_moment_estimate(sample_polymer(free_chain, 0.0, 2000, seed=6),
                            0.1)
    b = exp_moment_estimate(sample_polymer(free_chain, 0.0, 4000, seed=6),
                            0.1)
    assert abs(a - b) / b < 0.1


# ---------------------------------------------------------------------------
# drift SDE
# ---------------------------------------------------------------------------

def test_sde_free_brownian(zero_data):
    pos, dW = girsanov_sde_sample(zero_data, 0.0, 2e-3, 6000, seed=7)
    np.testing.assert_allclose(np.diff(pos, axis=1), dW, atol=1e-12)
    var = pos[:, -1].var()
    assert var == pytest.approx(0.16, rel=0.07)


def test_sde_ou_closed_form(zero_data, grid, mesh):
    # restoring sawtooth drift -c x (linear on the fundamental domain)
    c = 1.0
    nu = np.tile(-c * grid.points, (len(mesh), 1))
    n = 6000
    pos, _ = girsanov_sde_sample(zero_data, 0.5, 2e-3, n, seed=8,
                                 control_frames=nu)
    t = 0.16
    mean = 0.5 * np.exp(-c * t)
    var = (1 - np.exp(-2 * c * t)) / (2 * c)
    got_mean = pos[:, -1].mean()
    got_var = pos[:, -1].var()
    assert abs(got_mean - mean) < 3 * np.sqrt(var / n) + 2e-3
    assert abs(got_var - var) < 3 * var * np.sqrt(2 / n) + 2e-3


def test_kolmogorov_martingale(smooth, grid, mesh):
    data, _ = smooth
    tau = float(mesh[-1])
    m = len(mesh)
    f = TimeField(grid, mesh, np.zeros((m, grid.num_points)))
    n = 6000
    pos, _ = girsanov_sde_sample(data, 0.0, 2e-3, n, seed=11)
    for phi_vals in (np.cos(grid.points), np.sin(2 * grid.points) + 0.5):
        phi0 = GridField(grid, values=phi_vals.astype(complex))
        pf, _ = solve_kolmogorov(data, f, phi0, tau)
        sol = np.real(pf.u.frames)
        means, sigmas = [], []
        for i in (0, m // 2, m - 1):
            x = np.mod(pos[:, i] + np.pi, 2 * np.pi) - np.pi
            vals = np.interp(x, grid.points, sol[i], period=2 * np.pi)
            means.append(vals.mean())
            sigmas.append(vals.std(ddof=1) / np.sqrt(n))
        for mu, sig in zip(means[1:], sigmas[1:]):
            assert abs(mu - means[0]) < 3 * (sig + sigmas[0]) + 2e-3


# ---------------------------------------------------------------------------
# density, free energy, variational representation
# ---------------------------------------------------------------------------

def test_rn_weight_trivial(zero_data, zero_h):
    pos, dW = girsanov_sde_sample(zero_data, 0.0, 2e-3, 50, seed=1)
    w, bad = radon_nikodym_weight(pos, dW, zero_data, zero_h, zero_h)
    assert bad == 0
    np.testing.assert_allclose(w, 1.0, atol=1e-12)


def test_rn_weight_normalizes(smooth, grid, mesh):
    data, res = smooth
    yr, _, _ = solve_YR(data)
    yr = yr.like(np.real(yr.frames))
    n = 8000
    pos, dW = girsanov_sde_sample(data, 0.0, 2e-3, n, seed=21)
    w, bad = radon_nikodym_weight(pos, dW, data,
                                  res.h.like(np.real(res.h.frames)), yr)
    assert bad == 0
    sigma = w.std(ddof=1) / np.sqrt(n)
    assert abs(w.mean() - 1.0) < 3 * sigma + 5e-3


def test_free_energy_trivial(zero_data, grid, mesh):
    hbar = GridField(grid, values=np.zeros(grid.num_points, complex))
    res = solve_kpz(zero_data, hbar, cross_check=False)
    yr, _, _ = solve_YR(zero_data)
    rep = free_energy_check(zero_data, res, yr, 0.0, n_paths=200, seed=0)
    assert rep["gap"] < 1e-10


def test_free_energy_deterministic_sin(zero_data, grid, mesh):
    hbar = GridField(grid, values=np.sin(grid.points).astype(complex))
    res = solve_kpz(zero_data, hbar, cross_check=False)
    yr, _, _ = solve_YR(zero_data)
    rep = free_energy_check(zero_data, res, yr, 0.0, n_paths=6000, seed=1)
    assert rep["gap"] < 3 * rep["mc_sigma_log"] + 2e-3


def test_variational_deterministic_sin(zero_data, grid, mesh):
    hbar = GridField(grid, values=np.sin(grid.points).astype(complex))
    res = solve_kpz(zero_data, hbar, cross_check=False)
    yr, _, _ = solve_YR(zero_data)
    rep = variational_gap(zero_data, res, yr, 0.0, n_paths=6000, seed=2)
    assert rep["optimal_gap"] < 3 * rep["optimal_sigma"] + 2e-3
    assert rep["dominates"]
    # zero control forfeits the terminal optimization; 1.5x overshoots
    opt = rep["values"][1.0][0]
    for s in (0.0, 1.5):
        assert opt >= rep["values"][s][0]
