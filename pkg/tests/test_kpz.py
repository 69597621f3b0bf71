"""Tests for the Cole-Hopf pipeline: exp/log maps, the full solve against
closed-form and classical oracles, and the report helpers."""

import numpy as np
import pytest

from parakpz.kpz import (
    PositivityError,
    exp_map,
    log_map,
    lower_bound_check,
    solve_kpz,
    solve_kpz_direct,
    stability_check,
)
from parakpz.noise import (
    build_trees,
    mollify,
    renorm_constants,
    sample_noise,
    stationary_initial,
    zero_enhanced,
)
from parakpz.spaces import TimeField
from parakpz.spectral import Grid, GridField


@pytest.fixture(scope="module")
def grid():
    return Grid(256, np.pi)


@pytest.fixture(scope="module")
def mesh():
    return 2e-3 * np.arange(101)


@pytest.fixture(scope="module")
def zero_data(grid, mesh):
    return zero_enhanced(grid, mesh)


def _smooth(grid, mesh, seed, level=4.0):
    dt = mesh[1] - mesh[0]
    xi = mollify(sample_noise(grid, mesh[-1], dt, seed=seed), level)
    y0 = stationary_initial(grid, dt, level, seed=seed)
    c_lr, c_dbl = renorm_constants(level, grid, dt, num_steps=32)
    return xi, build_trees(xi, y0, c_lr, c_dbl, init_kind="stationary")


@pytest.fixture(scope="module")
def smooth(grid, mesh):
    return _smooth(grid, mesh, seed=31)


# ---------------------------------------------------------------------------
# exp / log maps
# ---------------------------------------------------------------------------

def test_exp_log_trivial(grid, mesh):
    zero = TimeField(grid, mesh, np.zeros((len(mesh), grid.num_points)))
    one = exp_map(zero)
    assert np.all(one.frames == 1.0)
    back = log_map(one)
    assert np.max(np.abs(back.frames)) == 0.0


def test_exp_log_roundtrip(grid, mesh):
    rng = np.random.default_rng(0)
    f = TimeField(grid, mesh,
                  rng.uniform(-3, 3, (len(mesh), grid.num_points)))
    back = log_map(exp_map(f))
    assert np.max(np.abs(back.frames - f.frames)) < 1e-12


def test_log_floor_violation_names_location(grid, mesh):
    frames = np.ones((len(mesh), grid.num_points))
    frames[7, 13] = -0.5
    f = TimeField(grid, mesh, frames)
    with pytest.raises(PositivityError) as ei:
        log_map(f)
    msg = str(ei.value)
    assert f"t={mesh[7]:.6g}" in msg
    assert f"x={grid.points[13]:.6g}" in msg


def test_exp_lipschitz_on_bounded_ensemble(grid, mesh):
    rng = np.random.default_rng(2)
    M = 1.5
    worst = 0.0
    for _ in range(20):
        f = np.clip(rng.standard_normal((5, grid.num_points)), -M, M)
        g = np.clip(f + 0.1 * rng.standard_normal(f.shape), -M, M)
        num = np.max(np.abs(np.exp(f) - np.exp(g)))
        den = np.max(np.abs(f - g))
        worst = max(worst, num / den)
    assert worst <= np.e ** M * (1 + 1e-9)


# ---------------------------------------------------------------------------
# solve_kpz oracles
# ---------------------------------------------------------------------------

def test_kpz_zero_everything(zero_data, grid):
    hbar = GridField(grid, values=np.zeros(grid.num_points, complex))
    res = solve_kpz(zero_data, hbar)
    assert np.max(np.abs(res.h.frames)) < 1e-12
    assert res.certificate["hp_sup_weighted"] < 1e-12


def test_kpz_deterministic_cole_hopf(zero_data, grid):
    # zero data, hbar = sin: h(t) = log(heat semigroup applied to e^sin)
    hbar = GridField(grid, values=np.sin(grid.points).astype(complex))
    res = solve_kpz(zero_data, hbar)
    w0c = grid.to_coeffs(np.exp(np.sin(grid.points)).astype(complex))
    k2 = 0.5 * grid.wavenumbers ** 2
    for i in (0, 33, 100):
        t = zero_data.mesh[i]
        expected = np.log(np.real(grid.to_values(np.exp(-k2 * t) * w0c)))
        assert np.max(np.abs(res.h.frames[i] - expected)) < 1e-6


def test_kpz_pipeline_matches_direct_smooth(smooth, grid):
    xi, data = smooth
    hbar = GridField(grid, values=(0.3 * np.cos(grid.points)
                                   + np.real(data.base.frames[0])))
    res = solve_kpz(data, hbar)
    h_direct = solve_kpz_direct(xi, data, hbar)
    scale = max(np.max(np.abs(h_direct.frames)), 1.0)
    gap = np.max(np.abs(res.h.frames - h_direct.frames)) / scale
    assert gap < 1e-4, f"pipeline/direct relative gap {gap}"


def test_kpz_sharp_cross_check(smooth, grid):
    _, data = smooth
    hbar = GridField(grid, values=np.real(data.base.frames[0]).astype(complex))
    res = solve_kpz(data, hbar)
    scale = max(np.max(np.abs(res.hP.frames)), 1.0)
    assert res.certificate["sharp_gap"] < 1e-4
    # decomposition consistency: h = base + quad + cubic + hP
    rebuilt = (np.real(data.base.frames + data.quad.frames
                       + data.cubic.frames) + res.hP.frames)
    np.testing.assert_allclose(res.h.frames, rebuilt, atol=1e-12)


def test_direct_positivity_samples(grid, mesh):
    for seed in range(5):
        xi, data = _smooth(grid, mesh, seed=100 + seed)
        hbar = GridField(grid, values=np.zeros(grid.num_points, complex))
        h = solve_kpz_direct(xi, data, hbar)  # raises on positivity loss
        assert np.all(np.isfinite(h.frames))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def test_lower_bound_trivial(zero_data, grid):
    hbar = GridField(grid, values=np.zeros(grid.num_points, complex))
    res = solve_kpz(zero_data, hbar)
    rep = lower_bound_check(res.hP, norm_bound=0.0)
    assert rep["infimum"] == pytest.approx(0.0, abs=1e-12)


def test_lower_bound_sin_maximum_principle(zero_data, grid):
    hbar = GridField(grid, values=np.sin(grid.points).astype(complex))
    res = solve_kpz(zero_data, hbar)
    rep = lower_bound_check(res.hP, norm_bound=1.0)
    assert rep["infimum"] >= -1.0 - 1e-9


def test_stability_identical_inputs(smooth, grid):
    _, data = smooth
    hbar = GridField(grid, values=np.zeros(grid.num_points, complex))
    rep = stability_check(data, data, hbar, hbar)
    assert rep["lhs"] == 0.0
    assert rep["ratio"] == 0.0


def test_stability_perturbed_initial(smooth, grid):
    _, data = smooth
    hbar1 = GridField(grid, values=np.zeros(grid.num_points, complex))
    bump = np.exp(-(grid.points / 0.5) ** 2)
    ratios = []
    for eps in (0.01, 0.005):
        hbar2 = GridField(grid, values=(eps * bump).astype(complex))
        rep = stability_check(data, data, hbar1, hbar2)
        assert np.isfinite(rep["ratio"]) and rep["ratio"] > 0
        ratios.append(rep["ratio"])
    # Lipschitz: ratio stays of the same order as the bump shrinks
    assert 0.2 < ratios[1] / ratios[0] < 5.0
