import json

import numpy as np
import pytest

from parakpz.spectral import (
    Grid,
    GridField,
    WeightSpec,
    lp_block,
    lp_blocks,
    make_dyadic_partition,
    read_field,
    spectral_derivative,
    weight_eval,
    weighted_sup_norm,
    write_field,
)


@pytest.fixture
def grid():
    return Grid(num_points=256, half_length=np.pi)


@pytest.fixture
def part(grid):
    return make_dyadic_partition(grid)


def random_field(grid, rng, kmax_frac=0.25):
    k = grid.wavenumbers
    c = rng.standard_normal(grid.num_points) + 1j * rng.standard_normal(grid.num_points)
    c[np.abs(k) > kmax_frac * grid.max_wavenumber] = 0.0
    return GridField(grid, coeffs=c)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(100, 1.0)       # not a power of two
    with pytest.raises(ValueError):
        Grid(4, 1.0)         # too small
    with pytest.raises(ValueError):
        Grid(64, -1.0)


def test_fft_roundtrip(grid):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(grid.num_points)
    f = GridField(grid, values=v.astype(complex))
    back = GridField(grid, coeffs=f.coeffs)
    assert np.max(np.abs(back.values - v)) < 1e-12


def test_coeff_is_plane_wave_amplitude(grid):
    # f = 3 e^{i 5 x} must have coefficient 3 at k = 5
    x = grid.points
    f = GridField(grid, values=3.0 * np.exp(5j * x))
    k = grid.wavenumbers
    idx = np.argmin(np.abs(k - 5.0))
    assert abs(f.coeffs[idx] - 3.0) < 1e-12
    rest = np.abs(f.coeffs).sum() - abs(f.coeffs[idx])
    assert rest < 1e-10


def test_partition_of_unity(part):
    total = part.rho.sum(axis=0)
    assert np.max(np.abs(total - 1.0)) < 1e-12


def test_partition_block_supports(part, grid):
    k = np.abs(grid.wavenumbers)
    for j in range(0, part.j_max + 1):
        w = part.window(j)
        assert np.all(w[k < 0.75 * part.k0 * 2 ** j * 0.99] == 0.0)
        assert np.all(w[k > (8.0 / 3.0) * part.k0 * 2 ** j * 1.01] == 0.0)


def test_single_mode_lands_in_one_block(grid, part):
    # pick k in the flat interior of some annulus
    j = 3
    ktarget = 11.0  # inside [4/3*2^j, 3/4*2^{j+1}] = [10.67, 12] flat region
    idx = np.argmin(np.abs(grid.wavenumbers - ktarget))
    c = np.zeros(grid.num_points, complex)
    c[idx] = 1.0
    f = GridField(grid, coeffs=c)
    for jj in range(-1, part.j_max + 1):
        b = lp_block(f, jj, part)
        expected = 1.0 if jj == j else 0.0
        assert abs(b.sup_norm() - expected) < 1e-12, (jj, b.sup_norm())


def test_blocks_sum_to_identity(grid, part):
    rng = np.random.default_rng(1)
    f = random_field(grid, rng, kmax_frac=1.0)
    blocks = lp_blocks(f.coeffs, part)
    recon = blocks.sum(axis=0)
    assert np.max(np.abs(recon - f.values)) < 1e-10


def test_spectral_derivative_sin(grid):
    x = grid.points
    f = GridField(grid, values=np.sin(3 * x).astype(complex))
    df = spectral_derivative(f)
    assert np.max(np.abs(df.values - 3 * np.cos(3 * x))) < 1e-11


def test_second_derivative(grid):
    x = grid.points
    f = GridField(grid, values=np.exp(np.cos(x)).astype(complex))
    d2 = spectral_derivative(f, order=2).real_values
    exact = (np.sin(x) ** 2 - np.cos(x)) * np.exp(np.cos(x))
    assert np.max(np.abs(d2 - exact)) < 1e-9


def test_bernstein_band(grid, part):
    """Derivative of a block-j field costs a factor ~2^j, within a factor 2."""
    rng = np.random.default_rng(2)
    for j in range(2, part.j_max - 1):
        f = random_field(grid, rng, kmax_frac=1.0)
        b = lp_block(f, j, part)
        if b.sup_norm() < 1e-13:
            continue
        ratio = spectral_derivative(b).sup_norm() / b.sup_norm() / 2.0 ** j
        assert 0.5 < ratio < 4.0, (j, ratio)


def test_weight_values():
    poly = WeightSpec(kind="poly", a=4.0)
    assert abs(weight_eval(poly, 1.0) - 16.0) < 1e-14
    assert abs(weight_eval(poly, 0.0) - 1.0) < 1e-14
    sub = WeightSpec(kind="subexp", l=2.0, delta=0.5)
    assert abs(weight_eval(sub, 1.0) - np.e ** 2) < 1e-12
    coupled = WeightSpec(kind="subexp", l=1.0, delta=0.5, time_coupled=True)
    assert weight_eval(coupled, 4.0, t=1.0) == pytest.approx(np.exp(4.0))
    with pytest.raises(ValueError):
        weight_eval(sub, 1.0, t=-0.5)


def test_weighted_sup_norm(grid):
    f = GridField(grid, values=np.ones(grid.num_points, complex))
    w = WeightSpec(kind="poly", a=2.0)
    # sup of 1/(1+|x|)^2 is at x = 0
    assert weighted_sup_norm(f, w) == pytest.approx(1.0)


def test_serialization_roundtrip(tmp_path, grid):
    rng = np.random.default_rng(3)
    f = random_field(grid, rng)
    path = tmp_path / "field.bin"
    write_field(f, path, meta={"label": "demo"})
    g, meta = read_field(path)
    assert g.grid == grid
    assert np.max(np.abs(g.values - f.values)) < 1e-15
    assert meta["label"] == "demo"
    sidecar = json.loads((tmp_path / "field.bin.json").read_text())
    assert sidecar["format"] == "parakpz-gridfield"


def test_partition_too_coarse():
    g = Grid(8, 100.0)  # kmax tiny, default k0 too large for the spectrum
    with pytest.raises(ValueError):
        make_dyadic_partition(g)
