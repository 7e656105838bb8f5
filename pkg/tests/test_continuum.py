from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab import continuum
from fluctlab.continuum import GridDensity
from fluctlab.errors import GridMismatch
from fluctlab.simulate import make_rng

DELTA = 1 / 64


@pytest.fixture(scope="module")
def uni():
    return continuum.uniform_step()


@pytest.fixture(scope="module")
def sweep(uni):
    return continuum.density_sweep(uni, [16, 64, 256], h=64 * uni.grid_step)


def test_uniform_step_mass_and_variance():
    d = continuum.uniform_step(DELTA)
    assert d.integral() == pytest.approx(1.0, abs=1e-13)
    assert continuum.grid_variance(d) == pytest.approx(1 / 3, abs=10 * DELTA**2)


def test_triangle_peak():
    d = continuum.uniform_step(DELTA)
    tri = continuum.grid_self_convolve(d, d)
    assert tri.value_at(0.0) == pytest.approx(0.5, abs=2 * DELTA)
    assert tri.integral() == pytest.approx(1.0, abs=1e-12)


def test_spike_is_approximate_identity():
    d = continuum.uniform_step(DELTA)
    tri = continuum.grid_self_convolve(d, d)
    spike = GridDensity(DELTA, 0, np.array([1 / DELTA]))
    out = continuum.grid_self_convolve(tri, spike)
    assert out.i0 == tri.i0
    assert np.max(np.abs(out.values - tri.values)) <= 5 * DELTA


def test_symmetric_output():
    d = continuum.uniform_step(DELTA)
    out = continuum.grid_self_convolve(continuum.grid_self_convolve(d, d), d)
    assert out.i0 == -(out.i0 + len(out.values) - 1)
    assert np.array_equal(out.values, out.values[::-1])


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        continuum.grid_self_convolve(continuum.uniform_step(DELTA), continuum.uniform_step(DELTA / 2))


def test_n1_positive_density():
    d = continuum.uniform_step(DELTA)
    pos, surv = continuum.positive_grid_density(d, 1)
    assert surv == pytest.approx(0.5, abs=1e-12)
    inner = (pos.x > DELTA) & (pos.x < 1 - DELTA)
    assert np.allclose(pos.values[inner] / surv, 1.0, atol=1e-12)
    assert pos.x[0] == 0.0 and pos.jump_at_start


def test_survival_decreasing(uni):
    surv = [d.integral() for d in continuum.iter_grid_densities(uni, 30, kill=True)]
    assert all(b < a for a, b in zip(surv, surv[1:]))


def test_n2_survival_exact_and_monte_carlo(uni):
    _, surv = continuum.positive_grid_density(uni, 2)
    assert surv == pytest.approx(3 / 8, abs=10 * uni.grid_step**2 * 2)
    count = 10**7
    x = make_rng(20240601).uniform(-1, 1, size=(count, 2))
    hits = int(np.sum((x[:, 0] > 0) & (x[:, 0] + x[:, 1] > 0)))
    sd = math.sqrt(surv * (1 - surv) / count)
    assert abs(hits / count - surv) <= 3 * sd


def test_integral_budget(uni):
    for d in continuum.iter_grid_densities(uni, 64, kill=False):
        assert abs(d.integral() - 1) <= 10 * uni.grid_step**2 * d.n
        assert np.all(d.values >= 0)


def test_density_errors_decrease(sweep):
    cond = [r["cond"] for r in sweep]
    uncond = [r["uncond"] for r in sweep]
    assert cond[0] > cond[1] > cond[2] and cond[2] < 0.05
    assert uncond[0] > uncond[1] > uncond[2] and uncond[2] < 0.05


def test_stone_llt_fixed_h_decreasing(sweep):
    u = [r["llt_uncond"] for r in sweep]
    c = [r["llt_cond"] for r in sweep]
    assert u[0] > u[1] > u[2]
    assert c[0] > c[1] > c[2]


def test_stone_llt_h_zero(uni):
    assert continuum.stone_llt_error(uni, 4, 0.0) == {"uncond": 0.0, "cond": 0.0}


def test_stone_llt_h_off_grid(uni):
    with pytest.raises(GridMismatch):
        continuum.stone_llt_error(uni, 4, 1.5 * uni.grid_step)


def test_stone_llt_scaled_window(uni):
    n = 256
    sigma = math.sqrt(continuum.grid_variance(uni))
    cells = round(sigma * math.sqrt(n) / 10 / uni.grid_step)
    err = continuum.stone_llt_error(uni, n, cells * uni.grid_step)
    assert err["uncond"] < 0.05


def test_grid_refinement(uni):
    n = 16
    coarse = continuum.density_sweep(uni, [n])[0]
    fine = continuum.density_sweep(continuum.uniform_step(uni.grid_step / 2), [n])[0]
    budget = 10 * uni.grid_step**2 * n
    for key in ("uncond", "cond"):
        assert abs(coarse[key] - fine[key]) < 4 * budget


def test_csv_header(uni):
    assert uni.to_csv().splitlines()[0] == "x,value"
