from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab import limits
from fluctlab.limits import LimitDensity


def test_point_values():
    assert float(limits.gauss(0)) == pytest.approx(0.3989422804014327, abs=1e-16)
    assert float(limits.meander_endpoint(1)) == pytest.approx(0.6065306597126334, abs=1e-15)
    assert float(limits.meander_endpoint(-1)) == 0.0


def test_limit_density_dispatch():
    assert LimitDensity("gauss")(0.0) == limits.gauss(0.0)
    assert LimitDensity("first_passage", {"a": 1.0})(1.0) == pytest.approx(float(limits.gauss(1.0)))
    with pytest.raises(ValueError):
        LimitDensity("cauchy")


@pytest.mark.parametrize("kind", ["gauss", "meander_endpoint", "stable_half"])
def test_densities_integrate_to_one(kind):
    val, err = limits.total_mass(kind)
    assert abs(val - 1) <= 1e-10


def test_meander_is_scaled_gauss():
    x = np.linspace(0.01, 8, 400)
    assert np.max(np.abs(limits.meander_endpoint(x) - math.sqrt(2 * math.pi) * x * limits.gauss(x))) <= 1e-14


def test_stable_half_cdf():
    from scipy import integrate

    for x in (0.1, 1.0, 10.0):
        val, _ = integrate.quad(lambda y: float(limits.stable_half(y)), 0, x, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert abs(val - float(limits.stable_half_cdf(x))) <= 1e-10


@pytest.mark.parametrize("x", [1e-3, 0.5, 1.0, 2.0])
def test_meander_identity(x):
    assert limits.meander_identity_residual(x) < 1e-6


def test_meander_identity_rejects_nonpositive():
    with pytest.raises(ValueError):
        limits.meander_identity_residual(0.0)


@pytest.mark.parametrize("x", [0.5, 1.0])
def test_first_passage_convolution(x):
    assert limits.first_passage_convolution_check(x) < 1e-6


def test_first_passage_slice_midpoint():
    val, err = limits.first_passage_slice(1.0, 0.5)
    assert val == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi), abs=1e-12)
