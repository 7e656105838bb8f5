"""Closed-form limit densities and two quadrature identities.

Densities: the Gaussian phi, the meander endpoint phi+(x) = x exp(-x^2/2)
on x >= 0, the positive stable-1/2 density, the density of the limit
renewal measure mu, and the Brownian first-passage density g(a, t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import QuadratureFailure

SQRT_2PI = math.sqrt(2 * math.pi)
KINDS = ("gauss", "meander_endpoint", "stable_half", "mu_density", "first_passage")


def gauss(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT_2PI


def meander_endpoint(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x * np.exp(-0.5 * x * x), 0.0)


def meander_cdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-0.5 * x * x), 0.0)


def stable_half(x):
    """Positive stable law of index 1/2: exp(-1/2x) / (sqrt(2 pi) x^1.5)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(-0.5 / x) / (SQRT_2PI * x**1.5)
    return np.where(x > 0, out, 0.0)


def stable_half_cdf(x):
    """2 (1 - Phi(1 / sqrt x))."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, 2.0 * ndtr(-1.0 / np.sqrt(np.where(x > 0, x, 1.0))), 0.0)


def mu_density(alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    ok = (alpha > 0) & (beta >= 0)
    a = np.where(ok, alpha, 1.0)
    out = beta / (SQRT_2PI * a**1.5) * np.exp(-beta * beta / (2 * a))
    return np.where(ok, out, 0.0)


def first_passage(a, t):
    """Density g(a, t) of the hitting time of level a > 0 by Brownian motion."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    ok = t > 0
    tt = np.where(ok, t, 1.0)
    out = a / (SQRT_2PI * tt**1.5) * np.exp(-a * a / (2 * tt))
    return np.where(ok, out, 0.0)


@dataclass(frozen=True)
class LimitDensity:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")

    def __call__(self, *points):
        return eval_density(self, *points)


def eval_density(d: LimitDensity, *points):
    if d.kind == "gauss":
        return gauss(*points)
    if d.kind == "meander_endpoint":
        return meander_endpoint(*points)
    if d.kind == "stable_half":
        return stable_half(*points)
    if d.kind == "mu_density":
        return mu_density(*points)
    if len(points) == 1:
        return first_passage(d.params["a"], points[0])
    return first_passage(*points)


# Integration cutoffs: for gauss and the meander endpoint the integrand is
# below 1e-16 beyond |x| = 8.6; the stable-1/2 density is integrated in
# y = x^{-1/2}, where it becomes 2 phi(y) on (0, inf), cut at the same 8.6
# since the remaining mass 2 (1 - Phi(8.6)) is below 1e-17.
CUTOFF = 8.6


def total_mass(kind: str) -> tuple[float, float]:
    """(integral, error estimate) of a probability density over its domain."""
    if kind == "gauss":
        f, lo, hi = (lambda x: float(gauss(x))), -CUTOFF, CUTOFF
    elif kind == "meander_endpoint":
        f, lo, hi = (lambda x: float(meander_endpoint(x))), 0.0, CUTOFF
    elif kind == "stable_half":
        # x = y^-2, dx = 2 y^-3 dy
        f, lo, hi = (lambda y: float(stable_half(y**-2.0)) * 2.0 / y**3 if y > 0 else 0.0), 0.0, CUTOFF
    else:
        raise ValueError(f"{kind} is not a probability density")
    val, err = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val, err


# -- meander and first-passage identities -----------------------------------

def _meander_inner(z: float, x: float) -> float:
    """int_0^1 w exp(-(x^2/2)[w^2/z + (1-w)^2/(1-z)]) dw."""
    c = 0.5 * x * x

    def f(w):
        return w * math.exp(-c * (w * w / z + (1 - w) ** 2 / (1 - z)))

    # the exponent is minimal at w = z; give quad the peak
    val, err = integrate.quad(f, 0.0, 1.0, points=[z], epsabs=1e-15, epsrel=1e-12, limit=200)
    return val, err


def meander_integral(x: float) -> tuple[float, float]:
    """(value, error) of the double integral side of the meander identity.

    z^{-3/2} at 0 is handled with z = s^2 on [0, 1/2]; (1 - z)^{-1/2} at 1
    with 1 - z = u^2 on [1/2, 1].
    """
    errs = []

    def left(s):
        if s == 0.0:
            return 0.0
        z = s * s
        val, e = _meander_inner(z, x)
        errs.append(e)
        return 2.0 * s * val / (z**1.5 * math.sqrt(1 - z))

    def right(u):
        if u == 0.0:
            return 0.0
        z = 1.0 - u * u
        val, e = _meander_inner(z, x)
        errs.append(e)
        return 2.0 * val / z**1.5

    h = math.sqrt(0.5)
    v1, e1 = integrate.quad(left, 0.0, h, epsabs=1e-13, epsrel=1e-11, limit=200)
    v2, e2 = integrate.quad(right, 0.0, h, epsabs=1e-13, epsrel=1e-11, limit=200)
    scale = x * x / SQRT_2PI
    inner_err = max(errs, default=0.0) * 2.0
    return scale * (v1 + v2), scale * (e1 + e2 + inner_err)


def meander_identity_residual(x: float, tol: float = 1e-6) -> float:
    """|x exp(-x^2/2) - double integral| at a point x > 0."""
    if x <= 0:
        raise ValueError("x must be positive")
    val, err = meander_integral(x)
    if err > tol:
        raise QuadratureFailure(f"meander integral at x={x}: error estimate {err:.2e} > {tol:g}")
    return abs(x * math.exp(-0.5 * x * x) - val)


def _g(a: float, t: float) -> float:
    if t <= 0.0 or a <= 0.0:
        return 0.0
    expo = a * a / (2 * t)
    if expo > 700.0:
        return 0.0
    return a / (SQRT_2PI * t**1.5) * math.exp(-expo)


def first_passage_slice(x: float, w: float) -> tuple[float, float]:
    """int_0^1 g(w x, z) g((1 - w) x, 1 - z) dz.

    The factors spike at z ~ (w x)^2 and 1 - z ~ ((1 - w) x)^2, which get
    arbitrarily narrow as w nears 0 or 1; each half of [0, 1] is therefore
    integrated in the log of the distance to its endpoint.
    """
    a1, a2 = w * x, (1 - w) * x
    top = math.log(0.5)

    def near0(s):
        z = math.exp(s)
        return _g(a1, z) * _g(a2, 1 - z) * z

    def near1(s):
        y = math.exp(s)
        return _g(a1, 1 - y) * _g(a2, y) * y

    v1, e1 = integrate.quad(near0, -np.inf, top, epsabs=1e-15, epsrel=1e-12, limit=400)
    v2, e2 = integrate.quad(near1, -np.inf, top, epsabs=1e-15, epsrel=1e-12, limit=400)
    return v1 + v2, e1 + e2


def first_passage_convolution_check(x: float, tol: float = 1e-6) -> float:
    """|g(x, 1) - int_0^1 int_0^1 g(w x, z) g((1 - w) x, 1 - z) dz dw|."""
    if x <= 0:
        raise ValueError("x must be positive")
    errs = []

    def outer(w):
        if w <= 0.0 or w >= 1.0:
            # the slice tends to g(x, 1) at both ends
            return _g(x, 1.0)
        v, e = first_passage_slice(x, w)
        errs.append(e)
        return v

    val, err = integrate.quad(outer, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)
    total_err = err + max(errs, default=0.0)
    if total_err > tol:
        raise QuadratureFailure(f"first-passage check at x={x}: error estimate {total_err:.2e}")
    return abs(_g(x, 1.0) - val)
