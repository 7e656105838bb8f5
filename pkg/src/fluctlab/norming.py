"""Norming sequences for the ladder process.

The epoch scale b(n) solves

    log(n / sqrt(2)) = sum_{m>=1} (rho_m / m) exp(-m / b),   rho_m = P(S_m > 0),

for real n >= 2, and c(n) = a(b(n)). The series is known exactly up to a
depth ``M``. Beyond it two tail treatments exist:

``"bound"``
    the only uniform information, rho_m <= 1, gives
    0 <= tail <= sum_{m>M} exp(-m/b) / m; solvers refuse to return when that
    bound exceeds ``tail_tol``.
``"extrapolate"``
    rho_m is replaced by 1/2 + kappa / sqrt(m) with kappa fitted on
    ``(M/2, M]``. Needed when b is far beyond any reachable depth; results
    are estimates, and the returned tail size is that of the modelled correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erfc

from . import exact_dp
from .errors import HorizonTooLarge, OutOfRange, TruncationInsufficient
from .ladder import first_ladder_joint
from .walk_core import StepLaw, first_positive_index, norming_a

SQRT2 = math.sqrt(2.0)


def rho_sequence(step: StepLaw, M: int, max_window: int = exact_dp.DEFAULT_MAX_WINDOW):
    """Arrays (rho, rho_bar) of length M + 1; index m holds P(S_m > 0), P(S_m <= 0).

    Index 0 holds (0, 1) so that rho + rho_bar = 1 throughout.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    kernel = step.kernel()
    masses = np.ones(1)
    k_min = 0
    rho = np.zeros(M + 1)
    rho_bar = np.zeros(M + 1)
    rho_bar[0] = 1.0
    for m in range(1, M + 1):
        masses = np.convolve(masses, kernel)
        big = np.flatnonzero(masses >= exact_dp.EDGE_DROP)
        lo, hi = big[0], big[-1]
        masses = masses[lo : hi + 1]
        k_min += int(lo)
        if len(masses) > max_window:
            raise HorizonTooLarge(f"window too large at m={m}")
        cut = min(max(first_positive_index(step, m) - k_min, 0), len(masses))
        rho[m] = masses[cut:].sum()
        rho_bar[m] = masses[:cut].sum()
    return rho, rho_bar


def _harmonic_tail(M: int, b: float, weights_sum: float) -> float:
    """sum_{m>M} exp(-m/b)/m given the partial sum over m <= M."""
    full = -math.log(-math.expm1(-1.0 / b))
    return max(full - weights_sum, 0.0)


def _power_tail(M: int, b: float) -> float:
    """sum_{m>M} m^{-3/2} exp(-m/b) by the midpoint integral."""
    z = (M + 0.5) / b
    sz = math.sqrt(z)
    gamma = 2.0 * (math.exp(-z) / sz - math.sqrt(math.pi) * erfc(sz))
    return gamma / math.sqrt(b)


@dataclass(frozen=True)
class NormingData:
    step: StepLaw
    rho: np.ndarray
    rho_bar: np.ndarray
    tail: str = "bound"
    tail_tol: float = 1e-9
    kappa: float = 0.0

    @property
    def M(self) -> int:
        return len(self.rho) - 1

    def a(self, t: float) -> float:
        return norming_a(self.step, t)

    def _terms(self, b: float, which: np.ndarray) -> tuple[float, float]:
        m = np.arange(1, self.M + 1)
        decay = np.exp(-m / b)
        part = float(np.sum(which[1:] / m * decay))
        harm = float(np.sum(decay / m))
        return part, harm

    def series(self, b: float, which: np.ndarray | None = None) -> tuple[float, float]:
        """(value, tail) of sum_m (w_m/m) exp(-m/b), w = rho by default.

        In ``"bound"`` mode ``value`` is the truncated sum and ``tail`` the
        rigorous upper bound on what is missing; in ``"extrapolate"`` mode
        ``value`` includes the modelled tail and ``tail`` is its size.
        """
        which = self.rho if which is None else which
        part, harm = self._terms(b, which)
        bound = _harmonic_tail(self.M, b, harm)
        if self.tail == "bound":
            return part, bound
        sign = 1.0 if which is self.rho else -1.0
        est = 0.5 * bound + sign * self.kappa * _power_tail(self.M, b)
        return part + est, abs(est)

    def _checked(self, b: float) -> float:
        value, tail = self.series(b)
        if self.tail == "bound" and tail > self.tail_tol:
            raise TruncationInsufficient(
                f"series tail bound {tail:.3e} at b={b:.6g} exceeds {self.tail_tol:g}; raise M={self.M}"
            )
        return value

    def b(self, n: float, rtol: float = 1e-10) -> float:
        return solve_b(self, n, rtol)

    def c(self, n: float) -> float:
        return self.a(self.b(n))

    def b_inverse(self, t: float) -> float:
        return b_inverse(self, t)

    def c_inverse(self, x: float) -> float:
        """n with c(n) = x."""
        return self.b_inverse((x / self.step.sigma) ** 2)


def build_norming(step: StepLaw, M: int, tail: str = "bound", tail_tol: float = 1e-9) -> NormingData:
    rho, rho_bar = rho_sequence(step, M)
    return with_tail(NormingData(step, rho, rho_bar, "bound", tail_tol), tail)


def with_tail(norming: NormingData, tail: str) -> NormingData:
    """Same rho arrays under another tail treatment."""
    if tail not in ("bound", "extrapolate"):
        raise ValueError(f"unknown tail mode {tail!r}")
    kappa = 0.0
    if tail == "extrapolate":
        M = norming.M
        m = np.arange(M // 2 + 1, M + 1)
        kappa = float(np.mean((norming.rho[m] - 0.5) * np.sqrt(m)))
    return replace(norming, tail=tail, kappa=kappa)


def solve_b(norming: NormingData, n: float, rtol: float = 1e-10) -> float:
    """Root b of the defining series equation, by bisection in log b."""
    if n < 2:
        raise OutOfRange("b(n) is defined for n >= 2")
    target = math.log(n / SQRT2)
    lo, hi = 1.0, max(float(n) ** 3, 2.0)
    while norming.series(lo)[0] > target:
        lo /= 2.0
        if lo < 1e-12:
            raise OutOfRange(f"no bracket for n={n}")
    while norming.series(hi)[0] < target:
        hi *= 2.0
        if hi > 1e30:
            raise TruncationInsufficient(f"series depth M={norming.M} cannot reach log(n/sqrt 2) for n={n}")
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if norming.series(mid)[0] < target:
            lo = mid
        else:
            hi = mid
    b = math.sqrt(lo * hi)
    norming._checked(b)
    return b


def b_inverse(norming: NormingData, t: float) -> float:
    """n with b(n) = t, read off the defining equation: sqrt(2) exp(series(t))."""
    value = norming._checked(t)
    n = SQRT2 * math.exp(value)
    if n < 2.0 * (1 - 1e-12):
        raise OutOfRange(f"t={t} is below b(2)")
    return n


@dataclass(frozen=True)
class SurvivalAsymptotics:
    n: int
    exact: float
    spitzer: float
    limit_form: float
    b_inv: float

    @property
    def ratio_limit(self) -> float:
        return self.exact / self.limit_form

    @property
    def ratio_spitzer(self) -> float:
        return self.exact / self.spitzer


def spitzer_log(norming: NormingData, t: float) -> float:
    """-log(1 - psi(t)) = sum_m (rho_bar_m / m) exp(-m t)."""
    value, tail = norming.series(1.0 / t, norming.rho_bar)
    if norming.tail == "bound" and tail > norming.tail_tol:
        raise TruncationInsufficient(f"tail bound {tail:.3e} at t={t:g}; raise M={norming.M}")
    return value


def survival_asymptotics(step: StepLaw, n: int, norming: NormingData) -> SurvivalAsymptotics:
    """Exact P(C_n) next to its Spitzer-Tauberian and b^{-1}(n)/n forms."""
    if n < 1:
        raise ValueError("n must be >= 1")
    exact = exact_dp.positive_part_pmf(step, n).survival
    one_minus_psi = math.exp(-spitzer_log(norming, 1.0 / n))
    binv = b_inverse(norming, n)
    return SurvivalAsymptotics(
        n=n,
        exact=exact,
        spitzer=one_minus_psi / math.sqrt(math.pi),
        limit_form=binv / (n * math.sqrt(2 * math.pi)),
        b_inv=binv,
    )


def stable_tail_check(step: StepLaw, n: int, norming: NormingData, first=None) -> float:
    """P(T_1 > b_n) * n * sqrt(pi/2); tends to 1."""
    b = solve_b(norming, n)
    horizon = int(math.floor(b))
    if first is None or first.horizon < horizon:
        first = first_ladder_joint(step, max(horizon, 1))
    return float(first.tail()[horizon]) * n * math.sqrt(math.pi / 2)


def norming_report_rows(step: StepLaw, norming: NormingData, ns) -> list[dict]:
    rows = []
    for n in ns:
        s = survival_asymptotics(step, int(n), norming)
        try:
            b = solve_b(norming, n) if n >= 2 else float("nan")
        except TruncationInsufficient:
            # b(n) needs a deeper series than P(C_n) and b^{-1}(n) do
            b = float("nan")
        rows.append(
            {
                "n": int(n),
                "b_n": b,
                "c_n": norming.a(b) if b == b else float("nan"),
                "b_inv_n": s.b_inv,
                "P_Cn_exact": s.exact,
                "P_Cn_limit": s.limit_form,
                "ratio": s.ratio_limit,
            }
        )
    return rows
