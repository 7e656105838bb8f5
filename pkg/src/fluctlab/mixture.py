"""The conditioned law as a mixture of unconditioned laws.

For n > 1 and x > 0,

    n P(C_n, S_n = x) = sum_{m<n} sum_{z<x} u(m, z) P(S_{n-m} = x - z),

with u the ladder renewal mass. :func:`mixture_conditioned_law` evaluates
the right side in lattice coordinates; it is an exact identity and is
compared to the killed DP to ~1e-13. :class:`MixtureMeasure` is the same
renewal mass rescaled to [0, 1) x [0, inf), which converges weakly to the
measure with density beta exp(-beta^2 / 2 alpha) / (sqrt(2 pi) alpha^1.5).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import exact_dp
from .errors import HorizonTooLarge, QuadratureFailure, ZeroSurvival
from .ladder import LadderTable, build_ladder_table, weak_descending_epoch_pmf
from .norming import NormingData, b_inverse
from .walk_core import LatticePMF, StepLaw, first_positive_index, norming_a

SQRT_2PI = math.sqrt(2 * math.pi)
# atoms lighter than this (relative to the (0,0) atom) are not stored
ATOM_FLOOR = 1e-22


@dataclass(frozen=True)
class MixtureMeasure:
    """Atoms of mu_n sorted by alpha = m/n; weights already divided by b^{-1}(n)."""

    n: int
    alpha: np.ndarray
    beta: np.ndarray
    weight: np.ndarray
    b_inv: float
    dropped: float = 0.0

    @property
    def total(self) -> float:
        return math.fsum(self.weight.tolist())

    def F(self, a: float, b: float) -> float:
        return F_n_eval(self, a, b)


def _renewal_rows(step: StepLaw, n: int, ladder: LadderTable | None):
    """Yield (m, k_min, masses) of u(m, .) for m = 0..n-1."""
    if ladder is not None:
        if ladder.horizon < n - 1:
            raise HorizonTooLarge(f"ladder horizon {ladder.horizon} < n - 1 = {n - 1}")
        for m in range(n):
            row = ladder.u_nx[m]
            nz = np.flatnonzero(row)
            if len(nz):
                yield m, int(nz[0]), row[nz[0] : nz[-1] + 1]
        return
    # duality: u(m, .) is the killed law at time m
    for p in exact_dp.iter_pmfs(step, n - 1, kill=True):
        yield p.n, p.k_min, p.masses


def build_mu_n(
    step: StepLaw,
    n: int,
    norming: NormingData,
    ladder: LadderTable | None = None,
    floor: float = ATOM_FLOOR,
) -> MixtureMeasure:
    """Rescaled renewal measure mu_n, summed over the ladder index.

    With ``ladder=None`` the renewal rows are taken from the killed walk,
    which equals u(m, .) by the duality identity; this is the only feasible
    route for n in the thousands.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    binv = b_inverse(norming, n) if n >= 2 else 1.0
    a_n = norming_a(step, n)
    al, be, we = [], [], []
    dropped = []
    for m, k0, masses in _renewal_rows(step, n, ladder):
        keep = masses >= floor
        dropped.append(float(masses[~keep].sum()))
        k = k0 + np.flatnonzero(keep)
        z = step.lattice_shift * m + step.lattice_span * k
        al.append(np.full(len(k), m / n))
        be.append(z / a_n)
        we.append(masses[keep] / binv)
    return MixtureMeasure(
        n=n,
        alpha=np.concatenate(al),
        beta=np.concatenate(be),
        weight=np.concatenate(we),
        b_inv=binv,
        dropped=math.fsum(dropped) / binv,
    )


def F_n_eval(mu_n: MixtureMeasure, a: float, b: float) -> float:
    """mu_n([0, a] x [0, b]) by atom summation."""
    stop = np.searchsorted(mu_n.alpha, a * (1 + 1e-12), side="right")
    beta = mu_n.beta[:stop]
    w = mu_n.weight[:stop]
    if math.isinf(b):
        return float(w.sum())
    return float(w[beta <= b * (1 + 1e-12)].sum())


def F_limit(a: float, b: float, tol: float = 1e-10) -> float:
    """mu([0, a] x [0, b]) for the limit measure.

    The beta integral is closed form; the alpha integral runs in s = sqrt(alpha).
    """
    if not 0 <= a <= 1 or b < 0:
        raise ValueError("need a in [0, 1] and b >= 0")
    if a == 0 or b == 0:
        return 0.0
    if math.isinf(b):
        return 2.0 * math.sqrt(a) / SQRT_2PI

    def inner(s: float) -> float:
        if s == 0.0:
            return 1.0
        return -math.expm1(-(b * b) / (2 * s * s))

    val, err = integrate.quad(inner, 0.0, math.sqrt(a), epsabs=1e-13, epsrel=1e-13, limit=200)
    if err > tol:
        raise QuadratureFailure(f"F({a}, {b}) error estimate {err:.2e} above {tol:g}")
    return 2.0 * val / SQRT_2PI


def survival_via_descending_ladder(step: StepLaw, n: int) -> float:
    """P(C_n) = P(T̄_1 > n), from the reflected walk's first passage."""
    f = weak_descending_epoch_pmf(step, n)
    return 1.0 - math.fsum(f.tolist())


def _positive_free_laws(step: StepLaw, n: int) -> list[LatticePMF]:
    """Unconditioned pmfs at times 0..n restricted to points > 0."""
    out = []
    for p in exact_dp.iter_pmfs(step, n):
        cut = min(max(first_positive_index(step, p.n) - p.k_min, 0), len(p.masses))
        out.append(LatticePMF(p.n, p.shift, p.span, p.k_min + cut, p.masses[cut:]))
    return out


def mixture_rhs(
    step: StepLaw, n: int, ladder: LadderTable, free: list[LatticePMF]
) -> LatticePMF:
    """n P(C_n, S_n = .) assembled from renewal rows and free laws."""
    lo, acc = None, None
    for m, k0, row in _renewal_rows(step, n, ladder):
        f = free[n - m]
        if len(f.masses) == 0:
            continue
        part = np.convolve(row, f.masses)
        start = k0 + f.k_min
        if acc is None:
            lo, acc = start, part
            continue
        new_lo = min(lo, start)
        new_hi = max(lo + len(acc), start + len(part))
        merged = np.zeros(new_hi - new_lo)
        merged[lo - new_lo : lo - new_lo + len(acc)] += acc
        merged[start - new_lo : start - new_lo + len(part)] += part
        lo, acc = new_lo, merged
    if acc is None:
        return LatticePMF(n, step.lattice_shift, step.lattice_span, 0, np.zeros(0))
    return LatticePMF(n, step.lattice_shift, step.lattice_span, lo, acc)


def mixture_conditioned_law(
    step: StepLaw,
    n: int,
    ladder: LadderTable | None = None,
    free: list[LatticePMF] | None = None,
) -> LatticePMF:
    """Law of S_n given C_n from the renewal mixture of free laws.

    ``ladder`` (horizon >= n - 1, complete in the ladder index) and
    ``free`` (positive parts of the free laws up to time n) may be passed in
    to share work across a sweep over n.
    """
    if n < 2:
        raise ValueError("the mixture representation needs n >= 2")
    if ladder is None:
        ladder = build_ladder_table(step, n - 1, keep_joint=False, check_duality=False)
    if ladder.k_max < min(ladder.horizon, n - 1):
        raise HorizonTooLarge("ladder table is truncated in the ladder index")
    if free is None or len(free) <= n:
        free = _positive_free_laws(step, n)
    survival = survival_via_descending_ladder(step, n)
    if survival <= 0.0:
        raise ZeroSurvival(f"P(C_{n}) = 0")
    rhs = mixture_rhs(step, n, ladder, free)
    return LatticePMF(n, rhs.shift, rhs.span, rhs.k_min, rhs.masses / (n * survival))


DEFAULT_A_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_B_GRID = (0.25, 0.5, 1.0, 2.0, math.inf)


def weak_convergence_rows(mu_n: MixtureMeasure, a_grid=DEFAULT_A_GRID, b_grid=DEFAULT_B_GRID) -> list[dict]:
    rows = []
    for a in a_grid:
        for b in b_grid:
            fn = F_n_eval(mu_n, a, b)
            f = F_limit(a, b)
            rows.append({"n": mu_n.n, "a": a, "b": b, "F_n": fn, "F": f, "abs_err": abs(fn - f)})
    return rows


def weak_convergence_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["n", "a", "b", "F_n", "F", "abs_err"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
