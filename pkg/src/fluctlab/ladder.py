"""Ladder variables of a lattice walk and their renewal measures.

Heights and epochs live on the canonical lattice of the step law: a
ladder point ``(n, k)`` is the epoch ``n`` with height
``lattice_shift * n + lattice_span * k``. Because that map is additive,
``k``-fold ladder laws are plain 2-D convolutions of the first ladder law.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import exact_dp
from .errors import DualityViolation, EmptyRange, HorizonTooLarge
from .walk_core import (
    ZERO_POINT_TOL,
    StepLaw,
    first_positive_index,
    make_lattice_step,
    norming_a,
)

DUALITY_TOL = 1e-12


def _first_nonneg_index(step: StepLaw, n: int) -> int:
    ratio = -step.lattice_shift * n / step.lattice_span
    return math.ceil(ratio - ZERO_POINT_TOL * max(1.0, abs(ratio)))


@dataclass(frozen=True)
class FirstPassageLaw:
    """Joint law of a first passage time and the position it lands on.

    ``rows[n]`` holds masses at canonical indices ``k_start[n] + i``; the
    mass not absorbed by ``horizon`` is ``defect``.
    """

    step: StepLaw
    horizon: int
    k_start: np.ndarray
    rows: list

    @property
    def epoch_pmf(self) -> np.ndarray:
        return np.array([math.fsum(r.tolist()) for r in self.rows])

    @property
    def defect(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.epoch_pmf.tolist()))

    def tail(self) -> np.ndarray:
        """P(T > n) for n = 0..horizon."""
        return np.clip(1.0 - np.cumsum(self.epoch_pmf), 0.0, 1.0)

    def mass(self, n: int, x: float) -> float:
        if n < 0 or n > self.horizon:
            return 0.0
        s = self.step
        k = (x - s.lattice_shift * n) / s.lattice_span
        kr = round(k)
        if abs(k - kr) > 1e-9:
            return 0.0
        i = kr - int(self.k_start[n])
        row = self.rows[n]
        return float(row[i]) if 0 <= i < len(row) else 0.0

    def as_dict(self) -> dict[tuple[int, float], float]:
        s = self.step
        out = {}
        for n, row in enumerate(self.rows):
            for i, m in enumerate(row):
                if m > 0:
                    x = s.lattice_shift * n + s.lattice_span * (int(self.k_start[n]) + i)
                    out[(n, float(x))] = float(m)
        return out

    def dense(self, width: int | None = None) -> np.ndarray:
        """Masses as an array indexed ``[n, k]``."""
        top = max((int(self.k_start[n]) + len(r) for n, r in enumerate(self.rows) if len(r)), default=1)
        width = max(width or 0, top)
        out = np.zeros((self.horizon + 1, width))
        for n, r in enumerate(self.rows):
            if len(r):
                k0 = int(self.k_start[n])
                out[n, k0 : k0 + len(r)] = r
        return out


def _first_passage(step: StepLaw, horizon: int, strict: bool) -> FirstPassageLaw:
    """Walk killed on entering (0, inf) (strict) or [0, inf) (weak)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    kernel = step.kernel()
    masses = np.ones(1)
    k_min = 0
    rows = [np.zeros(0)]
    starts = [0]
    edge = first_positive_index if strict else _first_nonneg_index
    for t in range(1, horizon + 1):
        masses = np.convolve(masses, kernel)
        cut = edge(step, t) - k_min
        cut = min(max(cut, 0), len(masses))
        rows.append(masses[cut:].copy())
        starts.append(k_min + cut)
        masses = masses[:cut]
        nz = np.flatnonzero(masses >= exact_dp.EDGE_DROP)
        if len(nz) == 0:
            masses = masses[:0]
            for _ in range(t + 1, horizon + 1):
                rows.append(np.zeros(0))
                starts.append(0)
            break
        masses = masses[nz[0] :]
        k_min += int(nz[0])
        if len(masses) > exact_dp.DEFAULT_MAX_WINDOW:
            raise HorizonTooLarge(f"first-passage window too large at n={t}")
    return FirstPassageLaw(step, horizon, np.asarray(starts, dtype=np.int64), rows)


def first_ladder_joint(step: StepLaw, horizon: int) -> FirstPassageLaw:
    """Law of (T_1, H_1) for T_1 <= horizon (strict ascending ladder)."""
    return _first_passage(step, horizon, strict=True)


def reflected(step: StepLaw) -> StepLaw:
    return make_lattice_step(-step.shift, step.span, [(-k, p) for k, p in zip(step.offsets, step.masses)])


def weak_descending_epoch_pmf(step: StepLaw, horizon: int) -> np.ndarray:
    """P(T̄_1 = n) for n = 0..horizon, T̄_1 = inf{n > 0 : S_n <= 0}.

    Computed as the weak ascending first passage of the reflected walk.
    """
    return _first_passage(reflected(step), horizon, strict=False).epoch_pmf


# -- the full ladder table --------------------------------------------------

@dataclass
class LadderTable:
    """Exact ladder renewal objects up to a time horizon.

    ``joint[r][n, k]`` = P(T_r = n, H_r at canonical index k) and
    ``u_nx[n, k]`` = sum over r of the same. ``dropped`` is the largest
    P(T_r <= horizon) among the omitted ``r > k_max``, bounded from above.
    """

    step: StepLaw
    horizon: int
    k_max: int
    first: FirstPassageLaw
    joint: list
    u_nx: np.ndarray
    dropped: float = 0.0
    duality_error: float = field(default=float("nan"))

    def point(self, n: int, k) -> np.ndarray:
        s = self.step
        return s.lattice_shift * n + s.lattice_span * np.asarray(k)

    @property
    def u_m(self) -> np.ndarray:
        return self.u_nx.sum(axis=1)

    @property
    def G(self) -> np.ndarray:
        """G(n) = sum_{r>=0} P(T_r <= n), n = 0..horizon."""
        return np.cumsum(self.u_m)

    def u(self, n: int, x: float) -> float:
        k = self._index(n, x)
        return 0.0 if k is None else float(self.u_nx[n, k])

    def joint_mass(self, r: int, n: int, x: float) -> float:
        k = self._index(n, x)
        if k is None or r > self.k_max:
            return 0.0
        return float(self.joint[r][n, k])

    def _index(self, n: int, x: float):
        s = self.step
        k = (x - s.lattice_shift * n) / s.lattice_span
        kr = round(k)
        if n > self.horizon or abs(k - kr) > 1e-9 or not 0 <= kr < self.u_nx.shape[1]:
            return None
        return int(kr)

    def u_row(self, n: int) -> dict[float, float]:
        ks = np.flatnonzero(self.u_nx[n])
        return {float(x): float(self.u_nx[n, k]) for k, x in zip(ks, self.point(n, ks))}

    def U(self, x: float) -> float:
        """Ladder-height renewal function; see :func:`height_renewal`."""
        return height_renewal(self.step, x, first=self.first).U(x)

    def joint_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "n", "x", "mass"])
        for r, tab in enumerate(self.joint):
            for n, k in zip(*np.nonzero(tab)):
                w.writerow([r, n, f"{self.point(n, k):.17g}", f"{tab[n, k]:.17g}"])
        return buf.getvalue()

    def u_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "x", "mass"])
        for n, k in zip(*np.nonzero(self.u_nx)):
            w.writerow([n, f"{self.point(n, k):.17g}", f"{self.u_nx[n, k]:.17g}"])
        return buf.getvalue()


def _convolve_2d(a: np.ndarray, f_entries, horizon: int) -> np.ndarray:
    """Direct 2-D convolution of ``a`` with sparse ``f``, cut at ``horizon``."""
    out = np.zeros_like(a)
    width = a.shape[1]
    for m, j, p in f_entries:
        if m > horizon or j >= width:
            continue
        out[m:, j:] += p * a[: horizon + 1 - m, : width - j]
    return out


def build_ladder_table(
    step: StepLaw,
    horizon: int,
    k_max: int | None = None,
    keep_joint: bool = True,
    check_duality: bool = True,
) -> LadderTable:
    """Assemble P(T_r = n, H_r = x) for r <= k_max and n <= horizon.

    ``k_max`` defaults to ``horizon``, which is complete because T_r >= r.
    A smaller ``k_max`` drops the r > k_max terms; the dropped mass is
    bounded by P(T_{k_max+1} <= horizon) and reported in ``dropped``.
    With the complete table the duality u(n, x) = P(C_n, S_n = x) is
    asserted to ``DUALITY_TOL``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    k_max = horizon if k_max is None else min(k_max, horizon)
    width = horizon * step.max_step + 1
    if (horizon + 1) * width * (k_max + 2 if keep_joint else 3) > exact_dp.DEFAULT_MAX_WINDOW:
        raise HorizonTooLarge(
            f"ladder table of {k_max + 1} x {horizon + 1} x {width} entries exceeds the budget"
        )
    first = first_ladder_joint(step, horizon)
    f = first.dense(width)
    entries = [(int(m), int(j), float(f[m, j])) for m, j in zip(*np.nonzero(f))]

    cur = np.zeros((horizon + 1, width))
    cur[0, 0] = 1.0
    joint = [cur] if keep_joint else []
    u = cur.copy()
    for r in range(1, k_max + 1):
        cur = _convolve_2d(cur, entries, horizon)
        u += cur
        if keep_joint:
            joint.append(cur)
    dropped = 0.0
    if k_max < horizon:
        dropped = float(_convolve_2d(cur, entries, horizon).sum())

    table = LadderTable(step, horizon, k_max, first, joint, u, dropped)
    if check_duality and k_max == horizon:
        table.duality_error = duality_discrepancy(table)
        if table.duality_error > DUALITY_TOL:
            raise DualityViolation(
                f"u(n,x) differs from P(C_n, S_n = x) by {table.duality_error:.3e}"
            )
    return table


def duality_discrepancy(table: LadderTable) -> float:
    """sup over n <= horizon, x of |u(n,x) - P(C_n, S_n = x)|."""
    worst = 0.0
    for n, killed in enumerate(exact_dp.iter_pmfs(table.step, table.horizon, kill=True)):
        row = table.u_nx[n].copy()
        lo = killed.k_min
        hi = lo + len(killed.masses)
        if hi > len(row):
            worst = max(worst, float(killed.masses[len(row) - lo :].max()))
            hi = len(row)
        row[lo:hi] -= killed.masses[: hi - lo]
        worst = max(worst, float(np.abs(row).max()))
    return worst


# -- renewal functions valid beyond the table horizon -----------------------

def epoch_renewal(step: StepLaw, horizon: int, first: FirstPassageLaw | None = None) -> np.ndarray:
    """G(n) = sum_{r>=0} P(T_r <= n) for n = 0..horizon, via the renewal equation."""
    first = first if first is not None and first.horizon >= horizon else first_ladder_joint(step, horizon)
    f = first.epoch_pmf[: horizon + 1]
    g = np.zeros(horizon + 1)
    g[0] = 1.0
    nz = np.flatnonzero(f)
    for n in range(1, horizon + 1):
        m = nz[(nz >= 1) & (nz <= n)]
        g[n] = float(np.dot(f[m], g[n - m]))
    return np.cumsum(g)


@dataclass(frozen=True)
class HeightRenewal:
    """Renewal function U of the ladder heights on a grid ``unit * Z``.

    ``masses[i]`` is sum_r P(H_r = i * unit). ``defect`` is P(T_1 > horizon)
    for the first ladder law the height distribution was read from; it is
    zero in effect when the upward steps are a single lattice unit, where
    H_1 is deterministic.
    """

    unit: float
    masses: np.ndarray
    defect: float
    exact: bool

    @property
    def x_max(self) -> float:
        return self.unit * (len(self.masses) - 1)

    def U(self, x: float) -> float:
        """sum_r P(H_r <= x)."""
        i = math.floor(x / self.unit + 1e-9)
        if i < 0:
            return 0.0
        if i >= len(self.masses):
            raise ValueError(f"x = {x} beyond the computed range {self.x_max}")
        return float(np.sum(self.masses[: i + 1]))

    def U_left(self, x: float) -> float:
        """sum_r P(H_r < x), the U(x - 1) of an integer-valued walk."""
        i = math.ceil(x / self.unit - 1e-9) - 1
        if i < 0:
            return 0.0
        if i >= len(self.masses):
            raise ValueError(f"x = {x} beyond the computed range {self.x_max}")
        return float(np.sum(self.masses[: i + 1]))

    def interval(self, z: float, width: float) -> float:
        """U([z, z + width))."""
        return self.U_left(z + width) - self.U_left(z)

    def csv(self) -> str:
        cum = np.cumsum(self.masses)
        lines = ["x,value"] + [f"{i * self.unit:.17g},{v:.17g}" for i, v in enumerate(cum)]
        return "\n".join(lines) + "\n"


def height_unit(step: StepLaw) -> float:
    """Grid step containing every ladder height (n*shift + span*k)."""
    q = Fraction(step.lattice_shift / step.lattice_span).limit_denominator(10**6)
    if abs(float(q) - step.lattice_shift / step.lattice_span) > 1e-12:
        raise ValueError("shift/span is not rational; heights are not on a grid")
    return step.lattice_span / q.denominator


def height_renewal(
    step: StepLaw, x_max: float, horizon: int = 2000, first: FirstPassageLaw | None = None
) -> HeightRenewal:
    """Renewal masses of the ladder heights on ``[0, x_max]``.

    The law of H_1 is read from the first ladder law up to ``horizon`` and
    renormalized by P(T_1 <= horizon).
    """
    first = first if first is not None else first_ladder_joint(step, horizon)
    unit = height_unit(step)
    size = int(math.floor(x_max / unit + 1e-9)) + 1
    h = np.zeros(size)
    for (n, x), m in first.as_dict().items():
        i = int(round(x / unit))
        if i < size:
            h[i] += m
    absorbed = math.fsum(first.epoch_pmf.tolist())
    h /= absorbed
    up = max(step.points) / unit
    exact = up <= 1 + 1e-9 or first.defect == 0.0
    v = np.zeros(size)
    v[0] = 1.0
    nz = np.flatnonzero(h)
    for i in range(1, size):
        j = nz[nz <= i]
        v[i] = float(np.dot(h[j], v[i - j]))
    return HeightRenewal(unit, v, first.defect, exact)


# -- identity checks --------------------------------------------------------

def ladder_records(S: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """H_{k-1} and H_k per path (H_k = +inf if T_k > n), from partial sums."""
    paths, n = S.shape
    h_prev = np.zeros(paths) if k == 1 else np.full(paths, np.nan)
    h_k = np.full(paths, np.inf)
    level = np.zeros(paths)
    count = np.zeros(paths, dtype=np.int64)
    for t in range(n):
        up = S[:, t] > level + ZERO_POINT_TOL
        count += up
        level = np.where(up, S[:, t], level)
        h_k = np.where(up & (count == k), S[:, t], h_k)
        if k > 1:
            h_prev = np.where(up & (count == k - 1), S[:, t], h_prev)
    if k > 1:
        # paths with fewer than k-1 ladder epochs never reach H_{k-1}
        h_prev = np.where(np.isnan(h_prev), np.inf, h_prev)
    return h_prev, h_k


def alili_doney_sides(step: StepLaw, n: int, k: int, cap: int = exact_dp.ORACLE_CAP) -> tuple[dict[float, float], dict[float, float]]:
    """Per-point left and right sides of the Alili-Doney identity (oracle)."""
    lhs: dict[float, list[float]] = {}
    rhs: dict[float, list[float]] = {}
    for S, w in exact_dp.enumerate_paths(step, n, cap):
        h_prev, h_k = ladder_records(S, k)
        _, h_before = ladder_records(S[:, :-1], k) if n > 1 else (None, np.full(len(w), np.inf))
        end = S[:, -1]
        at_n = np.isfinite(h_k) & ~np.isfinite(h_before)
        between = (end > h_prev + ZERO_POINT_TOL) & (end <= h_k + ZERO_POINT_TOL)
        for key, sel in ((lhs, at_n), (rhs, between)):
            for xx, ww in zip(np.round(end[sel], 9).tolist(), w[sel].tolist()):
                key.setdefault(xx, []).append(ww)
    return (
        {x: math.fsum(v) for x, v in lhs.items()},
        {x: k / n * math.fsum(v) for x, v in rhs.items()},
    )


def verify_alili_doney(step: StepLaw, n: int, k: int, cap: int = exact_dp.ORACLE_CAP) -> float:
    """sup_x |P(T_k = n, H_k = x) - (k/n) P(H_{k-1} < S_n <= H_k, S_n = x)|.

    Both sides come from exhaustive path enumeration.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    lhs, rhs = alili_doney_sides(step, n, k, cap)
    return max((abs(lhs.get(x, 0.0) - rhs.get(x, 0.0)) for x in set(lhs) | set(rhs)), default=0.0)


@dataclass(frozen=True)
class RatioReport:
    n: int
    epsilon: float
    a_n: float
    points: np.ndarray
    ratios: np.ndarray
    height_defect: float

    @property
    def sup_error(self) -> float:
        return float(np.max(np.abs(self.ratios - 1.0)))


def renewal_ratio_report(
    step: StepLaw, n: int, epsilon: float, heights: HeightRenewal | None = None
) -> RatioReport:
    """n u(n,x) / (P(S_n = x) U(x-)) over lattice x with x/a_n in [eps, 1/eps].

    u(n, x) is read from the killed walk (the duality identity, checked
    exactly by :func:`build_ladder_table`). Points with P(S_n = x) = 0 are
    left out.
    """
    if n < 1 or not 0 < epsilon < 1:
        raise ValueError("need n >= 1 and 0 < epsilon < 1")
    a_n = norming_a(step, n)
    lo, hi = epsilon * a_n, a_n / epsilon
    free = exact_dp.pmf(step, n)
    killed = exact_dp.positive_part_pmf(step, n).pmf
    if heights is None or heights.x_max < hi:
        heights = height_renewal(step, hi + step.lattice_span, horizon=max(n, 2000))
    xs, rs = [], []
    for x, p in zip(free.points, free.masses):
        if not lo <= x <= hi or p <= 0.0:
            continue
        u = killed.mass_at(x)
        xs.append(x)
        rs.append(n * u / (p * heights.U_left(x)))
    if not xs:
        raise EmptyRange(f"no lattice point with x/a_n in [{epsilon}, {1 / epsilon}] at n={n}")
    return RatioReport(n, epsilon, a_n, np.asarray(xs), np.asarray(rs), heights.defect)
