"""Grid densities for absolutely continuous steps.

A :class:`GridDensity` samples a density at ``x_i = (i0 + i) * grid_step``.
All integrals use the trapezoid rule cell by cell. A density killed on
``(-inf, 0]`` starts at ``x = 0`` and jumps there: its left limit at 0 is
zero, so the first sample carries trapezoid weight 1/2 (``jump_at_start``).

Results are accurate to grid precision only; a genuinely nonlattice law
cannot be propagated exactly in finite arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy import integrate

from .errors import GridMismatch
from .limits import gauss, meander_endpoint

EDGE_DROP = 1e-300


@dataclass(frozen=True)
class GridDensity:
    grid_step: float
    i0: int
    values: np.ndarray
    n: int = 1
    jump_at_start: bool = False

    @property
    def origin(self) -> float:
        return self.i0 * self.grid_step

    @property
    def x(self) -> np.ndarray:
        return (self.i0 + np.arange(len(self.values))) * self.grid_step

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(len(self.values))
        if self.jump_at_start and len(w):
            w[0] = 0.5
        return w

    def integral(self) -> float:
        return float(self.grid_step * np.sum(self.weights * self.values))

    def cell_masses(self) -> np.ndarray:
        """Trapezoid mass of each cell [x_j, x_{j+1}], j = -1 .. len - 1."""
        v = self.values
        left = v.copy()
        if self.jump_at_start and len(v):
            left[0] = 0.0
        right_lim = np.concatenate([[0.0], v])
        left_lim = np.concatenate([left, [0.0]])
        return 0.5 * self.grid_step * (right_lim + left_lim)

    def value_at(self, x: float) -> float:
        i = round(x / self.grid_step) - self.i0
        return float(self.values[i]) if 0 <= i < len(self.values) else 0.0

    def scaled(self, c: float) -> "GridDensity":
        return GridDensity(self.grid_step, self.i0, self.values * c, self.n, self.jump_at_start)

    def to_csv(self) -> str:
        lines = ["x,value"] + [f"{x:.17g},{v:.17g}" for x, v in zip(self.x, self.values)]
        return "\n".join(lines) + "\n"


def hat_discretize(pdf: Callable[[float], float], lo: float, hi: float, grid_step: float, n: int = 1) -> GridDensity:
    """Grid density whose values are hat-function averages of ``pdf`` on [lo, hi].

    v_i = (1/h) int hat_i(x) pdf(x) dx keeps the total mass and the mean of
    the piecewise-linear reconstruction exact, even when the support ends
    fall between grid points.
    """
    h = grid_step
    i_lo = math.floor(lo / h) - 1
    i_hi = math.ceil(hi / h) + 1
    vals = np.zeros(i_hi - i_lo + 1)
    for idx, i in enumerate(range(i_lo, i_hi + 1)):
        xi = i * h
        a, b = max(xi - h, lo), min(xi + h, hi)
        if a >= b:
            continue
        pts = [p for p in (xi,) if a < p < b]
        val, _ = integrate.quad(lambda x: (1 - abs(x - xi) / h) * pdf(x), a, b, points=pts or None, epsabs=1e-15, epsrel=1e-13)
        vals[idx] = val / h
    nz = np.flatnonzero(vals)
    return GridDensity(h, i_lo + int(nz[0]), vals[nz[0] : nz[-1] + 1], n)


def uniform_step(grid_step: float | None = None, half_width: float = 1.0) -> GridDensity:
    """Uniform step on [-half_width, half_width]; default grid sigma / 64."""
    sigma = half_width / math.sqrt(3)
    h = grid_step if grid_step is not None else sigma / 64
    dens = 1.0 / (2 * half_width)
    return hat_discretize(lambda x: dens, -half_width, half_width, h)


def grid_variance(d: GridDensity) -> float:
    return float(d.grid_step * np.sum(d.weights * d.values * d.x**2))


def _trim(values: np.ndarray, i0: int, keep_start: bool = False) -> tuple[np.ndarray, int]:
    big = np.flatnonzero(values >= EDGE_DROP)
    if len(big) == 0:
        return values[:0], i0
    lo = 0 if keep_start else big[0]
    return values[lo : big[-1] + 1], i0 + int(lo)


def grid_self_convolve(density: GridDensity, step_density: GridDensity) -> GridDensity:
    """Trapezoid convolution (f * g)(x_i) = h sum_j w_j f_j g(x_i - x_j)."""
    if not math.isclose(density.grid_step, step_density.grid_step, rel_tol=1e-12, abs_tol=0.0):
        raise GridMismatch(f"grid steps {density.grid_step} and {step_density.grid_step} differ")
    h = density.grid_step
    f = density.values * density.weights
    g = step_density.values * step_density.weights
    out = h * np.convolve(f, g)
    vals, i0 = _trim(out, density.i0 + step_density.i0)
    return GridDensity(h, i0, vals, density.n + step_density.n)


def _kill(d: GridDensity) -> GridDensity:
    """Zero the density on x < 0; the value at 0 becomes a right limit."""
    cut = -d.i0
    if cut <= 0:
        return d
    vals = d.values[cut:] if cut < len(d.values) else d.values[:0]
    return GridDensity(d.grid_step, 0, vals.copy(), d.n, jump_at_start=True)


def iter_grid_densities(step_density: GridDensity, n_max: int, kill: bool) -> Iterator[GridDensity]:
    """Densities of S_1..S_n_max (killed on (-inf, 0] after every step if asked)."""
    cur = step_density
    if kill:
        cur = _kill(cur)
    yield cur
    for _ in range(n_max - 1):
        cur = grid_self_convolve(cur, step_density)
        if kill:
            cur = _kill(cur)
        yield cur


def positive_grid_density(step_density: GridDensity, n: int) -> tuple[GridDensity, float]:
    """Killed density of S_n on C_n and the survival P(C_n) (its integral)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for d in iter_grid_densities(step_density, n, kill=True):
        pass
    return d, d.integral()


def interval_masses(d: GridDensity, cells: int) -> tuple[np.ndarray, np.ndarray]:
    """(x_i, mass of [x_i, x_i + cells*h)) over every start point touching the window."""
    cm = d.cell_masses()  # cell j covers [x_{j-1}, x_j] in window indices
    csum = np.concatenate([[0.0], np.cumsum(np.concatenate([np.zeros(cells), cm, np.zeros(cells)]))])
    # start index s (in padded cell coordinates) covers cells s .. s+cells-1
    starts = np.arange(len(cm) + cells)
    masses = csum[starts + cells] - csum[starts]
    first_x = (d.i0 - 1 - cells) * d.grid_step
    xs = first_x + starts * d.grid_step
    return xs, masses


def stone_llt_error(step_density: GridDensity, n: int, h: float, sigma: float | None = None) -> dict:
    """Sup errors of a_n P(S_n in [x, x+h)) against h phi(x / a_n).

    Returns ``{"uncond": ..., "cond": ...}``, the second for the law given
    C_n against h phi+(x / a_n). ``h`` must be a multiple of the grid step.
    """
    free, killed = _nth_pair(step_density, n)
    return _llt_errors(free, killed, n, h, sigma or math.sqrt(grid_variance(step_density)))


def _nth_pair(step_density: GridDensity, n: int) -> tuple[GridDensity, GridDensity]:
    for free in iter_grid_densities(step_density, n, kill=False):
        pass
    for killed in iter_grid_densities(step_density, n, kill=True):
        pass
    return free, killed


def _llt_errors(free: GridDensity, killed: GridDensity, n: int, h: float, sigma: float) -> dict:
    step = free.grid_step
    cells = round(h / step)
    if abs(cells * step - h) > 1e-9 * max(h, step):
        raise GridMismatch(f"h={h} is not a multiple of the grid step {step}")
    if cells == 0:
        return {"uncond": 0.0, "cond": 0.0}
    a_n = sigma * math.sqrt(n)
    xs, m = interval_masses(free, cells)
    e_free = float(np.max(np.abs(a_n * m - h * gauss(xs / a_n))))
    surv = killed.integral()
    xs, m = interval_masses(killed, cells)
    e_cond = float(np.max(np.abs(a_n * m / surv - h * meander_endpoint(xs / a_n))))
    return {"uncond": e_free, "cond": e_cond}


def density_sup_errors(free: GridDensity, killed: GridDensity, n: int, sigma: float) -> dict:
    """sup_x |a_n f_n(a_n x) - phi(x)| and the conditioned analogue with phi+."""
    a_n = sigma * math.sqrt(n)
    e_free = float(np.max(np.abs(a_n * free.values - gauss(free.x / a_n))))
    surv = killed.integral()
    e_cond = float(np.max(np.abs(a_n * killed.values / surv - meander_endpoint(killed.x / a_n))))
    return {"uncond": e_free, "cond": e_cond, "survival": surv}


def density_sweep(step_density: GridDensity, ns, h: float | None = None) -> list[dict]:
    """One pass to max(ns); density sup errors (and LLT errors if h given) at each n."""
    ns = sorted(set(int(n) for n in ns))
    sigma = math.sqrt(grid_variance(step_density))
    want = set(ns)
    out = []
    frees = iter_grid_densities(step_density, ns[-1], kill=False)
    kills = iter_grid_densities(step_density, ns[-1], kill=True)
    for t, (free, killed) in enumerate(zip(frees, kills), start=1):
        if t not in want:
            continue
        row = {"n": t, **density_sup_errors(free, killed, t, sigma)}
        if h is not None:
            llt = _llt_errors(free, killed, t, h, sigma)
            row["llt_uncond"], row["llt_cond"] = llt["uncond"], llt["cond"]
        out.append(row)
    return out
