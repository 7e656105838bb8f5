"""Exact laws of S_n and of S_n on the event C_n = (S_1 > 0, ..., S_n > 0).

Everything runs on the canonical lattice of the step law: the mass at
canonical index ``k`` at time ``n`` sits on ``lattice_shift * n +
lattice_span * k``. One step of the walk is a direct-summation convolution
with the step kernel (``np.convolve`` never switches to FFT). Killing zeroes
every point ``<= 0``; the point 0 itself is killed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import ExplosionGuard, HorizonTooLarge, ZeroSurvival
from .limits import gauss, meander_endpoint
from .walk_core import ZERO_POINT_TOL, LatticePMF, StepLaw, first_positive_index, norming_a

# entries below this are trimmed, but only at the window edges
EDGE_DROP = 1e-300
MAX_DROPPED = 1e-250
DEFAULT_MAX_WINDOW = 50_000_000
ORACLE_CAP = 10**8
# rough budget of multiply-adds for one DP run (about ten minutes of convolution)
MAX_WORK = 5e11


@dataclass(frozen=True)
class KilledLawResult:
    pmf: LatticePMF
    survival: float


class _Walker:
    """Mutable DP state. Produces LatticePMF snapshots; never shared."""

    def __init__(self, step: StepLaw, kill: bool, max_window: int):
        self.step = step
        self.kernel = step.kernel()
        self.kill = kill
        self.max_window = max_window
        self.t = 0
        self.k_min = 0
        self.masses = np.ones(1)
        self.dropped = 0.0
        self.killed_mass = 0.0

    def advance(self) -> None:
        self.t += 1
        if len(self.masses) == 0:
            # every path has been killed
            self.killed_mass = 0.0
            return
        self.masses = np.convolve(self.masses, self.kernel)
        if self.kill:
            cut = first_positive_index(self.step, self.t) - self.k_min
            if cut > 0:
                self.killed_mass = math.fsum(self.masses[:cut].tolist())
                self.masses = self.masses[cut:]
                self.k_min += cut
            else:
                self.killed_mass = 0.0
        self._trim()
        if len(self.masses) > self.max_window:
            raise HorizonTooLarge(
                f"window of {len(self.masses)} entries at n={self.t} exceeds budget {self.max_window}"
            )

    def _trim(self) -> None:
        m = self.masses
        if len(m) == 0:
            return
        big = np.flatnonzero(m >= EDGE_DROP)
        if len(big) == 0:
            self.dropped += float(m.sum())
            self.masses = m[:0]
            return
        lo, hi = big[0], big[-1]
        if lo > 0 or hi < len(m) - 1:
            self.dropped += float(m[:lo].sum() + m[hi + 1 :].sum())
            if self.dropped > MAX_DROPPED:
                raise HorizonTooLarge(f"edge trimming dropped {self.dropped:.3e}")
            self.masses = m[lo : hi + 1]
            self.k_min += int(lo)

    def snapshot(self) -> LatticePMF:
        s = self.step
        return LatticePMF(self.t, s.lattice_shift, s.lattice_span, self.k_min, self.masses.copy())


def check_horizon(step: StepLaw, n: int) -> None:
    """Raise HorizonTooLarge up front if n steps would blow the work budget.

    The trimmed window at time t spans about 80 sigma sqrt(t) / span lattice
    points (and never more than t times the step range).
    """
    atoms = int(np.count_nonzero(step.kernel()))
    reach = len(step.kernel()) - 1
    sigma = math.sqrt(step.variance) / step.lattice_span
    work = atoms * min(80 * sigma * (2 / 3) * n**1.5, reach * n * (n + 1) / 2 + n)
    if work > MAX_WORK:
        raise HorizonTooLarge(f"n={n} needs about {work:.2e} operations; budget is {MAX_WORK:.0e}")


def iter_pmfs(
    step: StepLaw, n_max: int, kill: bool = False, max_window: int = DEFAULT_MAX_WINDOW
) -> Iterator[LatticePMF]:
    """Yield the (killed) pmf at times ``0, 1, ..., n_max``."""
    check_horizon(step, n_max)
    w = _Walker(step, kill, max_window)
    yield w.snapshot()
    for _ in range(n_max):
        w.advance()
        yield w.snapshot()


def pmf(step: StepLaw, n: int, max_window: int = DEFAULT_MAX_WINDOW) -> LatticePMF:
    """Exact law of S_n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    check_horizon(step, n)
    w = _Walker(step, False, max_window)
    for _ in range(n):
        w.advance()
    return w.snapshot()


def positive_part_pmf(step: StepLaw, n: int, max_window: int = DEFAULT_MAX_WINDOW) -> KilledLawResult:
    """Masses P(C_n, S_n = x) and the survival probability P(C_n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    check_horizon(step, n)
    w = _Walker(step, True, max_window)
    for _ in range(n):
        w.advance()
    out = w.snapshot()
    return KilledLawResult(out, out.total)


def conditioned_pmf(step: StepLaw, n: int, max_window: int = DEFAULT_MAX_WINDOW) -> LatticePMF:
    """Law of S_n given C_n."""
    res = positive_part_pmf(step, n, max_window)
    if res.survival <= 0.0:
        raise ZeroSurvival(f"P(C_{n}) = 0 for this step law")
    return res.pmf.normalized()


def killed_table(step: StepLaw, n: int, max_window: int = DEFAULT_MAX_WINDOW) -> list[LatticePMF]:
    """Killed pmfs at times 0..n (time 0 is the point mass at 0)."""
    return list(iter_pmfs(step, n, kill=True, max_window=max_window))


def survival_sequence(step: StepLaw, n: int, max_window: int = DEFAULT_MAX_WINDOW) -> np.ndarray:
    """P(C_t) for t = 0..n, with P(C_0) = 1."""
    return np.array([p.total for p in iter_pmfs(step, n, kill=True, max_window=max_window)])


def first_exit_probabilities(step: StepLaw, n: int) -> np.ndarray:
    """P(first time S_t <= 0 equals t) for t = 0..n (entry 0 is 0)."""
    check_horizon(step, n)
    w = _Walker(step, True, DEFAULT_MAX_WINDOW)
    out = np.zeros(n + 1)
    for t in range(1, n + 1):
        w.advance()
        out[t] = w.killed_mass
    return out


def llt_sup_error(step: StepLaw, n: int, conditioned: bool = False) -> float:
    """sup over the support lattice of |a_n P(S_n = x) / c - phi(x / a_n)|.

    ``c`` is the span of the lattice S_n lives on, so points of the wrong
    parity class for periodic walks never enter the sup. With
    ``conditioned`` the law given C_n is compared to phi+.
    """
    a_n = norming_a(step, n)
    c = step.lattice_span
    if conditioned:
        law = conditioned_pmf(step, n)
        target = meander_endpoint(law.points / a_n)
    else:
        law = pmf(step, n)
        target = gauss(law.points / a_n)
    return float(np.max(np.abs(a_n * law.masses / c - target)))


# -- brute-force oracle ------------------------------------------------------

def enumerate_paths(step: StepLaw, n: int, cap: int = ORACLE_CAP, chunk: int = 1 << 18):
    """Yield ``(S, weight)`` chunks over all ``|support|**n`` paths.

    ``S[:, t-1]`` holds the physical partial sum S_t; ``weight`` is the
    product of step masses along the path.
    """
    s = len(step.steps)
    if s**n > cap:
        raise ExplosionGuard(f"{s}**{n} paths exceed the cap {cap}")
    if n == 0:
        yield np.zeros((1, 0)), np.ones(1)
        return
    steps = np.asarray(step.steps)
    probs = step.probs
    times = np.arange(1, n + 1)
    it = itertools.product(range(s), repeat=n)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
        if block.size == 0:
            return
        block = block.reshape(-1, n)
        j = np.cumsum(steps[block], axis=1)
        S = step.lattice_shift * times + step.lattice_span * j
        weight = np.prod(probs[block], axis=1)
        yield S, weight


def enumerate_paths_oracle(
    step: StepLaw,
    n: int,
    event_predicate: Callable[[np.ndarray], np.ndarray],
    cap: int = ORACLE_CAP,
) -> float:
    """Exact probability of an event by summing over every path.

    ``event_predicate`` receives the partial-sum matrix of a chunk of paths
    (one row per path, columns S_1..S_n) and returns a boolean mask.
    """
    total = []
    for S, wgt in enumerate_paths(step, n, cap):
        mask = np.asarray(event_predicate(S), dtype=bool)
        total.extend(wgt[mask].tolist())
    return math.fsum(total)


def oracle_law(
    step: StepLaw,
    n: int,
    event_predicate: Callable[[np.ndarray], np.ndarray] | None = None,
    cap: int = ORACLE_CAP,
) -> dict[int, float]:
    """Enumerated masses P(event, S_n = x) keyed by canonical index of x."""
    acc: dict[int, list[float]] = {}
    for S, wgt in enumerate_paths(step, n, cap):
        mask = np.ones(len(wgt), bool) if event_predicate is None else np.asarray(event_predicate(S), bool)
        end = S[:, -1] if n > 0 else np.zeros(len(wgt))
        k = np.rint((end - step.lattice_shift * n) / step.lattice_span).astype(np.int64)
        for kk, ww in zip(k[mask].tolist(), wgt[mask].tolist()):
            acc.setdefault(kk, []).append(ww)
    return {k: math.fsum(v) for k, v in sorted(acc.items())}


def stays_positive(S: np.ndarray) -> np.ndarray:
    """Predicate for C_n on a partial-sum matrix."""
    return np.all(S > ZERO_POINT_TOL, axis=1)
