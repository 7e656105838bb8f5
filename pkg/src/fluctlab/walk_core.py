"""Step laws on a lattice and exact (sub-)probability mass functions.

A lattice step law puts mass ``p_k`` on the points ``shift + span * k``.
Validation enforces the standing hypotheses of the workbench: zero mean,
finite positive variance, and a span that is maximal for the group the
offsets generate.

A walk whose support differences share a factor ``d > 1`` (the simple
walk, ``d = 2``) is periodic: at time ``n`` it lives on the coarser lattice
``n * lattice_shift + lattice_span * Z`` with ``lattice_span = d * span``.
All exact computations index masses on that coarser lattice, so no entry of
a :class:`LatticePMF` is structurally zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BadMass, DegenerateSupport, NonMaximalSpan, NonZeroMean

MASS_TOL = 1e-14
MEAN_TOL = 1e-12
# relative distance below which a lattice point is treated as sitting on 0
ZERO_POINT_TOL = 1e-9


@dataclass(frozen=True)
class StepLaw:
    """Validated lattice step law. Build it with :func:`make_lattice_step`."""

    shift: float
    span: float
    offsets: tuple[int, ...]
    masses: tuple[float, ...]
    variance: float
    kind: str = "lattice"
    # canonical lattice: support = lattice_shift + lattice_span * steps
    lattice_shift: float = field(default=0.0, repr=False)
    lattice_span: float = field(default=1.0, repr=False)
    steps: tuple[int, ...] = field(default=(), repr=False)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def period(self) -> int:
        return int(round(self.lattice_span / self.span))

    @property
    def points(self) -> np.ndarray:
        return self.shift + self.span * np.asarray(self.offsets, dtype=float)

    @property
    def probs(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)

    @property
    def max_step(self) -> int:
        """Largest canonical index; the window grows by this much per step."""
        return max(self.steps)

    def kernel(self) -> np.ndarray:
        """Dense step masses on canonical indices ``0..max_step``."""
        out = np.zeros(self.max_step + 1)
        for j, p in zip(self.steps, self.masses):
            out[j] += p
        return out

    def to_json(self) -> str:
        return json.dumps(step_to_dict(self))


def make_lattice_step(
    shift: float,
    span: float,
    offsets_masses: Iterable[tuple[int, float]],
) -> StepLaw:
    """Validate a lattice step law and return it as a :class:`StepLaw`.

    Zero-mass atoms are dropped. Raises ``BadMass``, ``DegenerateSupport``,
    ``NonMaximalSpan`` or ``NonZeroMean`` when a hypothesis fails.
    """
    if not span > 0 or not math.isfinite(span) or not math.isfinite(shift):
        raise BadMass(f"span must be a positive finite number, got {span!r}")
    merged: dict[int, float] = {}
    for k, p in offsets_masses:
        if int(k) != k:
            raise BadMass(f"offset {k!r} is not an integer")
        p = float(p)
        if not math.isfinite(p) or p < 0:
            raise BadMass(f"mass {p!r} at offset {k} is negative or not finite")
        merged[int(k)] = merged.get(int(k), 0.0) + p
    total = math.fsum(merged.values())
    if abs(total - 1.0) > MASS_TOL:
        raise BadMass(f"masses sum to {total!r}, not 1")
    atoms = sorted((k, p) for k, p in merged.items() if p > 0)
    if len(atoms) < 2:
        raise DegenerateSupport("step law needs at least two support points")

    offsets = tuple(k for k, _ in atoms)
    masses = tuple(p for _, p in atoms)
    g = reduce(math.gcd, (abs(k) for k in offsets))
    if g > 1:
        raise NonMaximalSpan(
            f"offsets {offsets} share the factor {g}; use span {span * g} instead"
        )

    pts = [shift + span * k for k in offsets]
    mean = math.fsum(x * p for x, p in zip(pts, masses))
    if abs(mean) > MEAN_TOL * max(1.0, max(abs(x) for x in pts)):
        raise NonZeroMean(f"step mean is {mean!r}")
    variance = math.fsum(x * x * p for x, p in zip(pts, masses))

    k0 = offsets[0]
    d = reduce(math.gcd, (k - k0 for k in offsets[1:]))
    return StepLaw(
        shift=float(shift),
        span=float(span),
        offsets=offsets,
        masses=masses,
        variance=variance,
        lattice_shift=float(shift + span * k0),
        lattice_span=float(span * d),
        steps=tuple((k - k0) // d for k in offsets),
    )


def truncated_lattice_step(
    shift: float,
    span: float,
    mass_fn: Callable[[int], float],
    k_min: int,
    k_max: int,
    max_tail: float = 1e-15,
) -> tuple[StepLaw, float]:
    """Cut an infinite-support law to ``[k_min, k_max]`` and renormalize.

    Returns the step law and the discarded tail mass, which must stay below
    ``max_tail``.
    """
    ks = range(k_min, k_max + 1)
    raw = [float(mass_fn(k)) for k in ks]
    kept = math.fsum(raw)
    tail = 1.0 - kept
    if tail > max_tail:
        raise BadMass(f"truncation to [{k_min}, {k_max}] drops mass {tail:.3e}")
    return make_lattice_step(shift, span, [(k, p / kept) for k, p in zip(ks, raw)]), max(tail, 0.0)


def step_to_dict(step: StepLaw) -> dict:
    return {
        "shift": step.shift,
        "span": step.span,
        "atoms": [[k, p] for k, p in zip(step.offsets, step.masses)],
    }


def step_from_dict(obj: dict) -> StepLaw:
    try:
        shift, span = float(obj["shift"]), float(obj["span"])
        atoms = [(int(k), float(p)) for k, p in obj["atoms"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise BadMass(f"malformed step law object: {exc!r}") from exc
    return make_lattice_step(shift, span, atoms)


def step_from_json(text: str) -> StepLaw:
    return step_from_dict(json.loads(text))


def truncated_variance(step: StepLaw, t: float) -> float:
    """E[X^2 ; |X| <= t]."""
    pts = step.points
    keep = np.abs(pts) <= t
    return math.fsum((pts[keep] ** 2 * step.probs[keep]).tolist())


def norming_a(step: StepLaw, t: float) -> float:
    """Finite-variance norming function a(t) = sigma * sqrt(t)."""
    return step.sigma * math.sqrt(t)


def simple_walk() -> StepLaw:
    return make_lattice_step(0.0, 1.0, [(-1, 0.5), (1, 0.5)])


def lazy_walk() -> StepLaw:
    return make_lattice_step(0.0, 1.0, [(-1, 0.25), (0, 0.5), (1, 0.25)])


def skewed_walk() -> StepLaw:
    """Aperiodic zero-mean walk with an upward jump of size two."""
    return make_lattice_step(0.0, 1.0, [(-1, 0.5), (0, 0.25), (2, 0.25)])


SHIPPED_STEPS: dict[str, Callable[[], StepLaw]] = {
    "simple": simple_walk,
    "lazy": lazy_walk,
    "skewed": skewed_walk,
}


@dataclass(frozen=True)
class LatticePMF:
    """(Sub-)probability masses of a walk at time ``n``.

    ``masses[i]`` is the mass at the physical point
    ``shift * n + span * (k_min + i)``.
    """

    n: int
    shift: float
    span: float
    k_min: int
    masses: np.ndarray

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.masses) - 1

    @property
    def window(self) -> tuple[int, int]:
        return self.k_min, self.k_max

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_min + len(self.masses))

    @property
    def points(self) -> np.ndarray:
        return self.shift * self.n + self.span * self.indices

    @property
    def total(self) -> float:
        return math.fsum(self.masses.tolist())

    def index_of(self, x: float) -> int | None:
        """Lattice index of the physical point ``x``, or None off-lattice."""
        k = (x - self.shift * self.n) / self.span
        kr = round(k)
        if abs(k - kr) > ZERO_POINT_TOL * max(1.0, abs(k)):
            return None
        return int(kr)

    def mass_at(self, x: float) -> float:
        k = self.index_of(x)
        if k is None or k < self.k_min or k > self.k_max:
            return 0.0
        return float(self.masses[k - self.k_min])

    def as_dict(self, drop_zero: bool = True) -> dict[float, float]:
        return {
            float(x): float(m)
            for x, m in zip(self.points, self.masses)
            if m != 0.0 or not drop_zero
        }

    def normalized(self) -> "LatticePMF":
        return LatticePMF(self.n, self.shift, self.span, self.k_min, self.masses / self.total)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "point", "mass"])
        for x, m in zip(self.points, self.masses):
            w.writerow([self.n, f"{x:.17g}", f"{m:.17g}"])
        return buf.getvalue()


def pmf_from_csv(text: str, shift: float, span: float) -> LatticePMF:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty pmf csv")
    n = int(rows[0]["n"])
    ks = [round((float(r["point"]) - shift * n) / span) for r in rows]
    k_min = min(ks)
    masses = np.zeros(max(ks) - k_min + 1)
    for k, r in zip(ks, rows):
        masses[k - k_min] = float(r["mass"])
    return LatticePMF(n, shift, span, k_min, masses)


def first_positive_index(step: StepLaw, n: int) -> int:
    """Smallest canonical index whose point at time ``n`` is strictly positive."""
    ratio = -step.lattice_shift * n / step.lattice_span
    return math.floor(ratio + ZERO_POINT_TOL * max(1.0, abs(ratio))) + 1
