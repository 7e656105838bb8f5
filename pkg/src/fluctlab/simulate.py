"""Seeded Monte Carlo for lattice walks.

Randomness comes from numpy's counter-based Philox generator keyed by a
``SeedSequence``; substream ``i`` of seed ``s`` is ``SeedSequence(s,
spawn_key=(i,))``, so batches are pure functions of (step, n, count, seed).

Conditioned paths are sampled exactly: the endpoint is drawn from the killed
law at time n, then the path is walked backwards, each previous position
being chosen with probability proportional to (killed mass there) x (step
probability).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import exact_dp
from .errors import SamplerAuditFailure, ZeroSurvival
from .limits import meander_cdf
from .walk_core import LatticePMF, StepLaw, norming_a

RNG_ID = "numpy.Philox4x64/SeedSequence"
MAX_TABLE_ENTRIES = 60_000_000
AUDIT_FRACTION = 0.01


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


@dataclass(frozen=True)
class SampleBatch:
    seed: int
    count: int
    n: int
    endpoints: np.ndarray
    survival_count: int
    attempts: int
    rng: str = RNG_ID
    method: str = "unconditioned"
    audited: int = 0
    exact_survival: float | None = None

    @property
    def survival_rate(self) -> float:
        """Accepted fraction; for backward sampling the exact P(C_n) it drew from."""
        if self.exact_survival is not None:
            return self.exact_survival
        return self.survival_count / self.attempts

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "rng": self.rng,
            "n": self.n,
            "count": self.count,
            "survival_rate": self.survival_rate,
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True)


def _check(n: int, count: int) -> None:
    if n < 1:
        raise ValueError("n must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")


def sample_unconditioned(step: StepLaw, n: int, count: int, seed: int, workers: int = 1) -> SampleBatch:
    """Endpoints of ``count`` independent n-step paths.

    Each path is summarized by its multinomial vector of step counts, which
    has the same law as the endpoint of n IID steps. ``workers`` splits the
    batch over substreams; results are concatenated in substream order.
    """
    _check(n, count)
    sizes = [count // workers + (1 if i < count % workers else 0) for i in range(workers)]
    parts = []
    for i, size in enumerate(sizes):
        if size == 0:
            continue
        counts = make_rng(seed, i).multinomial(n, step.probs, size=size)
        parts.append(counts @ step.points)
    return SampleBatch(seed, count, n, np.concatenate(parts), count, count)


def sample_paths(step: StepLaw, n: int, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """(count, n) matrix of partial sums S_1..S_n."""
    _check(n, count)
    idx = make_rng(seed, stream).choice(len(step.points), size=(count, n), p=step.probs)
    return np.cumsum(step.points[idx], axis=1)


def sample_rejection(step: StepLaw, n: int, count: int, seed: int, chunk: int = 1 << 16) -> SampleBatch:
    """Naive rejection: simulate ``count`` paths and keep those in C_n."""
    _check(n, count)
    kept = []
    survived = 0
    done = 0
    stream = 0
    while done < count:
        size = min(chunk, count - done)
        S = sample_paths(step, n, size, seed, stream)
        ok = np.all(S > 0, axis=1)
        kept.append(S[ok, -1])
        survived += int(ok.sum())
        done += size
        stream += 1
    return SampleBatch(seed, count, n, np.concatenate(kept), survived, count, method="rejection")


def _backward_paths(step: StepLaw, table: list[LatticePMF], end_idx: np.ndarray, rng) -> np.ndarray:
    """Canonical index paths (m, n + 1) ending at ``end_idx``, sampled backwards."""
    n = len(table) - 1
    kernel = step.kernel()
    js = np.flatnonzero(kernel)
    m = len(end_idx)
    out = np.empty((m, n + 1), dtype=np.int64)
    out[:, n] = end_idx
    cur = end_idx.copy()
    for t in range(n, 0, -1):
        prev = table[t - 1]
        w = np.zeros((m, len(js)))
        for c, j in enumerate(js):
            pos = cur - j - prev.k_min
            ok = (pos >= 0) & (pos < len(prev.masses))
            w[ok, c] = prev.masses[pos[ok]] * kernel[j]
        cw = np.cumsum(w, axis=1)
        u = rng.random(m) * cw[:, -1]
        choice = np.minimum((cw < u[:, None]).sum(axis=1), len(js) - 1)
        cur = cur - js[choice]
        out[:, t - 1] = cur
    return out


def audit_paths(step: StepLaw, paths: np.ndarray) -> int:
    """Replay canonical index paths; count those leaving C_n or using a non-step."""
    inc = np.diff(paths, axis=1)
    legal = np.isin(inc, np.flatnonzero(step.kernel())).all(axis=1)
    t = np.arange(paths.shape[1])
    S = step.lattice_shift * t + step.lattice_span * paths
    positive = exact_dp.stays_positive(S[:, 1:])
    start_ok = paths[:, 0] == 0
    return int(np.sum(~(legal & positive & start_ok)))


def sample_conditioned(
    step: StepLaw,
    n: int,
    count: int,
    seed: int,
    audit_fraction: float = AUDIT_FRACTION,
    max_table_entries: int = MAX_TABLE_ENTRIES,
) -> SampleBatch:
    """Exact draws of S_n given C_n.

    Endpoints come from the killed law at time n (substream 0). An audit
    subsample of ``ceil(audit_fraction * count)`` of them is extended to full
    paths by backward sampling (substream 1) and replayed; any path that
    leaves C_n raises :class:`SamplerAuditFailure`. When the killed table
    would exceed ``max_table_entries`` the sampler warns and falls back to
    rejection.
    """
    _check(n, count)
    table = exact_dp.killed_table(step, n)
    last = table[-1]
    survival = last.total
    if survival <= 0.0:
        raise ZeroSurvival(f"P(C_{n}) = 0")
    size = sum(len(p.masses) for p in table)
    if size > max_table_entries:
        warnings.warn(f"killed table has {size} entries; falling back to rejection sampling")
        return _rejection_fill(step, n, count, seed, survival)
    rng = make_rng(seed, 0)
    p = last.masses / last.masses.sum()
    idx = last.k_min + rng.choice(len(p), size=count, p=p)
    m = min(count, max(1, math.ceil(audit_fraction * count))) if audit_fraction > 0 else 0
    if m:
        paths = _backward_paths(step, table, idx[:m], make_rng(seed, 1))
        bad = audit_paths(step, paths)
        if bad:
            raise SamplerAuditFailure(f"{bad} of {m} audited paths leave C_{n}")
    endpoints = step.lattice_shift * n + step.lattice_span * idx
    return SampleBatch(seed, count, n, endpoints, count, count, method="backward", audited=m, exact_survival=survival)


def sample_conditioned_paths(step: StepLaw, n: int, count: int, seed: int) -> np.ndarray:
    """Full conditioned paths (count, n + 1) in physical units, S_0 = 0 included."""
    _check(n, count)
    table = exact_dp.killed_table(step, n)
    last = table[-1]
    if last.total <= 0.0:
        raise ZeroSurvival(f"P(C_{n}) = 0")
    rng = make_rng(seed, 0)
    p = last.masses / last.masses.sum()
    idx = last.k_min + rng.choice(len(p), size=count, p=p)
    paths = _backward_paths(step, table, idx, make_rng(seed, 1))
    t = np.arange(n + 1)
    return step.lattice_shift * t + step.lattice_span * paths


def _rejection_fill(step: StepLaw, n: int, count: int, seed: int, survival: float) -> SampleBatch:
    kept, attempts, survived, stream = [], 0, 0, 0
    chunk = max(1024, min(1 << 16, int(4 * count / max(survival, 1e-6))))
    while survived < count:
        S = sample_paths(step, n, chunk, seed, stream)
        ok = np.all(S > 0, axis=1)
        kept.append(S[ok, -1])
        survived += int(ok.sum())
        attempts += chunk
        stream += 1
    endpoints = np.concatenate(kept)[:count]
    return SampleBatch(seed, count, n, endpoints, survived, attempts, method="rejection")


def empirical_meander_distance(step: StepLaw, n: int, count: int, seed: int) -> float:
    """KS distance of S_n^+ / a_n to 1 - exp(-x^2 / 2)."""
    batch = sample_conditioned(step, n, count, seed)
    x = batch.endpoints / norming_a(step, n)
    return float(stats.kstest(x, lambda v: meander_cdf(v)).statistic)


def chi_square_endpoints(batch: SampleBatch, law: LatticePMF, min_expected: float = 5.0) -> tuple[float, float]:
    """(statistic, p-value) of endpoint frequencies against a normalized law.

    Cells with expected count below ``min_expected`` are pooled into one.
    """
    law = law.normalized()
    pts = law.points
    expected = law.masses * len(batch.endpoints)
    idx = np.rint((batch.endpoints - law.shift * law.n) / law.span).astype(np.int64) - law.k_min
    if np.any((idx < 0) | (idx >= len(pts))):
        raise SamplerAuditFailure("sample outside the support of the law")
    observed = np.bincount(idx, minlength=len(pts)).astype(float)
    if observed[expected == 0].any():
        raise SamplerAuditFailure("sample at a point of zero probability")
    pos = expected > 0
    observed, expected = observed[pos], expected[pos]
    big = expected >= min_expected
    obs = list(observed[big])
    exp = list(expected[big])
    if (~big).any():
        obs.append(observed[~big].sum())
        exp.append(expected[~big].sum())
    if len(obs) < 2:
        return 0.0, 1.0
    res = stats.chisquare(obs, exp)
    return float(res.statistic), float(res.pvalue)
