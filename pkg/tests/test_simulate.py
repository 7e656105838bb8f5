from __future__ import annotations

import hashlib
import json
import math

import numpy as np
import pytest

from fluctlab import exact_dp, simulate


def test_unconditioned_deterministic(lazy):
    a = simulate.sample_unconditioned(lazy, 25, 1000, seed=7)
    b = simulate.sample_unconditioned(lazy, 25, 1000, seed=7)
    c = simulate.sample_unconditioned(lazy, 25, 1000, seed=8)
    assert np.array_equal(a.endpoints, b.endpoints)
    assert not np.array_equal(a.endpoints, c.endpoints)


def test_unconditioned_mean(simple):
    count, n = 100_000, 50
    b = simulate.sample_unconditioned(simple, n, count, seed=1)
    assert abs(np.mean(b.endpoints / math.sqrt(n))) < 4 / math.sqrt(count)


def test_unconditioned_mode_frequency(simple):
    count, n = 10**6, 10
    b = simulate.sample_unconditioned(simple, n, count, seed=3)
    p = exact_dp.pmf(simple, n).as_dict()[0.0]
    freq = np.mean(b.endpoints == 0)
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / count)


def test_workers_merge_order_independent(skewed):
    a = simulate.sample_unconditioned(skewed, 12, 10_001, seed=5, workers=3)
    b = simulate.sample_unconditioned(skewed, 12, 10_001, seed=5, workers=3)
    digest = lambda e: hashlib.sha256(np.sort(e).tobytes()).hexdigest()
    assert digest(a.endpoints) == digest(b.endpoints)
    assert len(a.endpoints) == 10_001


def test_conditioned_n3(simple):
    count = 10**5
    b = simulate.sample_conditioned(simple, 3, count, seed=11)
    for x in (1, 3):
        f = np.mean(b.endpoints == x)
        assert abs(f - 0.5) <= 3 * math.sqrt(0.25 / count)
    assert set(np.unique(b.endpoints).tolist()) == {1.0, 3.0}


def test_conditioned_n1_positive_atoms(skewed):
    b = simulate.sample_conditioned(skewed, 1, 5000, seed=2)
    pos = {float(x) for x in skewed.points if x > 0}
    assert set(np.unique(b.endpoints).tolist()) <= pos
    assert np.all(b.endpoints > 0)


def test_conditioned_paths_stay_positive(shipped):
    paths = simulate.sample_conditioned_paths(shipped, 40, 2000, seed=4)
    assert np.all(paths[:, 0] == 0)
    assert np.all(paths[:, 1:] > 0)
    inc = np.round(np.diff(paths, axis=1), 9)
    assert set(np.unique(inc).tolist()) <= {round(float(x), 9) for x in shipped.points}


def test_audit_subsample(shipped):
    b = simulate.sample_conditioned(shipped, 30, 20_000, seed=9)
    assert b.audited == 200


def test_audit_catches_bad_path(simple):
    bad = np.array([[0, 0, 1, 2]])  # S = 0, -1, 0, 1 in canonical indices
    assert simulate.audit_paths(simple, bad) == 1


@pytest.mark.parametrize("n", [2, 5, 12, 20])
def test_conditioned_chi_square(shipped, n):
    b = simulate.sample_conditioned(shipped, n, 10**6, seed=100 + n)
    _, p = simulate.chi_square_endpoints(b, exact_dp.positive_part_pmf(shipped, n).pmf)
    assert p > 1e-6


def test_rejection_rate(lazy):
    n, count = 10, 200_000
    b = simulate.sample_rejection(lazy, n, count, seed=6)
    p = exact_dp.positive_part_pmf(lazy, n).survival
    assert abs(b.survival_rate - p) <= 3 * math.sqrt(p * (1 - p) / count)
    assert np.all(b.endpoints > 0)


def test_rejection_fallback_warns(simple):
    with pytest.warns(UserWarning):
        b = simulate.sample_conditioned(simple, 10, 500, seed=1, max_table_entries=5)
    assert b.method == "rejection" and len(b.endpoints) == 500 and np.all(b.endpoints > 0)


def test_ks_single_sample(simple):
    d = simulate.empirical_meander_distance(simple, 100, 1, seed=0)
    assert 0 <= d <= 1


def test_metadata_keys(simple):
    b = simulate.sample_conditioned(simple, 10, 100, seed=1)
    meta = json.loads(b.metadata_json())
    assert set(meta) == {"seed", "rng", "n", "count", "survival_rate"}
    assert meta["survival_rate"] == exact_dp.positive_part_pmf(simple, 10).survival
    assert meta["rng"] == simulate.RNG_ID


def test_invalid_count(simple):
    with pytest.raises(ValueError):
        simulate.sample_unconditioned(simple, 3, 0, seed=1)
