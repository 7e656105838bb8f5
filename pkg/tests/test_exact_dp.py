from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab import exact_dp
from fluctlab.errors import ExplosionGuard, HorizonTooLarge, ZeroSurvival
from fluctlab.walk_core import StepLaw


def test_pmf_two_steps(simple):
    assert exact_dp.pmf(simple, 2).as_dict() == {-2.0: 0.25, 0.0: 0.5, 2.0: 0.25}


def test_pmf_time_zero(skewed):
    assert exact_dp.pmf(skewed, 0).as_dict() == {0.0: 1.0}


def test_pmf_one_step_is_step_law(lazy):
    assert exact_dp.pmf(lazy, 1).as_dict() == {-1.0: 0.25, 0.0: 0.5, 1.0: 0.25}


def test_positive_part_small_n(simple):
    r1 = exact_dp.positive_part_pmf(simple, 1)
    assert r1.pmf.as_dict() == {1.0: 0.5} and r1.survival == 0.5
    r2 = exact_dp.positive_part_pmf(simple, 2)
    assert r2.pmf.as_dict() == {2.0: 0.25} and r2.survival == 0.25
    r3 = exact_dp.positive_part_pmf(simple, 3)
    assert r3.pmf.as_dict() == {1.0: 0.125, 3.0: 0.125} and r3.survival == 0.25


def test_conditioned_examples(simple):
    assert exact_dp.conditioned_pmf(simple, 1).as_dict() == {1.0: 1.0}
    assert exact_dp.conditioned_pmf(simple, 3).as_dict() == {1.0: 0.5, 3.0: 0.5}


def test_zero_survival():
    # all mass on -1 fails validation, so build the raw law directly
    down = StepLaw(0.0, 1.0, (-1,), (1.0,), 0.0, lattice_shift=-1.0, lattice_span=1.0, steps=(0,))
    assert exact_dp.positive_part_pmf(down, 3).survival == 0.0
    with pytest.raises(ZeroSurvival):
        exact_dp.conditioned_pmf(down, 3)


def test_oracle_examples(simple, skewed):
    assert exact_dp.enumerate_paths_oracle(simple, 3, exact_dp.stays_positive) == 0.25
    assert exact_dp.enumerate_paths_oracle(skewed, 1, lambda S: np.ones(len(S), bool)) == pytest.approx(1.0, abs=1e-15)
    assert exact_dp.enumerate_paths_oracle(simple, 2, lambda S: S[:, -1] == 0) == 0.5


def test_oracle_cap(lazy):
    with pytest.raises(ExplosionGuard):
        exact_dp.enumerate_paths_oracle(lazy, 20, exact_dp.stays_positive, cap=10**6)


@pytest.mark.parametrize("n", range(0, 11))
def test_pmf_matches_oracle(shipped, n):
    law = exact_dp.pmf(shipped, n)
    orc = exact_dp.oracle_law(shipped, n)
    dense = dict(zip(law.indices.tolist(), law.masses.tolist()))
    for k in set(orc) | set(dense):
        assert abs(orc.get(k, 0.0) - dense.get(k, 0.0)) <= 1e-14
    assert law.total == pytest.approx(1.0, abs=1e-12)


def test_first_exit_telescoping(shipped):
    n = 10
    surv = exact_dp.survival_sequence(shipped, n)
    exits = exact_dp.first_exit_probabilities(shipped, n)
    assert np.allclose(surv[:-1] - surv[1:], exits[1:], atol=1e-15, rtol=0)
    for t in range(1, 8):
        orc = exact_dp.enumerate_paths_oracle(
            shipped, t, lambda S: np.all(S[:, :-1] > 0, axis=1) & (S[:, -1] <= 0)
        )
        assert abs(orc - exits[t]) <= 1e-14


def test_survival_nonincreasing(shipped):
    s = exact_dp.survival_sequence(shipped, 200)
    # the simple walk has P(C_2k) = P(C_2k+1); allow rounding there
    assert np.all(np.diff(s) <= 1e-15 * s[1:])


def test_killed_mass_on_positive_points(shipped):
    for p in exact_dp.iter_pmfs(shipped, 60, kill=True):
        if p.n:
            assert np.all(p.points[p.masses > 0] > 0)


def test_mass_conservation_per_step(shipped):
    prev = 1.0
    walker = exact_dp._Walker(shipped, True, exact_dp.DEFAULT_MAX_WINDOW)
    for _ in range(300):
        walker.advance()
        after = math.fsum(walker.masses.tolist()) + walker.killed_mass
        assert abs(after - prev) <= 1e-13
        prev = math.fsum(walker.masses.tolist())


def test_symmetric_pmf(simple, lazy):
    # mirrored entries are summed in opposite order, so agreement is to a few ulps
    for step in (simple, lazy):
        for n in (7, 50, 301):
            p = exact_dp.pmf(step, n)
            assert np.array_equal(p.points, -p.points[::-1])
            assert np.allclose(p.masses, p.masses[::-1], rtol=1e-13, atol=0)


def test_large_n_window_trimmed(simple):
    p = exact_dp.pmf(simple, 5000)
    assert p.total == pytest.approx(1.0, abs=1e-12)
    assert len(p.masses) < 5001


def test_llt_errors_shrink(lazy):
    e = [exact_dp.llt_sup_error(lazy, n) for n in (50, 200, 800)]
    assert e[0] > e[1] > e[2]
    c = [exact_dp.llt_sup_error(lazy, n, conditioned=True) for n in (50, 200, 800)]
    assert c[0] > c[1] > c[2]


def test_horizon_guard(simple):
    with pytest.raises(HorizonTooLarge):
        exact_dp.positive_part_pmf(simple, 10**9)
    exact_dp.check_horizon(simple, 10**5)
