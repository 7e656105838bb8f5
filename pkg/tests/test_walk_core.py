from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluctlab.errors import BadMass, DegenerateSupport, NonMaximalSpan, NonZeroMean
from fluctlab.walk_core import (
    LatticePMF,
    first_positive_index,
    make_lattice_step,
    norming_a,
    pmf_from_csv,
    step_from_json,
    truncated_lattice_step,
    truncated_variance,
)


def test_simple_walk_variance(simple):
    assert simple.variance == pytest.approx(1.0, abs=1e-15)


def test_lazy_walk_variance(lazy):
    assert lazy.variance == pytest.approx(0.5, abs=1e-15)


def test_even_offsets_rejected():
    with pytest.raises(NonMaximalSpan):
        make_lattice_step(0.0, 1.0, [(-2, 0.25), (2, 0.25), (0, 0.5)])


def test_nonzero_mean_rejected():
    with pytest.raises(NonZeroMean):
        make_lattice_step(0.0, 1.0, [(-1, 0.4), (1, 0.6)])


def test_single_atom_rejected():
    with pytest.raises(DegenerateSupport):
        make_lattice_step(0.0, 1.0, [(0, 1.0)])


@pytest.mark.parametrize("atoms", [[(-1, 0.5), (1, 0.6)], [(-1, -0.5), (1, 1.5)], [(-1, float("nan")), (1, 0.5)]])
def test_bad_masses_rejected(atoms):
    with pytest.raises(BadMass):
        make_lattice_step(0.0, 1.0, atoms)


def test_periodic_walk_gets_coarse_lattice(simple, lazy):
    assert (simple.lattice_shift, simple.lattice_span) == (-1.0, 2.0)
    assert simple.period == 2
    assert (lazy.lattice_shift, lazy.lattice_span) == (-1.0, 1.0)


def test_shifted_lattice_accepted():
    # support {-1/2, 1/2}: shift 1/2, span 1, offsets {-1, 0}
    s = make_lattice_step(0.5, 1.0, [(-1, 0.5), (0, 0.5)])
    assert s.variance == pytest.approx(0.25)


def test_truncated_variance_examples(simple, lazy):
    assert truncated_variance(simple, 2) == 1.0
    assert truncated_variance(simple, 0.5) == 0.0
    assert truncated_variance(lazy, 1) == 0.5


def test_truncated_variance_monotone(skewed):
    ts = np.linspace(0.01, 3, 300)
    v = [truncated_variance(skewed, t) for t in ts]
    assert all(b >= a for a, b in zip(v, v[1:]))
    assert v[-1] == pytest.approx(skewed.variance)


def test_norming_a_examples(simple, lazy):
    assert norming_a(simple, 4) == 2.0
    assert norming_a(lazy, 2) == pytest.approx(1.0)
    assert norming_a(simple, 1) == 1.0


def test_step_json_roundtrip(skewed):
    back = step_from_json(skewed.to_json())
    assert back == skewed
    assert set(json.loads(skewed.to_json())) == {"shift", "span", "atoms"}


def test_malformed_json_rejected():
    with pytest.raises(BadMass):
        step_from_json('{"shift": 0, "span": 1}')


def test_truncated_step_reports_tail():
    # two-sided geometric law, symmetric, truncated to |k| <= 60
    def mass(k):
        return 0.5 ** abs(k) / 3.0

    step, tail = truncated_lattice_step(0.0, 1.0, mass, -60, 60)
    assert tail < 1e-15
    assert math.fsum(step.masses) == pytest.approx(1.0, abs=1e-14)


def test_lattice_pmf_csv_roundtrip(simple):
    p = LatticePMF(2, simple.lattice_shift, simple.lattice_span, 0, np.array([0.25, 0.5, 0.25]))
    text = p.to_csv()
    assert text.splitlines()[0] == "n,point,mass"
    back = pmf_from_csv(text, simple.lattice_shift, simple.lattice_span)
    assert back.as_dict() == p.as_dict() == {-2.0: 0.25, 0.0: 0.5, 2.0: 0.25}


def test_first_positive_index(simple):
    # time 3 lattice is -3 + 2k, first point > 0 is x = 1 at k = 2
    assert first_positive_index(simple, 3) == 2
    # time 2: -2 + 2k, x = 0 is killed, first positive is x = 2 at k = 2
    assert first_positive_index(simple, 2) == 2


@st.composite
def atom_lists(draw):
    ks = draw(st.lists(st.integers(-6, 6), min_size=1, max_size=6, unique=True))
    ws = draw(st.lists(st.floats(0.01, 1.0), min_size=len(ks), max_size=len(ks)))
    total = sum(ws)
    return [(k, w / total) for k, w in zip(ks, ws)]


@settings(max_examples=150, deadline=None)
@given(atom_lists())
def test_accepted_laws_satisfy_invariants(atoms):
    try:
        s = make_lattice_step(0.0, 1.0, atoms)
    except (NonZeroMean, NonMaximalSpan, DegenerateSupport, BadMass):
        return
    p = s.probs
    assert np.all(p >= 0) and abs(math.fsum(p) - 1) <= 1e-14
    assert abs(math.fsum(s.points * p)) <= 1e-12 * max(1, np.abs(s.points).max())
    assert math.gcd(*s.offsets) == 1
    assert 0 < s.variance < math.inf


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.floats(0.05, 0.4), st.floats(0.01, 0.05))
def test_symmetric_laws_always_accepted(k, w, v):
    atoms = [(-k, w), (k, w), (-1, v), (1, v), (0, 1 - 2 * w - 2 * v)]
    s = make_lattice_step(0.0, 1.0, atoms)
    assert s.variance == pytest.approx(2 * w * k * k + 2 * v, rel=1e-12)
