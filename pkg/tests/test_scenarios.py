import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from keisler_lab.formula import Sort
from keisler_lab.intervals import IntervalUnion
from keisler_lab.scenarios import (SCENARIOS, random_half_set, run_henson_tgood, run_nocom, run_pq_property_ii,
                                   run_qpq_suite, run_ternary_gap, run_thalf_nonfam, run_thalf_satisfiability,
                                   ternary_instance_count)
from keisler_lab.theories import TR, HalfSet, henson, rel_key, relational_atom_keys, relational_fragment
from keisler_lab.typespace import enumerate_types

F = Fraction
V = Sort.V


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_instance_count_by_enumeration(m):
    base = [f"b{i}" for i in range(m)]
    keys = relational_atom_keys(TR, base + ["z"], involving=["z"])
    assert ternary_instance_count(m) == len(keys)


def test_ternary_small():
    res = run_ternary_gap(1, 2)
    assert res.verdict
    assert res.value("eta1") == 1
    assert res.value("eta2") == F(1, 64)


def test_ternary_eta2_shrinks_with_base():
    assert run_ternary_gap(2, 2).value("eta2") < run_ternary_gap(1, 2).value("eta2")


def test_ternary_errors():
    with pytest.raises(ValueError):
        run_ternary_gap(0, 2)
    with pytest.raises(ValueError):
        run_ternary_gap(1, 0)


def _space(base):
    return [t for t in enumerate_types(base, ["z"]) if not t.is_realized()]


def test_property_ii_empty_and_full():
    base = relational_fragment(TR, [])
    none = run_pq_property_ii([], base)
    assert none.verdict and none.value("in product") == 0
    space = _space(base)
    full = run_pq_property_ii(space, base)
    assert full.verdict and full.value("in product") == len(space) == 2


def test_property_ii_single_type():
    base = relational_fragment(TR, ["b1"], {rel_key("R", ("b1", "b1", "b1")): True})
    space = _space(base)
    for t in space[:6]:
        res = run_pq_property_ii([t], base)
        assert res.verdict and res.value("in product") == 1


def test_nocom_values():
    res = run_nocom()
    assert res.verdict
    assert [v for _, v in res.rows] == [F(1, 2), F(1)]
    assert res.detail["difference"] == F(1, 2)


def _half(parts):
    return IntervalUnion.of(parts)


def test_thalf_complementary_pair():
    res = run_thalf_nonfam([_half([(0, F(1, 2))]), _half([(F(1, 2), 1)])])
    assert res.detail["point"] == 0 and res.value("hits") == 1


def test_thalf_single_set():
    res = run_thalf_nonfam([_half([(0, F(1, 2))])])
    assert res.detail["point"] == F(1, 2) and res.value("hits") == 0


def test_thalf_rejects_wrong_measure():
    with pytest.raises(ValueError):
        run_thalf_nonfam([_half([(0, F(1, 4))])])


@given(st.integers(0, 10 ** 9), st.integers(1, 8))
def test_thalf_nonfam_always_certifies(seed, n):
    rng = random.Random(seed)
    sets = [random_half_set(n, rng) for _ in range(rng.randint(1, 6))]
    res = run_thalf_nonfam(sets)
    assert res.verdict
    a = res.detail["point"]
    hits = sum(b.X.contains(a) for b in sets)
    assert hits == res.value("hits") and 2 * hits <= len(sets)


def test_thalf_satisfiability_examples():
    res = run_thalf_satisfiability([F(1, 10), F(6, 10)])
    assert res.verdict and res.detail["set"].X == _half([(0, F(1, 4)), (F(1, 2), F(3, 4))])
    res = run_thalf_satisfiability([0])
    assert res.detail["set"].X == _half([(0, F(1, 2))])
    with pytest.raises(ValueError):
        run_thalf_satisfiability([])


@given(st.sets(st.integers(0, 999), min_size=1, max_size=8))
def test_thalf_satisfiability_membership(ks):
    pts = [F(k, 1000) for k in ks]
    res = run_thalf_satisfiability(pts)
    b = res.detail["set"]
    assert isinstance(b, HalfSet) and b.X.measure() == F(1, 2)
    assert all(b.X.contains(p) for p in pts)


def test_qpq_suite():
    res = run_qpq_suite(4, 2)
    assert res.verdict
    assert res.value("error x sqin y") == F(1, 4)
    assert res.value("witnesses") == res.value("verified") == 4
    with pytest.raises(ValueError):
        run_qpq_suite(4, 0)


# ---------------------------------------------------------------- Henson good sets

HF = relational_fragment(henson(3), ["m"])


def test_henson_independent_pair():
    theta = HF.parse("!E(x1,x2) & !(x1 = m) & !(x2 = m)")
    res = run_henson_tgood(theta, F(1, 2), HF)
    assert res.verdict and res.value("max good (t=1)") == 2
    assert res.value("Av(a)(E(x,b))") >= res.value("|X|/n") == 1


def test_henson_edge_forbids_pair():
    res = run_henson_tgood(HF.parse("E(x1,x2)"), F(1, 2), HF)
    assert res.verdict and res.value("max good (t=1)") == 1


def test_henson_equality_excludes():
    res = run_henson_tgood(HF.parse("x1 = m & !(x2 = m)"), F(1, 2), HF)
    assert res.detail["good"][1] == [2]


def test_henson_needs_henson_fragment():
    with pytest.raises(ValueError):
        run_henson_tgood(HF.parse("E(x1,x2)"), F(1, 2), relational_fragment(TR, ["m"]))


def test_registry():
    assert set(SCENARIOS) >= {"ternary-gap", "nocom", "qpq", "thalf-nonfam", "thalf-satisfiability"}
