import random
from itertools import product

import pytest
from hypothesis import given, strategies as st

from gen import random_qf
from keisler_lab.formula import (BOT, TOP, And, Atom, DnfLimitError, Exists, FormulaSyntaxError, Lin, Not, Param,
                                 QOp, Sort, SortError, Var, conj, disj, formal_minterms, free_vars, is_qf, parse,
                                 q_term_normal_forms, qcomp, qjoin, qmeet, rel, to_dnf, to_str)
from keisler_lab.theories import TR, evaluate_in, rel_key, relational_fragment

P, Q, V = Sort.P, Sort.Q, Sort.V


def test_parse_sqin():
    assert parse("x sqin y") == Atom("sqin", (Var("x", P), Var("y", Q)))


def test_parse_linear_exists():
    f = parse("exists z0. z0 + z0 = l(y)")
    assert isinstance(f, Exists) and f.var == Var("z0", Sort.R)
    assert f.body.kind == "eq" and isinstance(f.body.args[0], Lin)


def test_parse_lattice_term():
    f = parse("x sqin (y1 meet y2^c)")
    y1, y2 = Var("y1", Q), Var("y2", Q)
    assert f == Atom("sqin", (Var("x", P), QOp("meet", (y1, QOp("comp", (y2,))))))


def test_parse_params_and_free_vars():
    f = parse("R(x,a,a) & !R(x,a,b)", params=["a", "b"])
    assert isinstance(f, And)
    assert f.args[0].args[1] == Param("a", V)
    assert free_vars(f) == {Var("x", V)}
    assert is_qf(f)
    assert not is_qf(parse("forall x. E(x,m) | x = m", params=["m"]))


def test_syntax_error_has_position():
    with pytest.raises(FormulaSyntaxError, match="position 6"):
        parse("x sqin")


def test_sort_error():
    with pytest.raises(SortError):
        parse("x sqin y & y sqin x")


@pytest.mark.parametrize("text", [
    "x sqin y",
    "exists z0. 2*z0 = l(y)",
    "x sqin y1 meet y2^c",
    "R(x,a,a) & !R(x,a,b)",
    "forall x. E(x,m) | x = m",
    "l(y) < 1/2 & y sim w",
    "exists y0. a sqin y0 & l(y0) = 1/2 & !(y0 sim b)",
    "x sqin (y join bot)^c | top = y",
])
def test_print_parse_round_trip(text):
    f = parse(text, params=["a", "b", "m"])
    assert parse(to_str(f), params=["a", "b", "m"]) == f


def _lit(name):
    return rel("R", Param(name, V), Param(name, V), Param(name, V))


A, B, C = _lit("a"), _lit("b"), _lit("c")


def test_dnf_de_morgan():
    d = to_dnf(Not(conj(A, B)))
    assert set(d.disjuncts) == {((A, False),), ((B, False),)}


def test_dnf_idempotence():
    assert to_dnf(disj(A, A)).disjuncts == (((A, True),),)


def test_dnf_distribution():
    d = to_dnf(conj(disj(A, B), C))
    assert {frozenset(x) for x in d.disjuncts} == {frozenset({(A, True), (C, True)}),
                                                   frozenset({(B, True), (C, True)})}


def test_dnf_rejects_quantifiers_and_caps():
    with pytest.raises(ValueError):
        to_dnf(parse("exists x. E(x,m)", params=["m"]))
    big = conj(*(disj(_lit(f"p{i}"), _lit(f"q{i}")) for i in range(13)))
    with pytest.raises(DnfLimitError):
        to_dnf(big)


def test_dnf_deterministic_and_duplicate_free():
    f = disj(conj(B, A, A), conj(C, Not(A)), B)
    d1, d2 = to_dnf(f), to_dnf(f)
    assert d1 == d2
    for conjunct in d1.disjuncts:
        assert len(set(conjunct)) == len(conjunct)


@given(st.integers(0, 10 ** 9))
def test_dnf_preserves_semantics(seed):
    rng = random.Random(seed)
    names = ["a", "b", "c"]
    terms = [Param(n, V) for n in names]
    f = random_qf(rng, terms, depth=3, eqs=False)
    d = to_dnf(f, cap=None).to_formula()
    for _ in range(4):
        facts = {rel_key("R", k): rng.random() < 0.5 for k in product(names, repeat=3)}
        fr = relational_fragment(TR, names, facts)
        assert evaluate_in(f, fr) == evaluate_in(d, fr)


@given(st.integers(0, 10 ** 9))
def test_round_trip_random(seed):
    rng = random.Random(seed)
    terms = [Var("x", V), Param("a", V), Param("b", V)]
    f = random_qf(rng, terms, depth=3)
    assert parse(to_str(f), params=["a", "b"]) == f


def test_normal_forms_one_generator():
    y = Var("y", Q)
    assert q_term_normal_forms([y]) == [BOT, y, qcomp(y), TOP]


def test_normal_forms_two_generators():
    ys = [Var("y1", Q), Var("y2", Q)]
    forms = q_term_normal_forms(ys)
    assert len(forms) == 16
    assert forms[0] == BOT and forms[-1] == TOP
    assert len({formal_minterms(t, ys) for t in forms}) == 16


def test_normal_forms_need_a_variable():
    with pytest.raises(ValueError):
        q_term_normal_forms([])


def test_normal_forms_closed():
    ys = [Var("y1", Q), Var("y2", Q)]
    forms = q_term_normal_forms(ys)
    shapes = {formal_minterms(t, ys) for t in forms}
    for s, t in product(forms, repeat=2):
        assert formal_minterms(qmeet(s, t), ys) in shapes
        assert formal_minterms(qjoin(s, t), ys) in shapes
        assert formal_minterms(qcomp(s), ys) in shapes
