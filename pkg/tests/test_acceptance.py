"""The twelve acceptance criteria.  Each test carries a criterion marker; the
conftest prints one pass/fail line per criterion at the end of the run."""
import random
import time
from fractions import Fraction
from itertools import combinations, product

import pytest

from gen import random_qf, random_tinf_env, random_tinf_formula
from oracles import TInfOracle, binomial_by_counting, brute_good_size, morley_oracle
from keisler_lab.approx import BOUND_GRID, av_error, binomial_tail_exact, fim_convexity_check, wlln_bound
from keisler_lab.formula import Not, Param, Sort, Var, conj, disj, eq, is_qf, rel, to_dnf, to_str
from keisler_lab.measures import (Average, CoinFlip, Convex, Dirac, TInfQType, independent_family_measure)
from keisler_lab.morley import check_assoc, morley_product_eval
from keisler_lab.qe import eliminate_quantifiers
from keisler_lab.scenarios import (_type_of_bits, _z_keys, cbar_fragment, random_half_set, run_henson_tgood,
                                   run_nocom, run_qpq_suite, run_ternary_gap, run_thalf_nonfam,
                                   run_thalf_satisfiability, ternary_instance_count)
from keisler_lab.theories import (RANDOM_GRAPH, THALF_INF_PQ, TR, Fragment, PElem, TInfSemantics, evaluate,
                                  henson, rel_key, relational_fragment)
from keisler_lab.typespace import enumerate_types

V = Sort.V


def x(name="x"):
    return Var(name, V)


def c(name):
    return Param(name, V)


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1)
def test_coin_flip_law():
    rng = random.Random(101)
    start = time.perf_counter()
    for _ in range(500):
        params = ["a", "b", "c"][:rng.randint(0, 3)]
        fr = relational_fragment(TR, params, {rel_key("R", k): rng.random() < 0.5
                                              for k in product(params, repeat=3)})
        terms = ["x"] + params
        keys = [k for k in product(terms, repeat=3) if "x" in k]
        k = rng.randint(1, min(6, len(keys)))
        chosen = rng.sample(keys, k)
        lits = [rel("R", *(x() if t == "x" else c(t) for t in key)) for key in chosen]
        phi = conj(*(a if rng.random() < 0.5 else Not(a) for a in lits))
        assert CoinFlip(TR).eval(phi, fr) == Fraction(1, 2 ** k), to_str(phi)
    assert time.perf_counter() - start < 5


# ---------------------------------------------------------------- 2


def _tr_measure(rng, params):
    opts = [("coin", Fraction(1, 2)), ("coin", Fraction(1, 3))]
    if params:
        opts += [("dirac", "a"), ("avg", ("a", "a"))]
    spec = rng.choice(opts)
    if spec[0] == "coin":
        r = spec[1]
        return spec, CoinFlip(TR, None if r == Fraction(1, 2) else (lambda key: r))
    return spec, Dirac("a") if spec[0] == "dirac" else Average(spec[1])


@pytest.mark.criterion(2)
def test_morley_product_matches_brute_force():
    rng = random.Random(202)
    start = time.perf_counter()
    values = set()
    for _ in range(100):
        params = ["a"] if rng.random() < 0.75 else []
        fr = relational_fragment(TR, params, {rel_key("R", ("a", "a", "a")): rng.random() < 0.5} if params else {})
        (s1, mu), (s2, nu) = _tr_measure(rng, params), _tr_measure(rng, params)
        phi = random_qf(rng, [x("x"), x("y")] + [c(p) for p in params], depth=3)
        got = morley_product_eval(mu, nu, phi, fr, ("x",), ("y",))
        want = morley_oracle(s1, s2, phi, params, fr.facts)
        assert got == want, (s1, s2, to_str(phi))
        values.add(got)
    assert len(values) > 5  # the sample is not degenerate
    assert time.perf_counter() - start < 30


# ---------------------------------------------------------------- 3


def _definable(rng, names, theory=TR):
    u = rng.random()
    if u < 0.25:
        return Dirac(rng.choice(names))
    if u < 0.5:
        return Average(tuple(rng.choice(names) for _ in range(rng.randint(1, 3))))
    if u < 0.8:
        return CoinFlip(theory)
    w = Fraction(rng.randint(1, 3), 4)
    return Convex((w, 1 - w), (CoinFlip(theory), Dirac(rng.choice(names))))


@pytest.mark.criterion(3)
def test_associativity_for_definable_triples():
    rng = random.Random(303)
    for _ in range(50):
        names = ["a", "b"][:rng.randint(1, 2)]
        fr = relational_fragment(TR, names, {rel_key("R", k): rng.random() < 0.5
                                             for k in product(names, repeat=3)})
        triple = [_definable(rng, names) for _ in range(3)]
        terms = [x("x"), x("y"), x("z")] + [c(n) for n in names]
        pool = [random_qf(rng, terms, depth=2) for _ in range(4)]
        rep = check_assoc(*triple, fr, pool)
        assert rep.equal, (str(rep), [m.describe() for m in triple])


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4)
@pytest.mark.parametrize("m,kappa", [(1, 2), (2, 3)])
def test_ternary_gap(m, kappa):
    start = time.perf_counter()
    res = run_ternary_gap(m, kappa)
    N = 3 * m * m + 3 * m + 1
    assert res.value("eta1") == 1
    assert res.value("eta2") == Fraction(kappa, 2 ** N)
    assert res.verdict

    # exhaustive enumeration of S_z(B): each non-realized type has lambda-mass 2^-N,
    # realized ones 0; eta2 is the mass of the kappa chosen types
    base = [f"b{i}" for i in range(1, m + 1)]
    keys = _z_keys(base)
    assert len(keys) == N == ternary_instance_count(m)
    chosen = {tuple(sorted(_type_of_bits(keys, i).items())) for i in range(kappa)}
    total = oracle_eta2 = Fraction(0)
    seen = 0
    for t in enumerate_types(relational_fragment(TR, base), ["z"]):
        mass = Fraction(0) if t.is_realized() else Fraction(1, 2 ** N)
        total += mass
        if tuple(sorted(dict(t.atoms).items())) in chosen:
            oracle_eta2 += mass
            seen += 1
    assert total == 1 and seen == kappa
    assert oracle_eta2 == res.value("eta2")
    assert time.perf_counter() - start < 60


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5)
def test_nocom():
    start = time.perf_counter()
    res = run_nocom()
    assert [v for _, v in res.rows] == [Fraction(1, 2), Fraction(1)]
    assert time.perf_counter() - start < 1


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6)
def test_thalf_separation():
    rng = random.Random(606)
    for _ in range(100):
        n = rng.randint(1, 8)
        pts = [Fraction(k, 1000) for k in rng.sample(range(1000), n)]
        res = run_thalf_satisfiability(pts)
        X = res.detail["set"].X
        assert res.verdict
        assert X.measure() == Fraction(1, 2) and all(X.contains(p) for p in pts)
        assert len(X.parts) <= n and all((b - a) * 2 * n in range(1, n + 1) for a, b in X.parts)
    for _ in range(100):
        sets = [random_half_set(rng.randint(1, 8), rng) for _ in range(rng.randint(1, 6))]
        res = run_thalf_nonfam(sets)
        a = res.detail["point"]
        hits = sum(s.X.contains(a) for s in sets)
        assert res.verdict and 2 * hits <= len(sets)


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7)
def test_qpq_fam_and_order_property():
    q = TInfQType(pq=True)
    rng = random.Random(707)
    for n in (2, 4, 8, 12):
        fr = cbar_fragment(n)
        cbar = fr.elements(Sort.Q)
        phi = fr.parse("x sqin y", {"x": Sort.P, "y": Sort.Q})
        assert av_error(q, cbar, phi, fr, "y", ("x",)) == Fraction(1, n)
        # by counting: every point lies in exactly n(n-1) of the n^2 sets, and q puts it in y
        for _ in range(5):
            u = [Fraction(rng.randrange(10 ** 6), 10 ** 6) for _ in range(n)]
            inside = sum(not (Fraction(j, n) <= u[i] < Fraction(j + 1, n)) for i in range(n) for j in range(n))
            assert 1 - Fraction(inside, n * n) == Fraction(1, n)

    res = run_qpq_suite(2, 4)
    assert res.value("verified") == 16 and res.verdict
    # independent check of the order property: realize b_0..b_3 and all a_I
    seq = Fragment(THALF_INF_PQ)
    bs = []
    for i in range(4):
        b = q.realize(seq, f"b{i}")
        seq = seq.with_value(f"b{i}", Sort.Q, b)
        bs.append(b)
    assert len({b.n for b in bs}) == 4
    for k in range(5):
        for I in combinations(range(4), k):
            a = PElem(seq.registry)
            for i, b in enumerate(bs):
                a.coords[b.n] = seq.registry.fresh_value(b.X if i in I else b.X.complement())
            assert [b.X.contains(a.coords[b.n]) for b in bs] == [i in I for i in range(4)]


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8)
def test_qe_soundness():
    rng = random.Random(808)
    engine_time = 0.0
    outcomes = set()
    for _ in range(50):
        f = random_tinf_formula(rng, max_quantifiers=2)
        t = time.perf_counter()
        g = eliminate_quantifiers(f)
        engine_time += time.perf_counter() - t
        assert is_qf(g)
        for _ in range(200):
            env = random_tinf_env(rng)
            t = time.perf_counter()
            got = evaluate(g, env, TInfSemantics())
            engine_time += time.perf_counter() - t
            want = TInfOracle().holds(f, env)
            assert got == want, (to_str(f), to_str(g), {k: str(v) for k, v in env.items()})
            outcomes.add(got)
    assert outcomes == {True, False}
    assert engine_time < 120


# ---------------------------------------------------------------- 9


@pytest.mark.criterion(9)
def test_concentration_bounds():
    for r in BOUND_GRID["r"]:
        for eps in BOUND_GRID["eps"]:
            for n in BOUND_GRID["n"]:
                assert binomial_tail_exact(r, eps, n) >= wlln_bound(r, eps, n)
    spot = binomial_tail_exact(Fraction(1, 2), Fraction(1, 4), 16)
    assert spot == binomial_by_counting(Fraction(1, 2), Fraction(1, 4), 16) == Fraction(30251, 32768)


# ---------------------------------------------------------------- 10


@pytest.mark.criterion(10)
def test_fim_convexity():
    rng = random.Random(1010)
    for i in range(20):
        theory = TR if i % 2 == 0 else RANDOM_GRAPH
        names = ["a", "b"]
        if theory is TR:
            facts = {rel_key("R", k): rng.random() < 0.5 for k in product(names, repeat=3)}
            relname, arity = "R", 3
        else:
            facts = {rel_key("E", ("a", "b")): rng.random() < 0.5}
            relname, arity = "E", 2
        fr = relational_fragment(theory, names, facts)
        mu, nu = _definable(rng, names, theory), _definable(rng, names, theory)
        r = Fraction(rng.randint(0, 4), 4)
        terms = [x("x1"), x("x2")] + [c(n) for n in names]
        pool = [random_qf(rng, terms, depth=2, name=relname, arity=arity) for _ in range(3)]
        rep = fim_convexity_check(mu, nu, r, 2, fr, pool)
        assert rep.equal, (str(rep), mu.describe(), nu.describe(), r)


# ---------------------------------------------------------------- 11


def _E(a, b):
    return rel("E", a, b)


def _v(i):
    return Var(f"x{i}", V)


M1, M2 = Param("m1", V), Param("m2", V)

# hand-built theta: each a list of disjuncts, each disjunct a list of literals
THETAS = [
    [[(_E(_v(1), _v(2)), False), (eq(_v(1), M1), False), (eq(_v(2), M1), False)]],
    [[(_E(_v(1), _v(2)), True)]],
    [[(eq(_v(1), M1), True), (_E(_v(2), _v(3)), False)]],
    [[(_E(_v(1), _v(2)), True), (_E(_v(2), _v(3)), True)]],
    [[(_E(_v(1), _v(2)), True), (_E(_v(3), _v(4)), True)]],
    [[(eq(_v(1), _v(2)), True), (_E(_v(2), _v(3)), True)]],
    [[(eq(_v(1), M1), True), (eq(_v(2), M2), True), (_E(_v(3), M1), True)]],
    [[(_E(_v(1), _v(2)), True)], [(_E(_v(1), _v(2)), False)]],
    [[(eq(_v(1), M1), True)], [(eq(_v(2), M2), True), (eq(_v(1), M1), True)]],
    [[(_E(_v(1), M1), True), (_E(_v(2), M1), True), (_E(_v(1), _v(3)), True)]],
    [[(eq(_v(1), _v(3)), True), (eq(_v(3), M2), True)]],
    [[(_E(_v(1), _v(2)), True), (_E(_v(1), _v(3)), True), (_E(_v(1), _v(4)), True)]],
    [[(eq(_v(1), _v(2)), False), (eq(_v(2), _v(3)), False), (_E(_v(1), _v(3)), False)]],
    [[(_E(_v(i), _v(i + 1)), True) for i in range(1, 5)]],
    [[(_E(_v(1), _v(2)), True), (_E(_v(2), _v(3)), True)], [(eq(_v(1), M1), True)]],
    [[(eq(_v(2), M2), True), (_E(_v(1), _v(3)), True), (_E(_v(3), _v(4)), False)]],
    [[(eq(_v(1), _v(4)), True), (_E(_v(1), _v(2)), True), (_E(_v(4), _v(3)), True)]],
    [[(_E(_v(1), M2), False), (eq(_v(1), M2), False), (eq(_v(2), M1), False)]],
    [[(eq(_v(i), M1), True)] for i in range(1, 4)],
    [[(_E(_v(1), _v(2)), True), (_E(_v(3), _v(4)), True), (_E(_v(5), _v(1)), True), (eq(_v(5), M1), True)]],
]


def _theta(dnf):
    return disj(*(conj(*(a if pos else Not(a) for a, pos in d)) for d in dnf))


@pytest.mark.criterion(11)
@pytest.mark.parametrize("i", range(len(THETAS)))
def test_henson_tgood(i):
    dnf = THETAS[i]
    fr = relational_fragment(henson(3), ["m1", "m2"], {rel_key("E", ("m1", "m2")): True})
    theta = _theta(dnf)
    res = run_henson_tgood(theta, Fraction(1, 4), fr)
    xs = sorted({v.name for d in dnf for a, _ in d for v in a.args if isinstance(v, Var)},
                key=lambda s: int(s[1:]))
    M, edges = ["m1", "m2"], [("m1", "m2")]
    # row t is the disjunct t of the normalized theta (subsumed disjuncts are dropped)
    got = [v for k, v in res.rows if k.startswith("max good")]
    disjuncts = to_dnf(theta, cap=None).disjuncts
    assert got == [brute_good_size(list(d), xs, M, edges, 3) for d in disjuncts]
    best = max(brute_good_size(d, xs, M, edges, 3) for d in dnf)
    assert max(got) == best
    assert res.verdict
    if "witness" in res.detail:
        assert res.value("Av(a)(E(x,b))") >= res.value("|X|/n") == Fraction(best, len(xs))


# ---------------------------------------------------------------- 12


def _rewrite_pair(rng, n):
    """Two normal forms of one random event over n family members: the minterm
    DNF, and either a partially merged DNF or the CNF of the complement."""
    minterms = [s for s in product((True, False), repeat=n) if rng.random() < 0.5]
    cover = [dict(enumerate(m)) for m in minterms]
    for _ in range(rng.randint(0, 2 * n)):
        if len(cover) < 2:
            break
        c1, c2 = rng.sample(cover, 2)
        diff = [i for i in c1 if i in c2 and c1[i] != c2[i]]
        if len(diff) == 1 and set(c1) == set(c2) and all(c1[i] == c2[i] for i in c1 if i != diff[0]):
            merged = {i: s for i, s in c1.items() if i != diff[0]}
            if rng.random() < 0.5:
                cover.remove(c1)
                cover.remove(c2)
            cover.append(merged)
    rng.shuffle(cover)
    if rng.random() < 0.5:
        other = ("dnf", cover)
    else:
        others = [dict(enumerate(s)) for s in product((True, False), repeat=n) if s not in minterms]
        other = ("cnf", others)
    return minterms, other


@pytest.mark.criterion(12)
def test_independent_family_well_defined():
    rng = random.Random(1212)
    fr = relational_fragment(TR, ["a", "b"])
    family = [rel("R", x(), c(s), c(t)) for s, t in (("a", "a"), ("a", "b"), ("b", "a"), ("b", "b"))]
    for _ in range(200):
        n = rng.randint(1, 4)
        fam = family[:n]
        f = [Fraction(rng.randint(0, 6), 6) for _ in range(n)]
        m = independent_family_measure(fam, f, fr)

        def lit(i, s):
            return fam[i] if s else Not(fam[i])

        minterms, (kind, cells) = _rewrite_pair(rng, n)
        left = disj(*(conj(*(lit(i, s) for i, s in enumerate(mt))) for mt in minterms))
        if kind == "dnf":
            right = disj(*(conj(*(lit(i, s) for i, s in sorted(cell.items(), key=lambda _: rng.random())))
                           for cell in cells))
        else:
            right = conj(*(disj(*(lit(i, not s) for i, s in cell.items())) for cell in cells))
        oracle = Fraction(0)
        for mt in minterms:
            w = Fraction(1)
            for i, s in enumerate(mt):
                w *= f[i] if s else 1 - f[i]
            oracle += w
        assert m.eval(left) == m.eval(right) == oracle, (to_str(left), to_str(right))
