"""Scripted reproductions of the counterexamples and positive checks."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

from .approx import av_error
from .formula import Sort, free_vars, parse, to_dnf
from .intervals import IntervalUnion
from .measures import X_MARK, CoinFlip, CubeLebesgue, RuleType, TInfQType, p_E, Average
from .morley import Product, morley_product_eval
from .theories import (QBOT, QTOP, THALF_INF, THALF_INF_PQ, TR, Fragment, HalfSet, ParamInfo, PElem,
                       TInfSemantics, evaluate_in, has_clique, qpair, relational_atom_keys, relational_fragment, rel_key)
from .typespace import QfType, enumerate_types


@dataclass
class ScenarioResult:
    name: str
    params: dict
    rows: list  # (label, Fraction)
    verdict: bool
    detail: dict = field(default_factory=dict)

    def value(self, label: str) -> Fraction:
        for k, v in self.rows:
            if k == label:
                return v
        raise KeyError(label)


# ---------------------------------------------------------------- ternary gap

def ternary_instance_count(m: int) -> int:
    """Instances of R in one free variable over m parameters: (m+1)^3 - m^3."""
    return 3 * m * m + 3 * m + 1


def _z_keys(base: Sequence[str]) -> list:
    return relational_atom_keys(TR, list(base) + ["z"], involving=["z"])


def _type_of_bits(keys, bits: int) -> dict:
    return {k: bool(bits >> i & 1) for i, k in enumerate(keys)}


def _realizes(c: str, rtype: dict, base: set, fr: Fragment) -> bool:
    """c satisfies the non-realized type rtype over the base (z marks c)."""
    if fr.rep(c) in base:
        return False
    for (r, args), val in rtype.items():
        if fr.truth(rel_key(r, [c if a == "z" else a for a in args])) != val:
            return False
    return True


def make_p(index: Sequence[str]) -> RuleType:
    """Positive instances of R(x,..) are R(x,b,c) with R(a_i,b,c) for some index a_i."""
    index = tuple(index)

    def decide(key, el, fr):
        args = key[1]
        if args[0] != el or el in args[1:]:
            return False
        return any(fr.truth(("R", (a, args[1], args[2]))) for a in index)
    return RuleType(decide, "p")


def make_q(index: Sequence[str], types: Sequence[dict], base: Sequence[str]) -> RuleType:
    """Positive instances of R(..y..) are R(a_i,y,c) with c realizing types[i] over the base."""
    pos = {a: i for i, a in enumerate(index)}
    base = set(base)

    def decide(key, el, fr):
        args = key[1]
        if args[1] != el or el in (args[0], args[2]):
            return False
        i = pos.get(fr.rep(args[0]))
        return i is not None and _realizes(args[2], types[i], base, fr)
    return RuleType(decide, "q")


def _lambda_mass_sum(keys, lam: CoinFlip, member) -> Fraction:
    """Sum of lam({t}) over the complete non-realized types t with member(t)."""
    w = [(lam.weight(_mark(k), False), lam.weight(_mark(k), True)) for k in keys]
    total = Fraction(0)
    stack = [(0, 0, Fraction(1))]
    while stack:
        i, bits, mass = stack.pop()
        if not mass:
            continue
        if i == len(keys):
            if member(bits):
                total += mass
            continue
        stack.append((i + 1, bits, mass * w[i][0]))
        stack.append((i + 1, bits | 1 << i, mass * w[i][1]))
    return total


def _mark(key):
    return key[0], tuple(X_MARK if a == "z" else a for a in key[1])


def run_ternary_gap(m: int, kappa: int) -> ScenarioResult:
    if m < 1 or kappa < 1:
        raise ValueError("need a base of size m >= 1 and kappa >= 1")
    base = [f"b{i}" for i in range(1, m + 1)]
    keys = _z_keys(base)
    N = len(keys)
    if N != ternary_instance_count(m):
        raise AssertionError("instance count mismatch")
    if kappa > 1 << N:
        raise ValueError(f"only {1 << N} non-realized 1-types over a base of size {m}")
    lam = CoinFlip(TR)

    # eta1: Z is all of S(B), so by property (ii) F_{p(x)q}(c) = 1 iff tp(c/B) is in Z
    all_types = range(1 << N)
    eta1 = _lambda_mass_sum(keys, lam, lambda bits: bits in all_types)
    fr0 = relational_fragment(TR, base)
    for b in base:
        eta1 += lam.eval(parse(f"z = {b}", base), fr0, ("z",))

    # eta2: kappa indices a_i with chosen types r_i
    index = [f"a{i}" for i in range(kappa)]
    types = [_type_of_bits(keys, i) for i in range(kappa)]
    fr = relational_fragment(TR, base + index)
    p, q = make_p(index), make_q(index, types, base)
    phi = parse("R(x,y,z)")
    eta2 = Product(p, Product(q, lam)).eval(phi, fr, ("x", "y", "z"))
    partial = Fraction(0)
    for a in index:
        partial += morley_product_eval(q, lam, parse(f"R({a},y,z)", base + index), fr, ("y",), ("z",))
    expected = Fraction(kappa, 1 << N)
    rows = [("instances", Fraction(N)), ("eta1", eta1), ("eta2", eta2),
            ("sum_i (q x lambda)(R(a_i,y,z))", partial), ("gap", eta1 - eta2)]
    ok = eta1 == 1 and eta2 == expected and partial == expected
    return ScenarioResult("ternary-gap", {"m": m, "kappa": kappa}, rows, ok)


def run_pq_property_ii(Z: Sequence[QfType], base: Fragment) -> ScenarioResult:
    """Check R(x,y,c) in p(x)q iff tp(c/B) in Z, for every non-realized c-type over the base."""
    B = base.elements()
    space = [t for t in enumerate_types(base, ["z"]) if not t.is_realized()]
    Z = list(Z)
    for t in Z:
        if t.is_realized() or t.vars != ("z",):
            raise ValueError("Z must consist of non-realized types in the variable z")
    ztypes = [dict(t.atoms) for t in Z]
    index = [f"_a{i}" for i in range(len(Z))]
    p, q = make_p(index), make_q(index, ztypes, B)
    hits = checked = 0
    ok = True
    for t in space:
        facts = {rel_key(r, ["c" if a == "z" else a for a in args]): v for (r, args), v in t.atoms}
        fr = relational_fragment(TR, list(B) + index + ["c"], {**base.facts, **facts})
        val = morley_product_eval(p, q, parse("R(x,y,c)", ["c"]), fr, ("x",), ("y",))
        want = dict(t.atoms) in ztypes
        ok &= val == int(want)
        hits += val == 1
        checked += 1
    rows = [("c-types", Fraction(checked)), ("in product", Fraction(hits)), ("|Z|", Fraction(len(Z)))]
    return ScenarioResult("pq-property-ii", {"base": len(B), "Z": len(Z)}, rows, ok)


# ---------------------------------------------------------------- T^inf non-commutation

def run_nocom() -> ScenarioResult:
    fr = Fragment(THALF_INF)
    mu, q = CubeLebesgue(), TInfQType()
    b = q.realize(fr, "b")
    phi = parse("x sqin y", sorts={"x": Sort.P, "y": Sort.Q})
    left = morley_product_eval(mu, q, phi, fr, ("x",), ("y",))
    right = morley_product_eval(q, mu, phi, fr, ("y",), ("x",))
    rows = [("(mu x q)(x sqin y)", left), ("(q x mu)(x sqin y)", right)]
    detail = {"b": str(b), "l(b)": b.ell(), "difference": right - left}
    return ScenarioResult("nocom", {}, rows, (left, right) == (Fraction(1, 2), 1), detail)


# ---------------------------------------------------------------- T_{1/2}

def _as_set(b) -> IntervalUnion:
    X = b.X if isinstance(b, HalfSet) else b
    if X.measure() != Fraction(1, 2):
        raise ValueError(f"{X} does not have measure 1/2")
    return X


def run_thalf_nonfam(bbar: Sequence) -> ScenarioResult:
    """A point lying in at most half of the given half-measure sets."""
    sets = [_as_set(b) for b in bbar]
    if not sets:
        raise ValueError("need at least one set")
    n = len(sets)
    # the hit count is constant between consecutive endpoints
    cuts = sorted({Fraction(0)} | {e for X in sets for e in X.endpoints() if e < 1})
    for a in cuts:
        hits = sum(X.contains(a) for X in sets)
        if 2 * hits <= n:
            rows = [("point", a), ("hits", Fraction(hits)), ("n", Fraction(n))]
            return ScenarioResult("thalf-nonfam", {"n": n}, rows, True, {"point": a})
    raise AssertionError("no endpoint with few hits, so the sets are not half-measure")


def run_thalf_satisfiability(points: Sequence) -> ScenarioResult:
    """n intervals of I_{2n} whose union contains the n given points."""
    pts = [Fraction(p) for p in points]
    if not pts:
        raise ValueError("need at least one point")
    if len(set(pts)) != len(pts):
        raise ValueError("duplicate points")
    if any(not 0 <= p < 1 for p in pts):
        raise ValueError("points must lie in [0,1)")
    n = len(pts)
    chosen = {int(p * 2 * n) for p in pts}
    for j in range(2 * n):
        if len(chosen) == n:
            break
        chosen.add(j)
    b = HalfSet(n, frozenset(chosen))
    ok = all(b.X.contains(p) for p in pts)
    rows = [("n", Fraction(n)), ("measure", b.X.measure())]
    return ScenarioResult("thalf-satisfiability", {"points": [str(p) for p in pts]}, rows, ok,
                          {"set": b, "intervals": sorted(chosen)})


def random_half_set(n: int, rng: random.Random) -> HalfSet:
    return HalfSet(n, frozenset(rng.sample(range(2 * n), n)))


# ---------------------------------------------------------------- q_PQ

def cbar_fragment(n: int) -> Fragment:
    """The elements d_{i,j}^c = (i, [0,1) minus [j/n,(j+1)/n)) for i, j < n."""
    fr = Fragment(THALF_INF_PQ)
    for i in range(n):
        fr.registry.reserve_index(i)
        for j in range(n):
            strip = IntervalUnion.of([(Fraction(j, n), Fraction(j + 1, n))])
            fr.params[f"c{i}_{j}"] = ParamInfo(Sort.Q, qpair(i, strip.complement()))
    return fr


QPQ_ATOMIC = ("x sqin y", "y sim z", "y = z", "y meet z = bot", "y join z = top")


def run_qpq_suite(n: int, k: int) -> ScenarioResult:
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    rows = []
    ok = True
    fr = cbar_fragment(n)
    cbar = fr.elements(Sort.Q)
    q = TInfQType(pq=True)
    for text in QPQ_ATOMIC:
        phi = fr.parse(text, {"x": Sort.P, "y": Sort.Q, "z": Sort.Q})
        params = sorted(v.name for v in free_vars(phi) if v.name != "y")
        err = _qpq_error(q, cbar, phi, fr, params)
        rows.append((f"error {text}", err))
        ok &= err <= Fraction(len(params), n)
        if text == "x sqin y":
            ok &= err == Fraction(1, n)

    # order property along a Morley sequence of q_PQ
    seq = Fragment(THALF_INF_PQ)
    bs = []
    for i in range(k):
        b = q.realize(seq, f"b{i}")
        seq = seq.with_value(f"b{i}", Sort.Q, b)
        bs.append(b)
    sem = TInfSemantics(with_ell=False)
    ok &= all(not sem.sim(bs[i], bs[j]) for i in range(k) for j in range(i))
    verified = 0
    for size in range(k + 1):
        for I in combinations(range(k), size):
            a = PElem(seq.registry)
            for i, b in enumerate(bs):
                a.coords[b.n] = seq.registry.fresh_value(b.X if i in I else b.X.complement())
            verified += all(sem.sqin(a, b) == (i in I) for i, b in enumerate(bs))
    ok &= verified == 1 << k
    rows += [("witnesses", Fraction(1 << k)), ("verified", Fraction(verified))]
    return ScenarioResult("qpq", {"n": n, "k": k}, rows, ok)


def _qpq_error(q, cbar, phi, fr, params):
    if params == ["x"]:
        return av_error(q, cbar, phi, fr, "y", ("x",))
    # Q parameters: the fragment elements, bot, top and an element of a fresh class
    ext = fr.extend()
    fresh = ext.registry.fresh_index()
    for name, val in (("_bot", QBOT), ("_top", QTOP), ("_new", qpair(fresh, IntervalUnion.of([(0, Fraction(1, 2))])))):
        ext.params[name] = ParamInfo(Sort.Q, val)
    return av_error(q, cbar, phi, ext, "y", tuple(params))


# ---------------------------------------------------------------- Henson t-good sets

def _xvars(theta) -> list:
    vs = sorted((v.name for v in free_vars(theta)), key=lambda s: int(s[1:]))
    if not all(v[0] == "x" and v[1:].isdigit() for v in vs):
        raise ValueError("theta must be in the variables x1..xn")
    return vs


class _Classes:
    """Equality closure of a conjunction of literals over variables and parameters."""

    def __init__(self, lits):
        self.parent = {}
        for a, pos in lits:
            if a.kind == "eq" and pos:
                self.union(a.args[0].name, a.args[1].name)

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def good_constraints(lits, xs: Sequence[str], M: Sequence[str]):
    """(indices proved equal to an M-element, index pairs proved adjacent)."""
    cl = _Classes(lits)
    mroots = {cl.find(m) for m in M}
    pinned = {i for i, x in enumerate(xs, 1) if cl.find(x) in mroots}
    pos_edges = {frozenset((cl.find(a.args[0].name), cl.find(a.args[1].name)))
                 for a, pos in lits if a.kind == "rel" and a.rel == "E" and pos}
    edges = set()
    for i, xi in enumerate(xs, 1):
        for j, xj in enumerate(xs, 1):
            if i < j and frozenset((cl.find(xi), cl.find(xj))) in pos_edges:
                edges.add((i, j))
    return pinned, edges


def max_good_set(lits, xs: Sequence[str], M: Sequence[str]) -> frozenset:
    """A largest t-good set: unpinned indices with no proved edge between them."""
    pinned, edges = good_constraints(lits, xs, M)
    adj = {i: set() for i in range(1, len(xs) + 1)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    best: list = [frozenset()]

    def grow(chosen, pool):
        if len(chosen) + len(pool) <= len(best[0]):
            return
        if not pool:
            best[0] = frozenset(chosen)
            return
        v = min(pool)
        grow(chosen | {v}, pool - {v} - adj[v])
        grow(chosen, pool - {v})

    grow(frozenset(), frozenset(adj) - pinned)
    return best[0]


def _realize_disjunct(lits, xs, fragment: Fragment):
    """Elements for xs satisfying the literals, adding only the forced edges."""
    cl = _Classes(lits)
    M = fragment.elements()
    roots = {cl.find(m): m for m in M}
    if len(roots) < len({cl.find(m) for m in M}) or len({cl.find(m) for m in M}) < len(M):
        raise ValueError("theta equates distinct parameters")
    ext = fragment.extend()
    names = {}
    for x in xs:
        r = cl.find(x)
        if r not in roots:
            roots[r] = ext.fresh_name("_a")
        names[x] = roots[r]
    new = sorted(set(names.values()) - set(M))
    facts = {}
    for a, pos in lits:
        if a.kind == "rel" and a.rel == "E" and pos:
            u, v = (roots[cl.find(t.name)] if t.name in cl.parent else t.name for t in a.args)
            if u == v:
                raise ValueError("theta is inconsistent")
            facts[rel_key("E", (u, v))] = True
    out = ext.extend(new, facts)
    for k in relational_atom_keys(fragment.theory, out.elements(), involving=new):
        out.facts.setdefault(k, False)
    if has_clique(set(), out.positive_edges(), fragment.theory.s):
        raise ValueError("theta is inconsistent in this Henson graph")
    return out, names


def run_henson_tgood(theta, eps, fragment: Fragment) -> ScenarioResult:
    if fragment.theory.kind != "Henson":
        raise ValueError("run_henson_tgood needs a Henson fragment")
    eps = Fraction(eps)
    xs = _xvars(theta)
    n = len(xs)
    M = fragment.elements()
    rows = []
    best_t, best_X = None, frozenset()
    dnf = to_dnf(theta, cap=None).disjuncts
    if not dnf:
        raise ValueError("theta is inconsistent")
    for t, lits in enumerate(dnf, 1):
        X = max_good_set(lits, xs, M)
        rows.append((f"max good (t={t})", Fraction(len(X))))
        if best_t is None or len(X) > len(best_X):
            best_t, best_X = t, X
    detail = {"good": {t: sorted(max_good_set(lits, xs, M)) for t, lits in enumerate(dnf, 1)}}
    ok = True
    if best_X and len(best_X) >= eps * n:
        fr, names = _realize_disjunct(dnf[best_t - 1], xs, fragment)
        ok &= evaluate_in(theta, fr, names)
        b = fr.fresh_name("_b")
        targets = {names[xs[i - 1]] for i in best_X}
        facts = {rel_key("E", (b, e)): e in targets for e in fr.elements()}
        fr = fr.extend([b], facts)
        abar = tuple(names[x] for x in xs)
        av = Average(abar).eval(parse(f"E(x,{b})", [b]), fr)
        pe = p_E().eval(parse(f"E(x,{b})", [b]), fr)
        ok &= av >= Fraction(len(best_X), n) and pe == 0
        rows += [("|X|/n", Fraction(len(best_X), n)), ("Av(a)(E(x,b))", av), ("p_E(E(x,b))", pe)]
        detail.update(witness=abar, b=b, X=sorted(best_X))
    return ScenarioResult("henson-tgood", {"eps": str(eps), "n": n}, rows, ok, detail)


SCENARIOS = {
    "ternary-gap": run_ternary_gap,
    "nocom": run_nocom,
    "qpq": run_qpq_suite,
    "thalf-nonfam": run_thalf_nonfam,
    "thalf-satisfiability": run_thalf_satisfiability,
}
