"""Theory backends: fragments, standard-model semantics, diagram consistency,
realization of fresh variables, and the cube algebra of the T^inf model."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence

from .formula import (Atom, Const, Ell, Lin, Not, Param, QOp, Sort, Var, And, Or, atoms, free_vars,
                      is_qf, parse, to_dnf, to_str, atom_str, term_names)
from .intervals import IntervalUnion, carve_interval_subset
from .linear import LinCon, fm_witness
from .rationals import fmt, parse_rational


class NeedAtom(Exception):
    """Raised when a lazily specified fragment cannot decide a relational atom."""

    def __init__(self, key):
        super().__init__(f"undecided atom {key}")
        self.key = key


class UnsupportedOperation(Exception):
    pass


# ---------------------------------------------------------------- theory ids

@dataclass(frozen=True)
class TheoryId:
    kind: str  # TR, Henson, RandomGraph, THalf, THalfInf, THalfInfPQ
    s: int | None = None

    def __post_init__(self):
        if self.kind not in ("TR", "Henson", "RandomGraph", "THalf", "THalfInf", "THalfInfPQ"):
            raise ValueError(f"unknown theory {self.kind}")
        if self.kind == "Henson" and (self.s is None or self.s < 3):
            raise ValueError("Henson theories need s >= 3")

    @property
    def relational(self) -> bool:
        return self.kind in ("TR", "Henson", "RandomGraph")

    @property
    def relations(self) -> dict:
        if self.kind == "TR":
            return {"R": 3}
        if self.kind in ("Henson", "RandomGraph"):
            return {"E": 2}
        return {}

    def __str__(self):
        return f"Henson({self.s})" if self.kind == "Henson" else self.kind

    @staticmethod
    def parse(text: str) -> "TheoryId":
        m = re.fullmatch(r"\s*Henson\s*\(\s*(\d+)\s*\)\s*", text)
        if m:
            return TheoryId("Henson", int(m.group(1)))
        return TheoryId(text.strip())


TR = TheoryId("TR")
RANDOM_GRAPH = TheoryId("RandomGraph")
THALF = TheoryId("THalf")
THALF_INF = TheoryId("THalfInf")
THALF_INF_PQ = TheoryId("THalfInfPQ")


def henson(s: int) -> TheoryId:
    return TheoryId("Henson", s)


# ---------------------------------------------------------------- T^inf model

class Registry:
    """Hands out fresh coordinate values and class indices.

    Every coordinate value ever assigned is distinct, so the map
    (point, coordinate) -> value stays injective.
    """

    def __init__(self):
        self.used: set = set()
        self._cursor: dict = {}
        self.next_index = 0
        self.points = 0

    def reserve_index(self, n: int):
        self.next_index = max(self.next_index, n + 1)

    def fresh_index(self) -> int:
        n = self.next_index
        self.next_index += 1
        return n

    def claim(self, v: Fraction):
        if v in self.used:
            raise ValueError(f"coordinate value {fmt(v)} is already in use")
        self.used.add(v)

    def fresh_value(self, within: IntervalUnion | None = None) -> Fraction:
        within = within or IntervalUnion.full()
        if within.is_empty():
            raise ValueError("no room for a fresh value")
        # dyadic midpoints level by level; the cursor resumes past values
        # already handed out for the same set
        j, k, i = self._cursor.get(within, (1, 0, 0))
        while True:
            while k < len(within.parts):
                a, b = within.parts[k]
                while i < 1 << (j - 1):
                    v = a + (b - a) * Fraction(2 * i + 1, 1 << j)
                    i += 1
                    if v not in self.used:
                        self.used.add(v)
                        self._cursor[within] = (j, k, i)
                        return v
                k, i = k + 1, 0
            j, k = j + 1, 0


class PElem:
    """A point of [0,1)^N known on finitely many coordinates."""
    __slots__ = ("ident", "coords", "registry")

    def __init__(self, registry: Registry, coords: Mapping | None = None):
        registry.points += 1
        self.ident = registry.points
        self.registry = registry
        self.coords: dict = {}
        for n, v in (coords or {}).items():
            self.set_coord(int(n), Fraction(v))

    def set_coord(self, n: int, v: Fraction):
        if n in self.coords:
            raise ValueError(f"coordinate {n} already assigned")
        self.registry.claim(v)
        self.coords[n] = v

    def coord(self, n: int) -> Fraction:
        if n not in self.coords:
            self.coords[n] = self.registry.fresh_value()
        return self.coords[n]

    def __repr__(self):
        inner = ", ".join(f"{n}: {fmt(v)}" for n, v in sorted(self.coords.items()))
        return f"PElem#{self.ident}({{{inner}}})"


@dataclass(frozen=True)
class QElem:
    kind: str  # bot, top, pair
    n: int | None = None
    X: IntervalUnion | None = None

    def __str__(self):
        return self.kind if self.kind != "pair" else f"({self.n},{self.X})"

    def ell(self) -> Fraction:
        if self.kind == "bot":
            return Fraction(0)
        if self.kind == "top":
            return Fraction(1)
        return self.X.measure()


QBOT = QElem("bot")
QTOP = QElem("top")


def qpair(n: int, X: IntervalUnion) -> QElem:
    if X.is_empty():
        return QBOT
    if X.is_full():
        return QTOP
    return QElem("pair", n, X)


def q_meet(a: QElem, b: QElem) -> QElem:
    if a.kind == "bot" or b.kind == "bot":
        return QBOT
    if a.kind == "top":
        return b
    if b.kind == "top":
        return a
    if a.n != b.n:
        return QBOT
    return qpair(a.n, a.X.intersect(b.X))


def q_join(a: QElem, b: QElem) -> QElem:
    if a.kind == "top" or b.kind == "top":
        return QTOP
    if a.kind == "bot":
        return b
    if b.kind == "bot":
        return a
    if a.n != b.n:
        return QTOP
    return qpair(a.n, a.X.union(b.X))


def q_comp(a: QElem) -> QElem:
    if a.kind == "bot":
        return QTOP
    if a.kind == "top":
        return QBOT
    return qpair(a.n, a.X.complement())


def q_sim(a: QElem, b: QElem) -> bool:
    return a.kind == "pair" and b.kind == "pair" and a.n == b.n


@dataclass(frozen=True, eq=False)
class HalfSet:
    """A Q-element of T_{1/2}: the union of n distinct intervals of I_{2n}."""
    n: int
    indices: frozenset

    def __post_init__(self):
        if self.n < 1 or len(self.indices) != self.n or not all(0 <= i < 2 * self.n for i in self.indices):
            raise ValueError("a T_{1/2} set is exactly n distinct intervals of I_{2n}")

    @property
    def X(self) -> IntervalUnion:
        d = 2 * self.n
        return IntervalUnion.of((Fraction(i, d), Fraction(i + 1, d)) for i in self.indices)

    def __eq__(self, other):
        return isinstance(other, HalfSet) and self.X == other.X

    def __hash__(self):
        return hash(self.X)

    def __str__(self):
        return str(self.X)


# ---------------------------------------------------------------- fragments

@dataclass
class ParamInfo:
    sort: Sort
    value: object = None


def rel_key(name: str, args: Sequence[str]):
    if name == "E":
        return ("E", tuple(sorted(args)))
    return (name, tuple(args))


def key_str(key) -> str:
    return f"{key[0]}({','.join(key[1])})"


@dataclass
class Fragment:
    theory: TheoryId
    params: dict = field(default_factory=dict)  # name -> ParamInfo
    facts: dict = field(default_factory=dict)  # relational key -> bool
    alias: dict = field(default_factory=dict)  # name -> representative
    rules: dict = field(default_factory=dict)  # element -> decide(key, element, fragment)
    default_false: frozenset = frozenset()
    registry: Registry = field(default_factory=Registry)
    counter: int = 0

    def rep(self, name: str) -> str:
        while name in self.alias:
            name = self.alias[name]
        return name

    def elements(self, sort: Sort | None = None) -> list:
        return [n for n, p in self.params.items()
                if n not in self.alias and (sort is None or p.sort == sort)]

    def value(self, name: str):
        return self.params[self.rep(name)].value

    def truth(self, key) -> bool:
        name, args = key
        args = tuple(self.rep(a) for a in args)
        key = rel_key(name, args)
        if name == "E" and args[0] == args[1]:
            return False
        if key in self.facts:
            return self.facts[key]
        for el in reversed(list(self.rules)):
            if el in key[1]:
                return self.rules[el](key, el, self)
        if any(a in self.default_false for a in key[1]):
            return False
        raise NeedAtom(key)

    def fresh_name(self, base: str = "_n") -> str:
        while True:
            self.counter += 1
            name = f"{base}{self.counter}"
            if name not in self.params:
                return name

    def extend(self, names: Iterable[str] = (), facts: Mapping | None = None, rules: Mapping | None = None,
               default_false: Iterable[str] = (), sort: Sort = Sort.V, values: Mapping | None = None) -> "Fragment":
        params = dict(self.params)
        for n in names:
            params[n] = ParamInfo(sort, (values or {}).get(n))
        fr = Fragment(self.theory, params, dict(self.facts), dict(self.alias), dict(self.rules),
                      self.default_false | frozenset(default_false), self.registry, self.counter)
        if facts:
            fr.facts.update(facts)
        if rules:
            fr.rules.update(rules)
        return fr

    def with_value(self, name: str, sort: Sort, value) -> "Fragment":
        fr = self.extend()
        fr.params[name] = ParamInfo(sort, value)
        return fr

    def positive_edges(self) -> list:
        return [k[1] for k, v in self.facts.items() if k[0] == "E" and v]

    def env(self) -> dict:
        if self.theory.relational:
            return {n: self.rep(n) for n in self.params}
        return {n: p.value for n, p in self.params.items() if p.value is not None}

    def param_terms(self) -> dict:
        return {n: Param(n, p.sort) for n, p in self.params.items()}

    def parse(self, text: str, sorts: Mapping | None = None):
        """Parse with this fragment's elements as parameters."""
        from .formula import parse
        return parse(text, {n: p.sort for n, p in self.params.items()}, sorts)


def empty_fragment(theory: TheoryId) -> Fragment:
    return Fragment(theory)


def relational_atom_keys(theory: TheoryId, names: Sequence[str], involving: Iterable[str] | None = None) -> list:
    """All canonical relational atom keys over names (optionally touching `involving`)."""
    inv = set(involving) if involving is not None else None
    keys = []
    seen = set()
    for rname, arity in theory.relations.items():
        for args in product(names, repeat=arity):
            if rname == "E" and args[0] == args[1]:
                continue
            k = rel_key(rname, args)
            if k in seen or (inv is not None and not inv & set(args)):
                continue
            seen.add(k)
            keys.append(k)
    return keys


def relational_fragment(theory: TheoryId, names: Sequence[str], facts: Mapping | None = None,
                        complete: bool = True) -> Fragment:
    """Fragment over distinct vertices; with complete=True unspecified atoms are false."""
    fr = Fragment(theory, {n: ParamInfo(Sort.V) for n in names})
    for k, v in (facts or {}).items():
        name, args = k
        fr.facts[rel_key(name, args)] = bool(v)
    if complete:
        for k in relational_atom_keys(theory, list(names)):
            fr.facts.setdefault(k, False)
    return fr


# ---------------------------------------------------------------- semantics

class Semantics:
    def rel(self, name, args):
        raise UnsupportedOperation(f"relation {name} is not in this language")

    def eq(self, a, b):
        return a == b

    def sqin(self, p, q):
        raise UnsupportedOperation("sqin is not in this language")

    def sim(self, a, b):
        raise UnsupportedOperation("sim is not in this language")

    def qop(self, op, args):
        raise UnsupportedOperation("lattice operations are not in this language")

    def ell(self, q):
        raise UnsupportedOperation("l is not in this language")


class RelSemantics(Semantics):
    def __init__(self, fragment: Fragment):
        self.fragment = fragment

    def rel(self, name, args):
        if name not in self.fragment.theory.relations:
            raise UnsupportedOperation(f"relation {name} is not in {self.fragment.theory}")
        return self.fragment.truth((name, tuple(args)))

    def eq(self, a, b):
        return self.fragment.rep(a) == self.fragment.rep(b)


class TInfSemantics(Semantics):
    def __init__(self, with_ell: bool = True):
        self.with_ell = with_ell

    def eq(self, a, b):
        if isinstance(a, PElem) or isinstance(b, PElem):
            return a is b
        return a == b

    def sqin(self, p, q):
        if q.kind == "top":
            return True
        if q.kind == "bot":
            return False
        return q.X.contains(p.coord(q.n))

    def sim(self, a, b):
        return q_sim(a, b)

    def qop(self, op, args):
        if op == "bot":
            return QBOT
        if op == "top":
            return QTOP
        if op == "comp":
            return q_comp(args[0])
        return q_meet(*args) if op == "meet" else q_join(*args)

    def ell(self, q):
        if not self.with_ell:
            raise UnsupportedOperation("the PQ reduct has no l")
        return q.ell()


class THalfSemantics(Semantics):
    def sqin(self, p, q):
        return q.X.contains(p)


def semantics_for(fragment: Fragment) -> Semantics:
    th = fragment.theory
    if th.relational:
        return RelSemantics(fragment)
    if th.kind == "THalf":
        return THalfSemantics()
    return TInfSemantics(with_ell=th.kind == "THalfInf")


def eval_term(t, env: Mapping, sem: Semantics):
    if isinstance(t, (Var, Param)):
        try:
            return env[t.name]
        except KeyError:
            raise KeyError(f"no value for {t.name}") from None
    if isinstance(t, QOp):
        return sem.qop(t.op, [eval_term(a, env, sem) for a in t.args])
    if isinstance(t, Ell):
        return sem.ell(eval_term(t.arg, env, sem))
    if isinstance(t, Lin):
        total = t.const
        for k, c in t.terms:
            total += c * Fraction(eval_term(k, env, sem))
        return total
    raise TypeError(f"not a term: {t!r}")


def eval_atom(a: Atom, env: Mapping, sem: Semantics) -> bool:
    if a.kind == "rel":
        return sem.rel(a.rel, [eval_term(x, env, sem) for x in a.args])
    l, r = (eval_term(x, env, sem) for x in a.args)
    if a.kind == "eq":
        return sem.eq(l, r)
    if a.kind == "lt":
        return l < r
    if a.kind == "sqin":
        return sem.sqin(l, r)
    if a.kind == "sim":
        return sem.sim(l, r)
    raise ValueError(a.kind)


def evaluate(f, env: Mapping, sem: Semantics) -> bool:
    """Truth of a quantifier-free formula; names are looked up in env."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        return eval_atom(f, env, sem)
    if isinstance(f, Not):
        return not evaluate(f.arg, env, sem)
    if isinstance(f, And):
        return all(evaluate(g, env, sem) for g in f.args)
    if isinstance(f, Or):
        return any(evaluate(g, env, sem) for g in f.args)
    raise ValueError("evaluate expects a quantifier-free formula")


def evaluate_in(f, fragment: Fragment, assignment: Mapping | None = None) -> bool:
    env = fragment.env()
    env.update(assignment or {})
    return evaluate(f, env, semantics_for(fragment))


# ---------------------------------------------------------------- consistency

@dataclass
class ConsistencyResult:
    ok: bool
    witness: Fragment | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def _literals(diagram) -> list:
    out = []
    for lit in diagram:
        if isinstance(lit, tuple):
            out.append(lit)
        elif isinstance(lit, Not) and isinstance(lit.arg, Atom):
            out.append((lit.arg, False))
        elif isinstance(lit, Atom):
            out.append((lit, True))
        else:
            raise ValueError(f"not a literal: {lit!r}")
    return out


def has_clique(vertices: Iterable, edges: Iterable, s: int) -> bool:
    adj: dict = {}
    for a, b in edges:
        if a != b:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
    cand = [v for v in adj if len(adj[v]) >= s - 1]

    def grow(clique, pool):
        if len(clique) == s:
            return True
        for i, v in enumerate(pool):
            if grow(clique + [v], [w for w in pool[i + 1:] if w in adj[v]]):
                return True
        return False

    return grow([], sorted(cand))


class _UnionFind:
    def __init__(self):
        self.p = {}

    def find(self, x):
        self.p.setdefault(x, x)
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.p[rb] = ra


def check_diagram_consistency(theory: TheoryId, diagram: Iterable) -> ConsistencyResult:
    """Decide whether a ground literal set embeds in the standard model."""
    lits = _literals(diagram)
    for a, _ in lits:
        for t in a.args:
            for n in term_names(t):
                if isinstance(n, Var):
                    raise ValueError(f"non-ground literal {atom_str(a)}")
        if a.kind == "rel" and a.rel not in theory.relations:
            raise ValueError(f"unknown relation {a.rel} for {theory}")
    if theory.relational:
        return _relational_consistency(theory, lits)
    if theory.kind in ("THalfInf", "THalfInfPQ"):
        from .qe import tinf_diagram_consistency
        return tinf_diagram_consistency(theory, lits)
    raise UnsupportedOperation("T_{1/2} has no diagram checker (no quantifier elimination)")


def _relational_consistency(theory, lits, base: Fragment | None = None) -> ConsistencyResult:
    uf = _UnionFind()
    names = set()
    for a, _ in lits:
        for t in a.args:
            names.add(t.name)
            uf.find(t.name)
    for a, pos in lits:
        if a.kind == "eq" and pos:
            uf.union(a.args[0].name, a.args[1].name)
        elif a.kind != "eq" and a.kind != "rel":
            raise ValueError(f"atom {atom_str(a)} is not relational")
    facts: dict = {}
    for a, pos in lits:
        if a.kind == "eq":
            if not pos and uf.find(a.args[0].name) == uf.find(a.args[1].name):
                return ConsistencyResult(False, reason=f"{atom_str(a)} is forced by the equalities")
            continue
        key = rel_key(a.rel, [uf.find(t.name) for t in a.args])
        if a.rel == "E" and key[1][0] == key[1][1]:
            if pos:
                return ConsistencyResult(False, reason="E is irreflexive")
            continue
        if facts.get(key, pos) != pos:
            return ConsistencyResult(False, reason=f"{key_str(key)} is asserted both ways")
        facts[key] = pos
    reps = sorted({uf.find(n) for n in names})
    if theory.kind == "Henson":
        edges = [k[1] for k, v in facts.items() if v]
        if has_clique(reps, edges, theory.s):
            return ConsistencyResult(False, reason=f"positive edges contain K_{theory.s}")
    witness = relational_fragment(theory, reps, facts)
    for n in names:
        if uf.find(n) != n:
            witness.params[n] = ParamInfo(Sort.V)
            witness.alias[n] = uf.find(n)
    return ConsistencyResult(True, witness)


# ---------------------------------------------------------------- cubes

@dataclass(frozen=True)
class Cube:
    constraints: tuple = ()  # sorted (coordinate, IntervalUnion)

    def fiber(self, n: int) -> IntervalUnion:
        for m, X in self.constraints:
            if m == n:
                return X
        return IntervalUnion.full()

    def measure(self) -> Fraction:
        out = Fraction(1)
        for _, X in self.constraints:
            out *= X.measure()
        return out

    def is_empty(self) -> bool:
        return any(X.is_empty() for _, X in self.constraints)

    def contains(self, p: PElem) -> bool:
        return all(X.contains(p.coord(n)) for n, X in self.constraints)

    def representative(self, registry: Registry) -> PElem:
        p = PElem(registry)
        for n, X in self.constraints:
            p.coords[n] = registry.fresh_value(X)
        return p

    def __str__(self):
        if not self.constraints:
            return "[0,1)^N"
        return " x ".join(f"c{n}:{X}" for n, X in self.constraints)


def class_cells(sets: Iterable[IntervalUnion]) -> list:
    """Atoms of the Boolean algebra on [0,1) generated by the given sets."""
    sets = list(sets)
    cuts = sorted({Fraction(0), Fraction(1)} | {e for X in sets for e in X.endpoints()})
    groups: dict = {}
    for a, b in zip(cuts, cuts[1:]):
        sig = tuple(X.contains(a) for X in sets)
        groups.setdefault(sig, []).append((a, b))
    return [IntervalUnion.of(v) for _, v in sorted(groups.items(), key=lambda kv: kv[1][0])]


def cube_decompose(f, x: Var, env: Mapping, weights: Sequence | None = None) -> list:
    """Partition [0,1)^N into cubes on which f(x) (or a weighted sum) is constant.

    f is a qf formula in the P-variable x (or a list of formulas when weights
    are given).  Atoms x = t are treated as false, since single points are null.
    Returns (Cube, value) pairs covering the space.
    """
    fs = list(f) if weights is not None else [f]
    ws = [Fraction(w) for w in weights] if weights is not None else [Fraction(1)]
    sem = TInfSemantics(with_ell=True)
    by_index: dict = {}
    for g in fs:
        for a in atoms(g):
            if a.kind == "sqin" and a.args[0] == x:
                q = eval_term(a.args[1], env, sem)
                if q.kind == "pair":
                    by_index.setdefault(q.n, []).append(q.X)
    idx = sorted(by_index)
    cell_lists = [class_cells(by_index[n]) for n in idx]
    out = []
    for choice in product(*cell_lists):
        cube = Cube(tuple(zip(idx, choice)))
        probe = {n: X.parts[0][0] for n, X in zip(idx, choice)}
        sem_probe = _ProbeSemantics(x.name, probe)
        penv = dict(env)
        penv[x.name] = _PROBE
        val = sum((w for g, w in zip(fs, ws) if evaluate(g, penv, sem_probe)), Fraction(0))
        out.append((cube, val))
    return _merge_cubes(out)


def _merge_cubes(pieces: list) -> list:
    """Join equal-valued cubes that differ in a single coordinate."""
    pieces = list(pieces)
    changed = True
    while changed:
        changed = False
        for i in range(len(pieces)):
            for j in range(i + 1, len(pieces)):
                (c1, v1), (c2, v2) = pieces[i], pieces[j]
                if v1 != v2:
                    continue
                d1, d2 = dict(c1.constraints), dict(c2.constraints)
                keys = set(d1) | set(d2)
                diff = [n for n in keys if c1.fiber(n) != c2.fiber(n)]
                if len(diff) != 1:
                    continue
                n = diff[0]
                d1[n] = c1.fiber(n).union(c2.fiber(n))
                if d1[n] == IntervalUnion.full():
                    del d1[n]
                pieces[i] = (Cube(tuple(sorted(d1.items()))), v1)
                del pieces[j]
                changed = True
                break
            if changed:
                break
    return pieces


class _Probe:
    pass


_PROBE = _Probe()


class _ProbeSemantics(TInfSemantics):
    """Evaluates with x replaced by a generic point of a cube cell."""

    def __init__(self, name, coords):
        super().__init__(True)
        self.coords = coords

    def eq(self, a, b):
        if a is _PROBE or b is _PROBE:
            return a is b
        return super().eq(a, b)

    def sqin(self, p, q):
        if p is _PROBE and q.kind == "pair":
            return q.X.contains(self.coords.get(q.n, Fraction(-1)))
        if p is _PROBE:
            return q.kind == "top"
        return super().sqin(p, q)


# ---------------------------------------------------------------- realization

@dataclass
class RealizeResult:
    ok: bool
    assignment: dict = field(default_factory=dict)
    fragment: Fragment | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def realize_in_standard_model(fragment: Fragment, goal) -> RealizeResult:
    """Find standard values for the free variables of goal over the fragment.

    Unsatisfiable goals give a failed result rather than an exception.
    """
    if not is_qf(goal):
        raise ValueError("goal must be quantifier-free")
    vars_ = sorted(free_vars(goal), key=lambda v: v.name)
    dnf = to_dnf(goal, cap=None)
    reasons = []
    for d in dnf.disjuncts:
        if fragment.theory.relational:
            res = _realize_relational(fragment, list(d), vars_)
        elif fragment.theory.kind in ("THalfInf", "THalfInfPQ"):
            res = _realize_tinf(fragment, list(d), vars_)
        else:
            raise UnsupportedOperation("realization is not available for T_{1/2}")
        if res.ok:
            env = res.fragment.env()
            env.update(res.assignment)
            if not evaluate(goal, env, semantics_for(res.fragment)):
                raise AssertionError("realization failed re-verification")
            return res
        reasons.append(res.reason)
    return RealizeResult(False, reason="; ".join(reasons) or "goal is unsatisfiable")


def _realize_relational(fragment: Fragment, lits, vars_) -> RealizeResult:
    uf = _UnionFind()
    elems = set(fragment.elements())
    for v in vars_:
        uf.find(("v", v.name))

    def node(t):
        return ("v", t.name) if isinstance(t, Var) else ("e", fragment.rep(t.name))

    for a, pos in lits:
        if a.kind == "eq" and pos:
            uf.union(node(a.args[0]), node(a.args[1]))
    cls_elem: dict = {}
    for n in list(uf.p):
        r = uf.find(n)
        if n[0] == "e":
            if r in cls_elem and cls_elem[r] != n[1]:
                return RealizeResult(False, reason="two distinct parameters forced equal")
            cls_elem[r] = n[1]
    names: dict = {}
    new_names = []
    work = fragment.extend()
    for r in sorted({uf.find(("v", v.name)) for v in vars_}):
        if r in cls_elem:
            names[r] = cls_elem[r]
        else:
            nm = work.fresh_name()
            names[r] = nm
            new_names.append(nm)

    def nm(t):
        n = node(t)
        r = uf.find(n)
        return names.get(r, n[1])

    facts: dict = {}
    for a, pos in lits:
        if a.kind == "eq":
            if not pos and nm(a.args[0]) == nm(a.args[1]):
                return RealizeResult(False, reason="disequality forced false")
            continue
        if a.kind != "rel":
            raise ValueError("non-relational literal")
        args = [nm(t) for t in a.args]
        key = rel_key(a.rel, args)
        if a.rel == "E" and args[0] == args[1]:
            if pos:
                return RealizeResult(False, reason="E is irreflexive")
            continue
        if all(x in elems for x in args):
            try:
                if fragment.truth(key) != pos:
                    return RealizeResult(False, reason=f"{key_str(key)} contradicts the fragment")
            except NeedAtom:
                facts[key] = pos
            continue
        if facts.get(key, pos) != pos:
            return RealizeResult(False, reason=f"{key_str(key)} asserted both ways")
        facts[key] = pos
    out = fragment.extend(new_names, facts, default_false=new_names)
    out.counter = work.counter
    if fragment.theory.kind == "Henson":
        edges = set(tuple(e) for e in out.positive_edges())
        if has_clique(out.elements(), edges, fragment.theory.s):
            return RealizeResult(False, reason=f"forced K_{fragment.theory.s}")
    return RealizeResult(True, {v.name: names[uf.find(("v", v.name))] for v in vars_}, out)


# T^inf realization: points first, then lattice elements one at a time by shape
# (cell statuses plus measure unknowns solved exactly), then reals.

class _Sym:
    """A lattice value inside one refined class: a set of refined atoms."""
    __slots__ = ("n", "atoms")

    def __init__(self, n, atoms):
        self.n, self.atoms = n, frozenset(atoms)


class _ShapeSemantics(TInfSemantics):
    def __init__(self, with_ell, n, cells, status, member, target):
        super().__init__(with_ell)
        self.n, self.cells, self.status, self.member, self.target = n, cells, status, member, target
        self.all_atoms = self._class_atoms()

    def _class_atoms(self):
        out = set()
        for i, st in enumerate(self.status):
            if st == "p":
                out |= {("in", i), ("out", i)}
            else:
                out.add(("c", i))
        return frozenset(out)

    def _atoms_of_cell(self, i):
        return {("in", i), ("out", i)} if self.status[i] == "p" else {("c", i)}

    def lift(self, q):
        if isinstance(q, _Sym) or not (q.kind == "pair" and q.n == self.n):
            return q
        at = set()
        for i, c in enumerate(self.cells):
            if c.subset_of(q.X):
                at |= self._atoms_of_cell(i)
        return _Sym(self.n, at)

    def norm(self, s):
        if isinstance(s, _Sym):
            if not s.atoms:
                return QBOT
            if s.atoms == self.all_atoms:
                return QTOP
        return s

    def qop(self, op, args):
        args = [self.norm(a) for a in args]
        if not any(isinstance(a, _Sym) for a in args):
            return super().qop(op, args)
        if op == "comp":
            return self.norm(_Sym(self.n, self.all_atoms - args[0].atoms))
        a, b = args
        if op == "meet":
            if QBOT in (a, b):
                return QBOT
            if a == QTOP:
                return b
            if b == QTOP:
                return a
        else:
            if QTOP in (a, b):
                return QTOP
            if a == QBOT:
                return b
            if b == QBOT:
                return a
        a, b = self.lift(a), self.lift(b)
        if not (isinstance(a, _Sym) and isinstance(b, _Sym)):
            return QBOT if op == "meet" else QTOP  # different classes
        return self.norm(_Sym(self.n, a.atoms & b.atoms if op == "meet" else a.atoms | b.atoms))

    def eq(self, a, b):
        a, b = self.norm(a), self.norm(b)
        if isinstance(a, _Sym) or isinstance(b, _Sym):
            a, b = self.lift(a), self.lift(b)
            return isinstance(a, _Sym) and isinstance(b, _Sym) and a.atoms == b.atoms
        return super().eq(a, b)

    def sim(self, a, b):
        a, b = self.norm(a), self.norm(b)
        na = a.n if isinstance(a, _Sym) else (a.n if a.kind == "pair" else None)
        nb = b.n if isinstance(b, _Sym) else (b.n if b.kind == "pair" else None)
        return na is not None and na == nb

    def point_atom(self, p):
        v = p.coord(self.n)
        for i, c in enumerate(self.cells):
            if c.contains(v):
                if self.status[i] == "p":
                    return ("in" if self.member.get(p.ident, False) else "out", i)
                return ("c", i)
        raise AssertionError("cells must cover [0,1)")

    def sqin(self, p, q):
        q = self.norm(q)
        if isinstance(q, _Sym):
            return self.point_atom(p) in q.atoms
        return super().sqin(p, q)

    def ell(self, q):
        q = self.norm(q)
        if not isinstance(q, _Sym):
            return super().ell(q)
        out = Lin.make()
        for kind, i in q.atoms:
            size = self.cells[i].measure()
            if kind == "c":
                out = out + size
            elif kind == "in":
                out = out + Lin.make({("m", i): 1})
            else:
                out = out + Lin.make({("m", i): -1}, size)
        return out


def _lin_value(t, env, sem, unknown: set):
    """Evaluate an R-term to a Lin over unknown symbols."""
    if isinstance(t, (Var, Param)):
        if t.name in unknown:
            return Lin.make({t.name: 1})
        return Lin.of(Fraction(env[t.name]))
    if isinstance(t, Lin):
        out = Lin.of(t.const)
        for k, c in t.terms:
            if isinstance(k, Ell):
                v = sem.ell(eval_term(k.arg, env, sem))
                out = out + (Lin.of(v) if not isinstance(v, Lin) else v).scale(c)
            else:
                out = out + _lin_value(k, env, sem, unknown).scale(c)
        return out
    raise TypeError(t)


def _lin_to_con(expr: Lin, op: str) -> LinCon:
    return LinCon.make({k: c for k, c in expr.terms}, expr.const, op)


def _literal_constraints(lit, env, sem, unknown):
    """bool, or a list of alternative constraint lists."""
    a, pos = lit
    if a.kind not in ("eq", "lt") or not isinstance(a.args[0], Lin):
        return evaluate(a, env, sem) == pos
    d = _lin_value(a.args[0], env, sem, unknown) - _lin_value(a.args[1], env, sem, unknown)
    if d.is_const():
        v = d.const == 0 if a.kind == "eq" else d.const < 0
        return v == pos
    if a.kind == "eq":
        return [[_lin_to_con(d, "=")]] if pos else [[_lin_to_con(d, "<")], [_lin_to_con(-d, "<")]]
    return [[_lin_to_con(d, "<")]] if pos else [[_lin_to_con(-d, "<=")]]


def _lit_names(lit) -> set:
    out = set()
    for t in lit[0].args:
        term_names(t, out)
    return {n.name for n in out}


def _solve(options_list, bounds, unknown_syms):
    """Try every combination of alternatives; return a witness dict or None."""
    for combo in product(*options_list):
        cons = list(bounds)
        for c in combo:
            cons.extend(c)
        syms = set()
        for c in cons:
            syms |= c.symbols()
        order = sorted(syms, key=repr)
        w = fm_witness(cons, order)
        if w is not None:
            return w
    return None


def _realize_tinf(fragment: Fragment, lits, vars_) -> RealizeResult:
    with_ell = fragment.theory.kind == "THalfInf"
    reg = fragment.registry
    env = fragment.env()
    sem = TInfSemantics(with_ell)
    pvars = [v for v in vars_ if v.sort == Sort.P]
    qvars = [v for v in vars_ if v.sort == Sort.Q]
    rvars = [v for v in vars_ if v.sort == Sort.R]
    rnames = {v.name for v in rvars}
    done = set(env)
    pending = list(lits)

    def ready(lit, extra):
        return _lit_names(lit) <= done | extra

    for x in pvars:
        mine = [l for l in pending if x.name in _lit_names(l) and ready(l, {x.name})]
        forced = [l for l in mine if l[1] and l[0].kind == "eq"]
        if forced:
            a = forced[0][0]
            other = a.args[1] if a.args[0].name == x.name else a.args[0]
            env[x.name] = env[other.name]
        else:
            allowed: dict = {}
            for a, pos in mine:
                if a.kind == "sqin":
                    q = eval_term(a.args[1], env, sem)
                    if q.kind in ("bot", "top"):
                        if (q.kind == "top") != pos:
                            return RealizeResult(False, reason=f"{atom_str(a)} cannot hold")
                        continue
                    X = q.X if pos else q.X.complement()
                    allowed[q.n] = allowed.get(q.n, IntervalUnion.full()).intersect(X)
            if any(X.is_empty() for X in allowed.values()):
                return RealizeResult(False, reason=f"no point fits the constraints on {x.name}")
            p = PElem(reg)
            for n, X in sorted(allowed.items()):
                p.coords[n] = reg.fresh_value(X)
            env[x.name] = p
        done.add(x.name)
        for l in mine:
            if not _literal_holds(l, env, sem):
                return RealizeResult(False, reason=f"{x.name} cannot satisfy {atom_str(l[0])}")
        pending = [l for l in pending if l not in mine]

    for y in qvars:
        mine = [l for l in pending if y.name in _lit_names(l) and ready(l, {y.name} | rnames)]
        val = _realize_q(y.name, mine, env, reg, with_ell, rnames)
        if val is None:
            return RealizeResult(False, reason=f"no lattice element realizes the constraints on {y.name}")
        env[y.name] = val
        done.add(y.name)
        pending = [l for l in pending if l not in mine or any(
            isinstance(t, Lin) for t in l[0].args)]  # real-valued literals are re-solved below

    if rvars or pending:
        opts, bad = [], False
        for l in pending:
            r = _literal_constraints(l, env, sem, rnames)
            if r is False:
                bad = True
                break
            if r is not True:
                opts.append(r)
        if bad:
            return RealizeResult(False, reason="real constraints fail")
        w = _solve(opts, [], rnames)
        if w is None:
            return RealizeResult(False, reason="real constraints are infeasible")
        for v in rvars:
            env[v.name] = w.get(v.name, Fraction(0))
    assignment = {v.name: env[v.name] for v in vars_}
    return RealizeResult(True, assignment, fragment)


def _literal_holds(lit, env, sem) -> bool:
    return evaluate(lit[0], env, sem) == lit[1]


def _realize_q(name, lits, env, reg, with_ell, rnames):
    qvals = [v for v in env.values() if isinstance(v, QElem) and v.kind == "pair"]
    points = []
    for l in lits:
        for t in l[0].args:
            for n in term_names(t):
                v = env.get(n.name)
                if isinstance(v, PElem) and all(v is not p for p in points):
                    points.append(v)
    classes = sorted({q.n for q in qvals})
    fresh_n = reg.next_index
    candidates = [("fresh", fresh_n)] + [("class", n) for n in classes] + [("bot", None), ("top", None)]
    for kind, n in candidates:
        if kind in ("bot", "top"):
            val = QBOT if kind == "bot" else QTOP
            trial = dict(env)
            trial[name] = val
            sem = TInfSemantics(with_ell)
            res = _check_shape(lits, trial, sem, rnames, [])
            if res is not None:
                return val
            continue
        if kind == "fresh":
            cells = [IntervalUnion.full()]
            statuses = [("p",)]
        else:
            cells = class_cells([q.X for q in qvals if q.n == n])
            statuses = [s for s in product("p10", repeat=len(cells))
                        if set(s) not in ({"0"}, {"1"})]
        for status in statuses:
            if kind == "fresh":
                inside = points
            else:
                inside = [p for p in points if status[_cell_of(cells, p.coord(n))] == "p"]
            for bits in product((True, False), repeat=len(inside)):
                member = {p.ident: b for p, b in zip(inside, bits)}
                sem = _ShapeSemantics(with_ell, n, cells, status, member, name)
                trial = dict(env)
                atoms_y = {("c", i) for i, s in enumerate(status) if s == "1"} | \
                          {("in", i) for i, s in enumerate(status) if s == "p"}
                trial[name] = _Sym(n, atoms_y)
                bounds = []
                for i, s in enumerate(status):
                    if s == "p":
                        bounds.append(LinCon.make({("m", i): -1}, 0, "<"))
                        bounds.append(LinCon.make({("m", i): 1}, -cells[i].measure(), "<"))
                if kind == "fresh":
                    # the fresh class does not exist yet; give points a provisional coordinate
                    sem.point_atom = (lambda p, member=member: ("in" if member.get(p.ident) else "out", 0))
                w = _check_shape(lits, trial, sem, rnames, bounds)
                if w is None:
                    continue
                return _build_q(kind, n, cells, status, member, inside, w, reg)
    return None


def _cell_of(cells, v):
    for i, c in enumerate(cells):
        if c.contains(v):
            return i
    raise AssertionError


def _check_shape(lits, env, sem, rnames, bounds):
    opts = []
    try:
        for l in lits:
            r = _literal_constraints(l, env, sem, rnames)
            if r is False:
                return None
            if r is not True:
                opts.append(r)
    except UnsupportedOperation:
        return None
    return _solve(opts, bounds, rnames)


def _build_q(kind, n, cells, status, member, inside, w, reg) -> QElem:
    if kind == "fresh":
        n = reg.fresh_index()
        for p in inside:
            if n not in p.coords:
                p.coords[n] = reg.fresh_value()
    X = IntervalUnion.empty()
    for i, s in enumerate(status):
        if s == "1":
            X = X.union(cells[i])
        elif s == "p":
            cell = cells[i]
            ins = [p.coord(n) for p in inside if member.get(p.ident) and cell.contains(p.coord(n))]
            outs = [p.coord(n) for p in inside if not member.get(p.ident) and cell.contains(p.coord(n))]
            m = w[("m", i)]
            room = cell
            if outs:
                marks = sorted(set(ins) | set(outs) | set(cell.endpoints()))
                slack = (cell.measure() - m) / (2 * (len(outs) + 1))
                for o in outs:
                    nxt = min(v for v in marks if v > o)
                    delta = min(slack, (nxt - o) / 2)
                    room = room.minus(IntervalUnion.of([(o, o + delta)]))
            X = X.union(carve_interval_subset(room, ins, m))
    return qpair(n, X)


# ---------------------------------------------------------------- fragment files

def _format_value(sort: Sort, v) -> object:
    if v is None:
        return None
    if sort == Sort.R:
        return fmt(v)
    if isinstance(v, QElem):
        return v.kind if v.kind != "pair" else {"index": v.n, "set": str(v.X)}
    if isinstance(v, HalfSet):
        return {"n": v.n, "intervals": sorted(v.indices)}
    if isinstance(v, PElem):
        return {"coords": {str(n): fmt(x) for n, x in sorted(v.coords.items())}}
    return fmt(v)


def _read_value(theory: TheoryId, sort: Sort, raw, registry: Registry):
    if raw is None:
        return None
    if sort == Sort.R:
        return parse_rational(raw)
    if theory.kind == "THalf":
        if sort == Sort.P:
            return parse_rational(raw)
        return HalfSet(int(raw["n"]), frozenset(int(i) for i in raw["intervals"]))
    if sort == Sort.Q:
        if raw in ("bot", "top"):
            return QBOT if raw == "bot" else QTOP
        n = int(raw["index"])
        registry.reserve_index(n)
        q = qpair(n, IntervalUnion.parse(raw["set"]))
        return q
    if sort == Sort.P:
        coords = {int(k): parse_rational(x) for k, x in raw.get("coords", {}).items()}
        for n in coords:
            registry.reserve_index(n)
        return PElem(registry, coords)
    raise ValueError(f"no standard values for sort {sort.value}")


def _sort_named(s: str) -> Sort:
    for x in Sort:
        if x.value == s or x.name == s:
            return x
    raise ValueError(f"unknown sort {s}")


def fragment_from_dict(data: Mapping) -> Fragment:
    """Build a fragment from the JSON schema documented in the README."""
    theory = TheoryId.parse(data["theory"])
    reg = Registry()
    params: dict = {}
    for name, spec in data.get("params", {}).items():
        if isinstance(spec, str):
            params[name] = ParamInfo(_sort_named(spec))
        else:
            sort = _sort_named(spec["sort"])
            params[name] = ParamInfo(sort, _read_value(theory, sort, spec.get("value"), reg))
    fr = Fragment(theory, params, registry=reg)
    sorts = {n: p.sort for n, p in params.items()}
    lits = []
    for text in data.get("diagram", []):
        f = parse(text, params=sorts)
        lits.extend(_literals(_flatten_literals(f)))
    if theory.relational:
        res = _relational_consistency(theory, lits)
        if not res.ok:
            raise ValueError(f"inconsistent diagram: {res.reason}")
        uf_alias = res.witness.alias
        fr.alias.update(uf_alias)
        for k, v in res.witness.facts.items():
            fr.facts[k] = v
        explicit = set()
        for a, _ in lits:
            if a.kind == "rel":
                explicit.add(rel_key(a.rel, [fr.rep(t.name) for t in a.args]))
        missing = [k for k in relational_atom_keys(theory, fr.elements()) if k not in explicit]
        if missing and not data.get("default_false", False):
            raise ValueError(f"diagram is incomplete, e.g. {key_str(missing[0])} is undecided")
        for k in missing:
            fr.facts[k] = False
    else:
        if all(p.value is not None for p in params.values()):
            env = fr.env()
            sem = semantics_for(fr)
            for a, pos in lits:
                if evaluate(a, env, sem) != pos:
                    raise ValueError(f"standard values violate {atom_str(a)}")
        elif lits and theory.kind != "THalf":
            res = check_diagram_consistency(theory, lits)
            if not res.ok:
                raise ValueError(f"inconsistent diagram: {res.reason}")
    return fr


def _flatten_literals(f):
    if isinstance(f, And):
        out = []
        for g in f.args:
            out.extend(_flatten_literals(g))
        return out
    if isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.arg, Atom)):
        return [f]
    raise ValueError(f"diagram entries must be literals: {to_str(f)}")


def load_fragment(path: str) -> Fragment:
    with open(path) as fh:
        return fragment_from_dict(json.load(fh))


def fragment_to_dict(fr: Fragment) -> dict:
    out: dict = {"theory": str(fr.theory), "params": {}, "diagram": []}
    for n, p in fr.params.items():
        v = _format_value(p.sort, p.value)
        out["params"][n] = p.sort.value if v is None else {"sort": p.sort.value, "value": v}
    for n, r in fr.alias.items():
        out["diagram"].append(f"{n} = {r}")
    for k, v in sorted(fr.facts.items()):
        out["diagram"].append(("" if v else "!") + key_str(k))
    return out
