"""Quantifier elimination for T^inf_{1/2} and its PQ reduct.

A quantifier over P or Q is removed by splitting on complete diagram cases
of the other P/Q objects in the literals it touches.  Each case is built as
concrete standard-model values, with l kept symbolic: the measure of each
cell of a class is the R-atom l(minterm), and a new lattice element cuts each
cell s into pieces of measures m_s and l(s) - m_s.  The m_s are then removed
by Fourier-Motzkin, and the per-case answers are merged back into a formula
over a small set of distinguishing atoms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

from .formula import (BOT, TOP, And, Atom, Const, Ell, Exists, Lin, Not, Or, Sort, Var, conj, disj, eq,
                      minterm_term, neg, sim, sqin, term_names, to_dnf)
from .intervals import IntervalUnion
from .linear import LinCon, fm_eliminate, fm_project, fm_witness, simplify_system
from .theories import (QBOT, QTOP, THALF_INF, ConsistencyResult, PElem, Registry, TheoryId, TInfSemantics,
                       UnsupportedOperation, eval_term, evaluate, qpair)

DEFAULT_Q_BOUND = 4
DEFAULT_P_BOUND = 4


class CaseSplitError(ValueError):
    pass


# ---------------------------------------------------------------- cases

def _set_partitions(n: int):
    """Restricted growth strings of length n."""
    def rec(i, acc, k):
        if i == n:
            yield tuple(acc)
            return
        for j in range(k + 1):
            yield from rec(i + 1, acc + [j], max(k, j + 1))
    yield from rec(0, [], 0)


def _minterm_sets(k: int) -> list:
    """Sets of nonempty minterms over k class members, each member proper."""
    vecs = list(product((True, False), repeat=k))
    out = []
    for mask in range(1, 1 << len(vecs)):
        M = tuple(v for i, v in enumerate(vecs) if mask >> i & 1)
        if all(any(v[j] for v in M) and any(not v[j] for v in M) for j in range(k)):
            out.append(M)
    return out


def _copy_point(p: PElem) -> PElem:
    q = PElem(p.registry)
    q.coords = dict(p.coords)
    return q


@dataclass
class DiagramCase:
    """A complete qf description of some P and Q objects, with concrete values."""
    qterms: tuple
    pterms: tuple
    kinds: dict  # Q name -> "bot" | "top" | class number
    classes: tuple  # per class: (member terms, nonempty minterm sign vectors)
    point_of: dict  # P name -> block number
    env: dict
    registry: Registry = field(repr=False, default_factory=Registry)

    def cells(self, j: int) -> list:
        r = len(self.classes[j][1])
        return [IntervalUnion.of([(Fraction(i, r), Fraction(i + 1, r))]) for i in range(r)]

    def cell_term(self, j: int, i: int):
        members, M = self.classes[j]
        return minterm_term(list(members), M[i])

    def cell_key(self, j: int, i: int):
        return Ell(self.cell_term(j, i))

    def pieces(self) -> dict:
        return {j: [(c, Lin.make({self.cell_key(j, i): 1})) for i, c in enumerate(self.cells(j))]
                for j in range(len(self.classes))}

    def semantics(self, with_ell=True, pieces=None):
        return _CaseSemantics(with_ell, self.pieces() if pieces is None else pieces)

    def points(self) -> list:
        """One representative name per distinct point."""
        seen, out = set(), []
        for t in self.pterms:
            b = self.point_of[t.name]
            if b not in seen:
                seen.add(b)
                out.append(t)
        return out

    def cloned_env(self) -> dict:
        env = dict(self.env)
        copies = {}
        for t in self.pterms:
            p = self.env[t.name]
            if p.ident not in copies:
                copies[p.ident] = _copy_point(p)
            env[t.name] = copies[p.ident]
        return env

    def literals(self) -> list:
        """An isolating conjunction, as (atom, sign) pairs."""
        lits = []
        for t in self.qterms:
            k = self.kinds[t.name]
            lits.append((eq(t, BOT), k == "bot"))
            lits.append((eq(t, TOP), k == "top"))
        cls = [t for t in self.qterms if isinstance(self.kinds[t.name], int)]
        for i in range(len(cls)):
            for j in range(i + 1, len(cls)):
                lits.append((sim(cls[i], cls[j]), self.kinds[cls[i].name] == self.kinds[cls[j].name]))
        for j, (members, M) in enumerate(self.classes):
            if len(members) > 1:
                for v in product((True, False), repeat=len(members)):
                    lits.append((eq(minterm_term(list(members), v), BOT), v not in M))
        ps = list(self.pterms)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                lits.append((eq(ps[i], ps[j]), self.point_of[ps[i].name] == self.point_of[ps[j].name]))
        for p in self.points():
            for j, (members, M) in enumerate(self.classes):
                i = self.cell_of(p.name, j)
                lits.append((sqin(p, self.cell_term(j, i)), True))
        return lits

    def formula(self):
        return conj(*(a if s else Not(a) for a, s in self.literals()))

    def cell_of(self, pname: str, j: int) -> int:
        v = self.env[pname].coord(j)
        for i, c in enumerate(self.cells(j)):
            if c.contains(v):
                return i
        raise AssertionError("cells cover [0,1)")

    def holds(self, atom) -> bool:
        return evaluate(atom, self.env, TInfSemantics(False))


class _CaseSemantics(TInfSemantics):
    """Concrete lattice operations; l returns a Lin over cell-measure symbols."""

    def __init__(self, with_ell, pieces):
        super().__init__(with_ell)
        self.pieces = pieces

    def ell(self, q):
        if not self.with_ell:
            raise UnsupportedOperation("the PQ reduct has no l")
        if q.kind == "bot":
            return Lin.of(0)
        if q.kind == "top":
            return Lin.of(1)
        out = Lin.of(0)
        for X, val in self.pieces[q.n]:
            if X.subset_of(q.X):
                out = out + val
        return out


def enumerate_cases(qterms: Sequence, pterms: Sequence, q_bound: int = DEFAULT_Q_BOUND,
                    p_bound: int = DEFAULT_P_BOUND):
    """Every complete diagram case of the given objects, as concrete values."""
    qterms, pterms = tuple(qterms), tuple(pterms)
    if len(qterms) > q_bound or len(pterms) > p_bound:
        raise CaseSplitError(f"{len(qterms)} lattice and {len(pterms)} point objects exceed the case bound")
    for kind_codes in product(range(3), repeat=len(qterms)):
        proper = [t for t, k in zip(qterms, kind_codes) if k == 2]
        for part in _set_partitions(len(proper)):
            nclass = max(part, default=-1) + 1
            members = [tuple(t for t, b in zip(proper, part) if b == j) for j in range(nclass)]
            for Ms in product(*(_minterm_sets(len(m)) for m in members)):
                yield from _point_cases(qterms, pterms, kind_codes, proper, part, members, Ms)


def _point_cases(qterms, pterms, kind_codes, proper, part, members, Ms):
    kinds = {}
    for t, k in zip(qterms, kind_codes):
        kinds[t.name] = ("bot", "top")[k] if k < 2 else None
    for t, b in zip(proper, part):
        kinds[t.name] = b
    classes = tuple(zip(members, Ms))
    for ppart in _set_partitions(len(pterms)):
        nblocks = max(ppart, default=-1) + 1
        for cells in product(*[list(product(*(range(len(M)) for M in Ms)))] * nblocks):
            reg = Registry()
            reg.reserve_index(len(classes))
            env = {}
            for j, (mem, M) in enumerate(classes):
                r = len(M)
                for t in mem:
                    pos = [i for i, v in enumerate(M) if v[mem.index(t)]]
                    env[t.name] = qpair(j, IntervalUnion.of([(Fraction(i, r), Fraction(i + 1, r)) for i in pos]))
            for t in qterms:
                if kinds[t.name] == "bot":
                    env[t.name] = QBOT
                elif kinds[t.name] == "top":
                    env[t.name] = QTOP
            pts = []
            for b in range(nblocks):
                p = PElem(reg)
                for j, i in enumerate(cells[b]):
                    r = len(Ms[j])
                    p.coords[j] = reg.fresh_value(IntervalUnion.of([(Fraction(i, r), Fraction(i + 1, r))]))
                pts.append(p)
            point_of = {}
            for t, b in zip(pterms, ppart):
                env[t.name] = pts[b]
                point_of[t.name] = b
            yield DiagramCase(qterms, pterms, kinds, classes, point_of, env, reg)


# ---------------------------------------------------------------- literal evaluation

def _lin_eval(t: Lin, env, sem) -> Lin:
    out = Lin.of(t.const)
    for k, c in t.terms:
        if isinstance(k, Ell):
            v = sem.ell(eval_term(k.arg, env, sem))
            out = out + (v if isinstance(v, Lin) else Lin.of(v)).scale(c)
        else:
            out = out + Lin.make({k: c})
    return out


def _con(d: Lin, op: str) -> LinCon:
    return LinCon.make(dict(d.terms), d.const, op)


def _alternatives_of(d: Lin, kind: str, pos: bool):
    if d.is_const():
        v = d.const == 0 if kind == "eq" else d.const < 0
        return v == pos
    if kind == "eq":
        return [[_con(d, "=")]] if pos else [[_con(d, "<")], [_con(-d, "<")]]
    return [[_con(d, "<")]] if pos else [[_con(-d, "<=")]]


def literal_alternatives(lit, env, sem):
    """True/False, or alternative lists of linear constraints."""
    a, pos = lit
    if a.kind in ("eq", "lt") and isinstance(a.args[0], Lin):
        return _alternatives_of(_lin_eval(a.args[0], env, sem) - _lin_eval(a.args[1], env, sem), a.kind, pos)
    return evaluate(a, env, sem) == pos


def _systems(lits, env, sem) -> list:
    """Constraint systems (lists) whose disjunction is equivalent to the literals."""
    opts = []
    for l in lits:
        r = literal_alternatives(l, env, sem)
        if r is False:
            return []
        if r is not True:
            opts.append(r)
    out = []
    for combo in product(*opts):
        cons = [c for alt in combo for c in alt]
        s = simplify_system(cons)
        if s is not None:
            out.append(s)
    return out


# ---------------------------------------------------------------- elimination steps

def eliminate_R(cons: Sequence[LinCon], vars_: Iterable) -> list | None:
    """Project a conjunction of linear constraints; None means infeasible."""
    return fm_project(list(cons), list(vars_))


def eliminate_P(case: DiagramCase, v: Var, lits) -> bool:
    """Whether some point v satisfies the (P/Q-only) literals in this case."""
    sem = TInfSemantics(False)
    for t in case.points():
        env = dict(case.env)
        env[v.name] = case.env[t.name]
        if all(evaluate(a, env, sem) == s for a, s in lits):
            return True
    for cells in product(*(range(len(M)) for _, M in case.classes)):
        env = dict(case.env)
        p = PElem(case.registry)
        for j, i in enumerate(cells):
            p.coords[j] = case.registry.fresh_value(case.cells(j)[i])
        env[v.name] = p
        if all(evaluate(a, env, sem) == s for a, s in lits):
            return True
    return False


def minimal_elements(case: DiagramCase, target: str | None = None) -> tuple:
    """Minimal nonbottom elements of the algebra generated by the case's
    lattice objects, split into those ~ target and the rest."""
    near, far = [], []
    tk = case.kinds.get(target) if target is not None else None
    for j in range(len(case.classes)):
        terms = [case.cell_term(j, i) for i in range(len(case.classes[j][1]))]
        (near if tk == j else far).extend(terms)
    return near, far


def _m(j, i):
    return ("m", j, i)


def _carve(cell: IntervalUnion, ins: list, outs: list) -> IntervalUnion:
    """A proper nonempty subset of cell containing ins and avoiding outs."""
    marks = sorted(set(cell.endpoints()) | set(ins) | set(outs))
    gap = min(b - a for a, b in zip(marks, marks[1:]))
    d = gap / 3
    if ins:
        return IntervalUnion.of([(c, c + d) for c in ins])
    a = cell.parts[0][0]
    return IntervalUnion.of([(a, a + d)])


def reduce_Q_quantifier(case: DiagramCase, v: Var, lits, with_ell: bool = True) -> list:
    """Options for a lattice element v over the case, each with its systems.

    Returns (label, systems) pairs where every system already contains the
    constraints linking each m-symbol to its cell: m = 0, 0 < m < l(s) or
    m = l(s).
    """
    out = []
    for kind in ("bot", "top"):
        env = case.cloned_env()
        env[v.name] = QBOT if kind == "bot" else QTOP
        out.append((kind, _systems(lits, env, case.semantics(with_ell))))
    pts = case.points()
    # a new class of its own
    J = len(case.classes)
    half = IntervalUnion.of([(0, Fraction(1, 2))])
    for bits in product((True, False), repeat=len(pts)):
        env = case.cloned_env()
        reg = case.registry
        for t, b in zip(pts, bits):
            p = env[t.name]
            p.coords[J] = reg.fresh_value(half if b else half.complement())
        env[v.name] = qpair(J, half)
        pieces = case.pieces()
        pieces[J] = [(half, Lin.make({_m(J, 0): 1})), (half.complement(), Lin.make({_m(J, 0): -1}, 1))]
        eta = [LinCon.make({_m(J, 0): -1}, 0, "<"), LinCon.make({_m(J, 0): 1}, -1, "<")]
        systems = [s + eta for s in _systems(lits, env, case.semantics(with_ell, pieces))]
        out.append((("fresh", bits), systems))
    # inside an existing class
    for j in range(len(case.classes)):
        cells = case.cells(j)
        for status in product("01p", repeat=len(cells)):
            if set(status) in ({"0"}, {"1"}):
                continue
            inside = [t for t in pts if status[case.cell_of(t.name, j)] == "p"]
            for bits in product((True, False), repeat=len(inside)):
                env = case.cloned_env()
                member = {t.name: b for t, b in zip(inside, bits)}
                Y = IntervalUnion.empty()
                for i, (c, st) in enumerate(zip(cells, status)):
                    if st == "1":
                        Y = Y.union(c)
                    elif st == "p":
                        here = [t for t in inside if case.cell_of(t.name, j) == i]
                        ins = [env[t.name].coord(j) for t in here if member[t.name]]
                        outs = [env[t.name].coord(j) for t in here if not member[t.name]]
                        Y = Y.union(_carve(c, ins, outs))
                env[v.name] = qpair(j, Y)
                pieces = case.pieces()
                pieces[j] = []
                eta = []
                for i, (c, st) in enumerate(zip(cells, status)):
                    u = Lin.make({case.cell_key(j, i): 1})
                    m = Lin.make({_m(j, i): 1})
                    pieces[j].append((c.intersect(Y), m))
                    pieces[j].append((c.minus(Y), u - m))
                    if st == "0":
                        eta.append(_con(m, "="))
                    elif st == "1":
                        eta.append(_con(m - u, "="))
                    else:
                        eta.extend([_con(-m, "<"), _con(m - u, "<")])
                pieces[j] = [(X, val) for X, val in pieces[j] if not X.is_empty()]
                systems = [s + eta for s in _systems(lits, env, case.semantics(with_ell, pieces))]
                out.append((("class", j, status, bits), systems))
    return out


def case_facts(case: DiagramCase) -> list:
    """Cell measures are positive and sum to 1 within each class."""
    base = []
    for j, (_, M) in enumerate(case.classes):
        total = Lin.of(0)
        for i in range(len(M)):
            u = Lin.make({case.cell_key(j, i): 1})
            base.append(_con(-u, "<"))
            total = total + u
        base.append(_con(total - Lin.of(1), "="))
    return base


def _feasible(cons) -> bool:
    syms = sorted({k for c in cons for k in c.symbols()}, key=repr)
    return fm_witness(cons, syms) is not None


def _negations(c: LinCon) -> list:
    d = Lin.make(dict(c.coeffs), c.const)
    if c.op == "=":
        return [[_con(d, "<")], [_con(-d, "<")]]
    if c.op == "<":
        return [[_con(-d, "<=")]]
    return [[_con(-d, "<")]]


def _reduce_system(s, base):
    """Drop constraints implied by the rest; None if infeasible."""
    if not _feasible(list(s) + base):
        return None
    out = list(s)
    for c in list(out):
        rest = [d for d in out if d is not c] + base
        if not any(_feasible(rest + alt) for alt in _negations(c)):
            out.remove(c)
    return out


def _case_outcome(case: DiagramCase, v: Var, lits, with_ell: bool) -> frozenset:
    """Disjunction of constraint systems over the remaining symbols."""
    if v.sort == Sort.P:
        return frozenset([frozenset()]) if eliminate_P(case, v, lits) else frozenset()
    base = case_facts(case) if with_ell else []
    out = set()
    for _, systems in reduce_Q_quantifier(case, v, lits, with_ell):
        for s in systems:
            ms = sorted({k for c in s for k in c.symbols() if isinstance(k, tuple) and k[:1] == ("m",)})
            r = fm_project(s, ms)
            if r is not None:
                r = _reduce_system(r, base)
            if r is not None:
                out.add(frozenset(r))
    return _prune(out)


def _prune(systems: set) -> frozenset:
    if frozenset() in systems:
        return frozenset([frozenset()])
    keep = [s for s in systems if not any(o < s for o in systems)]
    return frozenset(keep)


# ---------------------------------------------------------------- back to formulas

def con_formula(c: LinCon):
    """sum(c_k k) + const op 0, as an atom with positive coefficients on each side."""
    left, right = {}, {}
    for k, a in c.coeffs:
        (left if a > 0 else right)[k] = abs(a)
    lc = c.const if c.const > 0 else Fraction(0)
    rc = -c.const if c.const < 0 else Fraction(0)
    L, R = Lin.make(left, lc), Lin.make(right, rc)
    if c.op == "=":
        return Atom("eq", (L, R))
    if c.op == "<":
        return Atom("lt", (L, R))
    return Or((Atom("lt", (L, R)), Atom("eq", (L, R))))


def outcome_formula(outcome: frozenset):
    return disj(*(conj(*(con_formula(c) for c in sorted(s, key=repr))) for s in sorted(outcome, key=repr)))


def _features(qterms, pterms) -> list:
    feats = []
    for t in qterms:
        feats += [eq(t, BOT), eq(t, TOP)]
    for i in range(len(qterms)):
        for j in range(i + 1, len(qterms)):
            feats += [sim(qterms[i], qterms[j]), eq(qterms[i], qterms[j])]
    for size in range(2, len(qterms) + 1):
        for idx in product(range(len(qterms)), repeat=size):
            if list(idx) != sorted(set(idx)):
                continue
            sub = [qterms[i] for i in idx]
            for v in product((True, False), repeat=size):
                feats.append(eq(minterm_term(sub, v), BOT))
    for i in range(len(pterms)):
        for j in range(i + 1, len(pterms)):
            feats.append(eq(pterms[i], pterms[j]))
    for p in pterms:
        for q in qterms:
            feats.append(sqin(p, q))
    return feats


def separating_formula(rows: list, inside: list, features: list):
    """A formula over features true on rows[i] exactly when inside[i].

    rows are tuples of feature truth values.  Literals are dropped greedily
    as long as no outside row matches, then redundant terms are removed.
    """
    ins = [r for r, b in zip(rows, inside) if b]
    outs = {r for r, b in zip(rows, inside) if not b}
    if not ins:
        return Const(False)
    if not outs:
        return Const(True)
    nf = len(features)
    terms = []
    for r in sorted(set(ins)):
        if any(all(r[i] == v for i, v in t.items()) for t in terms):
            continue
        t = dict(enumerate(r))
        for i in range(nf):
            trial = {k: v for k, v in t.items() if k != i}
            if not any(all(o[k] == v for k, v in trial.items()) for o in outs):
                t = trial
        terms.append(t)
    # drop terms covered by the others
    kept = list(terms)
    for t in list(terms):
        rest = [u for u in kept if u is not t]
        covered = [r for r in ins if all(r[k] == v for k, v in t.items())]
        if rest and all(any(all(r[k] == v for k, v in u.items()) for u in rest) for r in covered):
            kept = rest
    return disj(*(conj(*(features[k] if v else Not(features[k]) for k, v in sorted(t.items()))) for t in kept))


def _exists_conj(v: Var, lits, theory: TheoryId, q_bound: int):
    if v.sort == Sort.R:
        return _exists_real(v, lits)
    with_ell = theory.kind == "THalfInf"
    qterms, pterms = _objects(lits, exclude=v.name)
    cases = list(enumerate_cases(qterms, pterms, q_bound))
    outcomes = [_case_outcome(c, v, lits, with_ell) for c in cases]
    groups = sorted({o for o in outcomes if o}, key=repr)
    if not groups:
        return Const(False)
    if len(groups) == 1 and all(outcomes):
        return outcome_formula(groups[0])
    feats = _features(qterms, pterms)
    rows = [tuple(c.holds(f) for f in feats) for c in cases]
    parts = []
    for g in groups:
        guard = separating_formula(rows, [o == g for o in outcomes], feats)
        parts.append(conj(guard, outcome_formula(g)))
    return disj(*parts)


def _exists_real(v: Var, lits):
    opts = []
    for a, pos in lits:
        if a.kind not in ("eq", "lt") or not isinstance(a.args[0], Lin):
            raise ValueError("a real variable may only occur in linear atoms")
        r = _alternatives_of(a.args[0] - a.args[1], a.kind, pos)
        if r is False:
            return Const(False)
        if r is not True:
            opts.append(r)
    out = set()
    for combo in product(*opts):
        cons = [c for alt in combo for c in alt]
        res = fm_eliminate(cons, v)
        if res is not None:
            out.add(frozenset(res))
    return outcome_formula(_prune(out))


def _objects(lits, exclude: str = ""):
    q, p = {}, {}
    for a, _ in lits:
        for t in a.args:
            for n in term_names(t):
                if n.name == exclude:
                    continue
                if n.sort == Sort.Q:
                    q.setdefault(n.name, n)
                elif n.sort == Sort.P:
                    p.setdefault(n.name, n)
    return tuple(q[k] for k in sorted(q)), tuple(p[k] for k in sorted(p))


def _mentions(lit, name: str) -> bool:
    return any(n.name == name for t in lit[0].args for n in term_names(t))


def _exists(v: Var, body, theory, q_bound):
    parts = []
    for d in to_dnf(body, cap=None).disjuncts:
        mine = [l for l in d if _mentions(l, v.name)]
        rest = conj(*(a if s else Not(a) for a, s in d if not _mentions((a, s), v.name)))
        parts.append(conj(rest, _exists_conj(v, mine, theory, q_bound)) if mine else rest)
    return disj(*parts)


def eliminate_quantifiers(f, theory: TheoryId = THALF_INF, q_bound: int = DEFAULT_Q_BOUND):
    """An equivalent quantifier-free formula (modulo the theory)."""
    if isinstance(theory, str):
        theory = TheoryId.parse(theory)
    if theory.kind not in ("THalfInf", "THalfInfPQ"):
        raise UnsupportedOperation(f"no quantifier elimination for {theory}")
    return _qe(f, theory, q_bound)


def _qe(f, theory, q_bound):
    if isinstance(f, (Const, Atom)):
        return f
    if isinstance(f, Not):
        return neg(_qe(f.arg, theory, q_bound))
    if isinstance(f, And):
        return conj(*(_qe(g, theory, q_bound) for g in f.args))
    if isinstance(f, Or):
        return disj(*(_qe(g, theory, q_bound) for g in f.args))
    body = _qe(f.body, theory, q_bound)
    if isinstance(f, Exists):
        return _exists(f.var, body, theory, q_bound)
    return neg(_exists(f.var, neg(body), theory, q_bound))


# ---------------------------------------------------------------- consistency

def tinf_diagram_consistency(theory: TheoryId, lits) -> ConsistencyResult:
    """Decide a finite set of literals over named P/Q/R objects."""
    with_ell = theory.kind == "THalfInf"
    qterms, pterms = _objects(lits)
    for case in enumerate_cases(qterms, pterms, q_bound=8, p_bound=8):
        sem = case.semantics(with_ell)
        base = case_facts(case) if with_ell else []
        for s in _systems(lits, case.env, sem):
            if _feasible(s + base):
                return ConsistencyResult(True, _witness(theory, lits), "realized by a diagram case")
    return ConsistencyResult(False, reason="no diagram case satisfies the literals")


def _witness(theory: TheoryId, lits):
    """A fragment whose parameters carry standard values realizing the literals."""
    from .formula import Param, substitute
    from .theories import empty_fragment, realize_in_standard_model
    names = {n for a, _ in lits for t in a.args for n in term_names(t) if isinstance(n, Param)}
    as_vars = {n: Var(n.name, n.sort) for n in names}
    goal = conj(*(substitute(a if s else Not(a), as_vars) for a, s in lits))
    res = realize_in_standard_model(empty_fragment(theory), goal)
    if not res.ok:
        raise AssertionError("consistent diagram failed to realize")
    fr = res.fragment
    for n in sorted(names, key=lambda n: n.name):
        fr = fr.with_value(n.name, n.sort, res.assignment[n.name])
    return fr
