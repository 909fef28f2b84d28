"""Keisler measures at fragment scale, evaluated exactly on qf formulas."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Callable, Sequence

from .formula import (And, Atom, Const, Lin, Not, Or, Param, QOp, Sort, Var, atoms, conj, free_vars,
                      sqin, substitute, to_dnf, to_str, Ell, eq, sim)
from .theories import (QBOT, QTOP, Fragment, QElem, TInfSemantics, UnsupportedOperation, cube_decompose, eval_term,
                       evaluate, evaluate_in, has_clique, realize_in_standard_model, rel_key)

HALF = Fraction(1, 2)


class Measure:
    arity = 1
    sort: Sort | None = None

    def eval(self, phi, fragment: Fragment, vars_: Sequence[str] = ("x",)) -> Fraction:
        raise NotImplementedError

    def is_type(self) -> bool:
        return False

    def describe(self) -> str:
        return type(self).__name__


def eval_measure(m: Measure, phi, fragment: Fragment, vars_: Sequence[str] = ("x",)) -> Fraction:
    return m.eval(phi, fragment, tuple(vars_))


def _bind(phi, fragment: Fragment, vars_, values):
    return phi, dict(zip(vars_, values))


def _var_sorts(phi) -> dict:
    return {v.name: v.sort for v in free_vars(phi)}


# ---------------------------------------------------------------- finitely supported

@dataclass
class Dirac(Measure):
    """Point mass at a fragment element (name) or at a standard value."""
    elements: tuple

    def __post_init__(self):
        if not isinstance(self.elements, tuple):
            self.elements = (self.elements,)
        self.arity = len(self.elements)

    def is_type(self):
        return True

    def values(self, fragment):
        out = []
        for e in self.elements:
            if isinstance(e, str) and not fragment.theory.relational:
                out.append(fragment.value(e))
            else:
                out.append(e)
        return out

    def eval(self, phi, fragment, vars_=("x",)):
        vals = self.values(fragment)
        f, extra = _bind(phi, fragment, vars_, vals)
        return Fraction(int(evaluate_in(f, fragment, extra)))

    def describe(self):
        return "Dirac(" + ",".join(map(str, self.elements)) + ")"


@dataclass
class Average(Measure):
    """Av(a_1..a_n): uniform average of point masses (elements may repeat)."""
    elements: tuple

    def __post_init__(self):
        self.elements = tuple(self.elements)
        if not self.elements:
            raise ValueError("Average needs at least one element")
        first = self.elements[0]
        self.arity = len(first) if isinstance(first, tuple) else 1

    def eval(self, phi, fragment, vars_=("x",)):
        total = Fraction(0)
        for e in self.elements:
            total += Dirac(e if isinstance(e, tuple) else (e,)).eval(phi, fragment, vars_)
        return total / len(self.elements)

    def describe(self):
        return "Average(" + ",".join(map(str, self.elements)) + ")"


# ---------------------------------------------------------------- coin flip

X_MARK = "*"  # stands for the measure variable inside instance keys


def _instances(lits, x: str, fragment: Fragment):
    """Reduce a literal conjunction for a generic x.

    Returns a dict instance-key -> sign (x appears as X_MARK), or None if the conjunction is null or
    contradictory.  Atoms without x are decided by the fragment.
    """
    out: dict = {}
    for a, pos in lits:
        names = [t.name for t in a.args]
        if x not in names:
            if evaluate_in(a, fragment) != pos:
                return None
            continue
        if a.kind == "eq":
            if names[0] == names[1]:
                if not pos:
                    return None
                continue
            if pos:
                return None  # x equal to a given element: a finite, hence null, set
            continue
        if a.kind != "rel":
            raise UnsupportedOperation("coin flip measures live on relational languages")
        args = [X_MARK if n == x else fragment.rep(n) for n in names]
        if a.rel == "E" and args[0] == args[1]:
            if pos:
                return None
            continue
        key = rel_key(a.rel, args)
        if out.get(key, pos) != pos:
            return None
        out[key] = pos
    return out


@dataclass
class CoinFlip(Measure):
    """Each relational instance involving x holds independently with its bias."""
    theory: object = None
    bias: Callable | None = None

    @staticmethod
    def localized(base, r=HALF, theory=None) -> "CoinFlip":
        """Bias r on instances over `base`, 0 on instances touching anything else.

        This is invariant over base in the Henson graphs, where an invariant
        measure must give E(x,a) mass 0 for a generic non-adjacent a.
        """
        base = frozenset(base)
        r = Fraction(r)

        def bias(key):
            return r if all(a in base for a in key[1] if a != X_MARK) else Fraction(0)
        return CoinFlip(theory, bias)

    def weight(self, key, sign):
        b = Fraction(self.bias(key)) if self.bias else HALF
        return b if sign else 1 - b

    def eval(self, phi, fragment, vars_=("x",)):
        (x,) = vars_
        if fragment.theory.kind not in ("TR", "RandomGraph", "Henson"):
            raise UnsupportedOperation(f"no coin flip measure for {fragment.theory}")
        f = substitute(phi, {Var(x, Sort.V): Param(x, Sort.V)})
        dnf = to_dnf(f, cap=None)
        cells = []
        for d in dnf.disjuncts:
            inst = _instances(d, x, fragment)
            if inst is not None:
                cells.append(inst)
        if fragment.theory.kind == "Henson":
            self._check_henson(cells, x, fragment)
        if not cells:
            return Fraction(0)
        if len(cells) == 1:
            out = Fraction(1)
            for k, s in cells[0].items():
                out *= self.weight(k, s)
            return out
        keys = sorted({k for c in cells for k in c})
        total = Fraction(0)
        for signs in product((True, False), repeat=len(keys)):
            val = dict(zip(keys, signs))
            if any(all(val[k] == s for k, s in c.items()) for c in cells):
                w = Fraction(1)
                for k, s in val.items():
                    w *= self.weight(k, s)
                total += w
        return total

    def _check_henson(self, cells, x, fragment):
        nbrs = set()
        for c in cells:
            for key in c:
                if self.weight(key, True) > 0:
                    nbrs.update(a for a in key[1] if a != X_MARK)
        edges = [e for e in fragment.positive_edges() if set(e) <= nbrs]
        if has_clique(nbrs, edges, fragment.theory.s - 1):
            raise UnsupportedOperation("coin flips over these edges are not independent in a Henson graph")

    def describe(self):
        return "CoinFlip"


# ---------------------------------------------------------------- independent family

def _prop_abstract(phi, family):
    """Rewrite phi as a propositional formula over family indices."""
    for i, g in enumerate(family):
        if phi == g:
            return Atom("rel", (Param(str(i), Sort.V),), "F")
    if isinstance(phi, Const):
        return phi
    if isinstance(phi, Not):
        return Not(_prop_abstract(phi.arg, family))
    if isinstance(phi, And):
        return And(tuple(_prop_abstract(g, family) for g in phi.args))
    if isinstance(phi, Or):
        return Or(tuple(_prop_abstract(g, family) for g in phi.args))
    raise UnsupportedOperation(f"{to_str(phi)} is outside the algebra generated by the family")


def check_independence(family, fragment: Fragment, var: str = "x") -> bool:
    return find_dependence(family, fragment, var) is None


def find_dependence(family, fragment: Fragment, var: str = "x"):
    """A pair (X, Y) of index sets with the conjunction of X and negated Y
    inconsistent, or None when the family is independent."""
    n = len(family)
    for signs in product((True, False), repeat=n):
        goal = conj(*(g if s else Not(g) for g, s in zip(family, signs)))
        if not realize_in_standard_model(fragment, goal).ok:
            X = [i for i in range(n) if signs[i]]
            Y = [i for i in range(n) if not signs[i]]
            return X, Y
    return None


@dataclass
class IndependentFamily(Measure):
    """The measure giving the conjunction of X and negated Y the mass
    prod f(A) * prod (1 - f(B)).  Only events generated by the family are
    in its domain."""
    family: tuple
    f: tuple
    var: str = "x"

    def __post_init__(self):
        self.family = tuple(self.family)
        self.f = tuple(Fraction(v) for v in self.f)
        if len(self.family) != len(self.f) or len(set(self.family)) != len(self.family):
            raise ValueError("family members must be distinct and each needs a value")
        if any(not 0 <= v <= 1 for v in self.f):
            raise ValueError("family values must lie in [0,1]")

    def _conj_mass(self, lits: dict) -> Fraction:
        out = Fraction(1)
        for i, s in lits.items():
            out *= self.f[i] if s else 1 - self.f[i]
        return out

    def eval(self, phi, fragment=None, vars_=None):
        if vars_ is not None and tuple(vars_) != (self.var,):
            phi = substitute(phi, {Var(vars_[0], s): Var(self.var, s) for s in Sort})
        prop = _prop_abstract(phi, self.family)
        dnf = to_dnf(prop, cap=None)
        cells = [{int(a.args[0].name): s for a, s in d} for d in dnf.disjuncts]
        if len(cells) <= 12:
            total = Fraction(0)
            for k in range(1, len(cells) + 1):
                for S in combinations(cells, k):
                    merged: dict = {}
                    ok = True
                    for c in S:
                        for i, s in c.items():
                            if merged.get(i, s) != s:
                                ok = False
                            merged[i] = s
                    if ok:
                        total += (-1) ** (k + 1) * self._conj_mass(merged)
            return total
        idx = sorted({i for c in cells for i in c})
        total = Fraction(0)
        for signs in product((True, False), repeat=len(idx)):
            val = dict(zip(idx, signs))
            if any(all(val[i] == s for i, s in c.items()) for c in cells):
                total += self._conj_mass(val)
        return total


def independent_family_measure(family, f, fragment: Fragment, var: str = "x") -> IndependentFamily:
    bad = find_dependence(list(family), fragment, var)
    if bad is not None:
        raise ValueError(f"family is not independent: X={bad[0]}, Y={bad[1]}")
    return IndependentFamily(tuple(family), tuple(f), var)


# ---------------------------------------------------------------- T^inf measures

def _q_values_in(phi, env, sem, skip: set) -> list:
    """Values of every evaluable Q-subterm of phi (those avoiding `skip`)."""
    from .formula import term_names
    out = []

    def visit(t):
        if isinstance(t, (Var, Param, QOp)):
            names = {n.name for n in term_names(t)}
            if not names & skip and (not isinstance(t, (Var, Param)) or t.sort == Sort.Q):
                try:
                    v = eval_term(t, env, sem)
                    if isinstance(v, QElem):
                        out.append(v)
                except (KeyError, UnsupportedOperation):
                    pass
            if isinstance(t, QOp):
                for a in t.args:
                    visit(a)
        elif isinstance(t, Ell):
            visit(t.arg)
        elif isinstance(t, Lin):
            for k, _ in t.terms:
                visit(k)

    for a in atoms(phi):
        for t in a.args:
            visit(t)
    return out


class CubeLebesgue(Measure):
    """Product Lebesgue measure on the P sort (finite sets are null)."""
    sort = Sort.P

    def eval(self, phi, fragment, vars_=("x",)):
        (x,) = vars_
        env = fragment.env()
        total = Fraction(0)
        for cube, c in cube_decompose(phi, Var(x, Sort.P), env):
            if c:
                total += c * cube.measure()
        return total

    def eval_conjunction(self, lits, fragment, x="x") -> Fraction:
        """Product formula for a conjunction of membership literals."""
        env = fragment.env()
        sem = TInfSemantics()
        per_class: dict = {}
        for a, pos in lits:
            if a.kind == "eq":
                if pos:
                    return Fraction(0)
                continue
            q = eval_term(a.args[1], env, sem)
            if q.kind in ("bot", "top"):
                if (q.kind == "top") != pos:
                    return Fraction(0)
                continue
            X = q.X if pos else q.X.complement()
            per_class[q.n] = per_class.get(q.n, None)
            per_class[q.n] = X if per_class[q.n] is None else per_class[q.n].intersect(X)
        out = Fraction(1)
        for X in per_class.values():
            out *= X.measure()
        return out

    def describe(self):
        return "CubeLebesgue"


class _QTypeToken:
    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name


Y_TOKEN = _QTypeToken("Y")
YC_TOKEN = _QTypeToken("Yc")


class _QTypeSemantics(TInfSemantics):
    """Evaluation at a realization Y of the global type q: Y contains every
    point, has measure 1/2 (when l exists) and is in a class of its own."""

    def __init__(self, with_ell, base_sqin=None):
        super().__init__(with_ell)
        self.base_sqin = base_sqin

    @staticmethod
    def tok(v):
        return v is Y_TOKEN or v is YC_TOKEN

    def qop(self, op, args):
        if not any(self.tok(a) for a in args):
            return super().qop(op, args)
        if op == "comp":
            return YC_TOKEN if args[0] is Y_TOKEN else Y_TOKEN
        a, b = args
        if self.tok(a) and self.tok(b):
            if a is b:
                return a
            return QBOT if op == "meet" else QTOP
        t, other = (a, b) if self.tok(a) else (b, a)
        if op == "meet":
            return t if other == QTOP else QBOT
        return t if other == QBOT else QTOP

    def eq(self, a, b):
        if self.tok(a) or self.tok(b):
            return a is b
        return super().eq(a, b)

    def sim(self, a, b):
        if self.tok(a) or self.tok(b):
            return self.tok(a) and self.tok(b)
        return super().sim(a, b)

    def sqin(self, p, q):
        if q is Y_TOKEN:
            return True
        if q is YC_TOKEN:
            return False
        if self.base_sqin is not None:
            return self.base_sqin(p, q)
        return super().sqin(p, q)

    def ell(self, q):
        if self.tok(q):
            if not self.with_ell:
                raise UnsupportedOperation("the PQ reduct has no l")
            return HALF
        return super().ell(q)


class TInfQType(Measure):
    """The global type q (with l(y)=1/2) or q_PQ in the PQ reduct."""
    sort = Sort.Q

    def __init__(self, pq: bool = False):
        self.pq = pq

    def is_type(self):
        return True

    def eval(self, phi, fragment, vars_=("y",), base_sqin=None):
        (y,) = vars_
        env = fragment.env()
        env[y] = Y_TOKEN
        sem = _QTypeSemantics(not self.pq and fragment.theory.kind == "THalfInf", base_sqin)
        return Fraction(int(evaluate(phi, env, sem)))

    def realize(self, fragment: Fragment, name: str = "y"):
        """A standard element realizing the restriction of q to the fragment."""
        lits = []
        y = Var(name, Sort.Q)
        for n, p in fragment.params.items():
            if p.value is None:
                continue
            if p.sort == Sort.P:
                lits.append(sqin(Param(n, Sort.P), y))
            elif p.sort == Sort.Q:
                lits.append(Not(sim(y, Param(n, Sort.Q))))
        lits.append(Not(eq(y, QOp("top"))))
        if not self.pq and fragment.theory.kind == "THalfInf":
            lits.append(eq(Lin.make({Ell(y): 1}), Lin.of(HALF)))
        res = realize_in_standard_model(fragment, conj(*lits))
        if not res.ok:
            raise ValueError(f"cannot realize q: {res.reason}")
        return res.assignment[name]

    def describe(self):
        return "q_PQ" if self.pq else "q"


# ---------------------------------------------------------------- rule types (relational)

@dataclass
class RuleType(Measure):
    """A global non-realized 1-type given by a rule deciding relational atoms
    that involve the realization.  decide(key, element, fragment) -> bool."""
    decide: Callable
    name: str = "rule"

    def is_type(self):
        return True

    def realize(self, fragment: Fragment):
        work = fragment.extend()
        el = work.fresh_name("_r")
        out = fragment.extend([el], rules={el: self.decide})
        out.counter = work.counter
        return out, el

    def eval(self, phi, fragment, vars_=("x",)):
        (x,) = vars_
        fr, el = self.realize(fragment)
        f = substitute(phi, {Var(x, Sort.V): Param(el, Sort.V)})
        return Fraction(int(evaluate_in(f, fr)))

    def describe(self):
        return self.name


def p_E() -> RuleType:
    """The Henson type of a vertex with no edges to anything."""
    return RuleType(lambda key, el, fr: False, "p_E")


# ---------------------------------------------------------------- schema and convex

def match_template(template, instance, yvars: Sequence) -> dict | None:
    """Find b with template(b) == instance structurally (yvars are the holes)."""
    binding: dict = {}
    holes = set(yvars)

    def m(t, s):
        if isinstance(t, Var) and t in holes:
            if t in binding:
                return binding[t] == s
            binding[t] = s
            return True
        if type(t) is not type(s):
            return False
        if isinstance(t, (Var, Param, Const)):
            return t == s
        if isinstance(t, Atom):
            return t.kind == s.kind and t.rel == s.rel and len(t.args) == len(s.args) and \
                all(m(a, b) for a, b in zip(t.args, s.args))
        if isinstance(t, QOp):
            return t.op == s.op and len(t.args) == len(s.args) and all(m(a, b) for a, b in zip(t.args, s.args))
        if isinstance(t, Ell):
            return m(t.arg, s.arg)
        if isinstance(t, Lin):
            if t.const != s.const or len(t.terms) != len(s.terms):
                return False
            return all(c == d and m(k, l) for (k, c), (l, d) in zip(t.terms, s.terms))
        if isinstance(t, Not):
            return m(t.arg, s.arg)
        if isinstance(t, (And, Or)):
            return len(t.args) == len(s.args) and all(m(a, b) for a, b in zip(t.args, s.args))
        return t == s

    return binding if m(template, instance) else None


@dataclass
class Schema(Measure):
    """A definable measure on instances of one template: value by guard cell."""
    template: object
    yvars: tuple
    cells: tuple  # (guard formula over yvars, value)
    var: str = "x"

    def eval(self, phi, fragment, vars_=("x",)):
        if tuple(vars_) != (self.var,):
            phi = substitute(phi, {Var(vars_[0], s): Var(self.var, s) for s in Sort})
        b = match_template(self.template, phi, self.yvars)
        if b is None:
            raise UnsupportedOperation(f"{to_str(phi)} is not an instance of the schema template")
        for guard, value in self.cells:
            if evaluate_in(substitute(guard, b), fragment):
                return Fraction(value)
        raise ValueError("schema incomplete: no guard covers these parameters")


def extend_definable_schema(m: Schema, phi, fragment: Fragment) -> Fraction:
    return m.eval(phi, fragment, (m.var,))


def verify_schema_partition(m: Schema, fragment: Fragment) -> bool:
    """Check that the guards partition the parameter space over the fragment."""
    if fragment.theory.relational:
        from .typespace import enumerate_types
        names = [v.name for v in m.yvars]
        for t in enumerate_types(fragment, names):
            fr, assign = t.realize(fragment)
            hits = 0
            for guard, _ in m.cells:
                g = substitute(guard, {v: Param(assign[v.name], v.sort) for v in m.yvars})
                hits += evaluate_in(g, fr)
            if hits != 1:
                return False
        return True
    from .formula import Exists, Forall, disj
    from .qe import eliminate_quantifiers
    guards = [g for g, _ in m.cells]

    def closed(f, quant):
        for v in m.yvars:
            f = quant(v, f)
        return f

    for i in range(len(guards)):
        for j in range(i + 1, len(guards)):
            r = eliminate_quantifiers(closed(conj(guards[i], guards[j]), Exists), fragment.theory)
            if not evaluate_in(r, fragment):
                continue
            return False
    r = eliminate_quantifiers(closed(disj(*guards), Forall), fragment.theory)
    return evaluate_in(r, fragment)


@dataclass
class Convex(Measure):
    weights: tuple
    components: tuple

    def __post_init__(self):
        self.weights = tuple(Fraction(w) for w in self.weights)
        self.components = tuple(self.components)
        if sum(self.weights) != 1 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative and sum to 1")
        if len(self.weights) != len(self.components) or not self.components:
            raise ValueError("one weight per component")
        ar = {c.arity for c in self.components}
        if len(ar) != 1:
            raise ValueError("components must have the same arity")
        self.arity = ar.pop()

    def eval(self, phi, fragment, vars_=("x",)):
        total = Fraction(0)
        for w, c in zip(self.weights, self.components):
            if w:
                total += w * c.eval(phi, fragment, vars_)
        return total

    def describe(self):
        return "Convex(" + ", ".join(f"{w}*{c.describe()}" for w, c in zip(self.weights, self.components)) + ")"


def convex_combine(weights, measures) -> Convex:
    return Convex(tuple(weights), tuple(measures))
