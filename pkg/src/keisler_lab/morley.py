"""Morley products of measures at fragment scale.

Convention: in ``morley_product_eval(mu, nu, phi, fr, xvars, yvars)`` the
left factor mu lives on xvars and nu on yvars, and the value is the integral
of b -> mu(phi(x,b)) against nu.  Powers follow mu^(n+1) = mu_{x_{n+1}} (x) mu^(n),
so the newest variable always sits in the left factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Sequence

from .formula import Not, Param, Sort, Var, conj, eq, free_vars, rel, substitute, to_str
from .measures import CubeLebesgue, Dirac, Measure, TInfQType, _QTypeSemantics, Y_TOKEN
from .theories import (Cube, Fragment, NeedAtom, QElem, UnsupportedOperation, class_cells, eval_term,
                       has_clique)
from .formula import atoms
from .typespace import equality_patterns


def _rename(phi, mapping: dict):
    """Substitute variables by name (any sort)."""
    sub = {}
    for v in free_vars(phi):
        if v.name in mapping:
            t = mapping[v.name]
            sub[v] = t if not isinstance(t, str) else Var(t, v.sort)
    return substitute(phi, sub)


def _var_sort(phi, name, default=Sort.V):
    for v in free_vars(phi):
        if v.name == name:
            return v.sort
    return default


# ---------------------------------------------------------------- relational: lazy type-space sum

def _cell_formula(pattern, yvars, new_names, facts, elements):
    """Formula in yvars isolating the cell: equality pattern plus decided atoms."""
    cls_var = {}
    lits = []
    for v, p in zip(yvars, pattern):
        if p[0] == "e":
            lits.append(eq(Var(v, Sort.V), Param(p[1], Sort.V)))
        elif p[1] in cls_var:
            lits.append(eq(Var(v, Sort.V), Var(cls_var[p[1]], Sort.V)))
        else:
            cls_var[p[1]] = v
    reps = list(cls_var.values())
    for c in reps:
        for e in elements:
            lits.append(Not(eq(Var(c, Sort.V), Param(e, Sort.V))))
    for i in range(len(reps)):
        for j in range(i + 1, len(reps)):
            lits.append(Not(eq(Var(reps[i], Sort.V), Var(reps[j], Sort.V))))
    back = {new_names[j]: v for j, v in cls_var.items()}

    def term(n):
        return Var(back[n], Sort.V) if n in back else Param(n, Sort.V)

    for (r, args), val in sorted(facts.items()):
        a = rel(r, *(term(n) for n in args))
        lits.append(a if val else Not(a))
    return conj(*lits)


def _type_space_sum(mu, nu, phi, fr: Fragment, xvars, yvars) -> Fraction:
    elements = fr.elements()
    henson = fr.theory.kind == "Henson"
    total = Fraction(0)
    for pattern in equality_patterns(len(yvars), elements):
        ncls = 1 + max((p[1] for p in pattern if p[0] == "n"), default=-1)
        work = fr.extend()
        new_names = [work.fresh_name("_y") for _ in range(ncls)]
        target = {v: (p[1] if p[0] == "e" else new_names[p[1]]) for v, p in zip(yvars, pattern)}
        inst = _rename(phi, {v: Param(t, Sort.V) for v, t in target.items()})
        mine = set(new_names)
        stack = [{}]
        while stack:
            facts = stack.pop()
            ext = fr.extend(new_names, facts)
            ext.counter = work.counter
            try:
                F = mu.eval(inst, ext, xvars)
            except NeedAtom as e:
                if not mine & set(e.key[1]):
                    raise
                stack.append({**facts, e.key: False})
                if henson and e.key[0] == "E":
                    edges = ext.positive_edges() + [e.key[1]]
                    if has_clique(set(), edges, fr.theory.s):
                        continue
                stack.append({**facts, e.key: True})
                continue
            if F == 0:
                continue
            tau = _cell_formula(pattern, yvars, new_names, facts, elements)
            total += F * nu.eval(tau, fr, yvars)
    return total


# ---------------------------------------------------------------- T^inf strategies

def _realize_type(nu, fr: Fragment, yvars):
    """Concrete standard values realizing a type measure over fr."""
    if isinstance(nu, Dirac):
        return nu.values(fr)
    if isinstance(nu, TInfQType):
        (y,) = yvars
        return [nu.realize(fr, y)]
    raise UnsupportedOperation(f"cannot realize {nu.describe()} concretely")


def _point_eval(mu, nu, phi, fr, xvars, yvars) -> Fraction:
    vals = _realize_type(nu, fr, yvars)
    ext = fr.extend()
    mapping = {}
    for v, val in zip(yvars, vals):
        name = ext.fresh_name("_b")
        ext = ext.with_value(name, _var_sort(phi, v), val)
        mapping[v] = Param(name, _var_sort(phi, v))
    return mu.eval(_rename(phi, mapping), ext, xvars)


def _symbolic_fiber(mu, nu, phi, fr, xvars, yvars) -> Fraction:
    """Integrate the {0,1}-valued fiber of a type mu against CubeLebesgue."""
    (y,) = yvars
    env = fr.env()
    for x in xvars:
        env[x] = Y_TOKEN
    sem = _QTypeSemantics(True)
    by_index: dict = {}
    for a in atoms(phi):
        if a.kind == "sqin" and isinstance(a.args[0], Var) and a.args[0].name == y:
            try:
                q = eval_term(a.args[1], env, sem)
            except (KeyError, UnsupportedOperation):
                continue
            if isinstance(q, QElem) and q.kind == "pair":
                by_index.setdefault(q.n, []).append(q.X)
    idx = sorted(by_index)
    total = Fraction(0)
    for choice in product(*(class_cells(by_index[n]) for n in idx)):
        cube = Cube(tuple(zip(idx, choice)))
        point = cube.representative(fr.registry)
        ext = fr.extend()
        name = ext.fresh_name("_b")
        ext = ext.with_value(name, Sort.P, point)
        F = mu.eval(_rename(phi, {y: Param(name, Sort.P)}), ext, xvars)
        total += F * cube.measure()
    return total


# ---------------------------------------------------------------- public API

def strategy(mu, nu, fragment: Fragment) -> str:
    if fragment.theory.relational:
        return "type-space-sum"
    if nu.is_type():
        return "point"
    if isinstance(nu, CubeLebesgue) and mu.is_type():
        return "symbolic-fiber"
    raise UnsupportedOperation(f"no strategy for {mu.describe()} (x) {nu.describe()} over {fragment.theory}")


def morley_product_eval(mu: Measure, nu: Measure, phi, fragment: Fragment,
                        xvars: Sequence[str] = ("x",), yvars: Sequence[str] = ("y",)) -> Fraction:
    xvars, yvars = tuple(xvars), tuple(yvars)
    s = strategy(mu, nu, fragment)
    if s == "type-space-sum":
        return _type_space_sum(mu, nu, phi, fragment, xvars, yvars)
    if s == "point":
        return _point_eval(mu, nu, phi, fragment, xvars, yvars)
    return _symbolic_fiber(mu, nu, phi, fragment, xvars, yvars)


class Product(Measure):
    """mu (x) nu; the first mu.arity variables belong to mu."""

    def __init__(self, left: Measure, right: Measure):
        self.left, self.right = left, right
        self.arity = left.arity + right.arity

    def is_type(self):
        return self.left.is_type() and self.right.is_type()

    def eval(self, phi, fragment, vars_=None):
        vars_ = tuple(vars_ or default_vars(self.arity))
        if len(vars_) != self.arity:
            raise ValueError(f"expected {self.arity} variables")
        k = self.left.arity
        return morley_product_eval(self.left, self.right, phi, fragment, vars_[:k], vars_[k:])

    def describe(self):
        return f"({self.left.describe()} x {self.right.describe()})"


def default_vars(n: int) -> tuple:
    return tuple(f"x{i}" for i in range(1, n + 1))


def pattern_measure(factors: Sequence[Measure]) -> Measure:
    """factors[i] lives on x_{i+1}; builds f_n (x) (... (x) f_1)."""
    m = factors[0]
    for f in factors[1:]:
        m = Product(f, m)
    return m


def _eval_indexed(m: Measure, n: int, phi, fragment, vars_):
    vars_ = tuple(vars_ or default_vars(n))
    if len(vars_) != n:
        raise ValueError(f"expected {n} variables")
    # Product factors are ordered newest first
    return m.eval(phi, fragment, tuple(reversed(vars_)))


def power_eval(mu: Measure, n: int, phi, fragment: Fragment, vars_: Sequence[str] | None = None) -> Fraction:
    if n < 1:
        raise ValueError("n must be at least 1")
    return _eval_indexed(pattern_measure([mu] * n), n, phi, fragment, vars_)


def pattern_product_eval(X, mu: Measure, nu: Measure, n: int, phi, fragment: Fragment,
                         vars_: Sequence[str] | None = None) -> Fraction:
    """lambda_{n,X}: coordinate i (1-based) carries mu if i in X, else nu."""
    X = set(X)
    if not X <= set(range(1, n + 1)):
        raise ValueError("X must be a subset of [n]")
    factors = [mu if i in X else nu for i in range(1, n + 1)]
    return _eval_indexed(pattern_measure(factors), n, phi, fragment, vars_)


@dataclass(frozen=True)
class Report:
    equal: bool
    formula: object = None
    left: Fraction | None = None
    right: Fraction | None = None

    def __str__(self):
        if self.equal:
            return "Equal"
        return f"Counterexample({to_str(self.formula)}, {self.left}, {self.right})"


def check_commute(mu: Measure, nu: Measure, fragment: Fragment, pool, x: str = "x", y: str = "y") -> Report:
    """Compare (mu_x (x) nu_y) with (nu_y (x) mu_x) on each pool formula phi(x,y)."""
    pool = list(pool)
    if not pool:
        raise ValueError("formula pool is empty")
    for phi in pool:
        a = morley_product_eval(mu, nu, phi, fragment, (x,), (y,))
        b = morley_product_eval(nu, mu, phi, fragment, (y,), (x,))
        if a != b:
            return Report(False, phi, a, b)
    return Report(True)


def check_assoc(mu: Measure, nu: Measure, lam: Measure, fragment: Fragment, pool,
                x: str = "x", y: str = "y", z: str = "z") -> Report:
    """Compare ((mu (x) nu) (x) lam) with (mu (x) (nu (x) lam)) on phi(x,y,z)."""
    pool = list(pool)
    if not pool:
        raise ValueError("formula pool is empty")
    left = Product(Product(mu, nu), lam)
    right = Product(mu, Product(nu, lam))
    for phi in pool:
        a = left.eval(phi, fragment, (x, y, z))
        b = right.eval(phi, fragment, (x, y, z))
        if a != b:
            return Report(False, phi, a, b)
    return Report(True)
