"""Finite approximation by averages: Av-errors, fam search, approximation
sequences, concentration bounds and the fim convexity identity."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, combinations_with_replacement, product
from math import comb
from typing import Mapping, Sequence

from .formula import Param, Sort, Var, atoms, free_vars, substitute
from .measures import Average, Convex, Dirac, Measure, TInfQType, Y_TOKEN, _QTypeSemantics
from .morley import Report, _rename, _var_sort, default_vars, pattern_product_eval, power_eval
from .theories import (Cube, Fragment, QElem, TInfSemantics, UnsupportedOperation, class_cells, eval_term,
                       evaluate_in)
from .typespace import enumerate_types


def _q_pairs(values) -> dict:
    by_index: dict = {}
    for v in values:
        if isinstance(v, QElem) and v.kind == "pair":
            by_index.setdefault(v.n, []).append(v.X)
    return by_index


def _cell_points(fragment: Fragment, extra_values) -> list:
    """One representative point per cube cut out by the known Q-values."""
    qs = [fragment.value(n) for n in fragment.elements(Sort.Q)] + list(extra_values)
    by_index = _q_pairs(qs)
    idx = sorted(by_index)
    out = []
    for choice in product(*(class_cells(by_index[n]) for n in idx)):
        out.append(Cube(tuple(zip(idx, choice))).representative(fragment.registry))
    return out


def parameter_instances(phi, fragment: Fragment, params: Sequence[str], extra_values=()):
    """Yield (fragment, name map) for every parameter instance the fragment can represent."""
    params = tuple(params)
    if not params:
        yield fragment, {}
        return
    if fragment.theory.relational:
        for t in enumerate_types(fragment, params):
            ext, assign = t.realize(fragment)
            yield ext, {v: Param(assign[v], Sort.V) for v in params}
        return
    choices = []
    for v in params:
        s = _var_sort(phi, v)
        opts = [("name", n) for n in fragment.elements(s)]
        if s == Sort.P:
            opts += [("value", p) for p in _cell_points(fragment, extra_values)]
        elif s == Sort.Q:
            opts += [("value", q) for q in extra_values if isinstance(q, QElem)]
        choices.append((v, s, opts))
    for combo in product(*(c[2] for c in choices)):
        ext = fragment.extend()
        mapping = {}
        for (v, s, _), (kind, val) in zip(choices, combo):
            if kind == "name":
                mapping[v] = Param(val, s)
            else:
                name = ext.fresh_name("_b")
                ext = ext.with_value(name, s, val)
                mapping[v] = Param(name, s)
        yield ext, mapping


def _values_of(elements, fragment: Fragment) -> list:
    if fragment.theory.relational:
        return []
    return [fragment.value(e) if isinstance(e, str) else e for e in elements]


# ---------------------------------------------------------------- separable error over points

def _summand_classes(phi, p: str, env: dict, sem) -> set | None:
    """Classes of the sets t in atoms p sqin t; None if some t cannot be evaluated."""
    out = set()
    for a in atoms(phi):
        if a.kind != "sqin" or not (isinstance(a.args[0], Var) and a.args[0].name == p):
            continue
        try:
            q = eval_term(a.args[1], env, sem)
        except (KeyError, UnsupportedOperation):
            return None
        if isinstance(q, QElem) and q.kind == "pair":
            out.add(q.n)
    return out


def _separable_point_error(mu, abar_values, phi, fragment, obj, p):
    """Exact max over cube cells of |D(b)| when D = mu-term - Av-term splits into
    summands that each read one coordinate class of b.  None if it does not split."""
    env = fragment.env()
    summands = []  # (weight, classes, evaluator)
    if isinstance(mu, TInfQType):
        menv = dict(env)
        menv[obj] = Y_TOKEN
        cls = _summand_classes(phi, p, menv, _QTypeSemantics(True))
        summands.append((Fraction(1), cls, lambda f, ext: mu.eval(f, ext, (obj,))))
    elif isinstance(mu, (Dirac, Average)):
        summands += _value_summands(mu, phi, fragment, obj, p, Fraction(1))
    else:
        return None
    summands += _value_summands(Average(tuple(abar_values)), phi, fragment, obj, p, Fraction(-1))
    if summands is None or any(c is None or len(c) > 1 for _, c, _ in summands):
        return None
    by_class: dict = {}
    const = []
    for w, c, ev in summands:
        (by_class.setdefault(next(iter(c)), []) if c else const).append((w, ev))
    qs = [v for v in list(env.values()) + list(abar_values) if isinstance(v, QElem) and v.kind == "pair"]
    var = Var(p, Sort.P)

    def total(parts, cube):
        ext = fragment.extend()
        name = ext.fresh_name("_b")
        ext = ext.with_value(name, Sort.P, cube.representative(fragment.registry))
        f = substitute(phi, {var: Param(name, Sort.P)})
        return sum((w * ev(f, ext) for w, ev in parts), Fraction(0))

    hi = lo = total(const, Cube()) if const else Fraction(0)
    for n, parts in by_class.items():
        vals = [total(parts, Cube(((n, X),))) for X in class_cells([q.X for q in qs if q.n == n])]
        hi += max(vals)
        lo += min(vals)
    return max(hi, -lo)


def _value_summands(m, phi, fragment, obj, p, sign):
    elems = m.values(fragment) if isinstance(m, Dirac) else _values_of(m.elements, fragment)
    if any(isinstance(e, tuple) for e in elems):
        return [(sign, None, None)]
    out = []
    w = sign / len(elems)
    for v in elems:
        env = fragment.env()
        env[obj] = v
        cls = _summand_classes(phi, p, env, TInfSemantics())
        out.append((w, cls, lambda f, ext, v=v: Fraction(int(evaluate_in(f, ext, {obj: v})))))
    return out


def av_error(mu: Measure, abar: Sequence, phi, fragment: Fragment, obj: str = "x",
             params: Sequence[str] = ("y",)) -> Fraction:
    """max over representable b of |mu(phi(x,b)) - Av(abar)(phi(x,b))|."""
    abar = tuple(abar)
    if not abar:
        raise ValueError("the tuple must be nonempty")
    av = Average(abar)
    worst = Fraction(0)
    instances = None
    if not fragment.theory.relational and len(params) == 1 and _var_sort(phi, params[0]) == Sort.P:
        sep = _separable_point_error(mu, _values_of(abar, fragment), phi, fragment, obj, params[0])
        if sep is not None:
            worst = sep
            instances = [(fragment, {params[0]: Param(n, Sort.P)}) for n in fragment.elements(Sort.P)]
    if instances is None:
        instances = parameter_instances(phi, fragment, params, _values_of(abar, fragment))
    for ext, mapping in instances:
        inst = _rename(phi, mapping)
        d = abs(mu.eval(inst, ext, (obj,)) - av.eval(inst, ext, (obj,)))
        worst = max(worst, d)
    return worst


@dataclass
class FamResult:
    found: bool
    witness: tuple | None
    error: Fraction | None
    checked: int

    def __str__(self):
        if not self.found:
            return f"failure: no tuple among {self.checked} candidates"
        return f"({', '.join(map(str, self.witness))}) error {self.error}"


def fam_search(mu: Measure, phi, eps, fragment: Fragment, n_max: int, obj: str = "x",
               params: Sequence[str] = ("y",), candidates: Sequence | None = None) -> FamResult:
    """Lexicographically first tuple (repeats allowed) with av_error < eps."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if candidates is None:
        candidates = fragment.elements(_var_sort(phi, obj))
    candidates = list(candidates)
    checked = 0
    for n in range(1, n_max + 1):
        for tup in combinations_with_replacement(candidates, n):
            checked += 1
            err = av_error(mu, tup, phi, fragment, obj, params)
            if err < eps:
                return FamResult(True, tup, err, checked)
    return FamResult(False, None, None, checked)


@dataclass
class ApproxRow:
    n: int
    lower_ok: bool
    upper_ok: bool
    value: Fraction
    witness: tuple | None = None  # a tuple breaking an inclusion

    @property
    def sandwich(self) -> bool:
        return self.lower_ok and self.upper_ok


def check_approx_sequence(mu: Measure, phi, eps, chis: Mapping[int, object], fragment: Fragment,
                          obj: str = "x", params: Sequence[str] = ("y",),
                          candidates: Sequence | None = None) -> list:
    """Check Av^n_{<=eps/2} within chi_n within Av^n_{<eps} over fragment tuples,
    and report mu^(n)(chi_n)."""
    eps = Fraction(eps)
    if candidates is None:
        candidates = fragment.elements(_var_sort(phi, obj))
    rows = []
    for n in sorted(chis):
        chi = chis[n]
        xs = default_vars(n)
        extra = {v.name for v in free_vars(chi)} - set(xs)
        if extra:
            raise ValueError(f"chi_{n} has variables outside x1..x{n}: {sorted(extra)}")
        lower_ok = upper_ok = True
        witness = None
        for tup in product(candidates, repeat=n):
            err = av_error(mu, tup, phi, fragment, obj, params)
            assign = dict(zip(xs, _values_of(tup, fragment) or tup))
            inside = evaluate_in(chi, fragment, assign)
            if err <= eps / 2 and not inside:
                lower_ok = False
                witness = witness or tup
            if inside and not err < eps:
                upper_ok = False
                witness = witness or tup
        rows.append(ApproxRow(n, lower_ok, upper_ok, power_eval(mu, n, chi, fragment), witness))
    return rows


# ---------------------------------------------------------------- bounds

BOUND_GRID = {
    "r": tuple(Fraction(k, 4) for k in range(5)),
    "eps": (Fraction(1, 8), Fraction(1, 4), Fraction(1, 2)),
    "n": tuple(range(1, 65)),
}

def wlln_bound(p, eps, n: int) -> Fraction:
    p, eps = Fraction(p), Fraction(eps)
    if not 0 <= p <= 1 or eps <= 0 or n < 1:
        raise ValueError("need 0 <= p <= 1, eps > 0, n >= 1")
    return max(Fraction(0), 1 - p * (1 - p) / (eps * eps * n))


def binomial_tail_exact(r, eps, n: int) -> Fraction:
    """P(|k/n - r| < eps) for k ~ Binomial(n, r), exactly."""
    r, eps = Fraction(r), Fraction(eps)
    if not 0 <= r <= 1 or eps <= 0 or n < 1:
        raise ValueError("need 0 <= r <= 1, eps > 0, n >= 1")
    total = Fraction(0)
    for k in range(n + 1):
        if abs(Fraction(k, n) - r) < eps:
            total += comb(n, k) * r ** k * (1 - r) ** (n - k)
    return total


# ---------------------------------------------------------------- fim convexity

def convexity_sides(mu: Measure, nu: Measure, r, n: int, phi, fragment: Fragment) -> tuple:
    """(lambda^(n)(phi), sum_X r^|X| (1-r)^(n-|X|) lambda_{n,X}(phi))."""
    r = Fraction(r)
    lam = Convex((r, 1 - r), (mu, nu))
    left = power_eval(lam, n, phi, fragment)
    right = Fraction(0)
    for k in range(n + 1):
        w = r ** k * (1 - r) ** (n - k)
        if not w:
            continue
        for X in combinations(range(1, n + 1), k):
            right += w * pattern_product_eval(X, mu, nu, n, phi, fragment)
    return left, right


def fim_convexity_check(mu: Measure, nu: Measure, r, n: int, fragment: Fragment, pool) -> Report:
    pool = list(pool)
    if not pool:
        raise ValueError("formula pool is empty")
    for phi in pool:
        a, b = convexity_sides(mu, nu, r, n, phi, fragment)
        if a != b:
            return Report(False, phi, a, b)
    return Report(True)
