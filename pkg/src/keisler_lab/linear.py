"""Exact Fourier-Motzkin elimination over the rationals.

A constraint is ``sum(c_k * k) + const  op  0`` with op one of "=", "<", "<=".
Symbols are arbitrary hashable keys.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class LinCon:
    coeffs: tuple  # sorted (symbol, coef) pairs, no zeros
    const: Fraction
    op: str

    @staticmethod
    def make(coeffs: Mapping, const, op: str, order=None) -> "LinCon":
        items = [(k, Fraction(c)) for k, c in coeffs.items() if c != 0]
        items.sort(key=lambda kc: (order or repr)(kc[0]))
        return LinCon(tuple(items), Fraction(const), op).normalized(order)

    def normalized(self, order=None) -> "LinCon":
        if not self.coeffs:
            return self
        # integer coefficients with gcd 1; equalities get a positive lead
        den = 1
        for _, c in self.coeffs:
            den = den * c.denominator // gcd(den, c.denominator)
        den = den * self.const.denominator // gcd(den, self.const.denominator)
        nums = [int(c * den) for _, c in self.coeffs] + [int(self.const * den)]
        g = 0
        for n in nums:
            g = gcd(g, abs(n))
        scale = Fraction(den, g or 1)
        if self.op == "=" and self.coeffs[0][1] < 0:
            scale = -scale
        return LinCon(tuple((k, c * scale) for k, c in self.coeffs), self.const * scale, self.op)

    def coeff(self, v) -> Fraction:
        for k, c in self.coeffs:
            if k == v:
                return c
        return Fraction(0)

    def symbols(self) -> set:
        return {k for k, _ in self.coeffs}

    def trivial_value(self) -> bool | None:
        if self.coeffs:
            return None
        c = self.const
        return c == 0 if self.op == "=" else (c < 0 if self.op == "<" else c <= 0)

    def holds(self, values: Mapping) -> bool:
        s = self.const + sum((c * Fraction(values[k]) for k, c in self.coeffs), Fraction(0))
        return s == 0 if self.op == "=" else (s < 0 if self.op == "<" else s <= 0)

    def substitute(self, v, expr: Mapping, expr_const) -> "LinCon":
        """Replace v by sum(expr) + expr_const."""
        a = self.coeff(v)
        if a == 0:
            return self
        d = {k: c for k, c in self.coeffs if k != v}
        for k, c in expr.items():
            d[k] = d.get(k, Fraction(0)) + a * c
        return LinCon.make(d, self.const + a * Fraction(expr_const), self.op)


def _combine(lo: LinCon, up: LinCon, v) -> LinCon:
    # lo has negative coefficient on v, up positive
    a, b = -lo.coeff(v), up.coeff(v)
    d: dict = {}
    for k, c in lo.coeffs:
        if k != v:
            d[k] = d.get(k, Fraction(0)) + c * b
    for k, c in up.coeffs:
        if k != v:
            d[k] = d.get(k, Fraction(0)) + c * a
    op = "<" if "<" in (lo.op, up.op) else "<="
    return LinCon.make(d, lo.const * b + up.const * a, op)


def simplify_system(cons: Iterable[LinCon]) -> list | None:
    """Drop trivially true constraints and duplicates; None if one is false."""
    out = []
    seen = set()
    for c in cons:
        t = c.trivial_value()
        if t is True:
            continue
        if t is False:
            return None
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def fm_eliminate(cons: Sequence[LinCon], v) -> list | None:
    """Project out v. Returns None when the system is infeasible outright."""
    cons = simplify_system(cons)
    if cons is None:
        return None
    eqs = [c for c in cons if c.op == "=" and c.coeff(v) != 0]
    if eqs:
        e = eqs[0]
        a = e.coeff(v)
        expr = {k: -c / a for k, c in e.coeffs if k != v}
        rest = [c.substitute(v, expr, -e.const / a) for c in cons if c is not e]
        return simplify_system(rest)
    lows = [c for c in cons if c.coeff(v) < 0]
    ups = [c for c in cons if c.coeff(v) > 0]
    rest = [c for c in cons if c.coeff(v) == 0]
    rest.extend(_combine(lo, up, v) for lo in lows for up in ups)
    return simplify_system(rest)


def fm_project(cons: Sequence[LinCon], vars_: Iterable) -> list | None:
    out = list(cons)
    for v in vars_:
        out = fm_eliminate(out, v)
        if out is None:
            return None
    return simplify_system(out)


def fm_witness(cons: Sequence[LinCon], vars_: Sequence) -> dict | None:
    """A rational solution of a system whose symbols are all in vars_."""
    vars_ = list(vars_)
    stages = [simplify_system(cons)]
    if stages[0] is None:
        return None
    for v in vars_:
        nxt = fm_eliminate(stages[-1], v)
        if nxt is None:
            return None
        stages.append(nxt)
    if stages[-1]:
        return None  # leftover constraints would mention foreign symbols
    values: dict = {}
    for i in range(len(vars_) - 1, -1, -1):
        v = vars_[i]
        system = []
        for c in stages[i]:
            known = {k: values[k] for k, _ in c.coeffs if k in values}
            cc = c
            for k, val in known.items():
                cc = cc.substitute(k, {}, val)
            system.append(cc)
        values[v] = _pick(system, v)
        if values[v] is None:
            return None
    return values


def _pick(system: list, v) -> Fraction | None:
    lo, lo_strict, hi, hi_strict = None, False, None, False
    for c in system:
        a = c.coeff(v)
        if a == 0:
            if c.trivial_value() is False:
                return None
            continue
        bound = -c.const / a
        if c.op == "=":
            return bound
        strict = c.op == "<"
        if a > 0:
            if hi is None or bound < hi or (bound == hi and strict):
                hi, hi_strict = bound, strict
        else:
            if lo is None or bound > lo or (bound == lo and strict):
                lo, lo_strict = bound, strict
    if lo is not None and hi is not None:
        if lo == hi:
            return lo if not (lo_strict or hi_strict) else None
        return (lo + hi) / 2 if lo < hi else None
    if lo is not None:
        return lo if not lo_strict else lo + 1
    if hi is not None:
        return hi if not hi_strict else hi - 1
    return Fraction(0)
