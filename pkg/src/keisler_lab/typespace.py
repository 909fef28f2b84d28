"""Finite Stone spaces of complete quantifier-free types over relational fragments."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

from .formula import Not, Param, Sort, Var, conj, eq, rel
from .theories import (Fragment, NeedAtom, UnsupportedOperation, has_clique, rel_key,
                       relational_atom_keys)

DEFAULT_BOUND = 1 << 22


def equality_patterns(nvars: int, elements: Sequence[str]):
    """Yield tuples whose i-th entry is ("e", element) or ("n", class index).

    New classes are numbered in order of first appearance.
    """
    def rec(i, acc, k):
        if i == nvars:
            yield tuple(acc)
            return
        for e in elements:
            yield from rec(i + 1, acc + [("e", e)], k)
        for j in range(k):
            yield from rec(i + 1, acc + [("n", j)], k)
        yield from rec(i + 1, acc + [("n", k)], k + 1)

    yield from rec(0, [], 0)


@dataclass(frozen=True)
class QfType:
    """A complete qf type: an equality pattern plus the truth of every atom
    that involves a new element.  New class j is named by the first variable
    in that class."""
    vars: tuple
    pattern: tuple
    atoms: tuple  # sorted ((rel, args), bool), args use variable names for new classes
    elements: tuple

    def class_names(self) -> list:
        names = {}
        for v, p in zip(self.vars, self.pattern):
            if p[0] == "n" and p[1] not in names:
                names[p[1]] = v
        return [names[j] for j in sorted(names)]

    def target(self, v: str) -> str:
        p = self.pattern[self.vars.index(v)]
        if p[0] == "e":
            return p[1]
        return self.class_names()[p[1]]

    def is_realized(self) -> bool:
        return all(p[0] == "e" for p in self.pattern)

    def formula(self, sorts: Sort = Sort.V):
        """Isolating conjunction of literals (variables as Var, elements as Param)."""
        new = set(self.class_names())

        def term(n):
            return Var(n, sorts) if n in new or n in self.vars else Param(n, sorts)

        lits = []
        for v in self.vars:
            t = self.target(v)
            if t != v:
                lits.append(eq(Var(v, sorts), term(t)))
        for c in self.class_names():
            for e in self.elements:
                lits.append(Not(eq(Var(c, sorts), Param(e, sorts))))
        cls = self.class_names()
        for i in range(len(cls)):
            for j in range(i + 1, len(cls)):
                lits.append(Not(eq(Var(cls[i], sorts), Var(cls[j], sorts))))
        for (r, args), val in self.atoms:
            a = rel(r, *(term(x) for x in args))
            lits.append(a if val else Not(a))
        return conj(*lits)

    def realize(self, fragment: Fragment):
        """Extend the fragment by new elements; returns (fragment, var -> element)."""
        work = fragment.extend()
        names = {c: work.fresh_name("_t") for c in self.class_names()}
        facts = {}
        for (r, args), val in self.atoms:
            facts[rel_key(r, [names.get(a, a) for a in args])] = val
        out = fragment.extend(list(names.values()), facts)
        out.counter = work.counter
        return out, {v: names.get(self.target(v), self.target(v)) for v in self.vars}


@dataclass
class TypeSpace:
    fragment: Fragment
    vars: tuple
    types: list

    def __len__(self):
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def satisfying(self, f) -> list:
        """The clopen set of types containing the qf formula f."""
        from .theories import evaluate_in
        out = []
        for t in self.types:
            fr, assign = t.realize(self.fragment)
            if evaluate_in(f, fr, assign):
                out.append(t)
        return out


def _positive_edges(fragment: Fragment) -> list:
    return [k[1] for k, v in fragment.facts.items() if k[0] == "E" and v]


def enumerate_types(fragment: Fragment, vars_: Sequence[str], bound: int = DEFAULT_BOUND) -> TypeSpace:
    th = fragment.theory
    if not th.relational:
        raise UnsupportedOperation(
            f"{th} has no finite type spaces; use the symbolic evaluators (cube_decompose, QE)")
    vars_ = tuple(vars_)
    elements = tuple(fragment.elements())
    patterns = list(equality_patterns(len(vars_), elements))
    work = []
    total = 0
    for pat in patterns:
        new = []
        for v, p in zip(vars_, pat):
            if p[0] == "n" and p[1] == len(new):
                new.append(v)
        keys = relational_atom_keys(th, list(elements) + new, involving=new)
        total += 1 << len(keys)
        work.append((pat, keys))
    if total > bound:
        raise ValueError(f"type space has {total} candidate patterns, above the bound {bound}")
    edges = _positive_edges(fragment) if th.kind == "Henson" else []
    out = []
    for pat, keys in work:
        for bits in product((True, False), repeat=len(keys)):
            if th.kind == "Henson":
                pos = [k[1] for k, b in zip(keys, bits) if b]
                if pos and has_clique(set(), edges + pos, th.s):
                    continue
            atoms = tuple(sorted(zip(keys, bits)))
            out.append(QfType(vars_, pat, atoms, elements))
    return TypeSpace(fragment, vars_, out)


def restrict_type(t: QfType, fragment: Fragment, subfragment: Fragment) -> QfType:
    """Restriction of a type over `fragment` to the parameters of `subfragment`."""
    keep = set(subfragment.elements())
    if not keep <= set(t.elements):
        raise ValueError("subfragment is not contained in the type's fragment")
    dropped = [e for e in t.elements if e not in keep]
    # a variable equal to a dropped element becomes a new element
    pattern = []
    remap = {}
    names = []
    for v, p in zip(t.vars, t.pattern):
        key = p if p[0] == "n" else (("d", p[1]) if p[1] in dropped else None)
        if key is None:
            pattern.append(p)
            continue
        if key not in remap:
            remap[key] = len(remap)
            names.append(v)
        pattern.append(("n", remap[key]))
    new_t = QfType(t.vars, tuple(pattern), (), tuple(e for e in t.elements if e in keep))
    cls = new_t.class_names()
    full_fr, assign = t.realize(fragment)
    keys = relational_atom_keys(fragment.theory, list(new_t.elements) + cls, involving=cls)
    atoms = []
    for r, args in keys:
        real = [assign[a] if a in cls else a for a in args]
        try:
            val = full_fr.truth((r, tuple(real)))
        except NeedAtom:
            raise ValueError("fragment is not complete") from None
        atoms.append(((r, args), val))
    return QfType(t.vars, tuple(pattern), tuple(sorted(atoms)), new_t.elements)


def count_types(fragment: Fragment, vars_: Sequence[str]) -> int:
    return len(enumerate_types(fragment, vars_))
