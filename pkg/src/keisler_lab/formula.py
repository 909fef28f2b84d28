"""Multi-sorted formula syntax: terms, formulas, parser, printer and normal forms.

Sorts are P (points), Q (lattice elements), R (reals) and Vertex (the single
sort of the relational theories).  R-terms are kept as formal linear
combinations (``Lin``) over R-variables, R-parameters and ``l(q)`` atoms.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence, Union

from .rationals import fmt


class Sort(Enum):
    P = "P"
    Q = "Q"
    R = "R"
    V = "Vertex"


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class SortError(ValueError):
    pass


class DnfLimitError(ValueError):
    pass


# ---------------------------------------------------------------- terms

@dataclass(frozen=True)
class Var:
    name: str
    sort: Sort


@dataclass(frozen=True)
class Param:
    name: str
    sort: Sort


@dataclass(frozen=True)
class QOp:
    op: str  # meet, join, comp, bot, top
    args: tuple = ()


BOT = QOp("bot")
TOP = QOp("top")


@dataclass(frozen=True)
class Ell:
    arg: "Term"


@dataclass(frozen=True)
class Lin:
    """sum(coef * key) + const, keys are Var/Param of sort R or Ell atoms."""
    terms: tuple = ()
    const: Fraction = Fraction(0)

    @staticmethod
    def make(coeffs: Mapping | Iterable = (), const=0) -> "Lin":
        acc: dict = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for k, c in items:
            acc[k] = acc.get(k, Fraction(0)) + Fraction(c)
        terms = tuple(sorted(((k, c) for k, c in acc.items() if c != 0),
                             key=lambda kc: key_str(kc[0])))
        return Lin(terms, Fraction(const))

    @staticmethod
    def of(x) -> "Lin":
        if isinstance(x, Lin):
            return x
        if isinstance(x, (int, Fraction)):
            return Lin((), Fraction(x))
        return Lin.make({x: 1})

    def coeffs(self) -> dict:
        return dict(self.terms)

    def __add__(self, other):
        other = Lin.of(other)
        d = self.coeffs()
        for k, c in other.terms:
            d[k] = d.get(k, Fraction(0)) + c
        return Lin.make(d, self.const + other.const)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-Lin.of(other))

    def scale(self, c) -> "Lin":
        c = Fraction(c)
        return Lin.make({k: v * c for k, v in self.terms}, self.const * c)

    def is_const(self) -> bool:
        return not self.terms


Term = Union[Var, Param, QOp, Ell, Lin]


def term_sort(t) -> Sort:
    if isinstance(t, (Var, Param)):
        return t.sort
    if isinstance(t, QOp):
        return Sort.Q
    return Sort.R


def qmeet(a, b):
    return QOp("meet", (a, b))


def qjoin(a, b):
    return QOp("join", (a, b))


def qcomp(a):
    return QOp("comp", (a,))


# ---------------------------------------------------------------- formulas

@dataclass(frozen=True)
class Atom:
    kind: str  # sqin, eq, sim, rel, lt
    args: tuple
    rel: str | None = None


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Exists:
    var: Var
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    var: Var
    body: "Formula"


@dataclass(frozen=True)
class Const:
    value: bool


TRUE = Const(True)
FALSE = Const(False)

Formula = Union[Atom, Not, And, Or, Exists, Forall, Const]
Literal = tuple  # (Atom, polarity)


def sqin(p, q) -> Atom:
    return Atom("sqin", (p, q))


def sim(a, b) -> Atom:
    return Atom("sim", (a, b))


def eq(a, b) -> Atom:
    if term_sort(a) == Sort.R or term_sort(b) == Sort.R:
        return Atom("eq", (Lin.of(a), Lin.of(b)))
    return Atom("eq", (a, b))


def lt(a, b) -> Atom:
    return Atom("lt", (Lin.of(a), Lin.of(b)))


def rel(name: str, *args) -> Atom:
    return Atom("rel", tuple(args), name)


def conj(*fs) -> Formula:
    out = []
    for f in fs:
        if f == TRUE:
            continue
        if f == FALSE:
            return FALSE
        if isinstance(f, And):
            out.extend(f.args)
        else:
            out.append(f)
    out = list(dict.fromkeys(out))
    if not out:
        return TRUE
    return out[0] if len(out) == 1 else And(tuple(out))


def disj(*fs) -> Formula:
    out = []
    for f in fs:
        if f == FALSE:
            continue
        if f == TRUE:
            return TRUE
        if isinstance(f, Or):
            out.extend(f.args)
        else:
            out.append(f)
    out = list(dict.fromkeys(out))
    if not out:
        return FALSE
    return out[0] if len(out) == 1 else Or(tuple(out))


def neg(f) -> Formula:
    if isinstance(f, Const):
        return Const(not f.value)
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def literal_formula(lit) -> Formula:
    a, pos = lit
    return a if pos else Not(a)


# ---------------------------------------------------------------- traversal

def term_children(t):
    if isinstance(t, QOp):
        return t.args
    if isinstance(t, Ell):
        return (t.arg,)
    if isinstance(t, Lin):
        return tuple(k for k, _ in t.terms)
    return ()


def term_names(t, acc=None) -> set:
    acc = set() if acc is None else acc
    if isinstance(t, (Var, Param)):
        acc.add(t)
    for c in term_children(t):
        term_names(c, acc)
    return acc


def atoms(f, acc=None) -> list:
    acc = [] if acc is None else acc
    if isinstance(f, Atom):
        if f not in acc:
            acc.append(f)
    elif isinstance(f, Not):
        atoms(f.arg, acc)
    elif isinstance(f, (And, Or)):
        for g in f.args:
            atoms(g, acc)
    elif isinstance(f, (Exists, Forall)):
        atoms(f.body, acc)
    return acc


def is_qf(f) -> bool:
    if isinstance(f, (Exists, Forall)):
        return False
    if isinstance(f, Not):
        return is_qf(f.arg)
    if isinstance(f, (And, Or)):
        return all(is_qf(g) for g in f.args)
    return True


def free_vars(f) -> set:
    if isinstance(f, Atom):
        out = set()
        for a in f.args:
            term_names(a, out)
        return {v for v in out if isinstance(v, Var)}
    if isinstance(f, Not):
        return free_vars(f.arg)
    if isinstance(f, (And, Or)):
        return set().union(*(free_vars(g) for g in f.args)) if f.args else set()
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.body) - {f.var}
    return set()


def names_in(f) -> set:
    """All Var/Param occurrences (free or bound)."""
    out = set()
    for a in atoms(f):
        for t in a.args:
            term_names(t, out)
    return out


def subst_term(t, m: Mapping):
    if isinstance(t, (Var, Param)):
        return m.get(t, t)
    if isinstance(t, QOp):
        return QOp(t.op, tuple(subst_term(a, m) for a in t.args)) if t.args else t
    if isinstance(t, Ell):
        return Ell(subst_term(t.arg, m))
    if isinstance(t, Lin):
        out = Lin.make((), t.const)
        for k, c in t.terms:
            if isinstance(k, Ell):
                out = out + Lin.make({Ell(subst_term(k.arg, m)): c})
            else:
                out = out + Lin.of(m.get(k, k)).scale(c)
        return out
    return t


def substitute(f, m: Mapping) -> Formula:
    """Replace Var/Param keys of m by terms; bound variables are respected."""
    if isinstance(f, Atom):
        args = tuple(subst_term(a, m) for a in f.args)
        return Atom(f.kind, args, f.rel)
    if isinstance(f, Not):
        return Not(substitute(f.arg, m))
    if isinstance(f, And):
        return And(tuple(substitute(g, m) for g in f.args))
    if isinstance(f, Or):
        return Or(tuple(substitute(g, m) for g in f.args))
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in m.items() if k != f.var}
        return type(f)(f.var, substitute(f.body, inner))
    return f


# ---------------------------------------------------------------- printing

_PREC_JOIN, _PREC_MEET, _PREC_POST = 1, 2, 4


def key_str(k) -> str:
    if isinstance(k, Ell):
        return f"l({term_str(k.arg)})"
    if isinstance(k, (Var, Param, QOp)):
        return term_str(k)
    return str(k)


def _lin_str(t: Lin) -> str:
    parts = []
    for k, c in t.terms:
        s = key_str(k)
        a = abs(c)
        body = s if a == 1 else f"{fmt(a)}*{s}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(("+ " if c > 0 else "- ") + body)
    if not parts:
        return fmt(t.const)
    if t.const != 0:
        parts.append(("+ " if t.const > 0 else "- ") + fmt(abs(t.const)))
    return " ".join(parts)


def term_str(t, prec: int = 0) -> str:
    if isinstance(t, (Var, Param)):
        return t.name
    if isinstance(t, Lin):
        return _lin_str(t)
    if isinstance(t, Ell):
        return f"l({term_str(t.arg)})"
    if t.op in ("bot", "top"):
        return t.op
    if t.op == "comp":
        a = t.args[0]
        inner = term_str(a, _PREC_POST)
        simple = isinstance(a, (Var, Param)) or (isinstance(a, QOp) and a.op in ("bot", "top", "comp"))
        return f"{inner}^c" if simple else f"({term_str(a)})^c"
    p = _PREC_MEET if t.op == "meet" else _PREC_JOIN
    left = term_str(t.args[0], p)
    right = term_str(t.args[1], p + 1)
    s = f"{left} {t.op} {right}"
    return f"({s})" if prec > p else s


def atom_str(a: Atom) -> str:
    if a.kind == "rel":
        return f"{a.rel}(" + ",".join(term_str(x) for x in a.args) + ")"
    op = {"sqin": "sqin", "sim": "sim", "eq": "=", "lt": "<"}[a.kind]
    return f"{term_str(a.args[0], 1)} {op} {term_str(a.args[1], 1)}"


def to_str(f) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return atom_str(f)
    if isinstance(f, Not):
        a = f.arg
        if isinstance(a, (Const, Not)) or (isinstance(a, Atom) and a.kind == "rel"):
            return "!" + to_str(a)
        return f"!({to_str(a)})"
    if isinstance(f, And):
        return " & ".join(f"({to_str(g)})" if isinstance(g, (And, Or, Exists, Forall)) else to_str(g)
                          for g in f.args)
    if isinstance(f, Or):
        return " | ".join(f"({to_str(g)})" if isinstance(g, (Or, Exists, Forall)) else to_str(g)
                          for g in f.args)
    q = "exists" if isinstance(f, Exists) else "forall"
    return f"{q} {f.var.name}. {to_str(f.body)}"


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s*(?:(\d+(?:/\d+)?)|([A-Za-z_][A-Za-z0-9_']*)|(!=|\^c|<=|>=|[()|&!=<>+\-*,.]))")
_KEYWORDS = {"exists", "forall", "sqin", "sim", "meet", "join", "comp", "bot", "top", "true", "false"}
_TERM_FOLLOW = {"meet", "join", "^c", "+", "-", "*", "=", "!=", "<", ">", "<=", ">=", "sqin", "sim"}


class _RawName:
    __slots__ = ("name", "binding", "pos")

    def __init__(self, name, pos):
        self.name, self.pos, self.binding = name, pos, None


def _tokenize(text: str):
    toks, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise FormulaSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}", pos)
        start = m.start(m.lastindex)
        if m.group(1):
            toks.append(("num", m.group(1), start))
        elif m.group(2):
            toks.append(("id", m.group(2), start))
        else:
            toks.append(("op", m.group(3), start))
        pos = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value, k=0):
        t = self.peek(k)
        return t[0] in ("op", "id") and t[1] == value

    def take(self, value=None):
        t = self.peek()
        if value is not None and not self.at(value):
            raise FormulaSyntaxError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])
        self.i += 1
        return t

    def error(self, msg):
        raise FormulaSyntaxError(msg, self.peek()[2])

    # formulas -> nested tuples with raw terms
    def formula(self):
        if self.at("exists") or self.at("forall"):
            q = self.take()[1]
            names = [self._ident()]
            while self.at(","):
                self.take(",")
                names.append(self._ident())
            self.take(".")
            body = self.formula()
            for n in reversed(names):
                body = ("quant", q, n, body)
            return body
        parts = [self.conj()]
        while self.at("|"):
            self.take("|")
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else ("or", parts)

    def _ident(self):
        t = self.peek()
        if t[0] != "id" or t[1] in _KEYWORDS:
            self.error("expected a variable name")
        self.i += 1
        return (t[1], t[2])

    def conj(self):
        parts = [self.unary()]
        while self.at("&"):
            self.take("&")
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else ("and", parts)

    def unary(self):
        if self.at("!"):
            self.take("!")
            return ("not", self.unary())
        if self.at("exists") or self.at("forall"):
            return self.formula()
        if self.at("("):
            save = self.i
            try:
                self.take("(")
                f = self.formula()
                self.take(")")
                nxt = self.peek()
                if not (nxt[0] in ("op", "id") and nxt[1] in _TERM_FOLLOW):
                    return f
            except FormulaSyntaxError:
                pass
            self.i = save
        return self.atom()

    def atom(self):
        t = self.peek()
        if self.at("true") or self.at("false"):
            self.take()
            return ("const", t[1] == "true")
        if t[0] == "id" and t[1] in ("R", "E") and self.at("(", 1):
            self.take()
            self.take("(")
            args = [self.expr()]
            while self.at(","):
                self.take(",")
                args.append(self.expr())
            self.take(")")
            return ("atom", "rel", t[1], args, t[2])
        left = self.expr()
        op = self.peek()
        if op[1] not in ("sqin", "sim", "=", "!=", "<", ">", "<=", ">=") or op[0] == "num":
            self.error("expected a comparison or relation")
        self.take()
        right = self.expr()
        pos = t[2]
        kind = op[1]
        if kind == "sqin":
            return ("atom", "sqin", None, [left, right], pos)
        if kind == "sim":
            return ("atom", "sim", None, [left, right], pos)
        if kind == "=":
            return ("atom", "eq", None, [left, right], pos)
        if kind == "!=":
            return ("not", ("atom", "eq", None, [left, right], pos))
        if kind == "<":
            return ("atom", "lt", None, [left, right], pos)
        if kind == ">":
            return ("atom", "lt", None, [right, left], pos)
        if kind == "<=":
            return ("or", [("atom", "lt", None, [left, right], pos), ("atom", "eq", None, [left, right], pos)])
        return ("or", [("atom", "lt", None, [right, left], pos), ("atom", "eq", None, [left, right], pos)])

    # terms
    def expr(self):
        e = self.meet_e()
        while self.at("join"):
            self.take()
            e = ("join", e, self.meet_e())
        return e

    def meet_e(self):
        e = self.add_e()
        while self.at("meet"):
            self.take()
            e = ("meet", e, self.add_e())
        return e

    def add_e(self):
        e = self.mul_e()
        while self.at("+") or self.at("-"):
            op = self.take()[1]
            r = self.mul_e()
            e = ("add", e, r) if op == "+" else ("sub", e, r)
        return e

    def mul_e(self):
        if self.at("-"):
            self.take()
            return ("neg", self.mul_e())
        t = self.peek()
        if t[0] == "num":
            self.take()
            q = Fraction(t[1])
            if self.at("*"):
                self.take()
                return ("scale", q, self.mul_e())
            return ("num", q)
        return self.post()

    def post(self):
        e = self.prim()
        while self.at("^c"):
            self.take()
            e = ("comp", e)
        return e

    def prim(self):
        t = self.peek()
        if self.at("bot") or self.at("top"):
            self.take()
            return (t[1],)
        if self.at("comp") and self.at("(", 1):
            self.take()
            self.take("(")
            e = self.expr()
            self.take(")")
            return ("comp", e)
        if t[0] == "id" and t[1] == "l" and self.at("(", 1):
            self.take()
            self.take("(")
            e = self.expr()
            self.take(")")
            return ("ell", e)
        if self.at("("):
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if t[0] == "id" and t[1] not in _KEYWORDS:
            self.take()
            return ("name", _RawName(t[1], t[2]))
        self.error(f"unexpected token {t[1] or 'end of input'!r}")


class _UF:
    def __init__(self):
        self.parent: list[int] = []
        self.sort: list[Sort | None] = []

    def new(self, s=None):
        self.parent.append(len(self.parent))
        self.sort.append(s)
        return len(self.parent) - 1

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True
        sa, sb = self.sort[ra], self.sort[rb]
        if sa is not None and sb is not None and sa != sb:
            return False
        self.parent[rb] = ra
        self.sort[ra] = sa or sb
        return True


class _Inference:
    def __init__(self, declared: Mapping[str, Sort]):
        self.uf = _UF()
        self.free: dict[str, int] = {}
        self.declared = declared
        self.current_atom = None

    def binding_for(self, name, scopes):
        for sc in reversed(scopes):
            if name in sc:
                return sc[name]
        if name not in self.free:
            self.free[name] = self.uf.new(self.declared.get(name))
        return self.free[name]

    def fail(self, what):
        raise SortError(f"sort error in atom starting at position {self.current_atom}: {what}")

    def need(self, node, sort: Sort):
        if not self.uf.union(node, self.uf.new(sort)):
            self.fail(f"expected sort {sort.value}")

    def term(self, e, scopes) -> int:
        tag = e[0]
        if tag == "name":
            b = self.binding_for(e[1].name, scopes)
            e[1].binding = b
            return b
        n = self.uf.new()
        if tag in ("bot", "top"):
            self.need(n, Sort.Q)
        elif tag in ("meet", "join"):
            self.need(n, Sort.Q)
            for c in e[1:]:
                self.need(self.term(c, scopes), Sort.Q)
        elif tag == "comp":
            self.need(n, Sort.Q)
            self.need(self.term(e[1], scopes), Sort.Q)
        elif tag == "ell":
            self.need(n, Sort.R)
            self.need(self.term(e[1], scopes), Sort.Q)
        elif tag == "num":
            self.need(n, Sort.R)
        elif tag in ("add", "sub"):
            self.need(n, Sort.R)
            self.need(self.term(e[1], scopes), Sort.R)
            self.need(self.term(e[2], scopes), Sort.R)
        elif tag == "neg":
            self.need(n, Sort.R)
            self.need(self.term(e[1], scopes), Sort.R)
        elif tag == "scale":
            self.need(n, Sort.R)
            self.need(self.term(e[2], scopes), Sort.R)
        return n

    def formula(self, f, scopes):
        tag = f[0]
        if tag == "atom":
            _, kind, relname, args, pos = f
            self.current_atom = pos
            nodes = [self.term(a, scopes) for a in args]
            if kind == "rel":
                if relname == "R" and len(args) != 3 or relname == "E" and len(args) != 2:
                    self.fail(f"wrong arity for {relname}")
                for n in nodes:
                    self.need(n, Sort.V)
            elif kind == "sqin":
                self.need(nodes[0], Sort.P)
                self.need(nodes[1], Sort.Q)
            elif kind == "sim":
                self.need(nodes[0], Sort.Q)
                self.need(nodes[1], Sort.Q)
            elif kind == "lt":
                self.need(nodes[0], Sort.R)
                self.need(nodes[1], Sort.R)
            elif not self.uf.union(nodes[0], nodes[1]):
                self.fail("the two sides of = have different sorts")
        elif tag == "not":
            self.formula(f[1], scopes)
        elif tag in ("and", "or"):
            for g in f[1]:
                self.formula(g, scopes)
        elif tag == "quant":
            name, _pos = f[2]
            b = self.uf.new()
            scopes.append({name: b})
            self.formula(f[3], scopes)
            scopes.pop()
            self.bound_nodes.append((f, b))

    def run(self, raw):
        self.bound_nodes = []
        self.formula(raw, [])
        return self


def parse(text: str, params: Mapping[str, Sort] | Iterable[str] | None = None,
          sorts: Mapping[str, Sort] | None = None, default_sort: Sort = Sort.V) -> Formula:
    """Parse a formula.  Free names listed in ``params`` become Param nodes.

    Sorts are inferred from usage; names whose sort stays undetermined get
    ``default_sort``.
    """
    declared = dict(sorts or {})
    if isinstance(params, Mapping):
        declared.update(params)
        param_names = set(params)
    else:
        param_names = set(params or ())
    p = _Parser(text)
    raw = p.formula()
    if p.peek()[0] != "eof":
        p.error(f"unexpected token {p.peek()[1]!r}")
    inf = _Inference(declared).run(raw)
    quant_sorts = {id(f): inf.uf.sort[inf.uf.find(b)] or default_sort for f, b in inf.bound_nodes}
    return _build(raw, inf, param_names, default_sort, quant_sorts)


def _sort_of(inf, node, default):
    return inf.uf.sort[inf.uf.find(node)] or default


def _build(f, inf, param_names, default, quant_sorts, scope=()):
    tag = f[0]
    if tag == "const":
        return TRUE if f[1] else FALSE
    if tag == "not":
        return Not(_build(f[1], inf, param_names, default, quant_sorts, scope))
    if tag in ("and", "or"):
        parts = tuple(_build(g, inf, param_names, default, quant_sorts, scope) for g in f[1])
        return And(parts) if tag == "and" else Or(parts)
    if tag == "quant":
        name = f[2][0]
        v = Var(name, quant_sorts[id(f)])
        body = _build(f[3], inf, param_names, default, quant_sorts, scope + (name,))
        return Exists(v, body) if f[1] == "exists" else Forall(v, body)
    _, kind, relname, args, _pos = f

    def mk_name(rn: _RawName):
        s = _sort_of(inf, rn.binding, default)
        free = inf.free.get(rn.name) == rn.binding
        if free and rn.name in param_names:
            return Param(rn.name, s)
        return Var(rn.name, s)

    def q(e):
        tag = e[0]
        if tag == "name":
            return mk_name(e[1])
        if tag in ("bot", "top"):
            return QOp(tag)
        if tag == "comp":
            return QOp("comp", (q(e[1]),))
        return QOp(tag, (q(e[1]), q(e[2])))

    def r(e) -> Lin:
        tag = e[0]
        if tag == "name":
            return Lin.of(mk_name(e[1]))
        if tag == "num":
            return Lin.of(e[1])
        if tag == "ell":
            return Lin.make({Ell(q(e[1])): 1})
        if tag == "add":
            return r(e[1]) + r(e[2])
        if tag == "sub":
            return r(e[1]) - r(e[2])
        if tag == "neg":
            return -r(e[1])
        return r(e[2]).scale(e[1])

    def plain(e):
        return mk_name(e[1])

    if kind == "rel":
        return Atom("rel", tuple(plain(a) for a in args), relname)
    if kind == "sqin":
        return Atom("sqin", (plain(args[0]), q(args[1])))
    if kind == "sim":
        return Atom("sim", (q(args[0]), q(args[1])))
    if kind == "lt":
        return Atom("lt", (r(args[0]), r(args[1])))
    # equality: sort decided by inference
    s = _eq_sort(args[0], inf, default)
    conv = {Sort.Q: q, Sort.R: r}.get(s, plain)
    return Atom("eq", (conv(args[0]), conv(args[1])))


def _eq_sort(e, inf, default):
    tag = e[0]
    if tag == "name":
        return _sort_of(inf, e[1].binding, default)
    if tag in ("bot", "top", "meet", "join", "comp"):
        return Sort.Q
    return Sort.R


# ---------------------------------------------------------------- normal forms

@dataclass(frozen=True)
class DnfFormula:
    disjuncts: tuple  # tuple of tuples of (Atom, bool)

    def to_formula(self) -> Formula:
        return disj(*(conj(*(literal_formula(l) for l in d)) for d in self.disjuncts))

    def __str__(self):
        return to_str(self.to_formula())


def lit_key(lit):
    return (atom_str(lit[0]), not lit[1])


def _nnf(f, positive=True):
    if isinstance(f, Const):
        return Const(f.value == positive)
    if isinstance(f, Atom):
        return f if positive else Not(f)
    if isinstance(f, Not):
        return _nnf(f.arg, not positive)
    if isinstance(f, (And, Or)):
        parts = tuple(_nnf(g, positive) for g in f.args)
        is_and = isinstance(f, And) == positive
        return And(parts) if is_and else Or(parts)
    raise ValueError("quantified input")


def _dnf_sets(f, limit):
    if isinstance(f, Const):
        return [frozenset()] if f.value else []
    if isinstance(f, Atom):
        return [frozenset([(f, True)])]
    if isinstance(f, Not):
        return [frozenset([(f.arg, False)])]
    if isinstance(f, Or):
        out = []
        for g in f.args:
            out.extend(_dnf_sets(g, limit))
        return out
    acc = [frozenset()]
    for g in f.args:
        sub = _dnf_sets(g, limit)
        acc = [a | b for a in acc for b in sub]
        if len(acc) > limit:
            raise DnfLimitError("disjunctive normal form is too large")
        acc = list(dict.fromkeys(acc))
    return acc


def dnf_from_sets(sets) -> DnfFormula:
    clean = set()
    for s in sets:
        if any((a, not p) in s for a, p in s):
            continue
        clean.add(frozenset(s))
    # absorption keeps the output small and is equivalence preserving
    minimal = [s for s in clean if not any(o < s for o in clean)]
    ds = [tuple(sorted(s, key=lit_key)) for s in minimal]
    ds.sort(key=lambda d: (len(d), [lit_key(l) for l in d]))
    return DnfFormula(tuple(ds))


def to_dnf(f: Formula, cap: int | None = 24, max_disjuncts: int = 1 << 16) -> DnfFormula:
    """Disjunctive normal form of a quantifier-free formula.

    ``cap`` bounds the number of atom occurrences in the input (None: no cap).
    """
    if not is_qf(f):
        raise ValueError("to_dnf expects a quantifier-free formula")
    if cap is not None:
        n = _count_atoms(f)
        if n > cap:
            raise DnfLimitError(f"input has {n} atom occurrences, cap is {cap}")
    return dnf_from_sets(_dnf_sets(_nnf(f), max_disjuncts))


def _count_atoms(f) -> int:
    if isinstance(f, Atom):
        return 1
    if isinstance(f, Not):
        return _count_atoms(f.arg)
    if isinstance(f, (And, Or)):
        return sum(_count_atoms(g) for g in f.args)
    return 0


def minterm_term(vars_: Sequence, signs: Sequence[bool]):
    """Meet of v or v^c for each var (True means the positive literal)."""
    t = None
    for v, s in zip(vars_, signs):
        lit = v if s else qcomp(v)
        t = lit if t is None else qmeet(t, lit)
    return t


def q_term_normal_forms(vars_: Sequence) -> list:
    """All formal joins of subsets of the 2^k minterms of ``vars_``.

    Index s of the result joins the minterms whose index bit is set in s;
    minterm m has var j complemented iff bit j of m is 1.
    """
    vars_ = list(vars_)
    if not vars_:
        raise ValueError("q_term_normal_forms needs at least one variable")
    k = len(vars_)
    mins = [minterm_term(vars_, [not (m >> j) & 1 for j in range(k)]) for m in range(1 << k)]
    full = (1 << (1 << k)) - 1
    out = []
    for s in range(full + 1):
        if s == 0:
            out.append(BOT)
        elif s == full:
            out.append(TOP)
        else:
            t = None
            for m in range(1 << k):
                if s >> m & 1:
                    t = mins[m] if t is None else qjoin(t, mins[m])
            out.append(t)
    return out


def formal_minterms(t, vars_: Sequence) -> frozenset:
    """Minterm-index set of a Q-term in the free Boolean algebra on vars_."""
    k = len(vars_)
    allm = frozenset(range(1 << k))
    if isinstance(t, (Var, Param)):
        j = list(vars_).index(t)
        return frozenset(m for m in allm if not (m >> j) & 1)
    if t.op == "bot":
        return frozenset()
    if t.op == "top":
        return allm
    if t.op == "comp":
        return allm - formal_minterms(t.args[0], vars_)
    a, b = (formal_minterms(x, vars_) for x in t.args)
    return a & b if t.op == "meet" else a | b


def sign_patterns(n: int):
    return product((True, False), repeat=n)
