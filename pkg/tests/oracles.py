"""Independent oracles for the acceptance suite.

None of these reuse the package's evaluation machinery: they only share the
formula AST and the standard-model value classes.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations, product
from math import comb

import z3

from keisler_lab.formula import And, Atom, Const, Ell, Exists, Forall, Lin, Not, Or, Param, Sort, Var
from keisler_lab.theories import PElem, QElem


# ---------------------------------------------------------------- Morley products over TR


def _name(t, sigma):
    return sigma.get(t.name, t.name) if isinstance(t, Var) else t.name


def _truth(f, sigma, val):
    """val maps ('R', args) to bool; sigma renames the variables."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not _truth(f.arg, sigma, val)
    if isinstance(f, And):
        return all(_truth(g, sigma, val) for g in f.args)
    if isinstance(f, Or):
        return any(_truth(g, sigma, val) for g in f.args)
    if f.kind == "eq":
        return _name(f.args[0], sigma) == _name(f.args[1], sigma)
    return val[(f.rel, tuple(_name(t, sigma) for t in f.args))]


def _rel_keys(f, sigma, out):
    if isinstance(f, Atom):
        if f.kind == "rel":
            out.add((f.rel, tuple(_name(t, sigma) for t in f.args)))
    elif isinstance(f, (And, Or)):
        for g in f.args:
            _rel_keys(g, sigma, out)
    elif isinstance(f, Not):
        _rel_keys(f.arg, sigma, out)
    return out


def _point_weight(spec, c):
    kind, arg = spec
    if kind == "dirac":
        return Fraction(int(arg == c))
    if kind == "avg":
        return Fraction(arg.count(c), len(arg))
    return Fraction(0)  # coin flips give every realized type mass 0


def _flip_weight(spec, assignment):
    kind, arg = spec
    if kind != "coin":
        return Fraction(0)
    w = Fraction(1)
    for s in assignment:
        w *= arg if s else 1 - arg
    return w


def morley_oracle(mu, nu, phi, params, facts) -> Fraction:
    """(mu_x (x) nu_y)(phi) as a sum over complete (x,y)-types over params.

    mu, nu are ("dirac", c), ("avg", (c, ...)) or ("coin", r).  facts gives the
    truth of every R-atom over params.  Atoms not mentioned by phi are summed
    out, which is exact because each type's mass is a product over atoms.
    """
    total = Fraction(0)
    for ychoice in list(params) + ["y"]:
        xchoices = list(params) + (["y", "x"] if ychoice == "y" else ["x"])
        for xchoice in xchoices:
            sigma = {"x": xchoice, "y": ychoice}
            keys = sorted(_rel_keys(phi, sigma, set()))
            ky = [k for k in keys if "y" in k[1] and "x" not in k[1]]
            kx = [k for k in keys if "x" in k[1]]
            ny = _point_weight(nu, ychoice) if ychoice != "y" else None
            nx = _point_weight(mu, xchoice) if xchoice not in ("x", "y") else (
                Fraction(0) if xchoice == "y" else None)
            if ny == 0 or nx == 0:
                continue
            for sy in product((True, False), repeat=len(ky)):
                wy = ny if ny is not None else _flip_weight(nu, sy)
                if not wy:
                    continue
                for sx in product((True, False), repeat=len(kx)):
                    wx = nx if nx is not None else _flip_weight(mu, sx)
                    if not wx:
                        continue
                    val = dict(facts)
                    val.update(zip(ky, sy))
                    val.update(zip(kx, sx))
                    if _truth(phi, sigma, val):
                        total += wx * wy
    return total


# ---------------------------------------------------------------- T^inf standard model, symbolically
#
# Conditions are Python bools until something symbolic appears, then SMT-LIB
# strings; measures are Fractions or SMT-LIB real terms.  The closed sentence
# goes to z3 as text, which is much cheaper than building it through the API.


def _and(*xs):
    out = []
    for x in xs:
        if x is False:
            return False
        if x is not True:
            out.append(x)
    return True if not out else out[0] if len(out) == 1 else f"(and {' '.join(out)})"


def _or(*xs):
    out = []
    for x in xs:
        if x is True:
            return True
        if x is not False:
            out.append(x)
    return False if not out else out[0] if len(out) == 1 else f"(or {' '.join(out)})"


def _not(x):
    return (not x) if isinstance(x, bool) else f"(not {x})"


def _z(v):
    if not isinstance(v, Fraction):
        return v
    t = f"(/ {abs(v.numerator)}.0 {v.denominator}.0)"
    return f"(- {t})" if v < 0 else t


def _arith(op, a, b):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return {"-": a - b, "+": a + b, "=": a == b, "<": a < b, ">": a > b}[op]
    return f"({op} {_z(a)} {_z(b)})"


def _sum(xs):
    total = Fraction(0)
    for x in xs:
        total = _arith("+", total, x)
    return total


def _zero(m):
    return _arith("=", m, Fraction(0))


class _Pt:
    """A point: for each class, a one-hot map atom -> condition."""

    def __init__(self, loc):
        self.loc = loc


class _Ctx:
    def __init__(self, classes, meas, pts, qs, rs, next_class):
        self.classes = classes  # n -> list of atom ids
        self.meas = meas  # atom id -> Fraction or z3 term
        self.pts = pts
        self.qs = qs  # name -> list of (cond, base); base = ("bot",) | ("top",) | ("set", n, frozenset)
        self.rs = rs
        self.next_class = next_class

    def copy(self):
        return _Ctx(dict(self.classes), dict(self.meas), dict(self.pts), dict(self.qs), dict(self.rs),
                    self.next_class)


def _cells(sets):
    """Atoms of the algebra generated by interval unions, as lists of (a, b) parts."""
    cuts = sorted({Fraction(0), Fraction(1)} | {e for X in sets for p in X.parts for e in p})
    groups = {}
    for a, b in zip(cuts, cuts[1:]):
        sig = tuple(X.contains(a) for X in sets)
        groups.setdefault(sig, []).append((a, b))
    return list(groups.values())


def _in_parts(v, parts):
    return any(a <= v < b for a, b in parts)


def _share(pts, f):
    # map each point once, so that identity still means equality
    done, out = {}, {}
    for name, p in pts.items():
        if id(p) not in done:
            done[id(p)] = f(p)
        out[name] = done[id(p)]
    return out


class TInfOracle:
    """Truth of a (quantified) formula at a concrete standard-model assignment.

    Each lattice class is cut into atoms carrying measures; a bound lattice
    variable splits every atom of its class into two pieces of unknown measure
    and puts each point in scope on one side.  A piece holding a point must
    have positive measure, and that is the only constraint finite unions of
    half-open intervals impose.  Bound points pick an atom of positive measure
    in every class, or coincide with a point already in scope.
    """

    def __init__(self, with_ell=True):
        self.with_ell = with_ell
        self._fresh = 0

    def _var(self, kind, base):
        self._fresh += 1
        return f"{base}{self._fresh}", "Real" if kind == "r" else "Bool"

    def holds(self, f, env) -> bool:
        e = self._f(f, self._initial(env))
        if isinstance(e, bool):
            return e
        s = z3.Solver()
        s.from_string(f"(assert {e})")
        res = s.check()
        if res == z3.unknown:
            raise RuntimeError("z3 returned unknown")
        return res == z3.sat

    def _initial(self, env):
        by_class = {}
        for v in env.values():
            if isinstance(v, QElem) and v.kind == "pair":
                by_class.setdefault(v.n, []).append(v.X)
        classes, meas, cellparts = {}, {}, {}
        for n, sets in by_class.items():
            ids = []
            for i, parts in enumerate(_cells(sets)):
                aid = (n, i)
                ids.append(aid)
                meas[aid] = sum((b - a for a, b in parts), Fraction(0))
                cellparts[aid] = parts
            classes[n] = ids
        pts, qs, rs = {}, {}, {}
        objs = {}
        for name, v in env.items():
            if isinstance(v, PElem):
                if id(v) not in objs:
                    objs[id(v)] = _Pt({n: {a: _in_parts(v.coord(n), cellparts[a]) for a in ids}
                                       for n, ids in classes.items()})
                pts[name] = objs[id(v)]
            elif isinstance(v, QElem):
                if v.kind == "pair":
                    S = frozenset(a for a in classes[v.n] if v.X.contains(cellparts[a][0][0]))
                    qs[name] = [(True, ("set", v.n, S))]
                else:
                    qs[name] = [(True, (v.kind,))]
            else:
                rs[name] = Fraction(v)
        return _Ctx(classes, meas, pts, qs, rs, max(classes, default=-1) + 1000)

    # -------------------------------------------------- formulas

    def _f(self, f, ctx):
        if isinstance(f, Const):
            return f.value
        if isinstance(f, Not):
            return _not(self._f(f.arg, ctx))
        if isinstance(f, And):
            return _and(*(self._f(g, ctx) for g in f.args))
        if isinstance(f, Or):
            return _or(*(self._f(g, ctx) for g in f.args))
        if isinstance(f, Exists):
            return self._exists(f.var, f.body, ctx, False)
        if isinstance(f, Forall):
            return _not(self._exists(f.var, f.body, ctx, True))
        return self._atom(f, ctx)

    def _body(self, body, ctx, negate):
        g = self._f(body, ctx)
        return _not(g) if negate else g

    @staticmethod
    def _bind(newvars, cons, body):
        inner = _and(*cons, body)
        if isinstance(inner, bool) or not newvars:
            return inner
        decls = " ".join(f"({n} {s})" for n, s in newvars)
        return f"(exists ({decls}) {inner})"

    def _exists(self, v, body, ctx, negate):
        if v.sort == Sort.R:
            r = self._var("r", "s")
            c = ctx.copy()
            c.rs[v.name] = r[0]
            return self._bind([r], [], self._body(body, c, negate))
        if v.sort == Sort.P:
            return self._exists_point(v, body, ctx, negate)
        return self._exists_lattice(v, body, ctx, negate)

    def _exists_point(self, v, body, ctx, negate):
        opts = []
        seen = set()
        for p in ctx.pts.values():
            if id(p) in seen:
                continue
            seen.add(id(p))
            c = ctx.copy()
            c.pts[v.name] = p
            opts.append(self._body(body, c, negate))
            if opts[-1] is True:
                return True
        c = ctx.copy()
        bits, cons, loc = [], [], {}
        for n, ids in ctx.classes.items():
            live = [a for a in ids if _arith(">", ctx.meas[a], Fraction(0)) is not False]
            decl = [self._var("b", "pt") for _ in live]
            bits += decl
            bs = [d[0] for d in decl]
            cons.append(_or(*bs))
            cons += [_not(_and(u, w)) for i, u in enumerate(bs) for w in bs[i + 1:]]
            cons += [_or(_not(b), _arith(">", ctx.meas[a], Fraction(0))) for a, b in zip(live, bs)]
            loc[n] = {a: (dict(zip(live, bs)).get(a, False)) for a in ids}
        c.pts[v.name] = _Pt(loc)
        opts.append(self._bind(bits, cons, self._body(body, c, negate)))
        return _or(*opts)

    def _exists_lattice(self, v, body, ctx, negate):
        opts = []
        for kind in ("bot", "top"):
            c = ctx.copy()
            c.qs[v.name] = [(True, (kind,))]
            opts.append(self._body(body, c, negate))
        for n in list(ctx.classes) + [None]:
            c = ctx.copy()
            newvars, cons = [], []
            if n is None:
                n = c.next_class
                c.next_class += 1
                root = (n, "root")
                c.classes[n] = [root]
                c.meas[root] = Fraction(1)
                c.pts = _share(ctx.pts, lambda p: _Pt({**p.loc, n: {root: True}}))
            old = c.classes[n]
            children = {}
            new_ids = []
            for a in old:
                a1, a0 = (a, 1), (a, 0)
                children[a] = (a1, a0)
                new_ids += [a1, a0]
                if _zero(c.meas[a]) is True:
                    c.meas[a1] = c.meas[a0] = Fraction(0)
                    continue
                decl = self._var("r", "m")
                newvars.append(decl)
                m = decl[0]
                c.meas[a1] = m
                c.meas[a0] = _arith("-", c.meas[a], m)
                cons += [f"(>= {m} 0.0)", f"(>= {c.meas[a0]} 0.0)"]
            c.classes[n] = new_ids

            def split(p):
                decl = self._var("b", "side")
                newvars.append(decl)
                bit = decl[0]
                cell = {}
                for a in old:
                    a1, a0 = children[a]
                    cell[a1] = _and(p.loc[n][a], bit)
                    cell[a0] = _and(p.loc[n][a], _not(bit))
                    for k in (a1, a0):
                        if cell[k] is not False:
                            cons.append(_or(_not(cell[k]), _arith(">", c.meas[k], Fraction(0))))
                return _Pt({**p.loc, n: cell})

            c.pts = _share(c.pts, split)
            c.qs = {name: [(cond, self._refine(base, n, children)) for cond, base in alts]
                    for name, alts in c.qs.items()}
            c.qs[v.name] = [(True, ("set", n, frozenset(ch[0] for ch in children.values())))]
            opts.append(self._bind(newvars, cons, self._body(body, c, negate)))
        return _or(*opts)

    @staticmethod
    def _refine(base, n, children):
        if base[0] == "set" and base[1] == n:
            return ("set", n, frozenset(x for a in base[2] for x in children[a]))
        return base

    # -------------------------------------------------- atoms and terms

    def _atom(self, a, ctx):
        k = a.kind
        if k in ("eq", "lt") and isinstance(a.args[0], Lin):
            l, r = (self._lin(t, ctx) for t in a.args)
            return _arith("=" if k == "eq" else "<", l, r)
        if k == "eq" and getattr(a.args[0], "sort", Sort.Q) == Sort.P:
            return ctx.pts[a.args[0].name] is ctx.pts[a.args[1].name]
        if k == "sqin":
            p = ctx.pts[a.args[0].name]
            return _or(*(_and(c, self._member(p, b)) for c, b in self._q(a.args[1], ctx)))
        x, y = self._q(a.args[0], ctx), self._q(a.args[1], ctx)
        parts = []
        for c1, b1 in x:
            for c2, b2 in y:
                rel = (self._base_eq(b1, b2, ctx) if k == "eq"
                       else b1[0] == b2[0] == "set" and b1[1] == b2[1])
                parts.append(_and(c1, c2, rel))
        return _or(*parts)

    @staticmethod
    def _member(p, b):
        if b[0] != "set":
            return b[0] == "top"
        return _or(*(p.loc[b[1]][a] for a in b[2]))

    @staticmethod
    def _base_eq(b1, b2, ctx):
        if b1[0] != "set" or b2[0] != "set":
            return b1[0] == b2[0]
        if b1[1] != b2[1]:
            return False
        return _and(*(_zero(ctx.meas[a]) for a in b1[2] ^ b2[2]))

    def _norm(self, cond, base, ctx):
        if base[0] != "set":
            return [(cond, base)]
        n, S = base[1], base[2]
        empty = _and(*(_zero(ctx.meas[a]) for a in S))
        full = _and(*(_zero(ctx.meas[a]) for a in ctx.classes[n] if a not in S))
        out = [(_and(cond, empty), ("bot",)), (_and(cond, _not(empty), full), ("top",)),
               (_and(cond, _not(empty), _not(full)), base)]
        return [(c, b) for c, b in out if c is not False]

    def _q(self, t, ctx):
        if isinstance(t, (Var, Param)):
            out = []
            for c, b in ctx.qs[t.name]:
                out += self._norm(c, b, ctx)
            return out
        if t.op in ("bot", "top"):
            return [(True, (t.op,))]
        if t.op == "comp":
            out = []
            for c, b in self._q(t.args[0], ctx):
                if b[0] == "set":
                    out.append((c, ("set", b[1], frozenset(ctx.classes[b[1]]) - b[2])))
                else:
                    out.append((c, ("top",) if b[0] == "bot" else ("bot",)))
            return out
        meet = t.op == "meet"
        absorb, unit = ("bot", "top") if meet else ("top", "bot")
        out = []
        for c1, b1 in self._q(t.args[0], ctx):
            for c2, b2 in self._q(t.args[1], ctx):
                c = _and(c1, c2)
                if c is False:
                    continue
                if absorb in (b1[0], b2[0]):
                    out.append((c, (absorb,)))
                elif b1[0] == unit:
                    out.append((c, b2))
                elif b2[0] == unit:
                    out.append((c, b1))
                elif b1[1] != b2[1]:
                    out.append((c, (absorb,)))
                else:
                    S = b1[2] & b2[2] if meet else b1[2] | b2[2]
                    out += self._norm(c, ("set", b1[1], S), ctx)
        return out

    def _measure(self, b, ctx):
        if b[0] != "set":
            return Fraction(int(b[0] == "top"))
        return _sum(ctx.meas[a] for a in b[2])

    def _lin(self, t: Lin, ctx):
        total = t.const
        for k, coef in t.terms:
            if isinstance(k, Ell):
                if not self.with_ell:
                    raise ValueError("no l in the PQ reduct")
                alts = self._q(k.arg, ctx)
                if len(alts) == 1 and alts[0][0] is True:
                    v = self._measure(alts[0][1], ctx)
                else:
                    v = Fraction(0)
                    for c, b in alts:
                        m = self._measure(b, ctx)
                        v = _arith("+", v, m if c is True else f"(ite {c} {_z(m)} 0.0)")
            else:
                v = ctx.rs[k.name]
            total = _arith("+", total, v * coef if isinstance(v, Fraction) else f"(* {_z(coef)} {v})")
        return total


# ---------------------------------------------------------------- Henson good sets


def _sat_literals(lits, names, M, edges_M, s):
    """Is the conjunction satisfiable in the Henson graph H_s extending the M-part?"""
    names = list(names)
    for part in _partitions(names):
        block = {}
        for i, B in enumerate(part):
            for x in B:
                block[x] = i
        if any(sum(1 for m in M if block[m] == i) > 1 for i in range(len(part))):
            continue
        ok = True
        edges = {frozenset((block[u], block[v])) for u, v in edges_M}
        for a, pos in lits:
            u, v = (block[t.name] for t in a.args)
            if a.kind == "eq":
                ok &= (u == v) == pos
            elif pos:
                ok &= u != v
                edges.add(frozenset((u, v)))
        for a, pos in lits:
            if a.kind == "rel" and not pos:
                u, v = (block[t.name] for t in a.args)
                ok &= frozenset((u, v)) not in edges
        if ok and not _has_clique(range(len(part)), edges, s):
            return True
    return False


def _partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in _partitions(rest):
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]
        yield [[first]] + p


def _has_clique(vs, edges, s):
    return any(all(frozenset(e) in edges for e in combinations(S, 2)) for S in combinations(list(vs), s))


def brute_good_size(lits, xs, M, edges_M, s) -> int:
    """Largest X with no x_i (i in X) forced into M and no forced edge inside X."""
    from keisler_lab.formula import eq, rel
    names = sorted(set(xs) | set(M))
    forced_m = set()
    for i, x in enumerate(xs, 1):
        if any(not _sat_literals(lits + [(eq(Var(x, Sort.V), Param(m, Sort.V)), False)], names, M, edges_M, s)
               for m in M):
            forced_m.add(i)
    forced_e = set()
    for (i, x), (j, y) in combinations(list(enumerate(xs, 1)), 2):
        lit = (rel("E", Var(x, Sort.V), Var(y, Sort.V)), False)
        if not _sat_literals(lits + [lit], names, M, edges_M, s):
            forced_e.add((i, j))
    idx = range(1, len(xs) + 1)
    for k in range(len(xs), 0, -1):
        for X in combinations(idx, k):
            if not set(X) & forced_m and not any((i, j) in forced_e for i, j in combinations(X, 2)):
                return k
    return 0


# ---------------------------------------------------------------- binomial


def binomial_by_counting(r: Fraction, eps: Fraction, n: int) -> Fraction:
    """Sum over all 2^n outcome strings (grouped by popcount through bit counting)."""
    counts = [0] * (n + 1)
    for w in range(1 << n):
        counts[bin(w).count("1")] += 1
    assert all(counts[k] == comb(n, k) for k in range(n + 1))
    return sum((counts[k] * r ** k * (1 - r) ** (n - k) for k in range(n + 1)
                if abs(Fraction(k, n) - r) < eps), Fraction(0))
