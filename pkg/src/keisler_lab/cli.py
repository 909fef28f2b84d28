"""Command-line entry point.  Values are printed as exact rationals "p/q"."""
from __future__ import annotations

import argparse
import json
import random
import sys
from fractions import Fraction

from . import approx, scenarios
from .formula import FormulaSyntaxError, SortError, free_vars, parse, to_str
from .intervals import IntervalUnion
from .measures import (Average, CoinFlip, Convex, CubeLebesgue, Dirac, TInfQType, p_E)
from .morley import check_assoc, check_commute, morley_product_eval, power_eval
from .qe import eliminate_quantifiers
from .rationals import fmt, parse_rational
from .theories import (TR, Fragment, NeedAtom, TheoryId, UnsupportedOperation, henson, load_fragment,
                       relational_fragment)
from .typespace import enumerate_types

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_THEORY_NAMES = {"tr": "TR", "randomgraph": "RandomGraph", "rg": "RandomGraph", "thalf": "THalf",
                 "thalfinf": "THalfInf", "thalfinfpq": "THalfInfPQ"}


class UsageError(Exception):
    pass


def parse_theory(text: str) -> TheoryId:
    key = text.strip().lower()
    if key in _THEORY_NAMES:
        return TheoryId(_THEORY_NAMES[key])
    try:
        return TheoryId.parse(text)
    except ValueError as e:
        raise UsageError(str(e)) from None


# ---------------------------------------------------------------- measures

def _measure_atom(text: str):
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    items = [a.strip() for a in arg.split(",") if a.strip()]
    if name == "coinflip":
        if not items:
            return CoinFlip()
        r = parse_rational(items[0])
        return CoinFlip(bias=lambda key, r=r: r)
    if name == "dirac":
        if not items:
            raise UsageError("dirac needs an element, e.g. dirac:a")
        return Dirac(tuple(items))
    if name == "average":
        if not items:
            raise UsageError("average needs elements, e.g. average:a,b")
        return Average(tuple(items))
    if name == "lebesgue":
        return CubeLebesgue()
    if name == "q":
        return TInfQType()
    if name == "qpq":
        return TInfQType(pq=True)
    if name in ("pe", "p_e"):
        return p_E()
    raise UsageError(f"unknown measure {text!r}")


def parse_measure(text: str):
    """coinflip[:r] | dirac:a | average:a,b,.. | lebesgue | q | qpq | pE, or a
    convex combination such as 1/2*dirac:a + 1/2*dirac:b."""
    parts = [p for p in text.split("+")]
    if len(parts) == 1 and "*" not in text:
        return _measure_atom(text)
    weights, comps = [], []
    for p in parts:
        w, star, m = p.partition("*")
        if not star:
            raise UsageError(f"convex components need weights: {p!r}")
        weights.append(parse_rational(w))
        comps.append(_measure_atom(m))
    try:
        return Convex(tuple(weights), tuple(comps))
    except ValueError as e:
        raise UsageError(str(e)) from None


# ---------------------------------------------------------------- fragments and formulas

def _measure_names(*ms) -> set:
    out = set()
    for m in ms:
        if isinstance(m, Convex):
            out |= _measure_names(*m.components)
        elif isinstance(m, (Dirac, Average)):
            out |= {e for e in m.elements if isinstance(e, str)}
    return out


def _fragment(args, texts=(), bound=(), measures=()) -> Fragment:
    """The --fragment file, or a fragment over the names in the formulas and
    measures with every atom false."""
    if args.fragment:
        fr = load_fragment(args.fragment)
        if args.theory and parse_theory(args.theory) != fr.theory:
            raise UsageError("--theory disagrees with the fragment file")
        return fr
    theory = parse_theory(args.theory or "TR")
    if not theory.relational:
        if any(_names(t) - set(bound) for t in texts):
            raise UsageError(f"{theory} parameters need values; pass --fragment")
        return Fragment(theory)
    names = set().union(*(_names(t) for t in texts)) - set(bound) if texts else set()
    return relational_fragment(theory, sorted(names | _measure_names(*measures)))


def _names(text: str) -> set:
    return {v.name for v in free_vars(parse(text))}


def _formula(fr: Fragment, text: str, sorts=None):
    return fr.parse(text, sorts)


def _sorts_for(measure, var_names) -> dict:
    s = getattr(measure, "sort", None)
    return {v: s for v in var_names} if s else {}


# ---------------------------------------------------------------- output

class Output:
    def __init__(self, fmt_name: str, stream):
        self.format = fmt_name
        self.stream = stream
        self.rows: list = []
        self.extra: dict = {}

    def row(self, label, value):
        self.rows.append((label, value))

    def emit(self, verdict: bool | None = None):
        if self.format == "json":
            data = {"rows": [_json_row(k, v) for k, v in self.rows]}
            if verdict is not None:
                data["verdict"] = "pass" if verdict else "fail"
            data.update(self.extra)
            json.dump(data, self.stream, indent=2, sort_keys=True)
            self.stream.write("\n")
            return
        single = len(self.rows) == 1 and self.rows[0][0] is None
        for k, v in self.rows:
            val = fmt(v) if isinstance(v, (Fraction, int)) and not isinstance(v, bool) else str(v)
            self.stream.write(val + "\n" if single or k is None else f"{k}\t{val}\n")
        for k, v in self.extra.items():
            self.stream.write(f"# {k}: {v}\n")
        if verdict is not None:
            self.stream.write(f"verdict\t{'pass' if verdict else 'fail'}\n")


def _json_row(label, value):
    if isinstance(value, (Fraction, int)) and not isinstance(value, bool):
        q = Fraction(value)
        return {"label": label, "num": q.numerator, "den": q.denominator}
    return {"label": label, "value": str(value)}


# ---------------------------------------------------------------- subcommands

def cmd_eval(args, out):
    m = parse_measure(args.measure)
    fr = _fragment(args, [args.formula], [args.var], [m])
    phi = _formula(fr, args.formula, _sorts_for(m, [args.var]))
    out.row(None, m.eval(phi, fr, (args.var,)))
    return None


def cmd_product(args, out):
    mu, nu = parse_measure(args.left), parse_measure(args.right)
    xs, ys = args.xvars.split(","), args.yvars.split(",")
    fr = _fragment(args, [args.formula], xs + ys, [mu, nu])
    sorts = {**_sorts_for(mu, xs), **_sorts_for(nu, ys)}
    phi = _formula(fr, args.formula, sorts)
    out.row(None, morley_product_eval(mu, nu, phi, fr, xs, ys))
    return None


def cmd_power(args, out):
    mu = parse_measure(args.measure)
    xs = [f"x{i}" for i in range(1, args.n + 1)]
    fr = _fragment(args, [args.formula], xs, [mu])
    out.row(None, power_eval(mu, args.n, _formula(fr, args.formula, _sorts_for(mu, xs)), fr))
    return None


def _pool(args, fr, sorts):
    texts = _pool_texts(args)
    if not texts:
        raise UsageError("no formulas given")
    return [_formula(fr, t, sorts) for t in texts]


def _pool_texts(args):
    texts = list(args.formulas)
    if args.pool:
        with open(args.pool) as fh:
            texts += [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    return texts


def cmd_commute(args, out):
    mu, nu = parse_measure(args.mu), parse_measure(args.nu)
    fr = _fragment(args, _pool_texts(args), ["x", "y"], [mu, nu])
    rep = check_commute(mu, nu, fr, _pool(args, fr, {**_sorts_for(mu, ["x"]), **_sorts_for(nu, ["y"])}))
    out.row("result", str(rep))
    return rep.equal


def cmd_assoc(args, out):
    mu, nu, lam = parse_measure(args.mu), parse_measure(args.nu), parse_measure(args.lam)
    fr = _fragment(args, _pool_texts(args), ["x", "y", "z"], [mu, nu, lam])
    rep = check_assoc(mu, nu, lam, fr, _pool(args, fr, {}))
    out.row("result", str(rep))
    return rep.equal


def cmd_fam_search(args, out):
    mu = parse_measure(args.measure)
    params = tuple(p for p in args.params.split(",") if p)
    fr = _fragment(args, [args.formula], [args.obj, *params], [mu])
    sorts = dict(_sorts_for(mu, [args.obj]))
    phi = _formula(fr, args.formula, sorts)
    cands = args.candidates.split(",") if args.candidates else None
    res = approx.fam_search(mu, phi, parse_rational(args.eps), fr, args.n_max, args.obj, params, cands)
    if res.found:
        out.row("tuple", " ".join(map(str, res.witness)))
        out.row("error", res.error)
    else:
        out.row("failure", f"no tuple of size <= {args.n_max}")
    out.row("checked", res.checked)
    return res.found


def _kv(items) -> dict:
    out = {}
    for it in items:
        k, eq, v = it.partition("=")
        if not eq:
            raise UsageError(f"expected key=value, got {it!r}")
        out[k.strip()] = v.strip()
    return out


def cmd_bounds(args, out):
    if bool(args.binomial) == bool(args.wlln):
        raise UsageError("give exactly one of --binomial or --wlln")
    kv = _kv(args.binomial or args.wlln)
    if "p" in kv:
        kv.setdefault("r", kv["p"])
    fn = approx.binomial_tail_exact if args.binomial else approx.wlln_bound
    try:
        out.row(None, fn(parse_rational(kv["r"]), parse_rational(kv["eps"]), int(kv["n"])))
    except KeyError as e:
        raise UsageError(f"missing {e.args[0]}") from None
    return None


def cmd_fim_convexity(args, out):
    mu, nu = parse_measure(args.mu), parse_measure(args.nu)
    xs = [f"x{i}" for i in range(1, args.n + 1)]
    fr = _fragment(args, _pool_texts(args), xs, [mu, nu])
    rep = approx.fim_convexity_check(mu, nu, parse_rational(args.r), args.n, fr, _pool(args, fr, {}))
    out.row("result", str(rep))
    return rep.equal


def cmd_qe(args, out):
    theory = parse_theory(args.theory or "THalfInf")
    fr = load_fragment(args.fragment) if args.fragment else Fragment(theory)
    f = parse(args.formula, {n: p.sort for n, p in fr.params.items()})
    out.row(None, to_str(eliminate_quantifiers(f, theory, args.q_bound)))
    return None


def cmd_types(args, out):
    fr = _fragment(args)
    ts = enumerate_types(fr, args.vars.split(","), bound=args.type_cap)
    out.row("count", len(ts))
    if args.list:
        for i, t in enumerate(ts.types):
            out.row(f"type {i}", to_str(t.formula()))
    return None


def _scenario(args, out):
    kv = _kv(args.param)
    rng = random.Random(args.seed)
    name = args.name

    def geti(k, d):
        return int(kv.get(k, d))

    if name == "ternary-gap":
        return scenarios.run_ternary_gap(geti("m", 1), geti("kappa", 2))
    if name == "nocom":
        return scenarios.run_nocom()
    if name == "qpq":
        return scenarios.run_qpq_suite(geti("n", 4), geti("k", 2))
    if name == "thalf-nonfam":
        if "sets" in kv:
            sets = [IntervalUnion.parse(s) for s in kv["sets"].split(";")]
        else:
            n = geti("n", 4)
            sets = [scenarios.random_half_set(n, rng) for _ in range(n)]
        return scenarios.run_thalf_nonfam(sets)
    if name == "thalf-satisfiability":
        if "points" in kv:
            pts = [parse_rational(p) for p in kv["points"].split(",")]
        else:
            n = geti("n", 4)
            pts = sorted({Fraction(rng.randrange(1000), 1000) for _ in range(n)})
        return scenarios.run_thalf_satisfiability(pts)
    if name == "pq-property-ii":
        base = relational_fragment(TR, [f"b{i}" for i in range(1, geti("m", 0) + 1)])
        space = [t for t in enumerate_types(base, ["z"]) if not t.is_realized()]
        z = kv.get("Z", "all")
        Z = space if z == "all" else [] if z == "none" else space[:int(z)]
        return scenarios.run_pq_property_ii(Z, base)
    if name == "henson-tgood":
        fr = load_fragment(args.fragment) if args.fragment else relational_fragment(henson(3), ["m"])
        if "theta" not in kv:
            raise UsageError("henson-tgood needs --param theta=...")
        return scenarios.run_henson_tgood(fr.parse(kv["theta"]), parse_rational(kv.get("eps", "1/2")), fr)
    raise UsageError(f"unknown scenario {name!r}")


SCENARIO_NAMES = ("ternary-gap", "nocom", "qpq", "thalf-nonfam", "thalf-satisfiability", "pq-property-ii",
                  "henson-tgood")


def cmd_scenario(args, out):
    res = _scenario(args, out)
    for k, v in res.rows:
        out.row(k, v)
    for k in ("point", "set", "witness", "X"):
        if k in res.detail:
            out.extra[k] = str(res.detail[k])
    return res.verdict


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fragment", help="fragment file (JSON)")
    common.add_argument("--theory", help="TR, RandomGraph, Henson(s), THalf, THalfInf, THalfInfPQ")
    common.add_argument("--format", choices=("tsv", "json"), default="tsv")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--type-cap", type=int, default=1 << 22)

    p = argparse.ArgumentParser(prog="keisler-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("eval", parents=[common], help="evaluate a measure on a formula")
    s.add_argument("--measure", required=True)
    s.add_argument("--var", default="x")
    s.add_argument("formula")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("product", parents=[common], help="Morley product mu_x (x) nu_y")
    s.add_argument("--left", required=True)
    s.add_argument("--right", required=True)
    s.add_argument("--xvars", default="x")
    s.add_argument("--yvars", default="y")
    s.add_argument("formula")
    s.set_defaults(func=cmd_product)

    s = sub.add_parser("power", parents=[common], help="Morley power mu^(n) in x1..xn")
    s.add_argument("--measure", required=True)
    s.add_argument("-n", type=int, required=True)
    s.add_argument("formula")
    s.set_defaults(func=cmd_power)

    for name, fn, extra in (("commute", cmd_commute, ("mu", "nu")), ("assoc", cmd_assoc, ("mu", "nu", "lam"))):
        s = sub.add_parser(name, parents=[common])
        for m in extra:
            s.add_argument(f"--{m}", required=True)
        s.add_argument("--pool", help="file with one formula per line")
        s.add_argument("formulas", nargs="*")
        s.set_defaults(func=fn)

    s = sub.add_parser("fam-search", parents=[common], help="search for a finite average approximation")
    s.add_argument("--measure", required=True)
    s.add_argument("--eps", required=True)
    s.add_argument("--n-max", type=int, default=4)
    s.add_argument("--obj", default="x")
    s.add_argument("--params", default="y")
    s.add_argument("--candidates")
    s.add_argument("formula")
    s.set_defaults(func=cmd_fam_search)

    s = sub.add_parser("bounds", parents=[common], help="exact binomial tail or WLLN bound")
    s.add_argument("--binomial", nargs="+", metavar="k=v")
    s.add_argument("--wlln", nargs="+", metavar="k=v")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("fim-convexity", parents=[common], help="check the convexity identity at n")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--r", required=True)
    s.add_argument("-n", type=int, default=2)
    s.add_argument("--pool")
    s.add_argument("formulas", nargs="*")
    s.set_defaults(func=cmd_fim_convexity)

    s = sub.add_parser("qe", parents=[common], help="eliminate quantifiers")
    s.add_argument("--q-bound", type=int, default=4)
    s.add_argument("formula")
    s.set_defaults(func=cmd_qe)

    s = sub.add_parser("types", parents=[common], help="count complete qf types over a fragment")
    s.add_argument("--vars", default="x")
    s.add_argument("--list", action="store_true")
    s.set_defaults(func=cmd_types)

    s = sub.add_parser("scenario", parents=[common], help="run a scripted scenario")
    s.add_argument("name", choices=SCENARIO_NAMES)
    s.add_argument("--param", action="append", default=[], metavar="k=v")
    s.set_defaults(func=cmd_scenario)
    return p


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    out = Output(args.format, stdout)
    try:
        verdict = args.func(args, out)
    except (UsageError, FormulaSyntaxError, SortError, FileNotFoundError) as e:
        stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except (ValueError, KeyError, UnsupportedOperation, NeedAtom) as e:
        stderr.write(f"error: {e}\n")
        return EXIT_FAIL
    out.emit(verdict)
    return EXIT_OK if verdict is None or verdict else EXIT_FAIL


def main():
    sys.exit(run())
