import io
import json
import subprocess
import sys
from fractions import Fraction

from keisler_lab.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, parse_measure, run
from keisler_lab.measures import Average, CoinFlip, Convex, Dirac


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_eval_coinflip():
    code, out, _ = call("eval", "--measure", "coinflip", "--theory", "tr", "R(x,a,a) & !R(x,a,b)")
    assert code == EXIT_OK and out == "1/4\n"


def test_scenario_nocom():
    code, out, _ = call("scenario", "nocom")
    assert code == EXIT_OK
    assert out.splitlines() == ["(mu x q)(x sqin y)\t1/2", "(q x mu)(x sqin y)\t1", "verdict\tpass"]


def test_bounds_binomial():
    code, out, _ = call("bounds", "--binomial", "r=1/2", "eps=1/4", "n=16")
    assert code == EXIT_OK and out == "30251/32768\n"


def test_unknown_subcommand():
    assert call("bogus")[0] == EXIT_USAGE


def test_bad_measure_is_usage_error():
    code, _, err = call("eval", "--measure", "zzz", "x = a")
    assert code == EXIT_USAGE and err.startswith("error:")


def test_syntax_error_is_usage_error():
    assert call("eval", "--measure", "coinflip", "R(x,a")[0] == EXIT_USAGE


def test_json_rows_round_trip():
    code, out, _ = call("scenario", "nocom", "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK and data["verdict"] == "pass"
    vals = [Fraction(r["num"], r["den"]) for r in data["rows"]]
    assert vals == [Fraction(1, 2), Fraction(1)]


def test_seeded_output_is_stable():
    argv = ("scenario", "thalf-nonfam", "--param", "n=6", "--seed", "11")
    assert call(*argv) == call(*argv)


def test_qe_and_types():
    assert call("qe", "--theory", "THalfInf", "exists x0. x0 sqin bot")[1] == "false\n"
    assert call("types", "--theory", "tr")[1] == "count\t2\n"


def test_fam_search_verdict():
    code, out, _ = call("fam-search", "--theory", "RandomGraph", "--measure", "dirac:a", "--eps", "1/2",
                        "--obj", "x", "--params", "y", "E(x,y)")
    assert code == EXIT_OK and "verdict\tpass" in out


def test_unrealizable_product_fails():
    code, _, err = call("product", "--theory", "THalfInf", "--left", "lebesgue", "--right", "lebesgue",
                        "x sqin y")
    assert code in (EXIT_FAIL, EXIT_USAGE) and err


def test_parse_measure():
    assert isinstance(parse_measure("coinflip"), CoinFlip)
    assert parse_measure("dirac:a").elements == ("a",)
    assert isinstance(parse_measure("average:a,b"), Average)
    m = parse_measure("1/2*dirac:a + 1/2*dirac:b")
    assert isinstance(m, Convex) and all(isinstance(c, Dirac) for c in m.components)


def test_entry_point_module():
    proc = subprocess.run([sys.executable, "-m", "keisler_lab", "bounds", "--wlln", "r=1/2", "eps=1/4", "n=16"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "3/4\n"
