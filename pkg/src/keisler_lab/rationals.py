from fractions import Fraction
import re

_RAT = re.compile(r"^\s*(-?\d+)(?:\s*/\s*(\d+))?\s*$")


def parse_rational(text) -> Fraction:
    """Read "p/q", "n" or an int/Fraction into a Fraction (floats are refused)."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, bool):
        raise ValueError("boolean is not a rational")
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, str):
        m = _RAT.match(text)
        if m:
            den = int(m.group(2)) if m.group(2) else 1
            if den == 0:
                raise ValueError(f"zero denominator in {text!r}")
            return Fraction(int(m.group(1)), den)
    raise ValueError(f"not an exact rational: {text!r}")


def fmt(q) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"
