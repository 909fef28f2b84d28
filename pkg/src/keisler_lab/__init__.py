"""Exact finite-scale computations with Keisler measures and Morley products."""
from .formula import parse, to_str
from .measures import (Average, CoinFlip, Convex, CubeLebesgue, Dirac, IndependentFamily, RuleType, TInfQType,
                       independent_family_measure, p_E)
from .morley import Product, check_assoc, check_commute, morley_product_eval, pattern_product_eval, power_eval
from .theories import Fragment, TheoryId, load_fragment, relational_fragment

__all__ = [
    "parse", "to_str", "Average", "CoinFlip", "Convex", "CubeLebesgue", "Dirac", "IndependentFamily", "RuleType",
    "TInfQType", "independent_family_measure", "p_E", "Product", "check_assoc", "check_commute",
    "morley_product_eval", "pattern_product_eval", "power_eval", "Fragment", "TheoryId", "load_fragment",
    "relational_fragment",
]
