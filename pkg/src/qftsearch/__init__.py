"""Symbolic derivation engine for Lorentz-tensor expressions.

Derivation rules are declarative rewrites; every derivation is found by one
breadth-first search with cycle control.
"""

from .canonical import IndexStructureError, canonicalize, equivalent, free_indices
from .components import ComponentTable, Poly, expand_components
from .expr import Atom, Expr, HeadRegistry, Index, Num, Partial, Product, Sum, TensorHead, to_text
from .matching import Binding, instantiate, match_pattern
from .parser import ParseError, parse_expr, parse_pattern
from .physics import (
    FieldTheory, TEMResult, canonical_tem, check_conservation, load_theory, packaged_theory,
    read_theory, symmetrize_tem, variational_derivative,
)
from .rules import Rule, RuleSet, apply_at, load_rules, seed_rules, successors
from .search import (
    BudgetExceeded, DerivationState, EqualsCanonical, Exhausted, Found, IsZero, MatchesPattern,
    SearchBudget, SymmetricIn, eval_goal, explain, parse_goal, search,
)

__all__ = [
    "IndexStructureError", "canonicalize", "equivalent", "free_indices",
    "ComponentTable", "Poly", "expand_components",
    "Atom", "Expr", "HeadRegistry", "Index", "Num", "Partial", "Product", "Sum", "TensorHead", "to_text",
    "Binding", "instantiate", "match_pattern",
    "ParseError", "parse_expr", "parse_pattern",
    "FieldTheory", "TEMResult", "canonical_tem", "check_conservation", "load_theory",
    "packaged_theory", "read_theory", "symmetrize_tem", "variational_derivative",
    "Rule", "RuleSet", "apply_at", "load_rules", "seed_rules", "successors",
    "BudgetExceeded", "DerivationState", "EqualsCanonical", "Exhausted", "Found", "IsZero",
    "MatchesPattern", "SearchBudget", "SymmetricIn", "eval_goal", "explain", "parse_goal", "search",
]

__version__ = "0.1.0"
