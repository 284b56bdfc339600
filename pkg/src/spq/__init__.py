"""Space-time tradeoffs for sum-product queries: plans, evaluators and plan search."""

from .query import Atom, CardinalityProfile, Query, QueryError, QuerySyntaxError, parse_query, rho_star
from .semiring import BOOL, MINPLUS, NAT, REAL, Semiring, get_semiring
from .relation import Database, DataMismatch, KRelation
from .plans import (
    GJPlan,
    InvalidPlan,
    PseudoTree,
    PTCPlan,
    PTCRPlan,
    PTPlan,
    RPTPlan,
    SpaceTimeExponent,
    TDPlan,
    TreeDecomposition,
    dominates,
    exponents,
    validate,
)

__all__ = [
    "Atom", "CardinalityProfile", "Query", "QueryError", "QuerySyntaxError", "parse_query", "rho_star",
    "BOOL", "MINPLUS", "NAT", "REAL", "Semiring", "get_semiring",
    "Database", "DataMismatch", "KRelation",
    "GJPlan", "InvalidPlan", "PseudoTree", "PTCPlan", "PTCRPlan", "PTPlan", "RPTPlan",
    "SpaceTimeExponent", "TDPlan", "TreeDecomposition", "dominates", "exponents", "validate",
]
