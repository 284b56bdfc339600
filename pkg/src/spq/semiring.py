"""The four built-in commutative semirings."""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Any, Callable


@dataclass(frozen=True)
class Semiring:
    id: str
    zero: Any
    one: Any
    plus: Callable[[Any, Any], Any]
    times: Callable[[Any, Any], Any]
    parse: Callable[[str], Any]
    format: Callable[[Any], str]

    def is_zero(self, v: Any) -> bool:
        return v == self.zero

    def equal(self, a: Any, b: Any) -> bool:
        if self.id == "real":
            return math.isclose(a, b, rel_tol=1e-9, abs_tol=0.0) or a == b
        return a == b

    def __repr__(self) -> str:
        return f"Semiring({self.id})"


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "t", "yes"):
        return True
    if t in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_nat(s: str) -> int:
    v = int(s)
    if v < 0:
        raise ValueError(f"negative value {v} in the natural-number semiring")
    return v


def _parse_minplus(s: str) -> int | float:
    t = s.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return int(t)
    except ValueError:
        return float(t)


def _format_num(v: Any) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


BOOL = Semiring("bool", False, True, operator.or_, operator.and_, _parse_bool, lambda v: "1" if v else "0")
NAT = Semiring("nat", 0, 1, operator.add, operator.mul, _parse_nat, _format_num)
REAL = Semiring("real", 0.0, 1.0, operator.add, operator.mul, float, _format_num)
MINPLUS = Semiring("minplus", math.inf, 0, min, operator.add, _parse_minplus, _format_num)

SEMIRINGS = {k.id: k for k in (BOOL, NAT, REAL, MINPLUS)}


def get_semiring(name: str) -> Semiring:
    try:
        return SEMIRINGS[name]
    except KeyError:
        raise ValueError(f"unknown semiring {name!r}; choose from {', '.join(SEMIRINGS)}") from None
