"""Sum-product queries as hypergraphs, the query parser, and fractional edge covers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .lp import maximize_packing

MAX_VARIABLES = 64


class QueryError(ValueError):
    """A malformed or semantically invalid query."""


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Atom:
    name: str
    vars: tuple[str, ...]

    def __post_init__(self):
        if not self.vars:
            raise QueryError(f"atom {self.name} has arity 0")
        if len(set(self.vars)) != len(self.vars):
            raise QueryError(f"atom {self.name} repeats a variable: {', '.join(self.vars)}")

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.vars)})"


@dataclass(frozen=True)
class Query:
    """``head(X) <- atoms``. Head order is kept as written and fixes output columns."""

    head: tuple[str, ...]
    atoms: tuple[Atom, ...]
    name: str = "Q"
    _memo: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        names = [a.name for a in self.atoms]
        seen = set()
        for n in names:
            if n in seen:
                raise QueryError(f"duplicate relation name {n}")
            seen.add(n)
        if len(set(self.head)) != len(self.head):
            raise QueryError("head repeats a variable")
        body = set(self.variables)
        for v in self.head:
            if v not in body:
                raise QueryError(f"head variable {v} does not occur in the body")
        if len(self.variables) > MAX_VARIABLES:
            raise QueryError(f"more than {MAX_VARIABLES} variables")

    # Variables are listed in order of first appearance in the body.
    @property
    def variables(self) -> tuple[str, ...]:
        got = self._memo.get("variables")
        if got is None:
            seen: dict[str, None] = {}
            for a in self.atoms:
                for v in a.vars:
                    seen.setdefault(v, None)
            got = self._memo["variables"] = tuple(seen)
        return got

    @property
    def index(self) -> dict[str, int]:
        got = self._memo.get("index")
        if got is None:
            got = self._memo["index"] = {v: i for i, v in enumerate(self.variables)}
        return got

    def mask(self, vs: Iterable[str]) -> int:
        idx = self.index
        m = 0
        for v in vs:
            m |= 1 << idx[v]
        return m

    def names(self, mask: int) -> list[str]:
        return [v for i, v in enumerate(self.variables) if mask >> i & 1]

    @property
    def atom_masks(self) -> tuple[int, ...]:
        got = self._memo.get("atom_masks")
        if got is None:
            got = self._memo["atom_masks"] = tuple(self.mask(a.vars) for a in self.atoms)
        return got

    @property
    def head_mask(self) -> int:
        return self.mask(self.head)

    @property
    def all_mask(self) -> int:
        return (1 << len(self.variables)) - 1

    @property
    def neighbors(self) -> tuple[int, ...]:
        """Per variable id, the mask of variables sharing an atom with it (itself excluded)."""
        got = self._memo.get("neighbors")
        if got is None:
            nb = [0] * len(self.variables)
            for am in self.atom_masks:
                for i in _bits(am):
                    nb[i] |= am
            got = self._memo["neighbors"] = tuple(m & ~(1 << i) for i, m in enumerate(nb))
        return got

    def atom(self, name: str) -> Atom:
        for a in self.atoms:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def is_scalar(self) -> bool:
        return not self.head

    @property
    def is_full(self) -> bool:
        return set(self.head) == set(self.variables)

    def __str__(self) -> str:
        body = ", ".join(str(a) for a in self.atoms)
        return f"{self.name}({','.join(self.head)}) <- {body}."


def _bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


def bits(mask: int) -> list[int]:
    return list(_bits(mask))


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>\#[^\n]*)|(?P<arrow><-)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(),.])"
)


def _tokenize(text: str):
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        elif kind not in ("ws", "comment"):
            yield kind, value, line, col
        if kind != "nl":
            col += len(value)
        pos = m.end()
    yield "eof", "", line, col


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind: str, value: str | None = None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] if tok[0] != "eof" else "end of input"
            raise QuerySyntaxError(f"expected {want}, got {got!r}", tok[2], tok[3])
        self.pos += 1
        return tok

    def var_list(self) -> tuple[list[str], list[tuple[int, int]]]:
        self.take("punct", "(")
        names, where = [], []
        if self.peek()[:2] != ("punct", ")"):
            while True:
                tok = self.take("ident")
                names.append(tok[1])
                where.append((tok[2], tok[3]))
                if self.peek()[:2] == ("punct", ","):
                    self.pos += 1
                    continue
                break
        self.take("punct", ")")
        return names, where

    def query(self) -> Query:
        head_tok = self.take("ident")
        head, head_where = self.var_list()
        self.take("arrow")
        atoms: list[Atom] = []
        seen: set[str] = set()
        while True:
            name_tok = self.take("ident")
            vs, _ = self.var_list()
            line, col = name_tok[2], name_tok[3]
            if name_tok[1] in seen:
                raise QuerySyntaxError(f"duplicate relation name {name_tok[1]}", line, col)
            if not vs:
                raise QuerySyntaxError(f"atom {name_tok[1]} has no variables", line, col)
            if len(set(vs)) != len(vs):
                raise QuerySyntaxError(f"repeated variable in atom {name_tok[1]}", line, col)
            seen.add(name_tok[1])
            atoms.append(Atom(name_tok[1], tuple(vs)))
            if self.peek()[:2] == ("punct", ","):
                self.pos += 1
                continue
            break
        self.take("punct", ".")
        self.take("eof")
        body = {v for a in atoms for v in a.vars}
        for v, (line, col) in zip(head, head_where):
            if v not in body:
                raise QuerySyntaxError(f"head variable {v} not in body", line, col)
        if len(set(head)) != len(head):
            raise QuerySyntaxError("head repeats a variable", head_tok[2], head_tok[3])
        return Query(tuple(head), tuple(atoms), name=head_tok[1])


def parse_query(text: str) -> Query:
    return _Parser(text).query()


# ---------------------------------------------------------------- covers


@dataclass(frozen=True)
class CardinalityProfile:
    """Log-scaled cardinality per atom name; atoms not listed have cc = 1."""

    cc: tuple[tuple[str, Fraction], ...] = ()

    @classmethod
    def uniform(cls) -> "CardinalityProfile":
        return cls()

    @classmethod
    def of(cls, values: Mapping[str, Fraction | int | str], *, check: bool = True) -> "CardinalityProfile":
        items = tuple(sorted((k, Fraction(v)) for k, v in values.items()))
        prof = cls(items)
        if check:
            prof.check()
        return prof

    def check(self) -> None:
        vals = [v for _, v in self.cc]
        if any(v <= 0 or v > 1 for v in vals):
            raise QueryError("cardinality constraints must lie in (0, 1]")
        if vals and max(vals) != 1:
            raise QueryError("the largest cardinality constraint must be 1")

    def get(self, atom_name: str) -> Fraction:
        for k, v in self.cc:
            if k == atom_name:
                return v
        return Fraction(1)


UNIFORM = CardinalityProfile()


@dataclass(frozen=True)
class FractionalEdgeCover:
    weights: dict[str, Fraction]
    objective: Fraction


def rho_star(q: Query, target: Iterable[str], profile: CardinalityProfile = UNIFORM) -> FractionalEdgeCover:
    """Optimal fractional edge cover of ``target`` with its certificate."""
    target = list(target)
    unknown = sorted(set(target) - set(q.variables))
    if unknown:
        raise QueryError(f"variables covered by no atom: {', '.join(unknown)}")
    tmask = q.mask(target)
    value, weights = _solve_cover(q, tmask, profile)
    return FractionalEdgeCover(dict(weights), value)


def rho(q: Query, mask: int, profile: CardinalityProfile = UNIFORM) -> Fraction:
    """Memoized optimum only, for hot paths (plan exponents, search)."""
    memo = q._memo.setdefault(("rho", profile), {})
    got = memo.get(mask)
    if got is None:
        got = memo[mask] = _solve_cover(q, mask, profile)[0]
    return got


def _solve_cover(q: Query, tmask: int, profile: CardinalityProfile) -> tuple[Fraction, list[tuple[str, Fraction]]]:
    zero_weights = [(a.name, Fraction(0)) for a in q.atoms]
    if tmask == 0:
        return Fraction(0), zero_weights
    targets = bits(tmask)
    if any(not (tmask >> v & 1) for v in targets):  # pragma: no cover - defensive
        raise QueryError("bad target")
    rows = [i for i, am in enumerate(q.atom_masks) if am & tmask]
    covered = 0
    for i in rows:
        covered |= q.atom_masks[i]
    missing = tmask & ~covered
    if missing:
        raise QueryError(f"variables covered by no atom: {', '.join(q.names(missing))}")
    # Dual packing LP: max sum y_A  s.t.  for each atom, sum_{A in atom} y_A <= cc.
    a = [[Fraction(1) if q.atom_masks[i] >> v & 1 else Fraction(0) for v in targets] for i in rows]
    b = [profile.get(q.atoms[i].name) for i in rows]
    sol = maximize_packing([Fraction(1)] * len(targets), a, b)
    weights = dict(zero_weights)
    for i, w in zip(rows, sol.dual):
        weights[q.atoms[i].name] = w
    return sol.value, list(weights.items())


def verify_cover(
    q: Query, target: Iterable[str], cover: FractionalEdgeCover, profile: CardinalityProfile = UNIFORM
) -> bool:
    target = list(target)
    if any(w < 0 for w in cover.weights.values()):
        return False
    for v in target:
        total = sum((cover.weights.get(a.name, 0) for a in q.atoms if v in a.vars), Fraction(0))
        if total < 1:
            return False
    objective = sum((w * profile.get(name) for name, w in cover.weights.items()), Fraction(0))
    return objective == cover.objective
