"""K-relations, databases, sorted trie indexes, and TSV input/output."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence, TextIO

from .query import Query
from .semiring import Semiring


class DataMismatch(ValueError):
    """The database does not fit the query (missing relation, wrong arity, bad value)."""


class KRelation:
    """Finite-support map from tuples over ``schema`` to nonzero semiring values."""

    __slots__ = ("schema", "entries")

    def __init__(self, schema: Sequence[str], entries: Mapping[tuple, Any] | None = None):
        self.schema = tuple(schema)
        self.entries = dict(entries) if entries else {}

    @classmethod
    def from_pairs(cls, schema: Sequence[str], pairs: Iterable[tuple[tuple, Any]], k: Semiring) -> "KRelation":
        """Build from (tuple, value) pairs, merging duplicates with plus and dropping zeros."""
        acc: dict[tuple, Any] = {}
        plus = k.plus
        for t, v in pairs:
            t = tuple(t)
            if t in acc:
                acc[t] = plus(acc[t], v)
            else:
                acc[t] = v
        return cls(schema, {t: v for t, v in acc.items() if not k.is_zero(v)})

    def __len__(self) -> int:
        return len(self.entries)

    def __repr__(self) -> str:
        return f"KRelation({self.schema}, {len(self.entries)} entries)"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KRelation) and self.schema == other.schema and self.entries == other.entries

    def reorder(self, schema: Sequence[str]) -> "KRelation":
        schema = tuple(schema)
        if schema == self.schema:
            return self
        if sorted(schema) != sorted(self.schema):
            raise ValueError(f"{schema} is not a permutation of {self.schema}")
        pos = [self.schema.index(v) for v in schema]
        return KRelation(schema, {tuple(t[p] for p in pos): v for t, v in self.entries.items()})

    def scalar(self, k: Semiring) -> Any:
        """Value of a 0-ary relation (zero when empty)."""
        if self.schema:
            raise ValueError("not a scalar relation")
        return self.entries.get((), k.zero)


def relations_equal(a: KRelation, b: KRelation, k: Semiring) -> bool:
    """Equality up to column order, with the semiring's comparison (tolerant for reals)."""
    if sorted(a.schema) != sorted(b.schema):
        return False
    b = b.reorder(a.schema)
    if a.entries.keys() != b.entries.keys():
        return False
    return all(k.equal(v, b.entries[t]) for t, v in a.entries.items())


@dataclass
class Database:
    relations: dict[str, KRelation]
    # Decoded domain values, indexed by encoded id; None when ids are the values themselves.
    dictionary: list[str] | None = None
    _indexes: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return sum(len(r) for r in self.relations.values())

    def check(self, q: Query) -> None:
        for a in q.atoms:
            rel = self.relations.get(a.name)
            if rel is None:
                raise DataMismatch(f"no relation named {a.name}")
            if len(rel.schema) != len(a.vars):
                raise DataMismatch(f"relation {a.name} has arity {len(rel.schema)}, atom {a} expects {len(a.vars)}")

    def decode(self, value: int) -> Any:
        if self.dictionary is None:
            return value
        return self.dictionary[value]

    def index(self, name: str, columns: tuple[int, ...]) -> "TrieIndex":
        """Shared index over relation ``name`` with columns in the given order."""
        key = (name, columns)
        idx = self._indexes.get(key)
        if idx is None:
            idx = self._indexes[key] = _build(self.relations[name], columns)
        return idx


class TrieIndex:
    """Sorted trie of a relation under a column permutation.

    ``levels[d]`` maps each length-``d`` prefix to the sorted tuple of values the
    next column takes under it; ``leaf`` maps full permuted tuples to values.
    ``member[d]`` is the dict whose keys are exactly the length-``d`` prefixes
    present, for ``1 <= d <= arity``.
    """

    __slots__ = ("relation", "perm", "columns", "levels", "leaf", "member", "cells")

    def __init__(self, relation, perm, columns, levels, leaf):
        self.relation = relation
        self.perm = perm
        self.columns = columns
        self.levels = levels
        self.leaf = leaf
        self.member = [None] + levels[1:] + [leaf]
        self.cells = sum(len(ch) for lvl in levels for ch in lvl.values()) + len(leaf)

    def __iter__(self) -> Iterator[tuple[tuple, Any]]:
        return iter(self.leaf.items())


def _build(rel: KRelation, columns: tuple[int, ...]) -> TrieIndex:
    arity = len(rel.schema)
    if sorted(columns) != list(range(arity)):
        raise ValueError(f"{columns} is not a permutation of the columns of {rel.schema}")
    rows = sorted((tuple(t[c] for c in columns), v) for t, v in rel.entries.items())
    levels: list[dict] = [{} for _ in range(arity)]
    for t, _ in rows:
        for d in range(arity):
            p = t[:d]
            lst = levels[d].get(p)
            if lst is None:
                levels[d][p] = [t[d]]
            elif lst[-1] != t[d]:
                lst.append(t[d])
    levels = [{p: tuple(ch) for p, ch in lvl.items()} for lvl in levels]
    perm = tuple(rel.schema[c] for c in columns)
    return TrieIndex(rel, perm, columns, levels, dict(rows))


def build_index(rel: KRelation, perm: Sequence[str]) -> TrieIndex:
    perm = tuple(perm)
    if sorted(perm) != sorted(rel.schema) or len(set(perm)) != len(perm):
        raise ValueError(f"{perm} is not a permutation of {rel.schema}")
    return _build(rel, tuple(rel.schema.index(v) for v in perm))


def restricted_support(idx: TrieIndex, prefix: Sequence[Any], next_attr: str) -> Iterator[Any]:
    prefix = tuple(prefix)
    d = len(prefix)
    if d >= len(idx.perm) or idx.perm[d] != next_attr:
        raise ValueError(f"{next_attr} is not the attribute after prefix of length {d} in {idx.perm}")
    return iter(idx.levels[d].get(prefix, ()))


def kjoin(a: KRelation, b: KRelation, k: Semiring) -> KRelation:
    shared = [v for v in a.schema if v in b.schema]
    extra = [v for v in b.schema if v not in a.schema]
    ia = [a.schema.index(v) for v in shared]
    ib = [b.schema.index(v) for v in shared]
    ie = [b.schema.index(v) for v in extra]
    groups: dict[tuple, list] = {}
    for t, v in b.entries.items():
        groups.setdefault(tuple(t[i] for i in ib), []).append((tuple(t[i] for i in ie), v))
    out: dict[tuple, Any] = {}
    times = k.times
    for t, v in a.entries.items():
        for rest, w in groups.get(tuple(t[i] for i in ia), ()):
            val = times(v, w)
            if not k.is_zero(val):
                out[t + rest] = val
    return KRelation(a.schema + tuple(extra), out)


def marginalize(r: KRelation, keep: Iterable[str], k: Semiring) -> KRelation:
    keep = set(keep)
    if not keep <= set(r.schema):
        raise ValueError(f"{sorted(keep)} is not a subset of {r.schema}")
    schema = tuple(v for v in r.schema if v in keep)
    pos = [r.schema.index(v) for v in schema]
    return KRelation.from_pairs(schema, ((tuple(t[p] for p in pos), v) for t, v in r.entries.items()), k)


# ---------------------------------------------------------------- TSV


def _is_header(cells: list[str]) -> bool:
    return bool(cells) and cells[-1] == "#value"


def read_tsv(
    stream: TextIO, arity: int, k: Semiring, encode, *, name: str = "relation"
) -> list[tuple[tuple, Any]]:
    pairs = []
    has_value = None
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        cells = line.split("\t")
        if has_value is None and _is_header(cells):
            has_value = True
            if len(cells) - 1 != arity:
                raise DataMismatch(f"{name}: header has {len(cells) - 1} columns, expected {arity}")
            continue
        if line.startswith("#"):
            continue
        if has_value is None:
            # Without a header, an extra trailing column carries the value.
            has_value = len(cells) == arity + 1
        width = arity + 1 if has_value else arity
        if len(cells) != width:
            raise DataMismatch(f"{name}:{lineno}: expected {width} columns, got {len(cells)}")
        try:
            value = k.parse(cells[-1]) if has_value else k.one
        except ValueError as exc:
            raise DataMismatch(f"{name}:{lineno}: {exc}") from None
        pairs.append((tuple(encode(c) for c in cells[:arity]), value))
    return pairs


class Encoder:
    """Dictionary-encodes domain strings to dense ids in order of first appearance."""

    def __init__(self):
        self.ids: dict[str, int] = {}
        self.values: list[str] = []

    def __call__(self, s: str) -> int:
        got = self.ids.get(s)
        if got is None:
            got = self.ids[s] = len(self.values)
            self.values.append(s)
        return got


def load_database(directory: str, q: Query, k: Semiring) -> Database:
    enc = Encoder()
    rels = {}
    for atom in q.atoms:
        path = os.path.join(directory, f"{atom.name}.tsv")
        if not os.path.exists(path):
            raise DataMismatch(f"missing data file {path}")
        with open(path, encoding="utf-8") as fh:
            pairs = read_tsv(fh, len(atom.vars), k, enc, name=path)
        rels[atom.name] = KRelation.from_pairs(atom.vars, pairs, k)
    return Database(rels, enc.values)


def format_tsv(rel: KRelation, k: Semiring, decode=None) -> str:
    out = io.StringIO()
    write_tsv(rel, out, k, decode)
    return out.getvalue()


def write_tsv(rel: KRelation, stream: TextIO, k: Semiring, decode=None) -> None:
    dec = decode or (lambda v: v)
    stream.write("\t".join(list(rel.schema) + ["#value"]) + "\n")
    rows = sorted(rel.entries.items(), key=lambda kv: tuple(str(dec(x)) for x in kv[0]))
    for t, v in rows:
        stream.write("\t".join([str(dec(x)) for x in t] + [k.format(v)]) + "\n")


def save_database(db: Database, q: Query, directory: str, k: Semiring) -> None:
    os.makedirs(directory, exist_ok=True)
    for atom in q.atoms:
        rel = db.relations[atom.name]
        with open(os.path.join(directory, f"{atom.name}.tsv"), "w", encoding="utf-8") as fh:
            write_tsv(KRelation(atom.vars, rel.entries), fh, k, db.decode if db.dictionary else None)
