"""Named example queries and plans shipped with the package."""

from __future__ import annotations

import os
from importlib import resources

from ..plans import Plan, loads_plan
from ..query import Query, parse_query


def _dir():
    return resources.files(__name__)


def query_names() -> list[str]:
    return sorted(p.name[:-4] for p in _dir().iterdir() if p.name.endswith(".spq"))


def plan_names() -> list[str]:
    return sorted(p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".json"))


def query_text(name: str) -> str:
    return (_dir() / f"{name}.spq").read_text(encoding="utf-8")


def load_query(name: str) -> Query:
    return parse_query(query_text(name))


def load_plan(name: str) -> Plan:
    return loads_plan((_dir() / f"{name}.json").read_text(encoding="utf-8"))


def resolve_query(ref: str) -> str:
    """Text of ``ref``: a file path if one exists, otherwise a fixture name."""
    if os.path.exists(ref):
        with open(ref, encoding="utf-8") as fh:
            return fh.read()
    if ref in query_names():
        return query_text(ref)
    raise FileNotFoundError(f"no query file or fixture named {ref!r}")


def resolve_plan(ref: str) -> str:
    if os.path.exists(ref):
        with open(ref, encoding="utf-8") as fh:
            return fh.read()
    if ref in plan_names():
        return (_dir() / f"{ref}.json").read_text(encoding="utf-8")
    raise FileNotFoundError(f"no plan file or fixture named {ref!r}")
