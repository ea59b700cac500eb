"""Concrete DSL definitions: grammar, operators, witnesses, ranking, pools.

Each domain module exposes a `make_domain()` factory returning a Domain
bundle; `get_domain(name)` is the registry the session layer and CLI use.
"""

from dataclasses import dataclass, field
from typing import Callable

from ..engine import LearnConfig
from ..grammar import Grammar
from ..vsa import Ranking

__all__ = ["Domain", "get_domain", "domain_names"]


@dataclass
class Domain:
    name: str
    grammar: Grammar
    output_symbol: str
    witnesses: dict
    ranking: Ranking
    config: LearnConfig
    build_pools: Callable
    make_state: Callable
    refiners: tuple = ()
    input_names: tuple = ("vs",)
    extras: dict = field(default_factory=dict)


def domain_names() -> tuple:
    return ("flashfill", "flashsplit", "extract")


def get_domain(name: str) -> Domain:
    if name == "flashfill":
        from . import flashfill
        return flashfill.make_domain()
    if name == "flashsplit":
        from . import flashsplit
        return flashsplit.make_domain()
    if name == "extract":
        from . import extract
        return extract.make_domain()
    raise KeyError(f"unknown domain {name!r}")
