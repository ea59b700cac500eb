"""Program ASTs: immutable, hashable, comparable by structure.

A program is one of Literal, VarRef, OperatorApp, LetBind, LambdaAbs.
Evaluation lives in operators.py; this module is pure structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .values import Value, StrV, IntV, BoolV, RegexV

__all__ = ["Program", "Literal", "VarRef", "OperatorApp", "LetBind",
           "LambdaAbs", "free_vars", "program_text", "walk"]


@dataclass(frozen=True)
class Literal:
    value: Value


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class OperatorApp:
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class LetBind:
    name: str
    binding: "Program"
    body: "Program"


@dataclass(frozen=True)
class LambdaAbs:
    param: str
    body: "Program"


Program = Union[Literal, VarRef, OperatorApp, LetBind, LambdaAbs]


def free_vars(p: Program) -> frozenset:
    if isinstance(p, Literal):
        return frozenset()
    if isinstance(p, VarRef):
        return frozenset((p.name,))
    if isinstance(p, OperatorApp):
        out: frozenset = frozenset()
        for a in p.args:
            out |= free_vars(a)
        return out
    if isinstance(p, LetBind):
        return free_vars(p.binding) | (free_vars(p.body) - {p.name})
    if isinstance(p, LambdaAbs):
        return free_vars(p.body) - {p.param}
    raise TypeError(f"not a program: {p!r}")


def walk(p: Program):
    """Yield every node of the AST, preorder."""
    yield p
    if isinstance(p, OperatorApp):
        for a in p.args:
            yield from walk(a)
    elif isinstance(p, LetBind):
        yield from walk(p.binding)
        yield from walk(p.body)
    elif isinstance(p, LambdaAbs):
        yield from walk(p.body)


def _lit_text(v: Value) -> str:
    if isinstance(v, StrV):
        return repr(v.text)
    if isinstance(v, IntV):
        return str(v.value)
    if isinstance(v, BoolV):
        return "true" if v.value else "false"
    if isinstance(v, RegexV):
        return f"/{v.source}/"
    return repr(v)


def program_text(p: Program) -> str:
    """Human-readable rendering, used by previews and the CLI."""
    if isinstance(p, Literal):
        return _lit_text(p.value)
    if isinstance(p, VarRef):
        return p.name
    if isinstance(p, OperatorApp):
        inner = ", ".join(program_text(a) for a in p.args)
        return f"{p.op}({inner})"
    if isinstance(p, LetBind):
        return (f"let {p.name} = {program_text(p.binding)} "
                f"in {program_text(p.body)}")
    if isinstance(p, LambdaAbs):
        return f"λ{p.param} . {program_text(p.body)}"
    raise TypeError(f"not a program: {p!r}")
