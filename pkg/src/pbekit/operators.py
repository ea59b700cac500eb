"""Operator registry, evaluator, and type checker.

Operators come in three implementation flavours:

  simple  -- eval all args, apply a value function
  higher  -- one lambda-typed parameter; the registry stores how the
             operator feeds bindings to the lambda and how it recombines
             the per-binding outputs (the clustering machinery reuses
             exactly these two hooks)
  select  -- lazy control flow: the first argument picks which remaining
             argument is evaluated (ITE); untaken branches never run

Evaluation failures raise EvalError subclasses; constraint satisfaction
folds them to False.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .errors import (ArityMismatch, DomainError, TypeMismatch,
                     UnboundVariable, UnknownOperator)
from .programs import (LambdaAbs, LetBind, Literal, OperatorApp, Program,
                       VarRef)
from .values import SemType, State, Value, type_of

__all__ = ["OpSig", "Operators", "Closure", "evaluate", "typecheck",
           "types_compatible"]


@dataclass(frozen=True)
class OpSig:
    params: tuple
    result: SemType


@dataclass(frozen=True)
class Closure:
    """Runtime value of a lambda; only higher-order operators see these."""
    param: str
    body: Program
    env: State


class Operators:
    """Mutable registry a domain fills in once at import time."""

    def __init__(self) -> None:
        self.sigs: dict[str, OpSig] = {}
        self.simple: dict[str, Callable] = {}
        # op -> (lambda arg index, feed(args)->list[Value], combine(args, outs)->Value)
        self.higher: dict[str, tuple] = {}
        # op -> select(first_value)->arg index to evaluate and return
        self.select: dict[str, Callable] = {}

    def define(self, name: str, params: tuple, result: SemType,
               fn: Optional[Callable] = None) -> None:
        self.sigs[name] = OpSig(tuple(params), result)
        if fn is not None:
            self.simple[name] = fn

    def define_higher(self, name: str, params: tuple, result: SemType,
                      lambda_index: int, feed: Callable, combine: Callable) -> None:
        self.sigs[name] = OpSig(tuple(params), result)
        self.higher[name] = (lambda_index, feed, combine)

    def define_select(self, name: str, params: tuple, result: SemType,
                      select: Callable) -> None:
        self.sigs[name] = OpSig(tuple(params), result)
        self.select[name] = select

    def merged_with(self, other: "Operators") -> "Operators":
        out = Operators()
        for src in (self, other):
            out.sigs.update(src.sigs)
            out.simple.update(src.simple)
            out.higher.update(src.higher)
            out.select.update(src.select)
        return out


def evaluate(p: Program, state: State, ops: Operators) -> Value:
    """Evaluate a closed program on a state. Raises EvalError on failure."""
    if isinstance(p, Literal):
        return p.value
    if isinstance(p, VarRef):
        v = state.get(p.name)
        if v is None:
            raise UnboundVariable(p.name)
        return v
    if isinstance(p, LetBind):
        bound = evaluate(p.binding, state, ops)
        return evaluate(p.body, state.extend(p.name, bound), ops)
    if isinstance(p, LambdaAbs):
        return Closure(p.param, p.body, state)  # type: ignore[return-value]
    if isinstance(p, OperatorApp):
        return _apply(p, state, ops)
    raise TypeMismatch(f"not a program: {p!r}")


def apply_closure(c: Closure, arg: Value, ops: Operators) -> Value:
    return evaluate(c.body, c.env.extend(c.param, arg), ops)


def _apply(p: OperatorApp, state: State, ops: Operators) -> Value:
    name = p.op
    sig = ops.sigs.get(name)
    if sig is None:
        raise UnknownOperator(name)
    if len(p.args) != len(sig.params):
        raise ArityMismatch(f"{name}: {len(p.args)} args, wants {len(sig.params)}")

    if name in ops.select:
        first = evaluate(p.args[0], state, ops)
        idx = ops.select[name](first)
        return evaluate(p.args[idx], state, ops)

    if name in ops.higher:
        lam_idx, feed, combine = ops.higher[name]
        vals: list = []
        for i, a in enumerate(p.args):
            vals.append(None if i == lam_idx else evaluate(a, state, ops))
        clo = evaluate(p.args[lam_idx], state, ops)
        if not isinstance(clo, Closure):
            raise TypeMismatch(f"{name}: argument {lam_idx} must be a lambda")
        bindings = feed(vals)
        outs = [apply_closure(clo, b, ops) for b in bindings]
        return combine(vals, outs)

    fn = ops.simple.get(name)
    if fn is None:
        raise UnknownOperator(f"{name} has no implementation")
    vals = [evaluate(a, state, ops) for a in p.args]
    return fn(vals)


# ---------------------------------------------------------------------------
# type checking
# ---------------------------------------------------------------------------

def types_compatible(a: SemType, b: SemType) -> bool:
    if a.kind == "any" or b.kind == "any":
        return True
    if a.kind != b.kind or len(a.params) != len(b.params):
        return False
    return all(types_compatible(x, y) for x, y in zip(a.params, b.params))


def typecheck(p: Program, env: dict, ops: Operators) -> SemType:
    """Infer the type of a program under an environment of variable types.

    Lambdas are checked against the expected parameter type of the
    operator they sit under; a bare lambda has no principal type here.
    """
    if isinstance(p, Literal):
        return type_of(p.value)
    if isinstance(p, VarRef):
        if p.name not in env:
            raise UnboundVariable(p.name)
        return env[p.name]
    if isinstance(p, LetBind):
        bt = typecheck(p.binding, env, ops)
        inner = dict(env)
        inner[p.name] = bt
        return typecheck(p.body, inner, ops)
    if isinstance(p, LambdaAbs):
        raise TypeMismatch("lambda outside an operator argument position")
    if isinstance(p, OperatorApp):
        sig = ops.sigs.get(p.op)
        if sig is None:
            raise UnknownOperator(p.op)
        if len(p.args) != len(sig.params):
            raise ArityMismatch(p.op)
        for want, arg in zip(sig.params, p.args):
            if want.kind == "lambda":
                if not isinstance(arg, LambdaAbs):
                    raise TypeMismatch(f"{p.op}: expected a lambda")
                inner = dict(env)
                inner[arg.param] = want.params[0]
                got = typecheck(arg.body, inner, ops)
                if not types_compatible(got, want.params[1]):
                    raise TypeMismatch(f"{p.op}: lambda body is {got}, wants {want.params[1]}")
            else:
                got = typecheck(arg, env, ops)
                if not types_compatible(got, want):
                    raise TypeMismatch(f"{p.op}: argument is {got}, wants {want}")
        return sig.result
    raise TypeMismatch(f"not a program: {p!r}")
