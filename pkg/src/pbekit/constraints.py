"""Constraint vocabulary, refinement taxonomy, and satisfaction.

A spec is a list of (State, Constraint) pairs with conjunction semantics:
a program satisfies the spec iff it satisfies every pair, and a program
that fails to evaluate on some pair's state does not satisfy that pair.

The refinement category drives the incremental dispatcher:

  definitive         Equals Member Prefix Subsequence
  locally_refining   Datatype Provenance Relevance
  globally_refining  NotEquals NotContains NotDatatype FalseC

Split positions: FlashSplit encodes a split position as a boundary
offset. When a Subsequence/NotContains payload is all ints and the
output is a list of regions, the pair is checked against the endpoints
of the delimiter gaps (the spans between consecutive fields), not
against list elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .errors import EvalError
from .operators import Operators, evaluate
from .programs import (LetBind, Literal, OperatorApp, Program, VarRef, walk)
from .values import (IntV, ListV, RegionV, SemType, State, StrV, TupleV,
                     Value, type_of, value_from_json, value_to_json)

__all__ = ["Equals", "Member", "Prefix", "Subsequence", "Datatype",
           "Provenance", "Relevance", "NotEquals", "NotContains",
           "NotDatatype", "FalseC", "Constraint", "Spec", "NamedSpec",
           "category", "DEFINITIVE", "LOCALLY_REFINING", "GLOBALLY_REFINING",
           "register_constraint",
           "satisfies", "constraint_holds", "conjoin", "spec_states",
           "split_positions", "references_column",
           "constraint_to_json", "constraint_from_json",
           "pair_to_json", "pair_from_json", "state_to_json", "state_from_json"]


@dataclass(frozen=True)
class Equals:
    value: Value


@dataclass(frozen=True)
class Member:
    values: tuple


@dataclass(frozen=True)
class Prefix:
    values: tuple


@dataclass(frozen=True)
class Subsequence:
    values: tuple


@dataclass(frozen=True)
class Datatype:
    sem_type: SemType


@dataclass(frozen=True)
class Provenance:
    """Output span [span) is copied from input column `column` at [loc)."""
    span: tuple
    column: int
    loc: tuple


@dataclass(frozen=True)
class Relevance:
    """Input column must (required) or must not (not required) be read."""
    column: int
    required: bool


@dataclass(frozen=True)
class NotEquals:
    value: Value


@dataclass(frozen=True)
class NotContains:
    value: Value


@dataclass(frozen=True)
class NotDatatype:
    sem_type: SemType


@dataclass(frozen=True)
class FalseC:
    pass


Constraint = Union[Equals, Member, Prefix, Subsequence, Datatype, Provenance,
                   Relevance, NotEquals, NotContains, NotDatatype, FalseC]

# spec = tuple of (State, Constraint)
Spec = tuple


@dataclass(frozen=True)
class NamedSpec:
    """A spec addressed at a named subexpression of the current program:
    `field` is the user-facing field id, `symbol` the grammar symbol the
    field's programs derive from."""
    field: str
    symbol: str
    spec: Spec


DEFINITIVE = "definitive"
LOCALLY_REFINING = "locally_refining"
GLOBALLY_REFINING = "globally_refining"

_CATEGORY = {
    Equals: DEFINITIVE, Member: DEFINITIVE, Prefix: DEFINITIVE,
    Subsequence: DEFINITIVE,
    Datatype: LOCALLY_REFINING, Provenance: LOCALLY_REFINING,
    Relevance: LOCALLY_REFINING,
    NotEquals: GLOBALLY_REFINING, NotContains: GLOBALLY_REFINING,
    NotDatatype: GLOBALLY_REFINING, FalseC: GLOBALLY_REFINING,
}


# Domain-internal constraint kinds (never seen on the wire). A domain
# registers the class with its refinement category and an output-only
# holds(c, out, state) check; category() and constraint_holds() then
# treat it like any built-in kind.
_EXTRA_KINDS: dict = {}


def register_constraint(cls: type, cat: str, holds) -> None:
    _EXTRA_KINDS[cls] = (cat, holds)


def category(c: Constraint) -> str:
    got = _CATEGORY.get(type(c))
    if got is not None:
        return got
    extra = _EXTRA_KINDS.get(type(c))
    if extra is None:
        raise TypeError(f"not a constraint: {c!r}")
    return extra[0]


def conjoin(a: Spec, b: Spec) -> Spec:
    return tuple(a) + tuple(b)


def spec_states(spec: Spec) -> list:
    out = []
    for st, _ in spec:
        if st not in out:
            out.append(st)
    return out


# ---------------------------------------------------------------------------
# satisfaction
# ---------------------------------------------------------------------------

def _is_subsequence(needles: tuple, haystack: tuple) -> bool:
    it = iter(haystack)
    return all(any(x == y for y in it) for x in needles)


def split_positions(out: ListV, state: State) -> set:
    """Boundary offsets of the delimiter gaps between consecutive fields.

    The record extent comes from the (unique) region bound in the state.
    No delimiters means no positions.
    """
    record = None
    for _, v in state.items():
        if isinstance(v, RegionV):
            record = v
            break
    if record is None or not all(isinstance(f, RegionV) for f in out.items):
        return set()
    pos: set = set()
    prev = record.start
    for f in out.items:
        if f.start > prev:
            pos.add(prev)
            pos.add(f.start)
        prev = f.end
    if record.end > prev:
        pos.add(prev)
        pos.add(record.end)
    return pos


def _positional(payload: tuple, out: Value) -> bool:
    return (bool(payload)
            and all(isinstance(v, IntV) for v in payload)
            and isinstance(out, ListV)
            and all(isinstance(x, RegionV) for x in out.items))


def constraint_holds(c: Constraint, out: Value, state: State) -> bool:
    """Output-only constraint check (everything except Relevance and
    Provenance, which also inspect the program; see satisfies)."""
    if isinstance(c, Equals):
        return out == c.value
    if isinstance(c, Member):
        return out in c.values
    if isinstance(c, Prefix):
        if not isinstance(out, ListV):
            return False
        return tuple(out.items[:len(c.values)]) == tuple(c.values)
    if isinstance(c, Subsequence):
        if _positional(c.values, out):
            pos = split_positions(out, state)
            return all(v.value in pos for v in c.values)
        if not isinstance(out, ListV):
            return False
        return _is_subsequence(tuple(c.values), tuple(out.items))
    if isinstance(c, Datatype):
        return type_of(out) == c.sem_type
    if isinstance(c, NotDatatype):
        return type_of(out) != c.sem_type
    if isinstance(c, NotEquals):
        return out != c.value
    if isinstance(c, NotContains):
        if isinstance(c.value, IntV) and isinstance(out, ListV):
            return c.value.value not in split_positions(out, state)
        if isinstance(out, ListV):
            return c.value not in out.items
        if isinstance(out, StrV) and isinstance(c.value, StrV):
            return c.value.text not in out.text
        return True
    if isinstance(c, FalseC):
        return False
    if isinstance(c, (Relevance, Provenance)):
        raise TypeError(f"{type(c).__name__} needs the program; use satisfies()")
    extra = _EXTRA_KINDS.get(type(c))
    if extra is not None:
        return extra[1](c, out, state)
    raise TypeError(f"not a constraint: {c!r}")


def _kth_column(app: OperatorApp, state: State) -> Optional[int]:
    """Column index a Kth application reads, normalized to >= 0."""
    if app.op != "Kth" or len(app.args) != 2:
        return None
    k_arg = app.args[1]
    if not (isinstance(k_arg, Literal) and isinstance(k_arg.value, IntV)):
        return None
    k = k_arg.value.value
    vs_arg = app.args[0]
    n = None
    if isinstance(vs_arg, VarRef):
        v = state.get(vs_arg.name)
        if isinstance(v, ListV):
            n = len(v.items)
    if k >= 0:
        return k
    return None if n is None else k + n


def references_column(p: Program, column: int, state: State) -> bool:
    for node in walk(p):
        if isinstance(node, OperatorApp) and node.op == "Kth":
            if _kth_column(node, state) == column:
                return True
    return False


def _provenance_holds(c: Provenance, p: Program, out: Value, state: State,
                      ops: Operators) -> bool:
    i, j = c.span
    s, e = c.loc
    vs = None
    for _, v in state.items():
        if isinstance(v, ListV):
            vs = v
    if vs is None or not (0 <= c.column < len(vs.items)):
        return False
    cell = vs.items[c.column]
    if not (isinstance(cell, StrV) and isinstance(out, StrV)):
        return False
    if out.text[i:j] != cell.text[s:e]:
        return False
    # some SubStr over that column must extract exactly [s, e)
    for node in walk(p):
        if not (isinstance(node, LetBind) and isinstance(node.binding, OperatorApp)):
            continue
        if _kth_column(node.binding, state) != c.column:
            continue
        inner_state = state.extend(node.name, cell)
        for sub in walk(node.body):
            if isinstance(sub, OperatorApp) and sub.op == "SubStr" and len(sub.args) == 2:
                try:
                    pp = evaluate(sub.args[1], inner_state, ops)
                except EvalError:
                    continue
                if (isinstance(pp, TupleV) and len(pp.items) == 2
                        and pp.items == (IntV(s), IntV(e))):
                    return True
    return False


def satisfies(p: Program, spec: Spec, ops: Operators) -> bool:
    """P |= spec. Evaluation failure on any pair's state folds to False,
    except that syntax-only constraints (Relevance) do not run the program."""
    for state, c in spec:
        if isinstance(c, FalseC):
            return False
        if isinstance(c, Relevance):
            hit = references_column(p, c.column, state)
            if hit != c.required:
                return False
            continue
        try:
            out = evaluate(p, state, ops)
        except EvalError:
            return False
        if isinstance(c, Provenance):
            if not _provenance_holds(c, p, out, state, ops):
                return False
            continue
        if not constraint_holds(c, out, state):
            return False
    return True


# ---------------------------------------------------------------------------
# wire format
# ---------------------------------------------------------------------------

def _type_to_json(t: SemType) -> dict:
    return {"kind": t.kind, "params": [_type_to_json(p) for p in t.params]}


def _type_from_json(obj: dict) -> SemType:
    return SemType(obj["kind"], tuple(_type_from_json(p) for p in obj.get("params", [])))


def state_to_json(s: State) -> dict:
    return {name: value_to_json(v) for name, v in s.items()}


def state_from_json(obj: dict, docs: Optional[dict] = None) -> State:
    return State({name: value_from_json(v, docs) for name, v in obj.items()})


def constraint_to_json(c: Constraint) -> dict:
    if isinstance(c, Equals):
        return {"kind": "equals", "payload": value_to_json(c.value)}
    if isinstance(c, Member):
        return {"kind": "member", "payload": [value_to_json(v) for v in c.values]}
    if isinstance(c, Prefix):
        return {"kind": "prefix", "payload": [value_to_json(v) for v in c.values]}
    if isinstance(c, Subsequence):
        return {"kind": "subsequence", "payload": [value_to_json(v) for v in c.values]}
    if isinstance(c, Datatype):
        return {"kind": "datatype", "payload": _type_to_json(c.sem_type)}
    if isinstance(c, NotDatatype):
        return {"kind": "not_datatype", "payload": _type_to_json(c.sem_type)}
    if isinstance(c, Provenance):
        return {"kind": "provenance",
                "payload": {"span": list(c.span), "column": c.column, "loc": list(c.loc)}}
    if isinstance(c, Relevance):
        return {"kind": "relevance",
                "payload": {"column": c.column, "required": c.required}}
    if isinstance(c, NotEquals):
        return {"kind": "not_equals", "payload": value_to_json(c.value)}
    if isinstance(c, NotContains):
        return {"kind": "not_contains", "payload": value_to_json(c.value)}
    if isinstance(c, FalseC):
        return {"kind": "false", "payload": None}
    raise TypeError(f"not a constraint: {c!r}")


def constraint_from_json(obj: dict, docs: Optional[dict] = None) -> Constraint:
    kind, payload = obj["kind"], obj.get("payload")
    if kind == "equals":
        return Equals(value_from_json(payload, docs))
    if kind == "member":
        return Member(tuple(value_from_json(v, docs) for v in payload))
    if kind == "prefix":
        return Prefix(tuple(value_from_json(v, docs) for v in payload))
    if kind == "subsequence":
        return Subsequence(tuple(value_from_json(v, docs) for v in payload))
    if kind == "datatype":
        return Datatype(_type_from_json(payload))
    if kind == "not_datatype":
        return NotDatatype(_type_from_json(payload))
    if kind == "provenance":
        return Provenance(tuple(payload["span"]), payload["column"], tuple(payload["loc"]))
    if kind == "relevance":
        return Relevance(payload["column"], payload["required"])
    if kind == "not_equals":
        return NotEquals(value_from_json(payload, docs))
    if kind == "not_contains":
        return NotContains(value_from_json(payload, docs))
    if kind == "false":
        return FalseC()
    raise ValueError(f"bad constraint kind {kind!r}")


def pair_to_json(state: State, c: Constraint) -> dict:
    out = constraint_to_json(c)
    out["state"] = state_to_json(state)
    return out


def pair_from_json(obj: dict, docs: Optional[dict] = None) -> tuple:
    return (state_from_json(obj["state"], docs), constraint_from_json(obj, docs))
