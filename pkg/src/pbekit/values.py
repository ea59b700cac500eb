"""Runtime values, semantic types, and evaluation states.

Everything here is immutable and hashable so values can key caches,
cluster maps, and constraint specs. Regions compare by (doc, start, end);
the document text rides along for slicing but never takes part in
equality. Regexes compare by source text, not by compiled behaviour.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

__all__ = [
    "Value", "StrV", "IntV", "BoolV", "RegexV", "RegionV", "ListV", "TupleV",
    "TreeV", "SemType", "T_STR", "T_INT", "T_BOOL", "T_REGEX", "T_REGION",
    "T_TREE", "list_of", "tuple_of", "lambda_of", "State",
    "value_to_json", "value_from_json", "value_sort_key", "type_of",
]


# ---------------------------------------------------------------------------
# values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrV:
    text: str


@dataclass(frozen=True)
class IntV:
    value: int


@dataclass(frozen=True)
class BoolV:
    value: bool


@dataclass(frozen=True)
class RegexV:
    """A token regex. Equality is by source text."""
    source: str

    def compiled(self) -> "re.Pattern[str]":
        return _compile(self.source)


@dataclass(frozen=True)
class RegionV:
    """Half-open span [start, end) into a named document.

    Regions from different documents never compare equal because the doc
    id participates in equality. `text` is the full document content and
    is carried for slicing only.
    """
    doc: str
    start: int
    end: int
    text: str = field(default="", compare=False, repr=False)

    def slice(self) -> str:
        return self.text[self.start:self.end]

    def sub(self, start: int, end: int) -> "RegionV":
        """Child region at absolute document offsets."""
        return RegionV(self.doc, start, end, self.text)

    def __hash__(self) -> int:
        h = self.__dict__.get("_h")
        if h is None:
            h = hash((self.doc, self.start, self.end))
            object.__setattr__(self, "_h", h)
        return h


@dataclass(frozen=True)
class ListV:
    items: tuple = ()

    def __hash__(self) -> int:
        h = self.__dict__.get("_h")
        if h is None:
            h = hash(self.items)
            object.__setattr__(self, "_h", h)
        return h


@dataclass(frozen=True)
class TupleV:
    items: tuple = ()

    def __hash__(self) -> int:
        h = self.__dict__.get("_h")
        if h is None:
            h = hash(self.items)
            object.__setattr__(self, "_h", h)
        return h


@dataclass(frozen=True)
class TreeV:
    """Extraction output tree.

    kind == "record": entries is ((field_name, TreeV), ...)
    kind == "seq":    entries is (TreeV, ...), label is the sequence id
    kind == "leaf":   region holds the extracted span
    """
    kind: str
    label: str = ""
    entries: tuple = ()
    region: Optional[RegionV] = None


Value = Union[StrV, IntV, BoolV, RegexV, RegionV, ListV, TupleV, TreeV]

_REGEX_CACHE: dict[str, "re.Pattern[str]"] = {}


def _compile(source: str) -> "re.Pattern[str]":
    pat = _REGEX_CACHE.get(source)
    if pat is None:
        pat = re.compile(source)
        _REGEX_CACHE[source] = pat
    return pat


# ---------------------------------------------------------------------------
# semantic types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemType:
    kind: str
    params: tuple = ()

    def __str__(self) -> str:
        if not self.params:
            return self.kind
        inner = ", ".join(str(p) for p in self.params)
        return f"{self.kind}[{inner}]"


T_STR = SemType("str")
T_INT = SemType("int")
T_BOOL = SemType("bool")
T_REGEX = SemType("regex")
T_REGION = SemType("region")
T_TREE = SemType("tree")


def list_of(t: SemType) -> SemType:
    return SemType("list", (t,))


def tuple_of(*ts: SemType) -> SemType:
    return SemType("tuple", tuple(ts))


def lambda_of(param: SemType, result: SemType) -> SemType:
    return SemType("lambda", (param, result))


def type_of(v: Value) -> SemType:
    """Runtime type of a value. Empty containers get element type 'any'."""
    if isinstance(v, StrV):
        return T_STR
    if isinstance(v, IntV):
        return T_INT
    if isinstance(v, BoolV):
        return T_BOOL
    if isinstance(v, RegexV):
        return T_REGEX
    if isinstance(v, RegionV):
        return T_REGION
    if isinstance(v, TreeV):
        return T_TREE
    if isinstance(v, ListV):
        inner = type_of(v.items[0]) if v.items else SemType("any")
        return SemType("list", (inner,))
    if isinstance(v, TupleV):
        return SemType("tuple", tuple(type_of(x) for x in v.items))
    raise TypeError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

class State:
    """Immutable variable binding used as the sigma of a spec pair.

    Hashable so specs and cluster caches can key on it. Iteration order is
    the sorted variable name order, which keeps every downstream artifact
    deterministic.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, bindings: Union[dict, tuple, "State", None] = None, **more: Value):
        if isinstance(bindings, State):
            merged = dict(bindings._items)
        elif isinstance(bindings, dict):
            merged = dict(bindings)
        elif isinstance(bindings, tuple):
            merged = dict(bindings)
        elif bindings is None:
            merged = {}
        else:
            raise TypeError(f"bad state init: {bindings!r}")
        merged.update(more)
        self._items = tuple(sorted(merged.items()))
        self._hash = hash(self._items)

    def get(self, name: str) -> Optional[Value]:
        for k, v in self._items:
            if k == name:
                return v
        return None

    def extend(self, name: str, value: Value) -> "State":
        d = dict(self._items)
        d[name] = value
        return State(d)

    def names(self) -> tuple:
        return tuple(k for k, _ in self._items)

    def items(self) -> tuple:
        return self._items

    def __contains__(self, name: str) -> bool:
        return any(k == name for k, _ in self._items)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, State) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self._items)
        return f"State({inner})"


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def value_to_json(v: Value) -> dict:
    if isinstance(v, StrV):
        return {"t": "str", "v": v.text}
    if isinstance(v, IntV):
        return {"t": "int", "v": v.value}
    if isinstance(v, BoolV):
        return {"t": "bool", "v": v.value}
    if isinstance(v, RegexV):
        return {"t": "regex", "v": v.source}
    if isinstance(v, RegionV):
        return {"t": "region", "v": {"doc": v.doc, "start": v.start, "end": v.end}}
    if isinstance(v, ListV):
        return {"t": "list", "v": [value_to_json(x) for x in v.items]}
    if isinstance(v, TupleV):
        return {"t": "tuple", "v": [value_to_json(x) for x in v.items]}
    if isinstance(v, TreeV):
        return {"t": "tree", "v": _tree_to_json(v)}
    raise TypeError(f"not a value: {v!r}")


def _tree_to_json(t: TreeV) -> dict:
    if t.kind == "leaf":
        assert t.region is not None
        return {"kind": "leaf", "region": value_to_json(t.region)["v"]}
    if t.kind == "seq":
        return {"kind": "seq", "id": t.label,
                "children": [_tree_to_json(c) for c in t.entries]}
    if t.kind == "record":
        return {"kind": "record",
                "fields": {name: _tree_to_json(c) for name, c in t.entries}}
    raise ValueError(f"bad tree kind {t.kind!r}")


def value_from_json(obj: dict, docs: Optional[dict] = None) -> Value:
    """Decode a wire value. `docs` maps doc id -> full text so regions can slice."""
    tag, payload = obj["t"], obj["v"]
    if tag == "str":
        return StrV(payload)
    if tag == "int":
        return IntV(int(payload))
    if tag == "bool":
        return BoolV(bool(payload))
    if tag == "regex":
        return RegexV(payload)
    if tag == "region":
        text = (docs or {}).get(payload["doc"], "")
        return RegionV(payload["doc"], payload["start"], payload["end"], text)
    if tag == "list":
        return ListV(tuple(value_from_json(x, docs) for x in payload))
    if tag == "tuple":
        return TupleV(tuple(value_from_json(x, docs) for x in payload))
    if tag == "tree":
        return _tree_from_json(payload, docs)
    raise ValueError(f"bad value tag {tag!r}")


def _tree_from_json(obj: dict, docs: Optional[dict]) -> TreeV:
    kind = obj["kind"]
    if kind == "leaf":
        r = obj["region"]
        text = (docs or {}).get(r["doc"], "")
        return TreeV("leaf", region=RegionV(r["doc"], r["start"], r["end"], text))
    if kind == "seq":
        return TreeV("seq", label=obj.get("id", ""),
                     entries=tuple(_tree_from_json(c, docs) for c in obj["children"]))
    if kind == "record":
        return TreeV("record", entries=tuple(
            (name, _tree_from_json(c, docs)) for name, c in obj["fields"].items()))
    raise ValueError(f"bad tree kind {kind!r}")


# ---------------------------------------------------------------------------
# ordering
# ---------------------------------------------------------------------------

_TAG_ORDER = {"bool": 0, "int": 1, "str": 2, "regex": 3, "region": 4,
              "tuple": 5, "list": 6, "tree": 7}


def value_sort_key(v: Value):
    """Total order over values; cluster iteration sorts by this."""
    if isinstance(v, BoolV):
        return (0, v.value)
    if isinstance(v, IntV):
        return (1, v.value)
    if isinstance(v, StrV):
        return (2, v.text)
    if isinstance(v, RegexV):
        return (3, v.source)
    if isinstance(v, RegionV):
        return (4, v.doc, v.start, v.end)
    if isinstance(v, TupleV):
        return (5, tuple(value_sort_key(x) for x in v.items))
    if isinstance(v, ListV):
        return (6, tuple(value_sort_key(x) for x in v.items))
    if isinstance(v, TreeV):
        return (7, _tree_key(v))
    raise TypeError(f"not a value: {v!r}")


def _tree_key(t: TreeV):
    if t.kind == "leaf":
        assert t.region is not None
        return ("leaf", t.region.doc, t.region.start, t.region.end)
    if t.kind == "seq":
        return ("seq", t.label, tuple(_tree_key(c) for c in t.entries))
    return ("record", tuple((n, _tree_key(c)) for n, c in t.entries))
