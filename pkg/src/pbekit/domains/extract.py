"""Compound document extraction with step-based named-field synthesis.

A compound program extracts a tree of values from a text document: a
sequence of row regions selected line by line, optionally refined into a
record per row whose fields are substring selections inside the row.
Every field carries a user-chosen id; constraints arrive one field at a
time as named specs, and `ExtractSession.learn_named` splices the
relearned field into the compound space while reusing the sub-VSAs of
untouched fields.

Sub-DSLs:

  seq      := MapLines(lambda x -> Pair(pos, pos), lines)
  lines    := FilterInt(i0, k, flt)
  flt      := FilterPred(lambda s -> b, alllines)
  alllines := SplitLines(d)
  er       := SubRegion(d, lambda x -> pp)

`pp` and `pos` are the position-pair logic of the string-transformation
DSL, referenced through extern symbols; `b` is a token-occurrence
predicate over the shared token library.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..constraints import (DEFINITIVE, GLOBALLY_REFINING, Equals, Member,
                           NamedSpec, NotEquals, Prefix, Spec, Subsequence,
                           category, constraint_holds, satisfies)
from ..engine import LearnConfig, RuleWitness, learn as engine_learn
from ..errors import (DomainError, EmptyVsa, EvalError,
                      IncompatibleNamedConstraint, LearnError,
                      SymbolMismatch, TypeMismatch, WitnessMissing)
from ..grammar import (Apply, Grammar, LamArg, RuleDef, SymArg, SymbolDef,
                       VarArg)
from ..operators import Operators, evaluate
from ..programs import LambdaAbs, Literal, OperatorApp, Program
from ..values import (BoolV, IntV, ListV, RegexV, RegionV, State, StrV,
                      TreeV, TupleV, T_BOOL, T_INT, T_REGEX, T_REGION,
                      T_STR, T_TREE, Value, lambda_of, list_of, tuple_of,
                      value_sort_key)
from ..vsa import Arena, Vsa, cluster_by_outputs, project, top_k
from . import Domain
from . import flashfill
from .tokens import EMPTY_TOKEN, POSITION_TOKENS, token_occurs

__all__ = ["make_domain", "make_grammar", "make_operators", "build_pools",
           "make_state", "split_lines", "ExtractRanking", "WITNESSES",
           "FieldEntry", "ExtractSession", "field_restriction",
           "tree_matches_shape", "ExtractTask", "Interaction",
           "simulate_user", "interaction_count"]


_I0_MAX = 4
_K_MAX = 4
_MAX_RECORD_FIELDS = 8
_ROUND_CAP = 50


# ---------------------------------------------------------------------------
# semantics helpers
# ---------------------------------------------------------------------------

def split_lines(d: RegionV) -> list:
    """Newline-delimited line regions of `d`, newlines excluded.

    Only the empty segment after a trailing newline is dropped; interior
    empty lines are kept.
    """
    text = d.slice()
    out = []
    pos = d.start
    for seg in text.split("\n"):
        out.append(RegionV(d.doc, pos, pos + len(seg), d.text))
        pos += len(seg) + 1
    if out and text.endswith("\n"):
        out.pop()
    return out


def _want_region(v: Value) -> RegionV:
    if not isinstance(v, RegionV):
        raise TypeMismatch(f"expected region, got {type(v).__name__}")
    return v


def _want_region_list(v: Value) -> ListV:
    if not isinstance(v, ListV) or not all(isinstance(x, RegionV)
                                           for x in v.items):
        raise TypeMismatch("expected a list of regions")
    return v


def _region_from_pair(line: RegionV, v: Value) -> RegionV:
    if (not isinstance(v, TupleV) or len(v.items) != 2
            or not all(isinstance(x, IntV) for x in v.items)):
        raise TypeMismatch("expected a position pair")
    i, j = v.items[0].value, v.items[1].value
    n = line.end - line.start
    if not 0 <= i <= j <= n:
        raise DomainError(f"pair [{i}, {j}) outside a {n}-char line")
    return RegionV(line.doc, line.start + i, line.start + j, line.text)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _split_lines_op(vs: list) -> ListV:
    return ListV(tuple(split_lines(_want_region(vs[0]))))


def _filter_int(vs: list) -> ListV:
    i0, k, xs = vs
    if not isinstance(i0, IntV) or not isinstance(k, IntV):
        raise TypeMismatch("FilterInt wants int bounds")
    if not isinstance(xs, ListV):
        raise TypeMismatch("FilterInt wants a list")
    if i0.value < 0 or k.value <= 0:
        raise DomainError(f"bad stride ({i0.value}, {k.value})")
    return ListV(tuple(xs.items[i0.value::k.value]))


def _filter_pred_feed(vals: list) -> list:
    xs = _want_region_list(vals[1])
    return [StrV(r.slice()) for r in xs.items]


def _filter_pred_combine(vals: list, outs: list) -> ListV:
    xs = _want_region_list(vals[1])
    kept = []
    for r, o in zip(xs.items, outs):
        if not isinstance(o, BoolV):
            raise TypeMismatch("predicate must return a bool")
        if o.value:
            kept.append(r)
    return ListV(tuple(kept))


def _map_lines_feed(vals: list) -> list:
    xs = _want_region_list(vals[1])
    return [StrV(r.slice()) for r in xs.items]


def _map_lines_combine(vals: list, outs: list) -> ListV:
    xs = _want_region_list(vals[1])
    return ListV(tuple(_region_from_pair(line, o)
                       for line, o in zip(xs.items, outs)))


def _sub_region_feed(vals: list) -> list:
    return [StrV(_want_region(vals[0]).slice())]


def _sub_region_combine(vals: list, outs: list) -> RegionV:
    return _region_from_pair(_want_region(vals[0]), outs[0])


def _sequence(vs: list) -> TreeV:
    label, xs = vs
    if not isinstance(label, StrV):
        raise TypeMismatch("Sequence wants a field id")
    entries = tuple(TreeV("leaf", region=r)
                    for r in _want_region_list(xs).items)
    return TreeV("seq", label=label.text, entries=entries)


def _map_rows_feed(vals: list) -> list:
    return list(_want_region_list(vals[2]).items)


def _map_rows_combine(vals: list, outs: list) -> TreeV:
    label = vals[0]
    if not isinstance(label, StrV):
        raise TypeMismatch("MapRows wants a field id")
    for o in outs:
        if not isinstance(o, TreeV):
            raise TypeMismatch("row body must build a tree")
    return TreeV("seq", label=label.text, entries=tuple(outs))


def _record_fn(n: int):
    def fn(vs: list) -> TreeV:
        entries = []
        for t in range(n):
            name, val = vs[2 * t], vs[2 * t + 1]
            if not isinstance(name, StrV):
                raise TypeMismatch("record field id must be a string")
            entries.append((name.text, TreeV("leaf",
                                             region=_want_region(val))))
        return TreeV("record", entries=tuple(entries))
    return fn


def make_operators() -> Operators:
    ops = flashfill.make_operators()
    t_pp = tuple_of(T_INT, T_INT)
    t_lines = list_of(T_REGION)
    ops.define("SplitLines", (T_REGION,), t_lines, _split_lines_op)
    ops.define("FilterInt", (T_INT, T_INT, t_lines), t_lines, _filter_int)
    ops.define_higher("FilterPred", (lambda_of(T_STR, T_BOOL), t_lines),
                      t_lines, 0, _filter_pred_feed, _filter_pred_combine)
    ops.define_higher("MapLines", (lambda_of(T_STR, t_pp), t_lines),
                      t_lines, 0, _map_lines_feed, _map_lines_combine)
    ops.define_higher("SubRegion", (T_REGION, lambda_of(T_STR, t_pp)),
                      T_REGION, 1, _sub_region_feed, _sub_region_combine)
    ops.define("Sequence", (T_STR, t_lines), T_TREE, _sequence)
    ops.define_higher("MapRows", (T_STR, lambda_of(T_REGION, T_TREE),
                                  t_lines), T_TREE, 1,
                      _map_rows_feed, _map_rows_combine)
    for n in range(1, _MAX_RECORD_FIELDS + 1):
        ops.define(f"Record{n}", (T_STR, T_REGION) * n, T_TREE,
                   _record_fn(n))
    return ops


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

def make_grammar(ops: Optional[Operators] = None) -> Grammar:
    ops = ops or make_operators()
    ff_g = flashfill.make_grammar(ops)
    t_pp = tuple_of(T_INT, T_INT)
    t_lines = list_of(T_REGION)
    g = Grammar("extract", ops)
    g.add_symbol(SymbolDef("d", T_REGION, "input"))
    g.add_symbol(SymbolDef("seq", t_lines, "nonterminal"))
    g.add_symbol(SymbolDef("lines", t_lines, "nonterminal"))
    g.add_symbol(SymbolDef("flt", t_lines, "nonterminal"))
    g.add_symbol(SymbolDef("alllines", t_lines, "nonterminal"))
    g.add_symbol(SymbolDef("er", T_REGION, "nonterminal"))
    g.add_symbol(SymbolDef("b", T_BOOL, "nonterminal"))
    g.add_symbol(SymbolDef("rl", T_REGEX, "terminal_open", generator="rl"))
    g.add_symbol(SymbolDef("i0s", T_INT, "terminal_annotated",
                           programs=tuple(Literal(IntV(i))
                                          for i in range(_I0_MAX + 1))))
    g.add_symbol(SymbolDef("ks", T_INT, "terminal_annotated",
                           programs=tuple(Literal(IntV(k))
                                          for k in range(1, _K_MAX + 1))))
    g.add_symbol(SymbolDef("xpp", t_pp, "extern", target=(ff_g, "pp")))

    g.add_rule(RuleDef("seq_maplines", "seq", t_lines,
                       Apply("MapLines", (LamArg("x", "xpp"),
                                          SymArg("lines")))))
    g.add_rule(RuleDef("lines_filterint", "lines", t_lines,
                       Apply("FilterInt", (SymArg("i0s"), SymArg("ks"),
                                           SymArg("flt")))))
    g.add_rule(RuleDef("flt_filterpred", "flt", t_lines,
                       Apply("FilterPred", (LamArg("s", "b"),
                                            SymArg("alllines")))))
    g.add_rule(RuleDef("alllines_split", "alllines", t_lines,
                       Apply("SplitLines", (VarArg("d"),))))
    g.add_rule(RuleDef("b_tok", "b", T_BOOL,
                       Apply("Matches", (VarArg("s"), SymArg("rl")))))
    g.add_rule(RuleDef("er_sub", "er", T_REGION,
                       Apply("SubRegion", (VarArg("d"),
                                           LamArg("x", "xpp")))))
    return g


# The compound layer is assembled join by join from these templates; the
# record template varies with the field count, so it is built on demand.

_SEQ_RULE = RuleDef("E_seq", "E", T_TREE,
                    Apply("Sequence", (SymArg("fid"), SymArg("seq"))))
_ROWS_RULE = RuleDef("E_rows", "E", T_TREE,
                     Apply("MapRows", (SymArg("fid"), LamArg("d", "Erec"),
                                       SymArg("seq"))))


def _record_rule(n: int) -> RuleDef:
    args = []
    for i in range(n):
        args.append(SymArg(f"fid{i}"))
        args.append(SymArg(f"er{i}"))
    return RuleDef(f"E_record{n}", "Erec", T_TREE,
                   Apply(f"Record{n}", tuple(args)))


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------

def _doc_region(state: State) -> RegionV:
    d = state.get("d")
    if not isinstance(d, RegionV):
        raise WitnessMissing("state has no document binding d")
    return d


def _region_candidates(constraints: tuple) -> list:
    """Intersect Equals/Member payloads into one region candidate list."""
    cands: Optional[set] = None
    for c in constraints:
        if isinstance(c, Equals):
            s = {c.value}
        elif isinstance(c, Member):
            s = set(c.values)
        else:
            raise WitnessMissing(
                f"cannot push {type(c).__name__} through this rule")
        cands = s if cands is None else cands & s
    if cands is None:
        return []
    return sorted((v for v in cands if isinstance(v, RegionV)),
                  key=value_sort_key)


def _line_index(all_lines: list, r: RegionV) -> Optional[int]:
    for j, ln in enumerate(all_lines):
        if ln.doc == r.doc and ln.start <= r.start and r.end <= ln.end:
            return j
    return None


class MapLinesWitness(RuleWitness):
    """Route each example region to the unique source line that contains
    it. The lines slot inherits the constraint shape over those line
    regions; the position-pair slot gets one exact pair per example line.
    Imprecise: the pair program must also run without error on the
    unconstrained lines of the final list, which only the rebuilt space
    can check.
    """

    precise = False

    def backprop(self, rule, state, constraints, ctx):
        d = _doc_region(state)
        all_lines = split_lines(d)
        want_by_line: dict = {}
        line_specs = []
        for c in constraints:
            if isinstance(c, Equals):
                if not isinstance(c.value, ListV):
                    return []
                rs = c.value.items
            elif isinstance(c, (Prefix, Subsequence)):
                rs = c.values
                if not rs:
                    continue
            else:
                raise WitnessMissing(
                    f"cannot push {type(c).__name__} through this rule")
            idxs = []
            for r in rs:
                if not isinstance(r, RegionV):
                    return []
                j = _line_index(all_lines, r)
                if j is None:
                    return []
                if want_by_line.get(j, r) != r:
                    return []
                want_by_line[j] = r
                idxs.append(j)
            if any(b <= a for a, b in zip(idxs, idxs[1:])):
                return []
            lns = tuple(all_lines[j] for j in idxs)
            if isinstance(c, Equals):
                line_specs.append((state, Equals(ListV(lns))))
            elif isinstance(c, Prefix):
                line_specs.append((state, Prefix(lns)))
            else:
                line_specs.append((state, Subsequence(lns)))
        if not want_by_line and not line_specs:
            return [{}]
        pp_spec = []
        for j in sorted(want_by_line):
            line, r = all_lines[j], want_by_line[j]
            pair = TupleV((IntV(r.start - line.start),
                           IntV(r.end - line.start)))
            pp_spec.append((state.extend("x", StrV(line.slice())),
                            Equals(pair)))
        return [{0: tuple(pp_spec), 1: tuple(line_specs)}]


class FilterIntWitness(RuleWitness):
    """Conditional on the filtered-lines slot: for each of its output
    clusters, enumerate the (i0, k) strides whose selection satisfies
    the constraints on that concrete list."""

    cond_slot = 2

    def branches(self, rule, state, constraints, value, ctx):
        if not isinstance(value, ListV):
            return []
        out = []
        for i0 in range(_I0_MAX + 1):
            for k in range(1, _K_MAX + 1):
                kept = ListV(tuple(value.items[i0::k]))
                if all(constraint_holds(c, kept, state)
                       for c in constraints):
                    out.append({0: ((state, Equals(IntV(i0))),),
                                1: ((state, Equals(IntV(k))),)})
        return out


class FilterPredWitness(RuleWitness):
    """Pin the predicate's truth value on every line the constraints
    determine: kept lines must test true, and for prefix/equality shapes
    the skipped lines in front of and between them must test false."""

    def backprop(self, rule, state, constraints, ctx):
        d = _doc_region(state)
        all_lines = split_lines(d)
        want: dict = {}

        def put(j: int, b: bool) -> bool:
            if want.get(j, b) != b:
                return False
            want[j] = b
            return True

        for c in constraints:
            if isinstance(c, Equals):
                if not isinstance(c.value, ListV):
                    return []
                rs = c.value.items
            elif isinstance(c, (Prefix, Subsequence)):
                rs = c.values
            else:
                raise WitnessMissing(
                    f"cannot push {type(c).__name__} through this rule")
            idxs = []
            for r in rs:
                if not isinstance(r, RegionV) or r not in all_lines:
                    return []
                idxs.append(all_lines.index(r))
            if any(b <= a for a, b in zip(idxs, idxs[1:])):
                return []
            if not all(put(j, True) for j in idxs):
                return []
            if isinstance(c, (Equals, Prefix)):
                determined = (range(len(all_lines)) if isinstance(c, Equals)
                              else range(idxs[-1] if idxs else 0))
                if not all(put(j, False) for j in determined
                           if j not in set(idxs)):
                    return []
        if not want:
            return [{}]
        spec = tuple((state.extend("s", StrV(all_lines[j].slice())),
                      Equals(BoolV(b)))
                     for j, b in sorted(want.items()))
        return [{0: spec}]


class SplitLinesWitness(RuleWitness):
    """The rule has no slots; the witness just checks the one possible
    output against the constraints."""

    def backprop(self, rule, state, constraints, ctx):
        out = ListV(tuple(split_lines(_doc_region(state))))
        if all(constraint_holds(c, out, state) for c in constraints):
            return [{}]
        return []


class BTokenWitness(RuleWitness):
    """Filter the predicate token pool by the wanted truth value on the
    bound line text."""

    def backprop(self, rule, state, constraints, ctx):
        s = state.get("s")
        if not isinstance(s, StrV):
            raise WitnessMissing("predicate outside a line binding")
        want = set()
        for c in constraints:
            if isinstance(c, Equals) and isinstance(c.value, BoolV):
                want.add(c.value.value)
            elif isinstance(c, Member):
                want.update(v.value for v in c.values
                            if isinstance(v, BoolV))
            else:
                raise WitnessMissing(
                    f"cannot push {type(c).__name__} through this rule")
        if len(want) != 1:
            return [{}] if len(want) == 2 else []
        pool = [pr.value for pr in ctx.pools.get("rl", ())
                if isinstance(pr, Literal)]
        good = tuple(r for r in pool if token_occurs(r, s.text) in want)
        if not good:
            return []
        return [{0: ((state, Member(good)),)}]


class SubRegionWitness(RuleWitness):
    """An example region inside the bound document maps to exactly one
    position pair relative to it."""

    def backprop(self, rule, state, constraints, ctx):
        d = _doc_region(state)
        out = []
        for r in _region_candidates(constraints):
            if r.doc != d.doc or not (d.start <= r.start and r.end <= d.end):
                continue
            pair = TupleV((IntV(r.start - d.start), IntV(r.end - d.start)))
            out.append({0: ((state.extend("x", StrV(d.slice())),
                             Equals(pair)),)})
        return out


_FF_RULES = ("pp_pair", "pos_abs", "pos_reg", "rr_pair")

WITNESSES = {
    "seq_maplines": MapLinesWitness(),
    "lines_filterint": FilterIntWitness(),
    "flt_filterpred": FilterPredWitness(),
    "alllines_split": SplitLinesWitness(),
    "b_tok": BTokenWitness(),
    "er_sub": SubRegionWitness(),
    **{name: flashfill.WITNESSES[name] for name in _FF_RULES},
}


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

class ExtractRanking(flashfill.FlashFillRanking):
    """Inherits the position-logic preferences and adds a bonus for the
    neutral keep-every-line predicate token, which generalizes past the
    example lines."""

    def program_score(self, p: Program) -> float:
        if (isinstance(p, Literal) and isinstance(p.value, RegexV)
                and p.value.source == ""):
            return 0.3
        return super().program_score(p)


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------

def build_pools(states: list, spec: Spec) -> dict:
    """Offset pool sized to the longest document; token pools for the
    position pairs and for the line predicate (which alone gets the
    zero-width neutral token)."""
    length = 0
    for st in states:
        d = st.get("d")
        if isinstance(d, RegionV):
            length = max(length, d.end - d.start)
    k = [Literal(IntV(i)) for i in range(-(length + 1), length + 2)]
    r = [Literal(v) for v in POSITION_TOKENS]
    rl = r + [Literal(EMPTY_TOKEN)]
    return {"k": k, "r": r, "rl": rl}


def make_state(doc: str) -> State:
    return State({"d": RegionV(doc, 0, len(doc), doc)})


# ---------------------------------------------------------------------------
# field registry and session
# ---------------------------------------------------------------------------

@dataclass
class FieldEntry:
    """Registry row for one named field."""
    field: str
    symbol: str
    spec: Spec = ()
    root: int = 0
    locked: bool = False
    pinned: Optional[Program] = None
    depends_on: tuple = ()


def _split_spec(spec: Spec) -> tuple:
    defs, globs = [], []
    for st, c in spec:
        cat = category(c)
        if cat == DEFINITIVE:
            defs.append((st, c))
        elif cat == GLOBALLY_REFINING:
            globs.append((st, c))
        else:
            raise LearnError(
                f"{type(c).__name__} constraints are not supported on "
                f"extraction fields")
    return tuple(defs), tuple(globs)


def _dedupe(spec: Spec) -> Spec:
    return tuple(dict.fromkeys(spec))


class ExtractSession:
    """Holds the field registry and the compound space across rounds.

    One sequence field selects the rows; record fields nest inside it
    (or extract straight from the document when no sequence field
    exists). Named constraints relearn only their own field, plus the
    dependents of the rows field when the rows change; everything else
    reuses its memoized sub-VSA, so locked fields keep their node ids.
    """

    def __init__(self, domain: Optional[Domain] = None) -> None:
        self.domain = domain or make_domain()
        self.grammar = self.domain.grammar
        self.arena = Arena(self.grammar.operators)
        self.config = self.domain.config
        self.ranking = self.domain.ranking
        self.fields: dict = {}
        self.order: list = []
        self.rows_field: Optional[str] = None
        self.root = self.arena.empty
        self.complete = True
        self.pools: dict = {}
        self._states: tuple = ()
        self._rows_root: Optional[int] = None
        self._clusters: tuple = ()
        self._er_roots: dict = {}
        self._cluster_token = None

    # -- queries ---------------------------------------------------------

    def vsa(self) -> Vsa:
        return Vsa(self.arena, self.root)

    def field_vsa(self, e: str) -> Vsa:
        return Vsa(self.arena, self.fields[e].root)

    def top_programs(self, k: int) -> list:
        if self.arena.volume(self.root) == 0:
            return []
        return top_k(self.arena, self.root, self.ranking, k)

    def run(self, program: Program, doc: str) -> TreeV:
        out = evaluate(program, make_state(doc), self.grammar.operators)
        if not isinstance(out, TreeV):
            raise TypeMismatch("compound program did not build a tree")
        return out

    def shape(self) -> tuple:
        """Declared nesting: ('seq', rows id, ()) for a bare sequence,
        ('seq', rows id, field ids) under a sequence of records, and
        ('record', '', field ids) without a sequence field."""
        if self.rows_field is not None:
            return ("seq", self.rows_field, tuple(self.order))
        return ("record", "", tuple(self.order))

    # -- updates ----------------------------------------------------------

    def learn_named(self, ns: NamedSpec) -> Vsa:
        e, sym = ns.field, ns.symbol
        if sym not in ("seq", "er"):
            raise SymbolMismatch(f"unknown field symbol {sym!r}")
        if not ns.spec:
            raise LearnError("named spec carries no constraints")
        if sym == "er":
            for _, c in ns.spec:
                if isinstance(c, (Member, Prefix, Subsequence)):
                    raise LearnError(
                        "record fields take single-region examples")
        entry = self.fields.get(e)
        if entry is not None and entry.symbol != sym:
            raise SymbolMismatch(
                f"field {e!r} is already bound to {entry.symbol!r}")
        snap = self._snapshot()
        changed = {e}
        try:
            if entry is None:
                entry = self._register(e, sym)
            if e == self.rows_field:
                changed |= set(self.order)
            entry.spec = _dedupe(entry.spec + tuple(ns.spec))
            for st, _ in ns.spec:
                if st not in self._states:
                    self._states = self._states + (st,)
            self.pools = self.domain.build_pools(list(self._states), ())
            self._relearn(changed)
        except Exception:
            self._restore(snap)
            raise
        for f in sorted(changed):
            if self.arena.volume(self.fields[f].root) == 0:
                self._restore(snap)
                raise IncompatibleNamedConstraint(
                    f"the constraint on {e!r} leaves no program for "
                    f"field {f!r}")
        return self.vsa()

    def lock(self, e: str) -> Program:
        entry = self._entry(e)
        if self.arena.volume(entry.root) == 0:
            raise EmptyVsa(f"field {e!r} has no programs to pin")
        snap = self._snapshot()
        entry.pinned = top_k(self.arena, entry.root, self.ranking, 1)[0][1]
        entry.locked = True
        changed = {e} | (set(self.order) if e == self.rows_field else set())
        self._relearn(changed)
        for f in sorted(changed):
            if self.arena.volume(self.fields[f].root) == 0:
                self._restore(snap)
                raise IncompatibleNamedConstraint(
                    f"pinning {e!r} leaves no program for field {f!r}")
        return entry.pinned

    def unlock(self, e: str) -> None:
        entry = self._entry(e)
        entry.locked = False
        entry.pinned = None
        self._relearn({e} | (set(self.order) if e == self.rows_field
                             else set()))

    # -- internals ---------------------------------------------------------

    def _entry(self, e: str) -> FieldEntry:
        entry = self.fields.get(e)
        if entry is None:
            raise SymbolMismatch(f"unknown field {e!r}")
        return entry

    def _register(self, e: str, sym: str) -> FieldEntry:
        if sym == "seq":
            if self.rows_field is not None:
                raise SymbolMismatch("only one sequence field is supported")
            self.rows_field = e
            for f in self.order:
                self.fields[f].depends_on = (e,)
        else:
            if len(self.order) >= _MAX_RECORD_FIELDS:
                raise LearnError(
                    f"at most {_MAX_RECORD_FIELDS} record fields")
            self.order.append(e)
        entry = FieldEntry(field=e, symbol=sym,
                           depends_on=(self.rows_field,)
                           if sym == "er" and self.rows_field else ())
        self.fields[e] = entry
        return entry

    def _snapshot(self) -> tuple:
        return (dict((k, FieldEntry(v.field, v.symbol, v.spec, v.root,
                                    v.locked, v.pinned, v.depends_on))
                     for k, v in self.fields.items()),
                list(self.order), self.rows_field, self.root,
                self._states, self._rows_root, self._clusters,
                dict(self._er_roots), self._cluster_token, self.complete)

    def _restore(self, snap: tuple) -> None:
        (self.fields, self.order, self.rows_field, self.root, self._states,
         self._rows_root, self._clusters, self._er_roots,
         self._cluster_token, self.complete) = snap

    def _learn_symbol(self, symbol: str, spec: Spec) -> int:
        defs, globs = _split_spec(spec)
        res = engine_learn(self.grammar, symbol, defs, WITNESSES,
                           self.pools, self.config, self.arena)
        self.complete = self.complete and res.complete
        root = res.vsa.root
        if globs and self.arena.volume(root) > 0:
            root = project(self.arena, root, globs)
        return root

    def _pin_or_learn(self, entry: FieldEntry, symbol: str,
                      spec: Spec) -> int:
        if entry.locked and entry.pinned is not None:
            ok = satisfies(entry.pinned, spec, self.grammar.operators)
            return (self.arena.leaf([entry.pinned],
                                    self.grammar.sym(symbol).sem_type)
                    if ok else self.arena.empty)
        return self._learn_symbol(symbol, spec)

    def _route(self, spec: Spec, vec: tuple) -> Optional[Spec]:
        """Rebind each doc-level constraint to the row that contains its
        region, given one rows output per known state. None means the
        cluster cannot support the spec."""
        routed = []
        for st, c in spec:
            idx = self._states.index(st)
            rows = vec[idx]
            if not isinstance(rows, ListV):
                return None
            if isinstance(c, (Equals, NotEquals)):
                r = c.value
                if not isinstance(r, RegionV):
                    raise LearnError(
                        "record fields take region examples")
                row = next((x for x in rows.items
                            if isinstance(x, RegionV) and x.doc == r.doc
                            and x.start <= r.start and r.end <= x.end),
                           None)
                if row is None:
                    if isinstance(c, NotEquals):
                        continue
                    return None
                routed.append((st.extend("d", row), c))
            elif isinstance(c, Member):
                raise LearnError("record fields take region examples")
            else:
                for row in rows.items:
                    routed.append((st.extend("d", row), c))
        return tuple(routed)

    def _relearn(self, changed: set) -> None:
        arena = self.arena
        if self.rows_field is not None:
            rentry = self.fields[self.rows_field]
            if self.rows_field in changed or self._rows_root is None:
                self._rows_root = self._pin_or_learn(rentry, "seq",
                                                     rentry.spec)
                rentry.root = self._rows_root
                changed = changed | set(self.order)
            token = (self._rows_root, self._states)
            if token != self._cluster_token:
                self._cluster_token = token
                self._er_roots.clear()
                self._clusters = tuple(
                    cluster_by_outputs(arena, self._rows_root, self._states)
                    if arena.volume(self._rows_root) > 0 else ())
            for f in changed & set(self.order):
                for key in [k for k in self._er_roots if k[0] == f]:
                    del self._er_roots[key]
            for f in self.order:
                fe = self.fields[f]
                parts = []
                for vec, cid in self._clusters:
                    key = (f, cid)
                    root = self._er_roots.get(key)
                    if root is None:
                        routed = self._route(fe.spec, vec)
                        root = (arena.empty if routed is None
                                else self._pin_or_learn(fe, "er", routed))
                        self._er_roots[key] = root
                    parts.append(root)
                fe.root = arena.union(parts, T_REGION)
        else:
            for f in self.order:
                if f in changed:
                    fe = self.fields[f]
                    fe.root = self._pin_or_learn(fe, "er", fe.spec)
        self._assemble()

    def _assemble(self) -> None:
        arena = self.arena

        def fid(e: str) -> int:
            return arena.leaf([Literal(StrV(e))], T_STR)

        if self.rows_field is None:
            if not self.order:
                self.root = arena.empty
                return
            rule = _record_rule(len(self.order))
            kids = []
            for f in self.order:
                kids.append(fid(f))
                kids.append(self.fields[f].root)
            self.root = arena.join(rule, kids, T_TREE, (rule, ()))
            return
        if not self.order:
            self.root = arena.join(
                _SEQ_RULE, [fid(self.rows_field), self._rows_root],
                T_TREE, (_SEQ_RULE, ()))
            return
        rule = _record_rule(len(self.order))
        parts = []
        for vec, cid in self._clusters:
            kids = []
            for f in self.order:
                kids.append(fid(f))
                kids.append(self._er_roots[(f, cid)])
            rec = arena.join(rule, kids, T_TREE, (rule, ()))
            parts.append(arena.join(
                _ROWS_RULE, [fid(self.rows_field), rec, cid],
                T_TREE, (_ROWS_RULE, ())))
        self.root = arena.union(parts, T_TREE)


# ---------------------------------------------------------------------------
# compound program helpers
# ---------------------------------------------------------------------------

def field_restriction(p: Program, e: str) -> Optional[Program]:
    """The subprogram a compound program dedicates to field `e`, or None
    when the program has no such field."""
    if not isinstance(p, OperatorApp):
        return None
    if p.op == "Sequence":
        fid = p.args[0]
        if isinstance(fid, Literal) and fid.value == StrV(e):
            return p.args[1]
        return None
    if p.op == "MapRows":
        fid = p.args[0]
        if isinstance(fid, Literal) and fid.value == StrV(e):
            return p.args[2]
        lam = p.args[1]
        if isinstance(lam, LambdaAbs):
            return field_restriction(lam.body, e)
        return None
    if p.op.startswith("Record"):
        for t in range(0, len(p.args) - 1, 2):
            fid = p.args[t]
            if isinstance(fid, Literal) and fid.value == StrV(e):
                return p.args[t + 1]
        return None
    return None


def tree_matches_shape(tree: TreeV, shape: tuple) -> bool:
    """Check an output tree against a session's declared nesting."""
    kind, rows_id, field_ids = shape

    def is_record(t: TreeV) -> bool:
        return (t.kind == "record"
                and tuple(name for name, _ in t.entries) == field_ids
                and all(ch.kind == "leaf" and ch.region is not None
                        for _, ch in t.entries))

    if kind == "record":
        return is_record(tree)
    if tree.kind != "seq" or tree.label != rows_id:
        return False
    if not field_ids:
        return all(ch.kind == "leaf" and ch.region is not None
                   for ch in tree.entries)
    return all(is_record(ch) for ch in tree.entries)


# ---------------------------------------------------------------------------
# scripted user models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtractTask:
    """A scripted extraction task with ground truth given as character
    spans. `fields` holds (field id, per-document span tuples); record
    field spans align with the rows truth (one span per row), or hold a
    single span per document when the task has no rows field."""
    name: str
    docs: tuple
    rows_field: str = ""
    rows_truth: tuple = ()
    fields: tuple = ()


@dataclass(frozen=True)
class Interaction:
    round: int
    field: str
    spec: NamedSpec


def _truth_regions(task: ExtractTask) -> dict:
    out = {}
    if task.rows_field:
        out[task.rows_field] = tuple(
            tuple(RegionV(doc, s, e, doc) for s, e in spans)
            for doc, spans in zip(task.docs, task.rows_truth))
    for e, per_doc in task.fields:
        out[e] = tuple(
            tuple(RegionV(doc, s, e2, doc) for s, e2 in spans)
            for doc, spans in zip(task.docs, per_doc))
    return out


def _field_outputs(sess: ExtractSession, p: Optional[Program],
                   task: ExtractTask, e: str, doc: str) -> tuple:
    if p is None:
        return ()
    sub = field_restriction(p, e)
    if sub is None:
        return ()
    ops = sess.grammar.operators
    st = make_state(doc)
    if e == task.rows_field:
        try:
            return tuple(evaluate(sub, st, ops).items)
        except EvalError:
            return ()
    if task.rows_field:
        rsub = field_restriction(p, task.rows_field)
        if rsub is None:
            return ()
        try:
            rows = evaluate(rsub, st, ops).items
        except EvalError:
            return ()
        vals = []
        for row in rows:
            try:
                vals.append(evaluate(sub, st.extend("d", row), ops))
            except EvalError:
                vals.append(None)
        return tuple(vals)
    try:
        return (evaluate(sub, st, ops),)
    except EvalError:
        return ()


def _next_example(sess: ExtractSession, p: Optional[Program],
                  task: ExtractTask, truth: dict, e: str,
                  sym: str) -> Optional[NamedSpec]:
    """The user's next constraint for field `e`: the correct value at the
    first discrepancy, as a prefix for the rows field and as a region
    example for record fields. None when the field reads correct."""
    for di, doc in enumerate(task.docs):
        want = truth[e][di]
        got = _field_outputs(sess, p, task, e, doc)
        st = make_state(doc)
        if sym == "seq":
            bad = next((i for i in range(len(want))
                        if i >= len(got) or got[i] != want[i]), None)
            if bad is not None:
                c = Prefix(tuple(want[:bad + 1]))
                return NamedSpec(e, "seq", ((st, c),))
            if len(got) != len(want):
                return NamedSpec(e, "seq", ((st, Equals(ListV(want))),))
        else:
            bad = next((i for i in range(len(want))
                        if i >= len(got) or got[i] != want[i]), None)
            if bad is not None and bad < len(want):
                return NamedSpec(e, "er", ((st, Equals(want[bad])),))
    return None


def _task_fields(task: ExtractTask) -> list:
    fields = []
    if task.rows_field:
        fields.append((task.rows_field, "seq"))
    fields.extend((e, "er") for e, _ in task.fields)
    return fields


def _top1(sess: ExtractSession) -> Optional[Program]:
    tops = sess.top_programs(1)
    return tops[0][1] if tops else None


def simulate_user(task: ExtractTask, step_based: bool,
                  domain: Optional[Domain] = None) -> tuple:
    """Run one scripted user against a fresh session.

    The step-based user finishes fields in dependency order and locks
    each before moving on; the non-step-based user re-examples every
    failing field each round. Returns (transcript, converged).
    """
    sess = ExtractSession(domain)
    truth = _truth_regions(task)
    fields = _task_fields(task)
    transcript: list = []

    def give(rnd: int, ns: NamedSpec) -> bool:
        transcript.append(Interaction(rnd, ns.field, ns))
        try:
            sess.learn_named(ns)
            return True
        except (IncompatibleNamedConstraint, LearnError):
            return False

    if step_based:
        for e, sym in fields:
            stuck = 0
            for rnd in range(_ROUND_CAP):
                ns = _next_example(sess, _top1(sess), task, truth, e, sym)
                if ns is None:
                    break
                stuck = 0 if give(rnd, ns) else stuck + 1
                if stuck >= 3:
                    return transcript, False
            else:
                return transcript, False
            sess.lock(e)
        return transcript, True

    for rnd in range(_ROUND_CAP):
        p = _top1(sess)
        gave = False
        for e, sym in fields:
            ns = _next_example(sess, p, task, truth, e, sym)
            if ns is not None:
                give(rnd, ns)
                gave = True
        if not gave:
            return transcript, True
    return transcript, False


def interaction_count(transcript: list) -> dict:
    """Interactions per field over a transcript of Interaction rows."""
    out: dict = {}
    for it in transcript:
        out[it.field] = out.get(it.field, 0) + 1
    return out


# ---------------------------------------------------------------------------
# domain bundle
# ---------------------------------------------------------------------------

def make_domain() -> Domain:
    g = make_grammar()
    return Domain(
        name="extract",
        grammar=g,
        output_symbol="seq",
        witnesses=dict(WITNESSES),
        ranking=ExtractRanking(),
        config=LearnConfig(),
        build_pools=build_pools,
        make_state=make_state,
        input_names=("d",),
        extras={
            "session": ExtractSession,
            "simulate": simulate_user,
            "interaction_count": interaction_count,
            "field_restriction": field_restriction,
        },
    )
