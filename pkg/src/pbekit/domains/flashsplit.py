"""Record-splitting DSL over contextual delimiters.

A program maps one record (bound as `v`) to the ordered list of field
regions left between its delimiter matches. A delimiter is a constant
string, optionally extended over adjacent whitespace, filtered by a
left/right token context, and unioned with further delimiters up to a
small arm budget. Zero matches means one field: the whole record.

Learning runs on a per-record scan cache: every candidate match list a
(c, rr) pair can produce is computed once, so witnesses look answers up
instead of re-deriving them. UnionD backpropagation is deliberately
imprecise: the leftmost-longest merge is not associative, so an exact
inverse would have to track every arm sequence separately, which blows
up in the recursion depth. Instead it relaxes a target into a single
per-element filter that any valid arm or sub-chain must pass (AllIn:
each match is either wanted or can lose to some producible match), and
the engine's projection step restores exactness level by level. The
filter is the same at every depth, so the learn cache collapses the
recursive chain to one learn per unroll level.
"""

from __future__ import annotations

import statistics
from collections import OrderedDict
from dataclasses import dataclass

from ..constraints import (DEFINITIVE, Equals, Member, constraint_holds,
                           register_constraint)
from ..engine import LearnConfig, LearnCtx, RuleWitness
from ..errors import DomainError, EmptyVsa, TypeMismatch, WitnessMissing
from ..grammar import (Alias, Apply, Grammar, RuleDef, SymArg, SymbolDef,
                       VarArg)
from ..operators import Operators
from ..programs import Literal, OperatorApp, Program, VarRef
from ..values import (IntV, ListV, RegexV, RegionV, SemType, State, StrV,
                      TupleV, T_REGEX, T_REGION, T_STR, Value, list_of,
                      tuple_of)
from ..vsa import BOTTOM, Ranking, cluster_by_outputs, top_k
from . import Domain
from .tokens import EMPTY_TOKEN, TOKENS, ends_at, starts_at

__all__ = ["make_domain", "make_grammar", "make_operators", "build_pools",
           "FlashSplitRanking", "AllIn", "WITNESSES", "min_splits",
           "fs_top_k", "outcome_score"]


# Context tokens: the named character classes and anchors. Punctuation-run
# tokens add nothing here because the delimiter itself is a constant
# string; the Empty token keeps unconditional delimiters expressible.
_CONTEXT_NAMES = ("Digits", "Letters", "Lowercase", "Uppercase",
                  "Alphanumeric", "Whitespace", "StartOfString",
                  "EndOfString")
_CONTEXT_TOKENS = tuple(tok for name, tok in TOKENS if name in _CONTEXT_NAMES)

_MAX_DELIM_LEN = 4


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _want_region(x: Value) -> RegionV:
    if not isinstance(x, RegionV):
        raise TypeMismatch(f"expected a region, got {type(x).__name__}")
    return x


def _want_matches(x: Value) -> ListV:
    if not (isinstance(x, ListV)
            and all(isinstance(m, RegionV) for m in x.items)):
        raise TypeMismatch("expected a list of match regions")
    return x


def _greedy(items) -> tuple:
    """Leftmost-longest selection of a non-overlapping subset.

    Candidates sort by (start asc, length desc); a candidate is kept when
    it starts at or after the previous kept end, so touching matches
    coexist and overlaps lose to the earlier or longer match.
    """
    out: list = []
    last = None
    for m in sorted(set(items), key=lambda m: (m.start, m.start - m.end)):
        if last is None or m.start >= last:
            out.append(m)
            last = m.end
    return tuple(out)


def _merge(a, b) -> tuple:
    """Leftmost-longest merge of two greedy-clean match lists.

    Each input is already sorted by start and internally non-overlapping
    (every operator that produces a match list returns it in that shape),
    so a linear two-way sweep visits candidates in the same
    (start asc, length desc) order `_greedy` would sort into.
    """
    out: list = []
    last = -1
    i = j = 0
    na, nb = len(a), len(b)
    while i < na or j < nb:
        if i >= na:
            m = b[j]
            j += 1
        elif j >= nb:
            m = a[i]
            i += 1
        else:
            x, y = a[i], b[j]
            if x.start < y.start or (x.start == y.start and x.end >= y.end):
                m = x
                i += 1
            else:
                m = y
                j += 1
        if m.start >= last and (not out or m != out[-1]):
            out.append(m)
            last = m.end
    return tuple(out)


def _exact_matches(vs: list) -> ListV:
    v, s = vs
    v = _want_region(v)
    if not isinstance(s, StrV):
        raise TypeMismatch("ExactMatches wants (region, string)")
    needle = s.text
    if not needle:
        raise DomainError("delimiter string must be non-empty")
    text = v.slice()
    out: list = []
    i = text.find(needle)
    while i != -1:
        out.append(v.sub(v.start + i, v.start + i + len(needle)))
        i = text.find(needle, i + len(needle))
    return ListV(tuple(out))


def _include_whitespace(vs: list) -> ListV:
    base = _exact_matches(vs)
    v = vs[0]
    doc = v.text
    grown: list = []
    for m in base.items:
        ls, le = m.start, m.end
        while ls - 1 >= v.start and doc[ls - 1] in " \t":
            ls -= 1
        while le < v.end and doc[le] in " \t":
            le += 1
        grown.append(v.sub(ls, le))
    return ListV(_greedy(grown))


def _look_around(vs: list) -> ListV:
    v, c, rr = vs
    v = _want_region(v)
    c = _want_matches(c)
    if not (isinstance(rr, TupleV) and len(rr.items) == 2
            and all(isinstance(r, RegexV) for r in rr.items)):
        raise TypeMismatch("LookAround wants a token pair")
    text = v.slice()
    left = ends_at(rr.items[0], text)
    right = starts_at(rr.items[1], text)
    keep = tuple(m for m in c.items
                 if (m.start - v.start) in left and (m.end - v.start) in right)
    return ListV(keep)


def _union_d(vs: list) -> ListV:
    a = _want_matches(vs[0])
    b = _want_matches(vs[1])
    return ListV(_merge(a.items, b.items))


def _split_by_delimiters(vs: list) -> ListV:
    v, d = vs
    v = _want_region(v)
    d = _want_matches(d)
    fields: list = []
    prev = v.start
    for m in sorted(d.items, key=lambda m: m.start):
        if m.start < prev or m.end > v.end:
            raise DomainError("delimiter matches must tile inside the record")
        fields.append(v.sub(prev, m.start))
        prev = m.end
    fields.append(v.sub(prev, v.end))
    return ListV(tuple(fields))


def _fs_pair(vs: list) -> TupleV:
    return TupleV((vs[0], vs[1]))


def make_operators() -> Operators:
    ops = Operators()
    region_list = list_of(T_REGION)
    rr_t = tuple_of((T_REGEX, T_REGEX))
    ops.define("ExactMatches", (T_REGION, T_STR), region_list, _exact_matches)
    ops.define("IncludeWhitespace", (T_REGION, T_STR), region_list,
               _include_whitespace)
    ops.define("LookAround", (T_REGION, region_list, rr_t), region_list,
               _look_around)
    ops.define("UnionD", (region_list, region_list), region_list, _union_d)
    ops.define("SplitByDelimiters", (T_REGION, region_list), region_list,
               _split_by_delimiters)
    ops.define("Pair", (T_REGEX, T_REGEX), rr_t, _fs_pair)
    return ops


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

def make_grammar(ops=None) -> Grammar:
    ops = ops or make_operators()
    region_list = list_of(T_REGION)
    rr_t = tuple_of((T_REGEX, T_REGEX))
    g = Grammar("flashsplit", ops, symbols=[
        SymbolDef("fields", region_list, "nonterminal"),
        SymbolDef("d", region_list, "nonterminal"),
        SymbolDef("d0", region_list, "nonterminal"),
        SymbolDef("c", region_list, "nonterminal"),
        SymbolDef("rr", rr_t, "nonterminal"),
        SymbolDef("s", T_STR, "terminal_open"),
        SymbolDef("r", T_REGEX, "terminal_open"),
        SymbolDef("v", T_REGION, "input"),
    ])
    g.add_rule(RuleDef("fields_split", "fields", region_list,
                       Apply("SplitByDelimiters", (VarArg("v"), SymArg("d")))))
    g.add_rule(RuleDef("d_base", "d", region_list, Alias("d0")))
    g.add_rule(RuleDef("d_union", "d", region_list,
                       Apply("UnionD", (SymArg("d0"), SymArg("d")))))
    g.add_rule(RuleDef("d0_look", "d0", region_list,
                       Apply("LookAround",
                             (VarArg("v"), SymArg("c"), SymArg("rr")))))
    g.add_rule(RuleDef("c_exact", "c", region_list,
                       Apply("ExactMatches", (VarArg("v"), SymArg("s")))))
    g.add_rule(RuleDef("c_ws", "c", region_list,
                       Apply("IncludeWhitespace", (VarArg("v"), SymArg("s")))))
    g.add_rule(RuleDef("fs_rr", "rr", rr_t,
                       Apply("Pair", (SymArg("r"), SymArg("r")))))
    return g


# ---------------------------------------------------------------------------
# the merge relaxation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AllIn:
    """Every match in the value must come from the allowed set.

    This is the necessary condition a UnionD target induces on each of
    its slots. A match outside the final result must lose some merge to
    a kept match, which in turn is final or loses an outer merge, so
    every erasable match sits in the closure of the target under the
    inverse of the beats relation. The allowed tuple is kept sorted so
    equal sets compare and hash equal."""
    allowed: tuple  # of RegionV, sorted by (start, end)


def _all_in_holds(c: AllIn, out: Value, state: State) -> bool:
    if not isinstance(out, ListV):
        return False
    allowed = set(c.allowed)
    return all(m in allowed for m in out.items)


register_constraint(AllIn, DEFINITIVE, _all_in_holds)


def _beats(y: RegionV, x: RegionV) -> bool:
    """Would y survive over x in the leftmost-longest merge?"""
    if y.start < x.start:
        return y.end > x.start
    return y.start == x.start and y.end - y.start > x.end - x.start


_CLOSURE_CACHE: OrderedDict = OrderedDict()


def _beats_closure(wanted: frozenset, universe: frozenset) -> frozenset:
    """Producible matches reachable from the wanted set by repeatedly
    following beats: exactly the matches that could appear in some arm
    of a merge chain ending in the wanted set."""
    key = (wanted, universe)
    got = _CLOSURE_CACHE.get(key)
    if got is not None:
        _CLOSURE_CACHE.move_to_end(key)
        return got
    grown = set(wanted & universe)
    rest = set(universe) - grown
    changed = True
    while changed and rest:
        changed = False
        for x in tuple(rest):
            if any(_beats(y, x) for y in grown):
                grown.add(x)
                rest.discard(x)
                changed = True
    out = frozenset(grown)
    _CLOSURE_CACHE[key] = out
    if len(_CLOSURE_CACHE) > _SCAN_CAP:
        _CLOSURE_CACHE.popitem(last=False)
    return out


def _all_in_for(targets: list, universe: frozenset) -> AllIn:
    allowed = None
    for t in targets:
        items = t.allowed if isinstance(t, AllIn) else t.items
        closed = _beats_closure(frozenset(items), universe)
        allowed = closed if allowed is None else allowed & closed
    return AllIn(tuple(sorted(allowed, key=lambda m: (m.start, m.end))))


# ---------------------------------------------------------------------------
# the per-record scan cache
# ---------------------------------------------------------------------------

_SCAN_CAP = 64
_SCAN_CACHE: OrderedDict = OrderedDict()


def _record(state: State) -> RegionV:
    v = state.get("v")
    if not isinstance(v, RegionV):
        raise WitnessMissing("state has no record region bound to v")
    return v


def _scan(state: State, pools: dict):
    """(d0 value -> producing (c value, rr) pairs, rule -> c value -> s
    strings, universe of match regions) for one record under one pool set.

    Everything any witness needs to answer value questions about a record
    comes out of one pass over the candidate delimiters.
    """
    v = _record(state)
    s_texts = tuple(p.value.text for p in pools.get("s", ()))
    r_toks = tuple(p.value for p in pools.get("r", ()))
    key = (v.doc, v.start, v.end, s_texts, tuple(t.source for t in r_toks))
    got = _SCAN_CACHE.get(key)
    if got is not None:
        _SCAN_CACHE.move_to_end(key)
        return got

    text = v.slice()
    c_map: dict = {"c_exact": {}, "c_ws": {}}
    c_values: list = []
    seen_c: set = set()
    for s in s_texts:
        try:
            pairs = (("c_exact", _exact_matches([v, StrV(s)])),
                     ("c_ws", _include_whitespace([v, StrV(s)])))
        except DomainError:
            continue
        for kind, val in pairs:
            c_map[kind].setdefault(val, []).append(s)
            if val not in seen_c:
                seen_c.add(val)
                c_values.append(val)

    left = {t: ends_at(t, text) for t in r_toks}
    right = {t: starts_at(t, text) for t in r_toks}
    by_value: dict = {}
    for cv in c_values:
        for r1 in r_toks:
            e1 = left[r1]
            pre = tuple(m for m in cv.items if (m.start - v.start) in e1)
            for r2 in r_toks:
                s2 = right[r2]
                kept = ListV(tuple(m for m in pre
                                   if (m.end - v.start) in s2))
                by_value.setdefault(kept, []).append(
                    (cv, TupleV((r1, r2))))
    values = sorted(by_value.items(),
                    key=lambda kv: [(m.start, m.end) for m in kv[0].items])
    universe = frozenset(m for val in by_value for m in val.items)
    entry = (values, c_map, universe)
    _SCAN_CACHE[key] = entry
    if len(_SCAN_CACHE) > _SCAN_CAP:
        _SCAN_CACHE.popitem(last=False)
    return entry


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------

def _fields_to_delims(fields: Value, v: RegionV):
    """Delimiter regions implied by a full field list, or None when the
    list cannot be a SplitByDelimiters outcome for this record."""
    if not (isinstance(fields, ListV) and fields.items):
        return None
    items = fields.items
    if not all(isinstance(f, RegionV) and f.doc == v.doc for f in items):
        return None
    if items[0].start != v.start or items[-1].end != v.end:
        return None
    delims: list = []
    prev = items[0]
    if prev.end < prev.start:
        return None
    for f in items[1:]:
        if f.end < f.start or f.start <= prev.end:
            return None
        delims.append(v.sub(prev.end, f.start))
        prev = f
    return tuple(delims)


def _holds_all(constraints: tuple, out: Value, state: State) -> bool:
    return all(constraint_holds(c, out, state) for c in constraints)


class FieldsSplitWitness(RuleWitness):
    """Equals/Member pin the whole outcome, so the delimiter list is
    forced and flows down exactly. Anything weaker (positional subsets)
    leaves the delimiter slot open; the projection guard this witness's
    imprecision installs then filters outcomes at the fields level, where
    split positions mean what the constraints mean."""

    precise = False

    def backprop(self, rule: RuleDef, state: State, constraints: tuple,
                 ctx: LearnCtx) -> list:
        v = _record(state)
        candidates = None
        for c in constraints:
            if isinstance(c, Equals):
                vals = [c.value]
            elif isinstance(c, Member):
                vals = list(c.values)
            else:
                continue
            if candidates is None:
                candidates = vals
            else:
                candidates = [x for x in candidates if x in vals]
        if candidates is None:
            return [{}]
        out = []
        for f in candidates:
            delims = _fields_to_delims(f, v)
            if delims is None or not _holds_all(constraints, f, state):
                continue
            out.append({0: ((state, Equals(ListV(delims))),)})
        return out


def _rr_key(rr: TupleV) -> tuple:
    return (rr.items[0].source, rr.items[1].source)


class D0LookWitness(RuleWitness):
    """Single contextual delimiters come straight off the scan cache:
    every satisfying match list names the (c value, token pair) combos
    that produce it. Validity is per combo, so c values demanding the
    same token-pair set fold into one disjunct regardless of which match
    list each combo yields; that keeps the disjunct count near the
    token-pair-set count instead of the outcome count, which matters
    when several records' disjuncts get crossed."""

    def backprop(self, rule: RuleDef, state: State, constraints: tuple,
                 ctx: LearnCtx) -> list:
        values, _, _ = _scan(state, ctx.pools)
        by_c: dict = {}
        for val, pairs in values:
            if not _holds_all(constraints, val, state):
                continue
            for cv, rr in pairs:
                by_c.setdefault(cv, []).append(rr)
        by_rrs: dict = {}
        for cv, rrs in by_c.items():
            by_rrs.setdefault(tuple(sorted(rrs, key=_rr_key)), []).append(cv)
        out = []
        for rrs, cvs in by_rrs.items():
            out.append({0: ((state, Member(tuple(cvs))),),
                        1: ((state, Member(rrs)),)})
        return out


class DUnionWitness(RuleWitness):
    """Relaxes the constraints on a merged match list into the one
    filter both slots must pass (see AllIn). The filter admits chains
    that merge to the wrong list; the split witness above is imprecise,
    so the engine re-checks every outcome where the delimiter space is
    consumed and wrong chains drop out there. Claiming precision here
    skips a projection per unroll level, which keeps each level one
    plain join all the way up to that single split-level check. The same
    filter reaching the recursive slot keeps deeper unrolls
    cache-identical."""

    def backprop(self, rule: RuleDef, state: State, constraints: tuple,
                 ctx: LearnCtx) -> list:
        targets: list = []
        for c in constraints:
            if isinstance(c, AllIn):
                targets.append(c)
            elif isinstance(c, Equals):
                if not (isinstance(c.value, ListV)
                        and all(isinstance(m, RegionV)
                                for m in c.value.items)):
                    return []
                targets.append(c.value)
            else:
                raise WitnessMissing(
                    f"d_union cannot backprop {type(c).__name__}")
        if not targets:
            return [{}]
        _, _, universe = _scan(state, ctx.pools)
        gate = _all_in_for(targets, universe)
        slot = ((state, gate),)
        return [{0: slot, 1: slot}]


class CMatchesWitness(RuleWitness):
    """Both c rules invert through the scan cache's value -> strings map."""

    def __init__(self, rule_name: str) -> None:
        self.rule_name = rule_name

    def backprop(self, rule: RuleDef, state: State, constraints: tuple,
                 ctx: LearnCtx) -> list:
        _, c_map, _ = _scan(state, ctx.pools)
        texts: list = []
        for val, ss in c_map[self.rule_name].items():
            if _holds_all(constraints, val, state):
                texts.extend(ss)
        if not texts:
            return []
        allowed = tuple(StrV(s) for s in sorted(set(texts)))
        return [{0: ((state, Member(allowed)),)}]


class FsPairWitness(RuleWitness):
    def backprop(self, rule: RuleDef, state: State, constraints: tuple,
                 ctx: LearnCtx) -> list:
        candidates = None
        for c in constraints:
            if isinstance(c, Equals):
                vals = [c.value]
            elif isinstance(c, Member):
                vals = list(c.values)
            else:
                raise WitnessMissing(
                    f"fs_rr cannot backprop {type(c).__name__}")
            if candidates is None:
                candidates = vals
            else:
                candidates = [x for x in candidates if x in vals]
        if candidates is None:
            return [{}]
        by_first: dict = {}
        for t in candidates:
            if isinstance(t, TupleV) and len(t.items) == 2:
                by_first.setdefault(t.items[0], []).append(t.items[1])
        return [{0: ((state, Equals(r1)),),
                 1: ((state, Member(tuple(r2s))),)}
                for r1, r2s in by_first.items()]


WITNESSES = {
    "fields_split": FieldsSplitWitness(),
    "d0_look": D0LookWitness(),
    "d_union": DUnionWitness(),
    "c_exact": CMatchesWitness("c_exact"),
    "c_ws": CMatchesWitness("c_ws"),
    "fs_rr": FsPairWitness(),
}


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

def outcome_score(counts) -> float:
    """Uniformity score of per-row field counts; None marks a row the
    outcome failed on or left whole (a coverage gap)."""
    gaps = sum(1 for n in counts if n is None or n <= 1)
    vals = [n for n in counts if n is not None and n > 1]
    spread = statistics.pvariance(vals) if len(vals) > 1 else 0.0
    return -1000.0 * gaps - spread


def fs_top_k(arena, root: int, states, k: int) -> list:
    """Best (score, program) pairs under the uniformity ranking.

    Outcome clusters over the rows carry the per-row statistics; within
    a cluster the structural ranking picks the representative, so ties
    between equally uniform outcomes break toward fewer UnionD arms and
    plainer contexts. Clusters are visited in score order until the next
    one cannot displace the kth pick."""
    if arena.volume(root) == 0:
        return []
    scored = []
    for vec, cid in cluster_by_outputs(arena, root, tuple(states)):
        counts = [len(o.items) if isinstance(o, ListV) else None
                  for o in vec]
        scored.append((outcome_score(counts), cid))
    scored.sort(key=lambda t: -t[0])
    ranking = FlashSplitRanking()
    picked: list = []
    for ci, (oscore, cid) in enumerate(scored):
        if ci >= 256:
            break
        if len(picked) >= k and oscore < picked[k - 1][0]:
            break
        for rscore, p in top_k(arena, cid, ranking, k):
            picked.append((oscore, -rscore, p))
        picked.sort(key=lambda t: (-t[0], t[1]))
        del picked[4 * k:]
    return [(oscore, p) for oscore, _, p in picked[:k]]


class FlashSplitRanking(Ranking):
    """Generic fallback ranking: fewer arms, plain matches over
    whitespace-extended ones, unconditional contexts over narrow ones."""

    OP_W = {
        "UnionD": -1.0,
        "IncludeWhitespace": -0.1,
        "ExactMatches": 0.0,
        "LookAround": 0.0,
        "SplitByDelimiters": 0.0,
        "Pair": 0.0,
    }

    def program_score(self, p: Program) -> float:
        if isinstance(p, Literal):
            if isinstance(p.value, RegexV) and p.value.source == "":
                return 0.05
            return 0.0
        if isinstance(p, VarRef):
            return 0.0
        if isinstance(p, OperatorApp):
            return (self.OP_W.get(p.op, 0.0)
                    + sum(self.program_score(a) for a in p.args))
        raise TypeMismatch(f"not a flashsplit program: {p!r}")

    def rule_increment(self, rule: RuleDef) -> float:
        if isinstance(rule.body, Apply):
            return self.OP_W.get(rule.body.op, 0.0)
        return 0.0


# ---------------------------------------------------------------------------
# MinSplits
# ---------------------------------------------------------------------------

def min_splits(arena, root: int, states) -> int:
    """Fewest fields any program produces on any state, by clustering."""
    if arena.volume(root) == 0:
        raise EmptyVsa("min_splits needs a non-empty space")
    best = None
    for st in states:
        for vec, _ in cluster_by_outputs(arena, root, (st,)):
            out = vec[0]
            if out is BOTTOM or not isinstance(out, ListV):
                continue
            n = len(out.items)
            if best is None or n < best:
                best = n
    if best is None:
        raise EmptyVsa("no program produced an outcome on any state")
    return best


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------

def _spec_positions(states: list, spec) -> dict:
    """Absolute split offsets named by the spec, per record state.

    Tiling field lists contribute their interior boundaries; loose
    payloads (single fields, partial field runs, negative examples)
    contribute every named region's endpoints, since each one is a split
    the user pointed at even when the full tiling is unknown."""
    pos: dict = {}
    for st in states:
        pos[st] = set()
    for st, c in spec:
        v = st.get("v")
        if not isinstance(v, RegionV):
            continue
        bag = pos.setdefault(st, set())
        vals: list = []
        single = getattr(c, "value", None)
        if single is not None:
            vals.append(single)
        payload = getattr(c, "values", None)
        if payload:
            vals.extend(payload)
        for f in vals:
            if isinstance(f, IntV):
                bag.add(f.value)
                continue
            if isinstance(f, RegionV):
                f = ListV((f,))
            if not isinstance(f, ListV):
                continue
            delims = _fields_to_delims(f, v)
            if delims is not None:
                for m in delims:
                    bag.add(m.start)
                    bag.add(m.end)
                continue
            for m in f.items:
                if isinstance(m, RegionV) and m.doc == v.doc:
                    bag.add(m.start)
                    bag.add(m.end)
    return pos


def build_pools(states: list, spec) -> dict:
    """Delimiter strings adjacent to the given split positions, and the
    context tokens that touch a candidate match boundary."""
    positions = _spec_positions(list(states), spec)
    strings: set = set()
    for st, bag in positions.items():
        v = st.get("v")
        if not isinstance(v, RegionV):
            continue
        text = v.slice()
        for p in bag:
            rel = p - v.start
            if not 0 <= rel <= len(text):
                continue
            for n in range(1, _MAX_DELIM_LEN + 1):
                if rel - n >= 0:
                    strings.add(text[rel - n:rel])
                if rel + n <= len(text):
                    strings.add(text[rel:rel + n])
    strings.discard("")

    toks: list = [EMPTY_TOKEN]
    for tok in _CONTEXT_TOKENS:
        hit = False
        for st in positions:
            v = st.get("v")
            if not isinstance(v, RegionV):
                continue
            text = v.slice()
            starts: set = set()
            ends: set = set()
            for s in strings:
                for lst in (_exact_matches([v, StrV(s)]),
                            _include_whitespace([v, StrV(s)])):
                    for m in lst.items:
                        starts.add(m.start - v.start)
                        ends.add(m.end - v.start)
            if ends_at(tok, text) & starts or starts_at(tok, text) & ends:
                hit = True
                break
        if hit:
            toks.append(tok)
    return {
        "s": [Literal(StrV(s)) for s in sorted(strings, key=lambda s: (len(s), s))],
        "r": [Literal(t) for t in toks],
    }


# ---------------------------------------------------------------------------
# domain bundle
# ---------------------------------------------------------------------------

def make_state(record: str) -> State:
    return State({"v": RegionV(record, 0, len(record), record)})


def make_domain() -> Domain:
    g = make_grammar()
    return Domain(
        name="flashsplit",
        grammar=g,
        output_symbol="fields",
        witnesses=dict(WITNESSES),
        ranking=FlashSplitRanking(),
        config=LearnConfig(unroll={"d": 6}),
        build_pools=build_pools,
        make_state=make_state,
        input_names=("v",),
        extras={"top_k": fs_top_k, "min_splits": min_splits,
                "outcome_score": outcome_score},
    )
