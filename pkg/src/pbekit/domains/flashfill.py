"""String transformation DSL over rows of cells.

A program maps a row (bound as `vs`) to one output string built from
constant pieces and substrings of cells, optionally guarded by regex
conditionals. Positions inside a cell come either from absolute offsets
or from token-pair context matches.
"""

from __future__ import annotations

from typing import Optional

from ..constraints import (Equals, Member, Provenance, Relevance, Spec,
                           references_column)
from ..engine import LearnConfig, LearnCtx, LocalRefiner, RuleWitness
from ..errors import DomainError, TypeMismatch, WitnessMissing
from ..grammar import (Apply, Alias, Grammar, LetIn, RuleDef, SymArg,
                       SymbolDef, VarArg)
from ..operators import Operators
from ..programs import Literal, OperatorApp, Program, VarRef
from ..values import (BoolV, IntV, ListV, RegexV, SemType, State, StrV,
                      TupleV, T_BOOL, T_INT, T_REGEX, T_STR, Value, list_of,
                      tuple_of, value_sort_key)
from ..vsa import Arena, Ranking, partition_syntactic
from . import Domain
from .tokens import (POSITION_TOKENS, ends_at, regpos_positions, starts_at,
                     token_occurs)

__all__ = ["make_domain", "make_grammar", "make_operators", "build_pools",
           "FlashFillRanking", "WITNESSES"]


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _want_str(v: Value) -> StrV:
    if not isinstance(v, StrV):
        raise TypeMismatch(f"expected string, got {type(v).__name__}")
    return v


def _concat(vs: list) -> StrV:
    return StrV(_want_str(vs[0]).text + _want_str(vs[1]).text)


def _const_str(vs: list) -> StrV:
    return _want_str(vs[0])


def _kth(vs: list) -> Value:
    lst, k = vs
    if not isinstance(lst, ListV) or not isinstance(k, IntV):
        raise TypeMismatch("Kth wants (list, int)")
    n = len(lst.items)
    i = k.value if k.value >= 0 else n + k.value
    if not 0 <= i < n:
        raise DomainError(f"column {k.value} out of range for {n} cells")
    return lst.items[i]


def _sub_str(vs: list) -> StrV:
    s, pp = vs
    text = _want_str(s).text
    if not isinstance(pp, TupleV) or len(pp.items) != 2:
        raise TypeMismatch("SubStr wants a position pair")
    i, j = pp.items
    if not isinstance(i, IntV) or not isinstance(j, IntV):
        raise TypeMismatch("positions must be ints")
    if not 0 <= i.value <= j.value <= len(text):
        raise DomainError(f"bad span [{i.value}, {j.value}) in {len(text)}-char string")
    return StrV(text[i.value:j.value])


def _pair(vs: list) -> TupleV:
    return TupleV((vs[0], vs[1]))


def _abs_pos(vs: list) -> IntV:
    s, k = vs
    text = _want_str(s).text
    if not isinstance(k, IntV):
        raise TypeMismatch("AbsPos wants an int offset")
    p = k.value if k.value >= 0 else len(text) + k.value + 1
    if not 0 <= p <= len(text):
        raise DomainError(f"offset {k.value} out of range for length {len(text)}")
    return IntV(p)


def _reg_pos(vs: list) -> IntV:
    s, rr, k = vs
    text = _want_str(s).text
    if not isinstance(rr, TupleV) or len(rr.items) != 2:
        raise TypeMismatch("RegPos wants a token pair")
    r1, r2 = rr.items
    if not isinstance(r1, RegexV) or not isinstance(r2, RegexV):
        raise TypeMismatch("token pair must hold regexes")
    if not isinstance(k, IntV):
        raise TypeMismatch("RegPos wants an int index")
    ps = regpos_positions(text, r1, r2)
    idx = k.value - 1 if k.value >= 1 else len(ps) + k.value
    if k.value == 0 or not 0 <= idx < len(ps):
        raise DomainError(f"match index {k.value} out of range ({len(ps)} matches)")
    return IntV(ps[idx])


def _ite_select(cond: Value) -> int:
    if not isinstance(cond, BoolV):
        raise TypeMismatch("ITE condition must be a bool")
    return 1 if cond.value else 2


def _matches(vs: list) -> BoolV:
    s, r = vs
    if not isinstance(r, RegexV):
        raise TypeMismatch("Matches wants a regex")
    return BoolV(token_occurs(r, _want_str(s).text))


def make_operators() -> Operators:
    ops = Operators()
    t_pp = tuple_of(T_INT, T_INT)
    t_rr = tuple_of(T_REGEX, T_REGEX)
    any_t = SemType("any")
    ops.define("Concat", (T_STR, T_STR), T_STR, _concat)
    ops.define("ConstStr", (T_STR,), T_STR, _const_str)
    ops.define("Kth", (list_of(T_STR), T_INT), T_STR, _kth)
    ops.define("SubStr", (T_STR, t_pp), T_STR, _sub_str)
    ops.define("Pair", (any_t, any_t), tuple_of(any_t, any_t), _pair)
    ops.define("AbsPos", (T_STR, T_INT), T_INT, _abs_pos)
    ops.define("RegPos", (T_STR, t_rr, T_INT), T_INT, _reg_pos)
    ops.define_select("ITE", (T_BOOL, T_STR, T_STR), T_STR, _ite_select)
    ops.define("Matches", (T_STR, T_REGEX), T_BOOL, _matches)
    return ops


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

def make_grammar(ops: Optional[Operators] = None) -> Grammar:
    ops = ops or make_operators()
    g = Grammar("flashfill", ops)
    g.add_symbol(SymbolDef("vs", list_of(T_STR), "input"))
    g.add_symbol(SymbolDef("start", T_STR, "nonterminal"))
    g.add_symbol(SymbolDef("e", T_STR, "nonterminal"))
    g.add_symbol(SymbolDef("f", T_STR, "nonterminal"))
    g.add_symbol(SymbolDef("sub", T_STR, "nonterminal"))
    g.add_symbol(SymbolDef("pp", tuple_of(T_INT, T_INT), "nonterminal"))
    g.add_symbol(SymbolDef("pos", T_INT, "nonterminal"))
    g.add_symbol(SymbolDef("rr", tuple_of(T_REGEX, T_REGEX), "nonterminal"))
    g.add_symbol(SymbolDef("cond", T_BOOL, "nonterminal"))
    g.add_symbol(SymbolDef("b", T_BOOL, "nonterminal"))
    g.add_symbol(SymbolDef("w", T_STR, "terminal_open", generator="w"))
    g.add_symbol(SymbolDef("k", T_INT, "terminal_open", generator="k"))
    g.add_symbol(SymbolDef("r", T_REGEX, "terminal_open", generator="r"))

    g.add_rule(RuleDef("start_e", "start", T_STR, Alias("e")))
    g.add_rule(RuleDef("start_ite", "start", T_STR,
                       Apply("ITE", (SymArg("cond"), SymArg("e"), SymArg("start")))))
    g.add_rule(RuleDef("e_f", "e", T_STR, Alias("f")))
    g.add_rule(RuleDef("e_concat", "e", T_STR,
                       Apply("Concat", (SymArg("f"), SymArg("e")))))
    g.add_rule(RuleDef("f_const", "f", T_STR,
                       Apply("ConstStr", (SymArg("w"),))))
    g.add_rule(RuleDef("f_sub", "f", T_STR,
                       LetIn("x", Apply("Kth", (VarArg("vs"), SymArg("k"))), "sub")))
    g.add_rule(RuleDef("sub_substr", "sub", T_STR,
                       Apply("SubStr", (VarArg("x"), SymArg("pp")))))
    g.add_rule(RuleDef("pp_pair", "pp", tuple_of(T_INT, T_INT),
                       Apply("Pair", (SymArg("pos"), SymArg("pos")))))
    g.add_rule(RuleDef("pos_abs", "pos", T_INT,
                       Apply("AbsPos", (VarArg("x"), SymArg("k")))))
    g.add_rule(RuleDef("pos_reg", "pos", T_INT,
                       Apply("RegPos", (VarArg("x"), SymArg("rr"), SymArg("k")))))
    g.add_rule(RuleDef("rr_pair", "rr", tuple_of(T_REGEX, T_REGEX),
                       Apply("Pair", (SymArg("r"), SymArg("r")))))
    g.add_rule(RuleDef("cond_match", "cond", T_BOOL,
                       LetIn("s", Apply("Kth", (VarArg("vs"), SymArg("k"))), "b")))
    g.add_rule(RuleDef("b_matches", "b", T_BOOL,
                       Apply("Matches", (VarArg("s"), SymArg("r")))))
    return g


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------

def _candidates(constraints: tuple, want: type) -> list:
    """Intersect Equals/Member into one candidate list of `want` values."""
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
    return sorted((v for v in cands if isinstance(v, want)),
                  key=value_sort_key)


def _pass_through(state: State, constraints: tuple) -> Spec:
    return tuple((state, c) for c in constraints)


def _row(state: State) -> ListV:
    vs = state.get("vs")
    if not isinstance(vs, ListV):
        raise WitnessMissing("state has no row binding vs")
    return vs


class ConcatWitness(RuleWitness):
    """Nonempty split of each target output between the two pieces."""

    def backprop(self, rule, state, constraints, ctx):
        out = []
        for v in _candidates(constraints, StrV):
            o = v.text
            for i in range(1, len(o)):
                out.append({0: ((state, Equals(StrV(o[:i]))),),
                            1: ((state, Equals(StrV(o[i:]))),)})
        return out


class ConstWitness(RuleWitness):
    """Identity: the literal slot inherits the output constraints."""

    def backprop(self, rule, state, constraints, ctx):
        return [{0: _pass_through(state, constraints)}]


class KthLetWitness(RuleWitness):
    """One disjunct per cell that could contain the target; the column
    index gets both its nonnegative and negative spelling."""

    def backprop(self, rule, state, constraints, ctx):
        cells = _row(state).items
        n = len(cells)
        out = []
        for v in _candidates(constraints, StrV):
            for c, cell in enumerate(cells):
                if v.text in cell.text:
                    out.append({
                        0: ((state, Member((IntV(c), IntV(c - n)))),),
                        1: ((state.extend("x", cell), Equals(v)),),
                    })
        return out


class SubStrWitness(RuleWitness):
    """One disjunct per occurrence of the target inside the bound cell.
    A provenance restriction pins the occurrence instead."""

    def backprop(self, rule, state, constraints, ctx):
        x = state.get("x")
        if not isinstance(x, StrV):
            raise WitnessMissing("SubStr outside a cell binding")
        s = x.text
        out = []
        for v in _candidates(constraints, StrV):
            o = v.text
            for i in range(len(s) - len(o) + 1):
                if s[i:i + len(o)] == o:
                    span = TupleV((IntV(i), IntV(i + len(o))))
                    out.append({0: ((state, Equals(span)),)})
        return out


class PairWitness(RuleWitness):
    """Componentwise split of each target tuple."""

    def backprop(self, rule, state, constraints, ctx):
        out = []
        for v in _candidates(constraints, TupleV):
            if len(v.items) != 2:
                continue
            out.append({0: ((state, Equals(v.items[0])),),
                        1: ((state, Equals(v.items[1])),)})
        return out


class AbsPosWitness(RuleWitness):
    """A position p is reachable as offset p or offset p - len - 1."""

    def backprop(self, rule, state, constraints, ctx):
        x = state.get("x")
        if not isinstance(x, StrV):
            raise WitnessMissing("AbsPos outside a cell binding")
        length = len(x.text)
        out = []
        for v in _candidates(constraints, IntV):
            p = v.value
            if 0 <= p <= length:
                out.append({0: ((state, Member((IntV(p), IntV(p - length - 1)))),)})
        return out


class RegPosWitness(RuleWitness):
    """Token pairs whose runs meet at the target position; the match index
    gets its 1-based and negative spellings."""

    def backprop(self, rule, state, constraints, ctx):
        x = state.get("x")
        if not isinstance(x, StrV):
            raise WitnessMissing("RegPos outside a cell binding")
        s = x.text
        pool = [pr.value for pr in ctx.pools.get("r", ())
                if isinstance(pr, Literal) and isinstance(pr.value, RegexV)]
        out = []
        for v in _candidates(constraints, IntV):
            p = v.value
            lefts = [r for r in pool if p in ends_at(r, s)]
            rights = [r for r in pool if p in starts_at(r, s)]
            for r1 in lefts:
                for r2 in rights:
                    ps = regpos_positions(s, r1, r2)
                    idx = ps.index(p)
                    out.append({
                        0: ((state, Equals(TupleV((r1, r2)))),),
                        1: ((state, Member((IntV(idx + 1), IntV(idx - len(ps))))),),
                    })
        return out


class IteWitness(RuleWitness):
    """Split on the scrutinee's output clusters: a true cluster routes the
    spec to the then-branch, a false cluster to the continuation."""

    cond_slot = 0

    def branches(self, rule, state, constraints, value, ctx):
        if not isinstance(value, BoolV):
            return []
        if value.value:
            return [{1: _pass_through(state, constraints)}]
        return [{2: _pass_through(state, constraints)}]


class CondLetWitness(RuleWitness):
    """Like the cell-binding string rule but for boolean targets."""

    def backprop(self, rule, state, constraints, ctx):
        cells = _row(state).items
        n = len(cells)
        targets = _candidates(constraints, BoolV)
        if not targets:
            return []
        out = []
        for c, cell in enumerate(cells):
            out.append({
                0: ((state, Member((IntV(c), IntV(c - n)))),),
                1: _pass_through(state.extend("s", cell), constraints),
            })
        return out


class MatchesWitness(RuleWitness):
    """Filter the token pool by the wanted truth value on the bound cell."""

    def backprop(self, rule, state, constraints, ctx):
        s = state.get("s")
        if not isinstance(s, StrV):
            raise WitnessMissing("Matches outside a cell binding")
        want = {v.value for v in _candidates(constraints, BoolV)}
        if not want:
            return []
        pool = [pr.value for pr in ctx.pools.get("r", ())
                if isinstance(pr, Literal) and isinstance(pr.value, RegexV)]
        good = tuple(r for r in pool if token_occurs(r, s.text) in want)
        if not good:
            return []
        return [{0: ((state, Member(good)),)}]


WITNESSES = {
    "start_ite": IteWitness(),
    "e_concat": ConcatWitness(),
    "f_const": ConstWitness(),
    "f_sub": KthLetWitness(),
    "sub_substr": SubStrWitness(),
    "pp_pair": PairWitness(),
    "pos_abs": AbsPosWitness(),
    "pos_reg": RegPosWitness(),
    "rr_pair": PairWitness(),
    "cond_match": CondLetWitness(),
    "b_matches": MatchesWitness(),
}


# ---------------------------------------------------------------------------
# locally-refining constraint handlers
# ---------------------------------------------------------------------------

_COLUMN_RULES = ("f_sub", "cond_match")


def _column_spellings(column: int, state: State) -> frozenset:
    n = len(_row(state).items)
    return frozenset((IntV(column), IntV(column - n)))


class RelevanceRefiner(LocalRefiner):
    """Irrelevant columns are filtered out of every column-selecting
    terminal; required columns become a syntactic keep-only-referencing
    partition over the whole space."""

    kind = Relevance

    def applies_to(self, rule: RuleDef) -> bool:
        return rule.name in _COLUMN_RULES

    def refine(self, rule, meta_spec, state, constraint, ctx):
        if constraint.required:
            return None
        bad = _column_spellings(constraint.column, state)
        from ..constraints import NotEquals
        spec = tuple((state, NotEquals(v)) for v in sorted(bad, key=value_sort_key))
        return [{0: spec}]

    def post(self, arena: Arena, root: int, state: State, constraint, ctx):
        if not constraint.required:
            return None
        wanted = _column_spellings(constraint.column, state)

        def leaf_pred(p: Program) -> bool:
            return references_column(p, constraint.column, state)

        def slot_extra(rule: RuleDef, slot: int):
            if rule.name in _COLUMN_RULES and slot == 0:
                return wanted
            return None

        keep, _ = partition_syntactic(arena, root, leaf_pred, slot_extra)
        return keep


class ProvenanceRefiner(LocalRefiner):
    """Pin the extraction join whose piece equals the cited span to the
    cited source location."""

    kind = Provenance

    def applies_to(self, rule: RuleDef) -> bool:
        return rule.name == "sub_substr"

    def refine(self, rule, meta_spec, state, constraint, ctx):
        cells = _row(state).items
        if not 0 <= constraint.column < len(cells):
            return None
        cell = cells[constraint.column]
        ls, le = constraint.loc
        if not 0 <= ls <= le <= len(cell.text):
            return None
        piece = cell.text[ls:le]
        for st, c in meta_spec:
            if not isinstance(c, Equals) or st.get("vs") != state.get("vs"):
                continue
            if not isinstance(c.value, StrV) or c.value.text != piece:
                continue
            x = st.get("x")
            if not isinstance(x, StrV):
                continue
            if x.text != cell.text:
                # This join extracts the cited text from some other cell;
                # if the cited span has a single writer it cannot be this one.
                return []
            span = TupleV((IntV(ls), IntV(le)))
            return [{0: ((st, Equals(span)),)}]
        return None


REFINERS = (RelevanceRefiner(), ProvenanceRefiner())


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

class FlashFillRanking(Ranking):
    """Prefers context-relative positions over absolute ones, short
    constants over long, few concatenation pieces, and unconditional
    programs over conditional chains."""

    OP_W = {
        "Concat": -1.0,
        "ConstStr": -0.5,
        "SubStr": 0.8,
        "Kth": 0.0,
        "Pair": 0.0,
        "AbsPos": -1.2,
        "RegPos": 0.0,
        "ITE": -3.0,
        "Matches": 0.0,
    }

    def program_score(self, p: Program) -> float:
        from ..programs import LambdaAbs, LetBind
        if isinstance(p, Literal):
            if isinstance(p.value, StrV):
                return -0.25 * len(p.value.text)
            if isinstance(p.value, IntV):
                return -0.01 * abs(p.value.value)
            return 0.0
        if isinstance(p, VarRef):
            return 0.0
        if isinstance(p, LetBind):
            return self.program_score(p.binding) + self.program_score(p.body)
        if isinstance(p, LambdaAbs):
            return self.program_score(p.body)
        if isinstance(p, OperatorApp):
            return (self.OP_W.get(p.op, 0.0)
                    + sum(self.program_score(a) for a in p.args))
        raise TypeMismatch(f"not a program: {p!r}")

    def rule_increment(self, rule: RuleDef) -> float:
        body = rule.body
        if isinstance(body, Apply):
            return self.OP_W.get(body.op, 0.0)
        if isinstance(body, LetIn):
            return self.OP_W.get(body.binding.op, 0.0)
        return 0.0


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------

_MAX_CONST_PIECE = 8


def _spec_strings(spec: Spec) -> list:
    out = []
    for _, c in spec:
        vals: tuple = ()
        if isinstance(c, Equals):
            vals = (c.value,)
        elif isinstance(c, Member):
            vals = c.values
        for v in vals:
            if isinstance(v, StrV):
                out.append(v.text)
    return out


def build_pools(states: list, spec: Spec) -> dict:
    """Constant pool from output substrings, offset pool sized to the data,
    token pool from the library."""
    outs = _spec_strings(spec)
    subs = set(outs)
    for o in outs:
        for i in range(len(o)):
            for j in range(i + 1, min(i + _MAX_CONST_PIECE, len(o)) + 1):
                subs.add(o[i:j])
    w = [Literal(StrV(s)) for s in sorted(subs, key=lambda s: (len(s), s))]

    length = 0
    for st in states:
        vs = st.get("vs")
        if isinstance(vs, ListV):
            length = max(length, len(vs.items))
            for cell in vs.items:
                if isinstance(cell, StrV):
                    length = max(length, len(cell.text))
    for o in outs:
        length = max(length, len(o))
    k = [Literal(IntV(i)) for i in range(-(length + 1), length + 2)]
    r = [Literal(RegexV(t.source)) for t in POSITION_TOKENS]
    return {"w": w, "k": k, "r": r}


# ---------------------------------------------------------------------------
# domain bundle
# ---------------------------------------------------------------------------

def make_state(row: list) -> State:
    return State({"vs": ListV(tuple(StrV(c) for c in row))})


def make_domain() -> Domain:
    g = make_grammar()
    return Domain(
        name="flashfill",
        grammar=g,
        output_symbol="start",
        witnesses=dict(WITNESSES),
        ranking=FlashFillRanking(),
        config=LearnConfig(unroll={"start": 3, "e": 4}),
        build_pools=build_pools,
        make_state=make_state,
        refiners=REFINERS,
    )
