"""Grammar model: symbols, rule templates, enumeration, derivability.

Rules are templates over symbol slots. A rule body is one of

  Apply(op, args)      args mix SymArg (a slot), VarArg (a bound or input
                       variable), LamArg (a lambda wrapping a slot)
  Alias(symbol)        unit production
  LetIn(var, binding, inner)   let var = Apply(...) in <inner symbol>

The same template type doubles as the join shape descriptor in VSAs, so
program assembly (rule_to_program) and matching (match_rule) live here.

Finitization: open terminals draw from per-problem pools; recursive
nonterminals carry an unroll budget. Expanding a recursive symbol
decrements its own budget for the whole subtree underneath, so budget N
means at most N nested self-expansions (a Concat chain of N pieces).
Acyclic grammars (everything VsaToDsl exports) ignore budgets entirely.
enumerate_programs and contains_program share this finitization exactly;
the learner is measured against the enumerator, so they must never drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .operators import Operators
from .programs import (LambdaAbs, LetBind, Literal, OperatorApp, Program,
                       VarRef, program_text)
from .values import SemType

__all__ = ["SymArg", "VarArg", "LamArg", "Apply", "Alias", "LetIn",
           "RuleDef", "SymbolDef", "Grammar", "rule_slots",
           "rule_to_program", "match_rule", "substitute_slots",
           "enumerate_programs", "contains_program", "grammar_text"]


# ---------------------------------------------------------------------------
# rule templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymArg:
    symbol: str


@dataclass(frozen=True)
class VarArg:
    name: str


@dataclass(frozen=True)
class LamArg:
    param: str
    symbol: str


@dataclass(frozen=True)
class Apply:
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class Alias:
    symbol: str


@dataclass(frozen=True)
class LetIn:
    var: str
    binding: Apply
    inner: str


RuleBody = Union[Apply, Alias, LetIn]


@dataclass(frozen=True)
class RuleDef:
    """One production. `name` is stable across VsaToDsl re-export, which is
    what lets witness functions keep applying in later rounds."""
    name: str
    head: str
    head_type: SemType
    body: RuleBody

    @property
    def op(self) -> str:
        if isinstance(self.body, Apply):
            return self.body.op
        if isinstance(self.body, LetIn):
            return self.body.binding.op
        return "<alias>"


@dataclass(frozen=True)
class SymbolDef:
    """kind: nonterminal | terminal_annotated | terminal_open | extern | input

    terminal_annotated carries its finite program set inline.
    terminal_open names a pool that the problem supplies at learn time.
    extern points at a symbol of another grammar object.
    input is referenced through VarArg, never expanded.
    """
    name: str
    sem_type: SemType
    kind: str
    programs: tuple = ()
    generator: str = ""
    target: tuple = field(default=(), compare=False)  # (Grammar, symbol)


class Grammar:
    def __init__(self, name: str, operators: Operators,
                 symbols: Optional[list] = None,
                 rules: Optional[list] = None) -> None:
        self.name = name
        self.operators = operators
        self.symbols: dict[str, SymbolDef] = {}
        self.rules: dict[str, list[RuleDef]] = {}
        for s in symbols or []:
            self.add_symbol(s)
        for r in rules or []:
            self.add_rule(r)

    def add_symbol(self, s: SymbolDef) -> None:
        self.symbols[s.name] = s
        self.rules.setdefault(s.name, [])

    def add_rule(self, r: RuleDef) -> None:
        self.rules.setdefault(r.head, []).append(r)

    def sym(self, name: str) -> SymbolDef:
        return self.symbols[name]

    def rule_named(self, name: str) -> RuleDef:
        for rs in self.rules.values():
            for r in rs:
                if r.name == name:
                    return r
        raise KeyError(name)

    def reachable(self, symbol: str) -> frozenset:
        """Symbols reachable from `symbol` through rule references,
        including `symbol` itself. Rules added after the first call for
        a symbol are not picked up; grammars are built before use."""
        cache = getattr(self, "_reach_cache", None)
        if cache is None:
            cache = self._reach_cache = {}
        got = cache.get(symbol)
        if got is not None:
            return got
        seen = {symbol}
        stack = [symbol]
        while stack:
            s = stack.pop()
            for r in self.rules.get(s, ()):
                refs = [info[0] for info in rule_slots(r)]
                if isinstance(r.body, Alias):
                    refs.append(r.body.symbol)
                for t in refs:
                    if t not in seen:
                        seen.add(t)
                        stack.append(t)
        out = frozenset(seen)
        cache[symbol] = out
        return out

    def recursive_symbols(self) -> frozenset:
        """Symbols that can reach themselves through rule references."""
        edges: dict[str, set] = {}
        for head, rs in self.rules.items():
            refs: set = set()
            for r in rs:
                refs.update(info[0] for info in rule_slots(r))
                if isinstance(r.body, Alias):
                    refs.add(r.body.symbol)
            edges[head] = refs
        out = set()
        for s in edges:
            seen: set = set()
            stack = list(edges.get(s, ()))
            while stack:
                t = stack.pop()
                if t == s:
                    out.add(s)
                    break
                if t in seen:
                    continue
                seen.add(t)
                stack.extend(edges.get(t, ()))
        return frozenset(out)


# ---------------------------------------------------------------------------
# template <-> program
# ---------------------------------------------------------------------------

def rule_slots(rule: RuleDef) -> list:
    """Ordered (symbol, path) pairs; path addresses the slot for substitution.

    LetIn lists its binding slots before the inner symbol.
    """
    body = rule.body
    if isinstance(body, Alias):
        return []
    out = []
    if isinstance(body, LetIn):
        for i, a in enumerate(body.binding.args):
            if isinstance(a, SymArg):
                out.append((a.symbol, ("b", i)))
            elif isinstance(a, LamArg):
                out.append((a.symbol, ("b", i)))
        out.append((body.inner, ("inner",)))
        return out
    for i, a in enumerate(body.args):
        if isinstance(a, SymArg):
            out.append((a.symbol, ("a", i)))
        elif isinstance(a, LamArg):
            out.append((a.symbol, ("a", i)))
    return out


def _apply_to_program(app: Apply, progs: list, cursor: list) -> OperatorApp:
    args: list = []
    for a in app.args:
        if isinstance(a, SymArg):
            args.append(progs[cursor[0]])
            cursor[0] += 1
        elif isinstance(a, VarArg):
            args.append(VarRef(a.name))
        elif isinstance(a, LamArg):
            args.append(LambdaAbs(a.param, progs[cursor[0]]))
            cursor[0] += 1
        else:
            raise TypeError(a)
    return OperatorApp(app.op, tuple(args))


def rule_to_program(rule: RuleDef, progs: list) -> Program:
    """Instantiate the template with one program per slot (slot order)."""
    body = rule.body
    cursor = [0]
    if isinstance(body, Apply):
        return _apply_to_program(body, progs, cursor)
    if isinstance(body, LetIn):
        binding = _apply_to_program(body.binding, progs, cursor)
        inner = progs[cursor[0]]
        cursor[0] += 1
        return LetBind(body.var, binding, inner)
    raise TypeError(f"alias rules have no template: {rule.name}")


def _match_apply(app: Apply, p: Program, out: list) -> bool:
    if not isinstance(p, OperatorApp) or p.op != app.op or len(p.args) != len(app.args):
        return False
    for a, q in zip(app.args, p.args):
        if isinstance(a, SymArg):
            out.append(q)
        elif isinstance(a, VarArg):
            if not (isinstance(q, VarRef) and q.name == a.name):
                return False
        elif isinstance(a, LamArg):
            if not (isinstance(q, LambdaAbs) and q.param == a.param):
                return False
            out.append(q.body)
        else:
            return False
    return True


def match_rule(rule: RuleDef, p: Program) -> Optional[list]:
    """Inverse of rule_to_program: slot programs, or None if p has a
    different shape. Lambda params match by name (programs built through
    templates always reuse the template's parameter names)."""
    body = rule.body
    out: list = []
    if isinstance(body, Apply):
        return out if _match_apply(body, p, out) else None
    if isinstance(body, LetIn):
        if not isinstance(p, LetBind) or p.name != body.var:
            return None
        if not _match_apply(body.binding, p.binding, out):
            return None
        out.append(p.body)
        return out
    return None


def substitute_slots(rule: RuleDef, new_head: str, new_symbols: list,
                     new_name: Optional[str] = None) -> RuleDef:
    """Re-target the template's slots at fresh symbols (VsaToDsl export)."""
    body = rule.body
    it = iter(new_symbols)

    def sub_apply(app: Apply) -> Apply:
        args: list = []
        for a in app.args:
            if isinstance(a, SymArg):
                args.append(SymArg(next(it)))
            elif isinstance(a, LamArg):
                args.append(LamArg(a.param, next(it)))
            else:
                args.append(a)
        return Apply(app.op, tuple(args))

    if isinstance(body, Apply):
        nb: RuleBody = sub_apply(body)
    elif isinstance(body, LetIn):
        nb = LetIn(body.var, sub_apply(body.binding), next(it))
    else:
        raise TypeError(rule)
    return RuleDef(new_name or rule.name, new_head, rule.head_type, nb)


# ---------------------------------------------------------------------------
# enumeration (the brute-force oracle) and derivability
# ---------------------------------------------------------------------------

Pools = dict


def _pool_for(g: Grammar, sd: SymbolDef, pools: Pools) -> tuple:
    key = sd.generator or sd.name
    progs = pools.get(key)
    if progs is None:
        raise KeyError(f"no pool for open terminal {sd.name!r} (key {key!r})")
    return tuple(progs)


def _unroll_for(unroll, symbol: str) -> int:
    if isinstance(unroll, dict):
        return unroll.get(symbol, 3)
    return unroll


class _Enum:
    def __init__(self, pools: Pools, unroll) -> None:
        self.pools = pools
        self.unroll = unroll
        self.memo: dict = {}
        self.rec_cache: dict = {}

    def _recursive(self, g: Grammar) -> frozenset:
        key = id(g)
        if key not in self.rec_cache:
            self.rec_cache[key] = g.recursive_symbols()
        return self.rec_cache[key]

    def programs(self, g: Grammar, symbol: str, budget: tuple) -> list:
        key = (id(g), symbol, budget)
        got = self.memo.get(key)
        if got is not None:
            return got
        sd = g.sym(symbol)
        out: list = []
        seen: set = set()

        def emit(p: Program) -> None:
            if p not in seen:
                seen.add(p)
                out.append(p)

        if sd.kind == "terminal_annotated":
            for p in sd.programs:
                emit(p)
        elif sd.kind == "terminal_open":
            for p in _pool_for(g, sd, self.pools):
                emit(p)
        elif sd.kind == "extern":
            tg, ts = sd.target
            for p in self.programs(tg, ts, self._budget_for(tg)):
                emit(p)
        elif sd.kind == "input":
            emit(VarRef(sd.name))
        elif sd.kind == "nonterminal":
            bd = dict(budget)
            if symbol in self._recursive(g):
                left = bd.get(symbol, _unroll_for(self.unroll, symbol))
                if left <= 0:
                    self.memo[key] = []
                    return []
                bd[symbol] = left - 1
            nb = tuple(sorted(bd.items()))
            for rule in g.rules[symbol]:
                if isinstance(rule.body, Alias):
                    for p in self.programs(g, rule.body.symbol, nb):
                        emit(p)
                    continue
                slot_lists = [self.programs(g, s, nb) for s, _ in rule_slots(rule)]
                if any(not sl for sl in slot_lists):
                    continue
                for combo in _product(slot_lists):
                    emit(rule_to_program(rule, combo))
        else:
            raise ValueError(f"bad symbol kind {sd.kind!r}")
        self.memo[key] = out
        return out

    def _budget_for(self, g: Grammar) -> tuple:
        return ()


def _product(lists: list) -> Iterator[list]:
    """Cross product in lexicographic order, first slot major."""
    if not lists:
        yield []
        return
    idx = [0] * len(lists)
    n = len(lists)
    while True:
        yield [lists[i][idx[i]] for i in range(n)]
        j = n - 1
        while j >= 0:
            idx[j] += 1
            if idx[j] < len(lists[j]):
                break
            idx[j] = 0
            j -= 1
        if j < 0:
            return


def enumerate_programs(g: Grammar, symbol: str, pools: Pools,
                       unroll: int = 3, limit: Optional[int] = None) -> Iterator[Program]:
    """Every distinct program of the finitized language, exactly once.

    Order: rule order, then slot cross products lexicographically. For an
    acyclic grammar the budget never binds, so the whole language comes out.
    """
    en = _Enum(pools, unroll)
    for i, p in enumerate(en.programs(g, symbol, ())):
        if limit is not None and i >= limit:
            return
        yield p


def contains_program(g: Grammar, symbol: str, p: Program, pools: Pools,
                     unroll: int = 3) -> bool:
    """Derivability under the same finitization as enumerate_programs."""
    en = _Enum(pools, unroll)
    memo: dict = {}
    rec_of = en._recursive

    def derives(gr: Grammar, sym: str, prog: Program, budget: tuple) -> bool:
        key = (id(gr), sym, prog, budget)
        got = memo.get(key)
        if got is not None:
            return got
        memo[key] = False  # in-progress guard for alias cycles
        sd = gr.sym(sym)
        res = False
        if sd.kind == "terminal_annotated":
            res = prog in sd.programs
        elif sd.kind == "terminal_open":
            res = prog in _pool_for(gr, sd, pools)
        elif sd.kind == "extern":
            tg, ts = sd.target
            res = derives(tg, ts, prog, ())
        elif sd.kind == "input":
            res = prog == VarRef(sd.name)
        elif sd.kind == "nonterminal":
            bd = dict(budget)
            if sym in rec_of(gr):
                left = bd.get(sym, _unroll_for(unroll, sym))
                if left <= 0:
                    memo[key] = False
                    return False
                bd[sym] = left - 1
            nb = tuple(sorted(bd.items()))
            for rule in gr.rules[sym]:
                if isinstance(rule.body, Alias):
                    if derives(gr, rule.body.symbol, prog, nb):
                        res = True
                        break
                    continue
                parts = match_rule(rule, prog)
                if parts is None:
                    continue
                if all(derives(gr, s, q, nb)
                       for (s, _), q in zip(rule_slots(rule), parts)):
                    res = True
                    break
        memo[key] = res
        return res

    return derives(g, symbol, p, ())


# ---------------------------------------------------------------------------
# text dump
# ---------------------------------------------------------------------------

def _body_text(body: RuleBody) -> str:
    def arg_text(a) -> str:
        if isinstance(a, SymArg):
            return a.symbol
        if isinstance(a, VarArg):
            return a.name
        if isinstance(a, LamArg):
            return f"λ{a.param} ⇒ {a.symbol}"
        return repr(a)

    if isinstance(body, Alias):
        return body.symbol
    if isinstance(body, Apply):
        return f"{body.op}({', '.join(arg_text(a) for a in body.args)})"
    if isinstance(body, LetIn):
        return (f"let {body.var} = {_body_text(body.binding)} in {body.inner}")
    return repr(body)


def grammar_text(g: Grammar) -> str:
    lines = [f"grammar {g.name}"]
    for name, sd in g.symbols.items():
        if sd.kind == "input":
            lines.append(f"  @input {sd.sem_type} {name}")
    for head, rs in g.rules.items():
        sd = g.symbols[head]
        if sd.kind != "nonterminal":
            continue
        alts = " | ".join(_body_text(r.body) for r in rs)
        lines.append(f"  {head} : {sd.sem_type} := {alts}")
    for name, sd in g.symbols.items():
        if sd.kind == "terminal_annotated":
            shown = ", ".join(program_text(p) for p in sd.programs[:8])
            suffix = ", ..." if len(sd.programs) > 8 else ""
            lines.append(f"  {name} in {{{shown}{suffix}}}")
        elif sd.kind == "terminal_open":
            lines.append(f"  {name} : {sd.sem_type} (pool {sd.generator or name})")
        elif sd.kind == "extern":
            tg, ts = sd.target
            lines.append(f"  {name} := extern {tg.name}.{ts}")
    return "\n".join(lines)
