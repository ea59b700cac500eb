"""Deductive synthesis: top-down backpropagation of specs through rules.

learn() reduces a (symbol, spec) problem three ways:

  * alternatives   each rule of the symbol is learned and the results union
  * witnesses      a rule's witness transforms the output spec into specs
                   for the parameter slots; precise witnesses stand alone,
                   imprecise ones get wrapped in a projection guard
  * conditional    rules like ITE learn the scrutinee slot unconstrained,
                   cluster it on the example states, and learn the other
                   slots per cluster vector; per-cluster joins are
                   disjoint because the scrutinee clusters are

Multi-state specs backprop per state and the per-state disjuncts are
crossed, so every slot learn carries all states' narrowed constraints
at once and dead combinations die at the slot level. An imprecise
rule's projection guard then filters against the full spec in a single
joint clustering pass over the structure the rule just built, before
anything gets rebuilt into per-cluster form.

Every join the engine creates carries (rule, producing spec) in the
arena's join_meta: that is the subproblem memo incremental re-synthesis
re-learns from.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .constraints import (FalseC, Provenance, Relevance, Spec, satisfies)
from .errors import WitnessMissing
from .grammar import Alias, Grammar, RuleDef, rule_slots
from .programs import VarRef
from .values import State
from .vsa import BOTTOM, Arena, Vsa, cluster_by_outputs, project

__all__ = ["LearnConfig", "LearnResult", "RuleWitness", "LocalRefiner",
           "LearnCtx", "learn", "full_language"]


@dataclass
class LearnConfig:
    """unroll: per-symbol recursion budget (int for all, or {symbol: n}).
    disjunct_cap bounds each witness application; hitting it marks the
    result incomplete rather than wrong."""
    unroll: object = 3
    disjunct_cap: int = 512
    timeout_s: Optional[float] = None

    def unroll_for(self, symbol: str) -> int:
        if isinstance(self.unroll, dict):
            return self.unroll.get(symbol, 3)
        return self.unroll


@dataclass
class LearnCtx:
    grammar: Grammar
    pools: dict
    config: LearnConfig
    arena: Arena


class RuleWitness:
    """Backpropagation for one rule (looked up by rule name, which is
    stable across VsaToDsl export).

    backprop returns disjuncts: each a dict {slot index: Spec}; slots
    left out are unconstrained. Conditional witnesses set cond_slot and
    implement branches() instead; the engine clusters the cond slot's
    full space on the state and calls branches once per cluster value.
    """

    precise: bool = True
    cond_slot: Optional[int] = None

    def backprop(self, rule: RuleDef, state: State, constraints: tuple,
                 ctx: LearnCtx) -> list:
        raise NotImplementedError

    def branches(self, rule: RuleDef, state: State, constraints: tuple,
                 value, ctx: LearnCtx) -> list:
        raise NotImplementedError


class LocalRefiner:
    """Splice handler for one locally-refining constraint kind.

    refine() inspects a join that applies_to() accepted and returns
    disjunct slot-spec dicts like a witness backprop (None means leave
    the join alone, [] kills it). Slots absent from a disjunct keep
    their existing child node untouched. post() may rewrite the whole
    root afterwards (e.g. a syntactic partition); returning None keeps it.
    """

    kind: type = type(None)
    precise: bool = True

    def applies_to(self, rule: RuleDef) -> bool:
        raise NotImplementedError

    def refine(self, rule: RuleDef, meta_spec: Spec, state: State,
               constraint, ctx: LearnCtx) -> Optional[list]:
        raise NotImplementedError

    def post(self, arena: Arena, root: int, state: State, constraint,
             ctx: LearnCtx) -> Optional[int]:
        return None


@dataclass
class LearnResult:
    vsa: Vsa
    complete: bool
    grammar: Grammar
    spec: Spec
    pools: dict = field(default_factory=dict)

    @property
    def memo(self) -> dict:
        """Subproblem memo: join node id -> (rule, spec that produced it)."""
        return self.vsa.arena.join_meta


def _group_by_state(spec: Spec) -> list:
    groups: dict = {}
    order: list = []
    for st, c in spec:
        if st not in groups:
            groups[st] = []
            order.append(st)
        groups[st].append(c)
    return [(st, tuple(groups[st])) for st in order]


class _Learner:
    def __init__(self, grammar: Grammar, witnesses: dict, pools: dict,
                 config: LearnConfig, arena: Arena) -> None:
        self.g = grammar
        self.witnesses = witnesses
        self.pools = pools
        self.config = config
        self.arena = arena
        self.ctx = LearnCtx(grammar, pools, config, arena)
        self.cache: dict = {}
        self.complete = True
        self.deadline = (time.monotonic() + config.timeout_s
                         if config.timeout_s else None)
        self._rec: dict = {}

    def _recursive(self, g: Grammar) -> frozenset:
        key = id(g)
        if key not in self._rec:
            self._rec[key] = g.recursive_symbols()
        return self._rec[key]

    def _timed_out(self) -> bool:
        if self.deadline is not None and time.monotonic() > self.deadline:
            self.complete = False
            return True
        return False

    def _pool(self, g: Grammar, sd) -> tuple:
        key = sd.generator or sd.name
        progs = self.pools.get(key)
        if progs is None:
            raise WitnessMissing(f"no pool for open terminal {sd.name!r}")
        return tuple(progs)

    # -- main dispatch -------------------------------------------------

    def learn(self, g: Grammar, symbol: str, spec: Spec, budget: tuple) -> int:
        arena = self.arena
        spec = tuple(spec)
        if any(isinstance(c, FalseC) for _, c in spec):
            return arena.empty
        if self._timed_out():
            return arena.empty
        if budget:
            # Budget entries for symbols this subtree cannot reach can
            # never be consulted below here; dropping them lets sibling
            # subtrees at different depths share one cache entry.
            reach = g.reachable(symbol)
            budget = tuple(kv for kv in budget if kv[0] in reach)
        key = (id(g), symbol, spec, budget)
        got = self.cache.get(key)
        if got is not None:
            return got
        self.cache[key] = arena.empty  # in-progress guard for alias cycles

        sd = g.sym(symbol)
        if sd.kind == "terminal_annotated":
            res = arena.leaf([p for p in sd.programs
                              if satisfies(p, spec, arena.ops)], sd.sem_type)
        elif sd.kind == "terminal_open":
            res = arena.leaf([p for p in self._pool(g, sd)
                              if satisfies(p, spec, arena.ops)], sd.sem_type)
        elif sd.kind == "input":
            probe = VarRef(sd.name)
            res = arena.leaf([probe] if satisfies(probe, spec, arena.ops) else [],
                             sd.sem_type)
        elif sd.kind == "extern":
            tg, ts = sd.target
            res = self.learn(tg, ts, spec, ())
        elif sd.kind == "nonterminal":
            bd = dict(budget)
            if symbol in self._recursive(g):
                left = bd.get(symbol, self.config.unroll_for(symbol))
                if left <= 0:
                    return arena.empty
                bd[symbol] = left - 1
            nb = tuple(sorted(bd.items()))
            parts = []
            groups = _group_by_state(spec)
            for rule in g.rules[symbol]:
                if isinstance(rule.body, Alias):
                    parts.append(self.learn(g, rule.body.symbol, spec, nb))
                elif not spec:
                    parts.append(self._full_rule(g, rule, nb))
                else:
                    parts.append(self._learn_rule(g, rule, groups, nb))
            res = arena.union(parts, sd.sem_type)
        else:
            raise ValueError(f"bad symbol kind {sd.kind!r}")
        self.cache[key] = res
        return res

    # -- rules -----------------------------------------------------------

    def _full_rule(self, g: Grammar, rule: RuleDef, budget: tuple) -> int:
        kids = [self.learn(g, s, (), budget) for s, _ in rule_slots(rule)]
        return self.arena.join(rule, kids, rule.head_type, (rule, ()))

    def _learn_rule(self, g: Grammar, rule: RuleDef, groups: list,
                    budget: tuple) -> int:
        arena = self.arena
        w = self.witnesses.get(rule.name)
        if w is None:
            raise WitnessMissing(
                f"rule {rule.name!r} has no witness for "
                f"{[type(c).__name__ for _, cs in groups for c in cs]}")
        slots = rule_slots(rule)
        full = tuple((st, c) for st, cs in groups for c in cs)
        meta = (rule, full)
        cap = self.config.disjunct_cap

        def crossed(per_state: list) -> list:
            """Cross one disjunct list per state into joint slot specs.
            A joint disjunct concatenates each state's spec for a slot;
            a slot no state constrains stays absent."""
            joint: list = [{}]
            for ds in per_state:
                if len(ds) > cap:
                    self.complete = False
                    ds = ds[:cap]
                nxt: list = []
                for base in joint:
                    for d in ds:
                        m = dict(base)
                        for i, sp in d.items():
                            m[i] = m.get(i, ()) + tuple(sp)
                        nxt.append(m)
                if len(nxt) > cap:
                    self.complete = False
                    nxt = nxt[:cap]
                joint = nxt
                if not joint:
                    break
            return joint

        def build(disjuncts: list, fixed: Optional[dict] = None) -> list:
            out = []
            for d in disjuncts:
                kids = []
                dead = False
                for i, (sym, _) in enumerate(slots):
                    if fixed is not None and i in fixed:
                        kids.append(fixed[i])
                    else:
                        cid = self.learn(g, sym, tuple(d.get(i, ())), budget)
                        if arena.volume(cid) == 0:
                            dead = True
                            break
                        kids.append(cid)
                if not dead:
                    out.append(arena.join(rule, kids, rule.head_type, meta))
            return out

        if w.cond_slot is not None:
            ci = w.cond_slot
            cond_full = self.learn(g, slots[ci][0], (), budget)
            if arena.volume(cond_full) == 0:
                return arena.empty
            states = tuple(st for st, _ in groups)
            parts = []
            for vec, cid in cluster_by_outputs(arena, cond_full, states):
                if any(v is BOTTOM for v in vec):
                    continue
                per_state = [w.branches(rule, st, cs, vec[k], self.ctx)
                             for k, (st, cs) in enumerate(groups)]
                parts.extend(build(crossed(per_state), fixed={ci: cid}))
            res = arena.union(parts, rule.head_type)
        else:
            per_state = [w.backprop(rule, st, cs, self.ctx)
                         for st, cs in groups]
            res = arena.union(build(crossed(per_state)), rule.head_type)

        if not w.precise and arena.volume(res) > 0:
            guard = tuple((st, c) for st, c in full
                          if not isinstance(c, (Relevance, Provenance)))
            res = project(arena, res, guard)
        return res


def learn(grammar: Grammar, symbol: str, spec: Spec, witnesses: dict,
          pools: dict, config: Optional[LearnConfig] = None,
          arena: Optional[Arena] = None) -> LearnResult:
    """Learn the VSA of all finitized programs deriving from `symbol`
    that satisfy `spec`. Sound always; complete unless the result says
    otherwise (cap or deadline hit)."""
    config = config or LearnConfig()
    arena = arena or Arena(grammar.operators)
    lr = _Learner(grammar, witnesses, pools, config, arena)
    root = lr.learn(grammar, symbol, tuple(spec), ())
    return LearnResult(Vsa(arena, root), lr.complete, grammar, tuple(spec), pools)


def full_language(grammar: Grammar, symbol: str, pools: dict,
                  config: Optional[LearnConfig] = None,
                  arena: Optional[Arena] = None) -> LearnResult:
    """The whole finitized language as a VSA (empty-spec learn)."""
    return learn(grammar, symbol, (), {}, pools, config, arena)
