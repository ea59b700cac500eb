"""Incremental re-synthesis across interaction rounds.

A solved VSA is itself a grammar: every node becomes a symbol, every join
keeps its rule under fresh slot symbols, and annotated terminals carry the
surviving leaf programs. Re-learning against that exported grammar is what
makes later rounds cheap, and it is exact: the finitization is frozen when
the session starts, so re-learning the accumulated spec from scratch gives
the same program set (see replay_one_shot, which tests exactly that).

Constraint routing:

  * definitive          fresh learn over the exported grammar of the
                        current space (or the base grammar on round 0)
  * locally refining    splice: re-learn only the join slots a refiner
                        targets, keep every untouched node id
  * globally refining   semantic projection of the current space
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .constraints import (Datatype, FalseC, Provenance, Relevance, Spec,
                          category, conjoin, spec_states,
                          DEFINITIVE, LOCALLY_REFINING, satisfies)
from .engine import LearnConfig, LearnCtx, LocalRefiner, learn
from .errors import NotFitted
from .grammar import (Alias, Grammar, RuleDef, SymbolDef, rule_slots,
                      substitute_slots)
from .operators import types_compatible
from .values import SemType, State
from .vsa import (Arena, JoinNode, LeafNode, UnionNode, Vsa, contains,
                  project, reachable)

__all__ = ["InteractionState", "RoundRecord", "start_session", "learn_iter",
           "vsa_to_dsl", "replay_one_shot", "check_axioms"]


# ---------------------------------------------------------------------------
# VSA -> DSL export
# ---------------------------------------------------------------------------

def vsa_to_dsl(arena: Arena, root: int, base: Grammar,
               name: Optional[str] = None) -> tuple:
    """Export the sub-DAG under `root` as a grammar.

    Node n{id} (or t{id} for leaves) derives exactly the programs of that
    node. Join rules keep their original rule names, so the same witness
    table keeps working on the exported grammar.
    """
    g = Grammar(name or f"{base.name}@{root}", base.operators)
    for sd in base.symbols.values():
        if sd.kind == "input":
            g.add_symbol(sd)

    def sym_name(nid: int) -> str:
        node = arena.node(nid)
        return f"t{nid}" if isinstance(node, LeafNode) else f"n{nid}"

    for nid in reachable(arena, root):
        node = arena.node(nid)
        stype = node.sem_type if node.sem_type is not None else SemType("any")
        if isinstance(node, LeafNode):
            g.add_symbol(SymbolDef(sym_name(nid), stype, "terminal_annotated",
                                   programs=tuple(node.programs)))
            continue
        me = sym_name(nid)
        g.add_symbol(SymbolDef(me, stype, "nonterminal"))
        if isinstance(node, UnionNode):
            for i, c in enumerate(node.children):
                g.add_rule(RuleDef(f"{me}_alt{i}", me, stype,
                                   Alias(sym_name(c))))
        else:
            assert isinstance(node, JoinNode)
            kids = [sym_name(c) for c in node.children]
            g.add_rule(substitute_slots(node.rule, me, kids, node.rule.name))
    return g, sym_name(root)


# ---------------------------------------------------------------------------
# session state
# ---------------------------------------------------------------------------

@dataclass
class RoundRecord:
    pairs: Spec
    root: int
    wall_ms: float
    complete: bool


@dataclass
class InteractionState:
    """One interactive synthesis conversation over a frozen finitization."""

    domain: object
    config: LearnConfig
    arena: Arena
    symbol: str
    input_states: tuple = ()
    pools: Optional[dict] = None
    root: Optional[int] = None
    spec: Spec = ()
    rounds: list = field(default_factory=list)
    complete: bool = True
    _dsl_cache: dict = field(default_factory=dict)

    @property
    def vsa(self) -> Vsa:
        if self.root is None:
            raise NotFitted("no round has been learned yet")
        return Vsa(self.arena, self.root)

    def dsl_for(self, nid: int) -> tuple:
        got = self._dsl_cache.get(nid)
        if got is None:
            got = vsa_to_dsl(self.arena, nid, self.domain.grammar)
            self._dsl_cache[nid] = got
        return got


def start_session(domain, input_states=(),
                  config: Optional[LearnConfig] = None) -> InteractionState:
    cfg = config or domain.config
    return InteractionState(domain=domain, config=cfg,
                            arena=Arena(domain.grammar.operators),
                            symbol=domain.output_symbol,
                            input_states=tuple(input_states))


# ---------------------------------------------------------------------------
# constraint dispatch
# ---------------------------------------------------------------------------

def _split_by_category(pairs: Spec) -> tuple:
    d, l, g = [], [], []
    for st, c in pairs:
        cat = category(c)
        if cat == DEFINITIVE:
            d.append((st, c))
        elif cat == LOCALLY_REFINING:
            l.append((st, c))
        else:
            g.append((st, c))
    return tuple(d), tuple(l), tuple(g)


def _refine_datatype(arena: Arena, nid: int, t: SemType) -> int:
    """Keep the union branches whose node type fits; the constraint speaks
    about the program's result shape, not its behavior on a state."""
    node = arena.node(nid)
    if isinstance(node, UnionNode):
        return arena.union([_refine_datatype(arena, c, t)
                            for c in node.children], node.sem_type)
    ok = node.sem_type is None or types_compatible(node.sem_type, t)
    return nid if ok else arena.empty


def _rebuild(arena: Arena, root: int, replaced: dict) -> int:
    memo: dict = {}

    def rec(nid: int) -> int:
        if nid in replaced:
            return replaced[nid]
        got = memo.get(nid)
        if got is not None:
            return got
        node = arena.node(nid)
        if isinstance(node, LeafNode):
            out = nid
        else:
            kids = [rec(c) for c in node.children]
            if kids == list(node.children):
                out = nid
            elif isinstance(node, UnionNode):
                out = arena.union(kids, node.sem_type)
            else:
                out = arena.join(node.rule, kids, node.sem_type,
                                 arena.join_meta.get(nid))
        memo[nid] = out
        return out

    return rec(root)


def _apply_refiner(istate: InteractionState, root: int, rf: LocalRefiner,
                   state: State, c) -> int:
    arena = istate.arena
    ctx = LearnCtx(istate.domain.grammar, istate.pools or {}, istate.config,
                   arena)
    replaced: dict = {}
    for nid in reachable(arena, root):
        node = arena.node(nid)
        if not isinstance(node, JoinNode) or not rf.applies_to(node.rule):
            continue
        meta = arena.join_meta.get(nid)
        mspec: Spec = meta[1] if meta else ()
        disjuncts = rf.refine(node.rule, mspec, state, c, ctx)
        if disjuncts is None:
            continue
        parts = []
        for d in disjuncts:
            kids = list(node.children)
            alive = True
            for slot, sspec in d.items():
                cg, cs = istate.dsl_for(node.children[slot])
                res = learn(cg, cs, sspec, istate.domain.witnesses,
                            istate.pools or {}, istate.config, arena)
                istate.complete = istate.complete and res.complete
                if res.vsa.is_empty():
                    alive = False
                    break
                kids[slot] = res.vsa.root
            if alive:
                parts.append(arena.join(node.rule, kids, node.sem_type,
                                        (node.rule,
                                         conjoin(mspec, ((state, c),)))))
        new_id = arena.union(parts, node.sem_type)
        if not rf.precise and not isinstance(c, (Relevance, Provenance)):
            new_id = project(arena, new_id, ((state, c),))
        replaced[nid] = new_id
    if replaced:
        root = _rebuild(arena, root, replaced)
    post = rf.post(arena, root, state, c, ctx)
    return root if post is None else post


def _apply_local(istate: InteractionState, root: int, state: State, c) -> int:
    if isinstance(c, Datatype):
        return _refine_datatype(istate.arena, root, c.sem_type)
    for rf in istate.domain.refiners:
        if isinstance(c, rf.kind):
            return _apply_refiner(istate, root, rf, state, c)
    raise NotImplementedError(
        f"{istate.domain.name} has no local handler for {type(c).__name__}")


# ---------------------------------------------------------------------------
# the round step
# ---------------------------------------------------------------------------

def learn_iter(istate: InteractionState, pairs: Spec) -> InteractionState:
    """Fold one round of constraints into the session.

    Round 0 freezes the finitization: pools come from the session's input
    rows plus the first round's spec and never change afterwards.
    """
    t0 = time.perf_counter()
    pairs = tuple(pairs)
    definitive, local, globl = _split_by_category(pairs)
    dom = istate.domain
    arena = istate.arena

    if istate.pools is None:
        seed_states = list(istate.input_states) or spec_states(pairs)
        istate.pools = dom.build_pools(seed_states, definitive or pairs)

    if istate.root is None:
        res = learn(dom.grammar, istate.symbol, definitive, dom.witnesses,
                    istate.pools, istate.config, arena)
        root = res.vsa.root
        istate.complete = istate.complete and res.complete
    elif definitive:
        g2, s2 = istate.dsl_for(istate.root)
        res = learn(g2, s2, definitive, dom.witnesses, istate.pools,
                    istate.config, arena)
        root = res.vsa.root
        istate.complete = istate.complete and res.complete
    else:
        root = istate.root

    for st, c in local:
        root = _apply_local(istate, root, st, c)
    for st, c in globl:
        if isinstance(c, FalseC):
            root = arena.empty
        else:
            root = project(arena, root, ((st, c),))

    istate.root = root
    istate.spec = conjoin(istate.spec, pairs)
    istate.rounds.append(RoundRecord(pairs, root,
                                     (time.perf_counter() - t0) * 1000.0,
                                     istate.complete))
    return istate


# ---------------------------------------------------------------------------
# equivalence and sanity helpers
# ---------------------------------------------------------------------------

def replay_one_shot(istate: InteractionState) -> InteractionState:
    """Re-learn the accumulated spec in a single round over the same frozen
    finitization. Incremental and one-shot must agree program-for-program."""
    fresh = start_session(istate.domain, istate.input_states, istate.config)
    fresh.pools = istate.pools
    return learn_iter(fresh, istate.spec)


def states_equal_sets(a: InteractionState, b: InteractionState,
                      limit: int = 250_000, probes: int = 60,
                      seed: int = 0) -> bool:
    """Exact set comparison when small; volume equality plus random
    membership probes in both directions when enumeration is infeasible."""
    import random
    va, vb = a.vsa, b.vsa
    if va.volume() != vb.volume():
        return False
    if va.volume() == 0:
        return True
    if va.volume() > limit:
        rng = random.Random(seed)
        return (all(vb.contains(va.sample(rng)) for _ in range(probes))
                and all(va.contains(vb.sample(rng)) for _ in range(probes)))
    return set(va.enumerate()) == set(vb.enumerate())


def check_axioms(istate: InteractionState, target=None,
                 samples: int = 40, rng=None) -> list:
    """Interaction sanity: the target never gets ruled out, and each round
    only narrows the space. Returns human-readable violations."""
    problems = []
    ops = istate.domain.grammar.operators
    if target is not None:
        for i, rec in enumerate(istate.rounds):
            if not satisfies(target, rec.pairs, ops):
                problems.append(f"round {i}: target violates the round spec")
    arena = istate.arena
    for i in range(1, len(istate.rounds)):
        prev, cur = istate.rounds[i - 1], istate.rounds[i]
        if arena.volume(cur.root) > arena.volume(prev.root):
            problems.append(f"round {i}: candidate space grew")
            continue
        taken = 0
        for p in Vsa(arena, cur.root).enumerate():
            if not contains(arena, prev.root, p):
                problems.append(f"round {i}: program appeared from nowhere")
                break
            taken += 1
            if taken >= samples:
                break
    return problems
