"""Version space algebra over an append-only node arena.

Nodes live in an arena and are referenced by integer id. Leaves are
hash-consed; join nodes are deliberately NOT consed because each join
carries subproblem provenance (the rule and the spec that produced it)
in `join_meta`, and two distinct producing specs must not collapse into
one id. Union nodes are consed structurally. The arena is append-only,
which is what lets incremental re-synthesis splice subtrees while every
untouched node keeps its id.

Empty is the zero-child union at id 0. Any constructor that would build
a semantically empty node returns that id.

Join children align with rule_slots(rule) of the join's template; a
member program of the join is exactly rule_to_program(rule, slot
programs). Clustering is template-driven: let-bindings extend states for
the inner child, and higher-order operators (MapLines, FilterPred,
MapRows) cluster the lambda body over one expanded state per element fed
to the lambda.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

from .errors import EvalError
from .grammar import (Apply, LamArg, LetIn, RuleDef, SymArg, VarArg,
                      match_rule, rule_slots, rule_to_program)
from .operators import Operators, evaluate
from .programs import Literal, Program
from .values import State, Value, value_sort_key

__all__ = ["Arena", "Vsa", "LeafNode", "UnionNode", "JoinNode", "BOTTOM",
           "Ranking", "cluster_by_outputs", "project", "intersect",
           "top_k", "sample", "partition_syntactic", "reachable", "to_dot"]


class _Bottom:
    """Cluster key for programs that fail to evaluate on a state."""

    def __repr__(self) -> str:
        return "BOTTOM"


BOTTOM = _Bottom()


def _key_elem(x) -> tuple:
    return (1, ()) if x is BOTTOM else (0, value_sort_key(x))


def _vec_key(vec: tuple) -> tuple:
    return tuple(_key_elem(x) for x in vec)


@dataclass(frozen=True)
class LeafNode:
    programs: tuple
    sem_type: object = None


@dataclass(frozen=True)
class UnionNode:
    children: tuple
    sem_type: object = None


@dataclass(frozen=True)
class JoinNode:
    rule: RuleDef
    children: tuple
    sem_type: object = None


class Arena:
    """Node store plus every per-node cache. One arena per session."""

    def __init__(self, ops: Operators) -> None:
        self.ops = ops
        self.nodes: list = []
        self.join_meta: dict = {}          # join id -> (rule, spec)
        self._leaf_index: dict = {}
        self._union_index: dict = {}
        self._volume: dict = {}
        self._cluster: dict = {}           # (id, states) -> [(vec, id)]
        self._lazy_enum: dict = {}
        self.stats = {"intersect_memo_hits": 0, "cluster_memo_hits": 0}
        self.empty = self._push(UnionNode(()))

    def _push(self, node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def node(self, nid: int):
        return self.nodes[nid]

    def leaf(self, programs: Sequence[Program], sem_type=None) -> int:
        progs = tuple(dict.fromkeys(programs))
        if not progs:
            return self.empty
        key = (progs, sem_type)
        nid = self._leaf_index.get(key)
        if nid is None:
            nid = self._push(LeafNode(progs, sem_type))
            self._leaf_index[key] = nid
        return nid

    def union(self, children: Sequence[int], sem_type=None) -> int:
        kids = tuple(c for c in dict.fromkeys(children)
                     if self.volume(c) > 0)
        if not kids:
            return self.empty
        if len(kids) == 1:
            return kids[0]
        if sem_type is None:
            sem_type = self.node(kids[0]).sem_type
        key = (kids, sem_type)
        nid = self._union_index.get(key)
        if nid is None:
            nid = self._push(UnionNode(kids, sem_type))
            self._union_index[key] = nid
        return nid

    def join(self, rule: RuleDef, children: Sequence[int], sem_type=None,
             meta=None) -> int:
        kids = tuple(children)
        if any(self.volume(c) == 0 for c in kids):
            return self.empty
        nid = self._push(JoinNode(rule, kids, sem_type or rule.head_type))
        if meta is not None:
            self.join_meta[nid] = meta
        return nid

    # -- volume ------------------------------------------------------------

    def volume(self, nid: int) -> int:
        got = self._volume.get(nid)
        if got is not None:
            return got
        node = self.node(nid)
        if isinstance(node, LeafNode):
            v = len(node.programs)
        elif isinstance(node, UnionNode):
            v = sum(self.volume(c) for c in node.children)
        else:
            v = 1
            for c in node.children:
                v *= self.volume(c)
        self._volume[nid] = v
        return v


@dataclass
class Vsa:
    """A root in an arena. Cheap to copy; all state lives in the arena."""
    arena: Arena
    root: int

    def is_empty(self) -> bool:
        return self.arena.volume(self.root) == 0

    def volume(self) -> int:
        return self.arena.volume(self.root)

    def contains(self, p: Program) -> bool:
        return contains(self.arena, self.root, p)

    def enumerate(self, limit: Optional[int] = None) -> Iterator[Program]:
        return enumerate_vsa(self.arena, self.root, limit)

    def cluster(self, states: tuple) -> list:
        return cluster_by_outputs(self.arena, self.root, tuple(states))

    def project(self, spec) -> "Vsa":
        return Vsa(self.arena, project(self.arena, self.root, spec))

    def top_k(self, ranking: "Ranking", k: int) -> list:
        return top_k(self.arena, self.root, ranking, k)

    def sample(self, rng) -> Program:
        return sample(self.arena, self.root, rng)

    def node_count(self) -> int:
        return len(reachable(self.arena, self.root))


# ---------------------------------------------------------------------------
# membership and enumeration
# ---------------------------------------------------------------------------

def contains(arena: Arena, nid: int, p: Program, _memo=None) -> bool:
    memo = _memo if _memo is not None else {}
    key = (nid, p)
    got = memo.get(key)
    if got is not None:
        return got
    node = arena.node(nid)
    if isinstance(node, LeafNode):
        res = p in node.programs
    elif isinstance(node, UnionNode):
        res = any(contains(arena, c, p, memo) for c in node.children)
    else:
        parts = match_rule(node.rule, p)
        res = (parts is not None
               and len(parts) == len(node.children)
               and all(contains(arena, c, q, memo)
                       for c, q in zip(node.children, parts)))
    memo[key] = res
    return res


class _LazyList:
    __slots__ = ("gen", "items", "done")

    def __init__(self, gen) -> None:
        self.gen = gen
        self.items: list = []
        self.done = False

    def get(self, i: int):
        while not self.done and len(self.items) <= i:
            try:
                self.items.append(next(self.gen))
            except StopIteration:
                self.done = True
        return self.items[i] if i < len(self.items) else None


def _lazy(arena: Arena, nid: int) -> _LazyList:
    ll = arena._lazy_enum.get(nid)
    if ll is None:
        ll = _LazyList(_enum_node(arena, nid))
        arena._lazy_enum[nid] = ll
    return ll


def _enum_node(arena: Arena, nid: int) -> Iterator[Program]:
    node = arena.node(nid)
    if isinstance(node, LeafNode):
        yield from node.programs
        return
    if isinstance(node, UnionNode):
        seen: set = set()
        for c in node.children:
            i = 0
            child = _lazy(arena, c)
            while True:
                p = child.get(i)
                if p is None:
                    break
                if p not in seen:
                    seen.add(p)
                    yield p
                i += 1
        return
    # join: lexicographic cross product, first slot major
    children = node.children

    def rec(slot: int, acc: list) -> Iterator[Program]:
        if slot == len(children):
            yield rule_to_program(node.rule, acc)
            return
        i = 0
        child = _lazy(arena, children[slot])
        while True:
            p = child.get(i)
            if p is None:
                return
            yield from rec(slot + 1, acc + [p])
            i += 1

    yield from rec(0, [])


def enumerate_vsa(arena: Arena, nid: int, limit: Optional[int] = None) -> Iterator[Program]:
    """Deterministic order: leaf storage order, union child order, join
    cross products lexicographically."""
    i = 0
    ll = _lazy(arena, nid)
    while limit is None or i < limit:
        p = ll.get(i)
        if p is None:
            return
        yield p
        i += 1


def reachable(arena: Arena, root: int) -> list:
    seen: list = []
    mark: set = set()
    stack = [root]
    while stack:
        nid = stack.pop()
        if nid in mark:
            continue
        mark.add(nid)
        seen.append(nid)
        node = arena.node(nid)
        if not isinstance(node, LeafNode):
            stack.extend(node.children)
    return seen


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

def cluster_by_outputs(arena: Arena, nid: int, states: tuple) -> list:
    """Partition the node by its output vector across `states`.

    Returns [(vector, node_id)] sorted by vector; vectors may contain
    BOTTOM where evaluation fails. The returned nodes partition the set:
    their volumes sum to the node's volume.
    """
    states = tuple(states)
    key = (nid, states)
    got = arena._cluster.get(key)
    if got is not None:
        arena.stats["cluster_memo_hits"] += 1
        return got
    node = arena.node(nid)
    groups: dict = {}

    def add(vec: tuple, child_id: int) -> None:
        groups.setdefault(vec, []).append(child_id)

    if isinstance(node, LeafNode):
        by_vec: dict = {}
        for p in node.programs:
            vec = tuple(_eval_or_bottom(p, s, arena.ops) for s in states)
            by_vec.setdefault(vec, []).append(p)
        out = [(vec, arena.leaf(ps, node.sem_type))
               for vec, ps in by_vec.items()]
    elif isinstance(node, UnionNode):
        for c in node.children:
            for vec, cid in cluster_by_outputs(arena, c, states):
                add(vec, cid)
        out = [(vec, arena.union(ids, node.sem_type))
               for vec, ids in groups.items()]
    else:
        for vec, kids in _cluster_join(arena, node, states):
            add(vec, arena.join(node.rule, kids, node.sem_type,
                                arena.join_meta.get(nid)))
        out = [(vec, arena.union(ids, node.sem_type))
               for vec, ids in groups.items()]
    out.sort(key=lambda it: _vec_key(it[0]))
    arena._cluster[key] = out
    return out


def _eval_or_bottom(p: Program, state: State, ops: Operators):
    try:
        return evaluate(p, state, ops)
    except EvalError:
        return BOTTOM


def _whole(arena: Arena, nid: int) -> list:
    """A one-element 'clustering' that keeps the child intact, for slots
    whose value cannot influence any live state."""
    return [((), nid)]


def _cluster_join(arena: Arena, node: JoinNode, states: tuple) -> Iterator[tuple]:
    """Yield (output vector, child id tuple) per assignment of child
    clusters. Assignments partition the join because child clusterings
    partition each child."""
    rule = node.rule
    body = rule.body
    ops = arena.ops

    if isinstance(body, LetIn):
        binding_args = body.binding.args
        n_binding_slots = sum(1 for a in binding_args
                              if isinstance(a, (SymArg, LamArg)))
        slot_children = node.children[:n_binding_slots]
        inner_child = node.children[n_binding_slots]
        for bvals, bkids in _cluster_apply(arena, body.binding, slot_children,
                                           states):
            ext = []
            live_idx = []
            for i, s in enumerate(states):
                if bvals[i] is BOTTOM:
                    continue
                ext.append(s.extend(body.var, bvals[i]))
                live_idx.append(i)
            if not ext:
                for _, whole_id in _whole(arena, inner_child):
                    yield (tuple(BOTTOM for _ in states),
                           tuple(bkids) + (whole_id,))
                continue
            for ivec, icid in cluster_by_outputs(arena, inner_child, tuple(ext)):
                vec = [BOTTOM] * len(states)
                for j, i in enumerate(live_idx):
                    vec[i] = ivec[j]
                yield tuple(vec), tuple(bkids) + (icid,)
        return

    assert isinstance(body, Apply)
    lam_positions = [i for i, a in enumerate(body.args) if isinstance(a, LamArg)]
    if not lam_positions:
        for vals, kids in _cluster_apply(arena, body, node.children, states):
            yield vals, tuple(kids)
        return

    # one lambda argument (MapLines / FilterPred / MapRows)
    assert len(lam_positions) == 1
    lam_pos = lam_positions[0]
    lam = body.args[lam_pos]
    lam_idx_in_ops, feed, combine = ops.higher[body.op]
    assert lam_idx_in_ops == lam_pos
    plain_args = Apply(body.op, tuple(a for i, a in enumerate(body.args)
                                      if i != lam_pos))
    slot_order = [s for s, _ in rule_slots(rule)]
    # children aligned with slots; find which child is the lambda body
    lam_slot_index = 0
    seen_slots = 0
    for i, a in enumerate(body.args):
        if isinstance(a, (SymArg, LamArg)):
            if i == lam_pos:
                lam_slot_index = seen_slots
            seen_slots += 1
    lam_child = node.children[lam_slot_index]
    other_children = tuple(c for i, c in enumerate(node.children)
                           if i != lam_slot_index)

    for ovals_per_arg, okids in _cluster_apply_args(
            arena, plain_args.args, other_children, states):
        # per state: feed bindings or poison
        bindings: list = []
        poisoned: list = []
        for si, s in enumerate(states):
            vals = []
            broken = False
            for av in ovals_per_arg:
                v = av[si]
                if v is BOTTOM:
                    broken = True
                    break
                vals.append(v)
            if broken:
                bindings.append(None)
                poisoned.append(True)
                continue
            full = []
            vi = 0
            for i in range(len(body.args)):
                if i == lam_pos:
                    full.append(None)
                else:
                    full.append(vals[vi])
                    vi += 1
            try:
                bs = feed(full)
            except EvalError:
                bindings.append(None)
                poisoned.append(True)
                continue
            bindings.append(list(bs))
            poisoned.append(False)
        ext_states: list = []
        segments: list = []
        for si, s in enumerate(states):
            if poisoned[si] or bindings[si] is None:
                segments.append(None)
                continue
            start = len(ext_states)
            for b in bindings[si]:
                ext_states.append(s.extend(lam.param, b))
            segments.append((start, len(ext_states)))

        def emit(lam_vec, lam_cid):
            vec = []
            for si in range(len(states)):
                if segments[si] is None:
                    vec.append(BOTTOM)
                    continue
                a, b = segments[si]
                outs = list(lam_vec[a:b])
                if any(o is BOTTOM for o in outs):
                    vec.append(BOTTOM)
                    continue
                vals = []
                vi = 0
                for i in range(len(body.args)):
                    if i == lam_pos:
                        vals.append(None)
                    else:
                        vals.append(ovals_per_arg[vi][si])
                        vi += 1
                try:
                    vec.append(combine(vals, outs))
                except EvalError:
                    vec.append(BOTTOM)
            kids = list(okids)
            kids.insert(lam_slot_index, lam_cid)
            return tuple(vec), tuple(kids)

        if not ext_states:
            for _, whole_id in _whole(arena, lam_child):
                yield emit((), whole_id)
            continue
        for lam_vec, lam_cid in cluster_by_outputs(arena, lam_child,
                                                   tuple(ext_states)):
            yield emit(lam_vec, lam_cid)


def _cluster_apply_args(arena: Arena, args: tuple, children: tuple,
                        states: tuple) -> Iterator[tuple]:
    """Cluster the SymArg children of an Apply; yield (per-arg value
    vectors, child id list). VarArgs read straight from the states."""
    clusterings = [cluster_by_outputs(arena, c, states) for c in children]

    def rec(slot: int, chosen: list) -> Iterator[list]:
        if slot == len(clusterings):
            yield chosen
            return
        for vec, cid in clusterings[slot]:
            yield from rec(slot + 1, chosen + [(vec, cid)])

    for choice in rec(0, []):
        per_arg: list = []
        ci = 0
        ok = True
        for a in args:
            if isinstance(a, SymArg):
                per_arg.append(choice[ci][0])
                ci += 1
            elif isinstance(a, VarArg):
                vals = []
                for s in states:
                    v = s.get(a.name)
                    vals.append(BOTTOM if v is None else v)
                per_arg.append(tuple(vals))
            else:
                ok = False
        if not ok:
            continue
        yield per_arg, [cid for _, cid in choice]


def _cluster_apply(arena: Arena, app: Apply, children: tuple,
                   states: tuple) -> Iterator[tuple]:
    """Cluster a plain (no lambda) Apply: yield (output vector, child ids)."""
    ops = arena.ops
    for per_arg, kids in _cluster_apply_args(arena, app.args, children, states):
        vec = []
        for si in range(len(states)):
            vals = [av[si] for av in per_arg]
            vec.append(_apply_values(app.op, vals, ops))
        yield tuple(vec), kids


def _apply_values(op: str, vals: list, ops: Operators):
    if op in ops.select:
        if vals[0] is BOTTOM:
            return BOTTOM
        try:
            idx = ops.select[op](vals[0])
        except EvalError:
            return BOTTOM
        return vals[idx]
    if any(v is BOTTOM for v in vals):
        return BOTTOM
    fn = ops.simple.get(op)
    if fn is None:
        return BOTTOM
    try:
        return fn(vals)
    except EvalError:
        return BOTTOM


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def project(arena: Arena, nid: int, spec) -> int:
    """Keep the clusters whose outputs satisfy every spec pair. All
    states are clustered in one joint pass, so the structure is rebuilt
    once instead of once per pair; re-clustering a rebuilt structure is
    what makes repeated projection expensive. Constraints here must be
    output-only (everything globally refining is)."""
    from .constraints import constraint_holds
    spec = tuple(spec)
    if not spec:
        return nid
    states: list = []
    for st, _ in spec:
        if st not in states:
            states.append(st)
    idx = {st: i for i, st in enumerate(states)}
    kept = []
    for vec, cid in cluster_by_outputs(arena, nid, tuple(states)):
        ok = True
        for st, c in spec:
            out = vec[idx[st]]
            if out is BOTTOM or not constraint_holds(c, out, st):
                ok = False
                break
        if ok:
            kept.append(cid)
    return arena.union(kept, arena.node(nid).sem_type)


# ---------------------------------------------------------------------------
# intersection
# ---------------------------------------------------------------------------

def _rule_shape(rule: RuleDef):
    def norm_apply(app: Apply):
        return (app.op, tuple(
            ("s",) if isinstance(a, SymArg)
            else ("l", a.param) if isinstance(a, LamArg)
            else ("v", a.name)
            for a in app.args))
    body = rule.body
    if isinstance(body, Apply):
        return (rule.name, "apply", norm_apply(body))
    if isinstance(body, LetIn):
        return (rule.name, "let", body.var, norm_apply(body.binding))
    return (rule.name, "alias")


def intersect(a: Arena, aid: int, b: Arena, bid: int,
              out: Optional[Arena] = None) -> tuple:
    """Intersect two VSAs; result lives in `out` (default: a fresh arena
    sharing a's operators). Returns (arena, root). Joins intersect
    childwise when their templates agree; leaves filter by membership.
    Subproblem specs conjoin on surviving joins."""
    from .constraints import conjoin
    if out is None:
        out = a if a is b else Arena(a.ops)
    memo: dict = {}

    def inter(x: int, y: int) -> int:
        key = (x, y)
        got = memo.get(key)
        if got is not None:
            a.stats["intersect_memo_hits"] += 1
            return got
        na, nb = a.node(x), b.node(y)
        if isinstance(na, UnionNode):
            res = out.union([inter(c, y) for c in na.children], na.sem_type)
        elif isinstance(nb, UnionNode):
            res = out.union([inter(x, c) for c in nb.children], na.sem_type
                            if not isinstance(na, UnionNode) else nb.sem_type)
        elif isinstance(na, LeafNode) and isinstance(nb, LeafNode):
            other = set(nb.programs)
            res = out.leaf([p for p in na.programs if p in other], na.sem_type)
        elif isinstance(na, LeafNode):
            res = out.leaf([p for p in na.programs if contains(b, y, p)],
                           na.sem_type)
        elif isinstance(nb, LeafNode):
            res = out.leaf([p for p in nb.programs if contains(a, x, p)],
                           nb.sem_type)
        else:
            if _rule_shape(na.rule) != _rule_shape(nb.rule):
                res = out.empty
            else:
                kids = [inter(cx, cy)
                        for cx, cy in zip(na.children, nb.children)]
                meta = None
                ma, mb = a.join_meta.get(x), b.join_meta.get(y)
                if ma and mb:
                    meta = (ma[0], conjoin(ma[1], mb[1]))
                elif ma or mb:
                    meta = ma or mb
                res = out.join(na.rule, kids, na.sem_type, meta)
        memo[key] = res
        return res

    return out, inter(aid, bid)


# ---------------------------------------------------------------------------
# ranking and top-k
# ---------------------------------------------------------------------------

class Ranking:
    """Compositional ranking: score(template(p1..pk)) ==
    rule_increment(rule) + sum(score(pi)). The sum form makes the
    combiner monotone in every child score, which the per-node top-k DP
    relies on."""

    def program_score(self, p: Program) -> float:
        raise NotImplementedError

    def rule_increment(self, rule: RuleDef) -> float:
        raise NotImplementedError


def top_k(arena: Arena, nid: int, ranking: Ranking, k: int) -> list:
    """Best k (score, program) pairs, score descending, ties broken by
    enumeration order."""
    memo: dict = {}

    def best(n: int) -> list:
        got = memo.get(n)
        if got is not None:
            return got
        node = arena.node(n)
        items: list
        if isinstance(node, LeafNode):
            items = [(ranking.program_score(p), (i,), p)
                     for i, p in enumerate(node.programs)]
            items.sort(key=lambda it: (-it[0], it[1]))
            items = items[:k]
        elif isinstance(node, UnionNode):
            pool = []
            for ci, c in enumerate(node.children):
                for score, key, p in best(c):
                    pool.append((score, (ci, key), p))
            pool.sort(key=lambda it: (-it[0], it[1]))
            items = []
            seen: set = set()
            for it in pool:
                if it[2] in seen:
                    continue
                seen.add(it[2])
                items.append(it)
                if len(items) == k:
                    break
        else:
            lists = [best(c) for c in node.children]
            if any(not l for l in lists):
                items = []
            else:
                inc = ranking.rule_increment(node.rule)
                start = tuple(0 for _ in lists)

                def entry(idx: tuple):
                    score = inc + sum(lists[i][j][0] for i, j in enumerate(idx))
                    key = tuple(lists[i][j][1] for i, j in enumerate(idx))
                    return (-score, key, idx)

                heap = [entry(start)]
                seen_idx = {start}
                items = []
                while heap and len(items) < k:
                    negs, key, idx = heapq.heappop(heap)
                    progs = [lists[i][j][2] for i, j in enumerate(idx)]
                    items.append((-negs, key, rule_to_program(node.rule, progs)))
                    for i in range(len(idx)):
                        if idx[i] + 1 < len(lists[i]):
                            nxt = idx[:i] + (idx[i] + 1,) + idx[i + 1:]
                            if nxt not in seen_idx:
                                seen_idx.add(nxt)
                                heapq.heappush(heap, entry(nxt))
        memo[n] = items
        return items

    return [(score, p) for score, _, p in best(nid)]


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample(arena: Arena, nid: int, rng) -> Program:
    """One volume-weighted random descent. Leaves pick uniformly; unions
    pick children proportionally to volume; joins sample componentwise."""
    node = arena.node(nid)
    if isinstance(node, LeafNode):
        return node.programs[rng.randrange(len(node.programs))]
    if isinstance(node, UnionNode):
        total = arena.volume(nid)
        if total == 0:
            raise ValueError("sampling an empty vsa")
        r = rng.randrange(total)
        for c in node.children:
            v = arena.volume(c)
            if r < v:
                return sample(arena, c, rng)
            r -= v
        raise AssertionError("unreachable")
    parts = [sample(arena, c, rng) for c in node.children]
    return rule_to_program(node.rule, parts)


# ---------------------------------------------------------------------------
# syntactic partition
# ---------------------------------------------------------------------------

def partition_syntactic(arena: Arena, nid: int,
                        leaf_pred: Callable[[Program], bool],
                        slot_extra: Callable[[RuleDef, int], Optional[frozenset]]
                        ) -> tuple:
    """Split a VSA into (satisfying, rest) for predicates of the shape
    "some subprogram matches". `slot_extra(rule, slot)` supplies literal
    values that make the template itself satisfy when that slot holds
    them (e.g. the column index slot of a Kth binding). Joins split by
    first-satisfying-slot, which keeps the two sides disjoint."""
    memo: dict = {}

    def leaf_side(p: Program, extra) -> bool:
        if leaf_pred(p):
            return True
        return (extra is not None and isinstance(p, Literal)
                and p.value in extra)

    def part(n: int, extra) -> tuple:
        key = (n, extra)
        got = memo.get(key)
        if got is not None:
            return got
        node = arena.node(n)
        if isinstance(node, LeafNode):
            t = [p for p in node.programs if leaf_side(p, extra)]
            f = [p for p in node.programs if not leaf_side(p, extra)]
            res = (arena.leaf(t, node.sem_type), arena.leaf(f, node.sem_type))
        elif isinstance(node, UnionNode):
            ts, fs = [], []
            for c in node.children:
                t, f = part(c, extra)
                ts.append(t)
                fs.append(f)
            res = (arena.union(ts, node.sem_type), arena.union(fs, node.sem_type))
        else:
            parts = [part(c, slot_extra(node.rule, i))
                     for i, c in enumerate(node.children)]
            meta = arena.join_meta.get(n)
            trues = []
            for j in range(len(parts)):
                kids = []
                for i, c in enumerate(node.children):
                    if i < j:
                        kids.append(parts[i][1])
                    elif i == j:
                        kids.append(parts[i][0])
                    else:
                        kids.append(c)
                trues.append(arena.join(node.rule, kids, node.sem_type, meta))
            f_join = arena.join(node.rule, [parts[i][1] for i in range(len(parts))],
                                node.sem_type, meta)
            res = (arena.union(trues, node.sem_type), f_join)
        memo[key] = res
        return res

    return part(nid, None)


# ---------------------------------------------------------------------------
# debug dump
# ---------------------------------------------------------------------------

def to_dot(arena: Arena, root: int) -> str:
    from .programs import program_text
    lines = ["digraph vsa {"]
    for nid in reachable(arena, root):
        node = arena.node(nid)
        if isinstance(node, LeafNode):
            label = "\\n".join(program_text(p)[:30] for p in node.programs[:4])
            if len(node.programs) > 4:
                label += f"\\n... ({len(node.programs)})"
            lines.append(f'  n{nid} [shape=box, label="{label}"];')
        elif isinstance(node, UnionNode):
            lines.append(f'  n{nid} [shape=diamond, label="U"];')
            for c in node.children:
                lines.append(f"  n{nid} -> n{c};")
        else:
            lines.append(f'  n{nid} [label="{node.rule.op}"];')
            for c in node.children:
                lines.append(f"  n{nid} -> n{c};")
    lines.append("}")
    return "\n".join(lines)
