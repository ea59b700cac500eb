"""Proactive disambiguation: ask the user the question that shrinks an
ambiguous program space the most.

A question presents a concrete, cheaply answerable choice (pick an
output, judge one split position, confirm a position set, answer a
yes/no about types or input columns). Every response converts back into
ordinary constraints via response_to_constraint, so answering a question
feeds the same learning pipeline as a hand-written example.

Question selection is score-driven. ds_r prefers the question whose
worst answer still leaves a high-ranked program alive (min over
responses of max h). ds_fs is the splitting-domain score: binary
position questions win when many fields are expected, confirmations win
when few are. disambiguate picks the argmax and stays silent when even
the best question scores under the threshold.

ds_r enumerates the space when it fits under the volume limit and falls
back to a seeded 2000-program sample above it; a Score's .mode records
which path produced it. RankingScore calibrates h to the percentile of
the raw ranking score within the current space, so a fixed threshold
keeps one meaning ("the worst answer must leave a program above the
T-quantile alive") no matter how raw scores are scaled.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Optional

from .constraints import (Datatype, Equals, FalseC, NotContains,
                          NotDatatype, NotEquals, Provenance, Relevance,
                          Spec, Subsequence, category, DEFINITIVE,
                          constraint_holds, references_column, satisfies,
                          spec_states, split_positions)
from .errors import EmptyVsa, EvalError, InvalidResponse, WrongQuestionKind
from .operators import evaluate
from .values import (IntV, ListV, SemType, State, type_of, value_sort_key,
                     value_to_json)
from .vsa import BOTTOM, Ranking, Vsa

__all__ = ["MultipleChoiceOutput", "BinaryPosition", "Confirmation",
           "BooleanDatatype", "BooleanRelevance", "Question", "Score",
           "RankingScore", "SplitScore", "UniformScore",
           "SAMPLE_LIMIT", "DEFAULT_THRESHOLD", "DEFAULT_SPLIT_T",
           "MAX_OPTIONS", "sample_programs",
           "generate_questions", "ds_r", "ds_fs", "disambiguate",
           "response_to_constraint", "question_to_json"]


SAMPLE_LIMIT = 2000      # census above this volume is sampled instead
DEFAULT_THRESHOLD = 0.47  # ranking-score gate used by flashfill sessions
DEFAULT_SPLIT_T = 30      # field-count pivot between question kinds
MAX_OPTIONS = 8           # choices shown per multiple-choice question

_YNU = ("yes", "no", "unknown")


# ---------------------------------------------------------------------------
# questions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultipleChoiceOutput:
    """Which of these candidate outputs is right for this input?"""

    kind = "multiple_choice_output"
    qid: str
    state_ref: int
    state: State
    options: tuple

    def __post_init__(self):
        if len(set(self.options)) < 2:
            raise ValueError("a choice needs at least two distinct options")

    def responses(self) -> tuple:
        return tuple(range(len(self.options))) + ("none",)


@dataclass(frozen=True)
class BinaryPosition:
    """Is this offset one of the desired split positions?"""

    kind = "binary_position"
    qid: str
    state_ref: int
    state: State
    position: int

    def responses(self) -> tuple:
        return _YNU


@dataclass(frozen=True)
class Confirmation:
    """Are all of these split positions correct?

    Asked when a single candidate is consistent with what the user has
    marked so far; a yes accepts that candidate's whole position set at
    once, a no means nothing in the language fits.
    """

    kind = "confirmation"
    qid: str
    state_ref: int
    state: State
    positions: tuple

    def __post_init__(self):
        if not self.positions:
            raise ValueError("a confirmation needs at least one position")

    def responses(self) -> tuple:
        return _YNU


@dataclass(frozen=True)
class BooleanDatatype:
    """Should the output be of this type?"""

    kind = "boolean_datatype"
    qid: str
    state_ref: int
    state: State
    sem_type: SemType

    def responses(self) -> tuple:
        return _YNU


@dataclass(frozen=True)
class BooleanRelevance:
    """Does the answer depend on this input column?"""

    kind = "boolean_relevance"
    qid: str
    state_ref: int
    state: State
    column: int

    def responses(self) -> tuple:
        return _YNU


Question = (MultipleChoiceOutput, BinaryPosition, Confirmation,
            BooleanDatatype, BooleanRelevance)


# ---------------------------------------------------------------------------
# scores
# ---------------------------------------------------------------------------

class Score(float):
    """A real score that remembers how it was computed ("exact" from
    full clustering, "sampled" from the seeded approximation)."""

    __slots__ = ("mode",)

    def __new__(cls, value: float, mode: str):
        s = super().__new__(cls, value)
        s.mode = mode
        return s

    def __repr__(self) -> str:
        return f"Score({float(self):g}, {self.mode!r})"


def sample_programs(vsa: Vsa, limit: int = SAMPLE_LIMIT, seed: int = 0) -> tuple:
    """Up to `limit` programs: the whole space when it fits, otherwise
    seeded volume-weighted draws (repeats possible). Same seed, same
    space, same tuple."""
    if vsa.is_empty():
        return ()
    if vsa.volume() <= limit:
        return tuple(vsa.enumerate())
    rng = random.Random(seed)
    return tuple(vsa.sample(rng) for _ in range(limit))


def _scored_responses(q) -> tuple:
    # Only constraint-bearing responses take part in the min: "unknown"
    # never prunes, and "none" of a full option list leaves nothing,
    # which would veto every complete multiple-choice question.
    if isinstance(q, MultipleChoiceOutput):
        return tuple(range(len(q.options)))
    return ("yes", "no")


_MISS = object()


def _pairs_hold(p, pairs, ops, cache: dict) -> bool:
    """satisfies() with an evaluation memo shared across responses."""
    for st, c in pairs:
        if isinstance(c, Relevance):
            if references_column(p, c.column, st) != c.required:
                return False
            continue
        if isinstance(c, Provenance):
            if not satisfies(p, ((st, c),), ops):
                return False
            continue
        out = cache.get((p, st), _MISS)
        if out is _MISS:
            try:
                out = evaluate(p, st, ops)
            except EvalError:
                out = None
            cache[(p, st)] = out
        if out is None or not constraint_holds(c, out, st):
            return False
    return True


def ds_r(question, vsa: Vsa, spec: Spec, h: Callable, ops=None, *,
         sample_limit: int = SAMPLE_LIMIT, seed: int = 0,
         _population=None) -> Score:
    """Ranking-driven score: min over responses of the best h among the
    programs surviving that response. A response no program survives
    contributes -inf. Exact census below `sample_limit` volume, seeded
    sample above; the Score's .mode says which. `spec` rides along for
    the ScoreFn interface; the space is already the one narrowed by it."""
    del spec
    if vsa.is_empty():
        raise EmptyVsa("ds_r needs a non-empty space")
    exact = vsa.volume() <= sample_limit
    programs = _population
    if programs is None:
        programs = sample_programs(vsa, sample_limit, seed)
    cache: dict = {}
    worst = math.inf
    for r in _scored_responses(question):
        pairs = response_to_constraint(question, r)
        best = -math.inf
        for p in programs:
            if _pairs_hold(p, pairs, ops, cache):
                hp = h(p)
                if hp > best:
                    best = hp
        worst = min(worst, best)
    return Score(worst, "exact" if exact else "sampled")


def ds_fs(question, vsa: Vsa, spec: Spec, t: int = DEFAULT_SPLIT_T) -> Score:
    """Splitting-domain score: MinSplits - t for binary position
    questions, t - MinSplits for confirmations. Many expected fields
    favor one cheap judgement; few favor confirming the whole set."""
    if isinstance(question, BinaryPosition):
        sign = 1
    elif isinstance(question, Confirmation):
        sign = -1
    else:
        raise WrongQuestionKind(
            f"ds_fs scores position questions, not {question.kind}")
    from .domains.flashsplit import min_splits
    states = tuple(spec_states(spec)) or (question.state,)
    ms = min_splits(vsa.arena, vsa.root, states)
    return Score(sign * (ms - t), "exact")


class RankingScore:
    """ScoreFn wrapper around ds_r.

    Unless an explicit h is given, h(P) is the percentile of P's raw
    ranking score among the programs the question is actually about:
    the census-or-sampled population restricted to programs that
    evaluate cleanly on the question's state (the full population for
    relevance questions, which never run the program). h lands in
    (0, 1] with the best relevant program at 1.0, so a fixed threshold
    keeps one meaning ("the worst answer must leave a program above the
    T-quantile alive") no matter how raw scores are scaled and no
    matter how many high-ranked programs cannot handle this input at
    all.
    """

    def __init__(self, ranking: Ranking, ops=None, h: Optional[Callable] = None,
                 sample_limit: int = SAMPLE_LIMIT, seed: int = 0):
        self.ranking = ranking
        self.ops = ops
        self.h = h
        self.sample_limit = sample_limit
        self.seed = seed
        self._pop_cache: dict = {}
        self._cal_cache: dict = {}

    def _population(self, vsa: Vsa) -> tuple:
        key = (id(vsa.arena), vsa.root)
        got = self._pop_cache.get(key)
        if got is None:
            got = sample_programs(vsa, self.sample_limit, self.seed)
            self._pop_cache[key] = got
        return got

    def _calibrated(self, vsa: Vsa, state: Optional[State]):
        key = (id(vsa.arena), vsa.root, state)
        got = self._cal_cache.get(key)
        if got is not None:
            return got
        population = self._population(vsa)
        if state is not None:
            kept = []
            for p in population:
                try:
                    evaluate(p, state, self.ops)
                except EvalError:
                    continue
                kept.append(p)
            population = tuple(kept)
        raws = sorted(self.ranking.program_score(p) for p in population)
        n = len(raws)

        def h(p, _raws=raws, _n=n):
            if _n == 0:
                return -math.inf
            return bisect_right(_raws, self.ranking.program_score(p)) / _n

        got = (population, h)
        self._cal_cache[key] = got
        return got

    def __call__(self, question, vsa: Vsa, spec: Spec) -> Score:
        if self.h is not None:
            return ds_r(question, vsa, spec, self.h, self.ops,
                        sample_limit=self.sample_limit, seed=self.seed)
        state = None
        if not isinstance(question, BooleanRelevance):
            state = question.state
        population, h = self._calibrated(vsa, state)
        return ds_r(question, vsa, spec, h, self.ops,
                    sample_limit=self.sample_limit, seed=self.seed,
                    _population=population)


@dataclass(frozen=True)
class SplitScore:
    """ScoreFn wrapper around ds_fs."""

    t: int = DEFAULT_SPLIT_T

    def __call__(self, question, vsa: Vsa, spec: Spec) -> Score:
        return ds_fs(question, vsa, spec, self.t)


@dataclass(frozen=True)
class UniformScore:
    """Constant score, optionally restricted to some question kinds.

    Single-question-type strategies use this: every allowed question is
    equally worth asking, everything else scores -inf.
    """

    value: float = 1.0
    kinds: tuple = ()

    def __call__(self, question, vsa: Vsa, spec: Spec) -> Score:
        if self.kinds and question.kind not in self.kinds:
            return Score(-math.inf, "exact")
        return Score(self.value, "exact")


# ---------------------------------------------------------------------------
# question generation
# ---------------------------------------------------------------------------

def generate_questions(vsa: Vsa, spec: Spec, domain, states=(), *,
                       seed: int = 0, sample_limit: int = SAMPLE_LIMIT,
                       max_options: int = MAX_OPTIONS) -> tuple:
    """Every question that could shrink the space, deduplicated and
    ordered by id. `states` is the pool of inputs the user has not
    labeled; states appearing in `spec` are also inspected for the
    position kinds. May be empty when nothing is ambiguous."""
    if vsa.is_empty():
        raise EmptyVsa("no questions about an empty space")
    name = getattr(domain, "name", str(domain))
    spec = tuple(spec)
    states = tuple(states)
    if name == "flashfill":
        qs = _flashfill_questions(vsa, spec, domain, states, seed,
                                  sample_limit, max_options)
    elif name == "flashsplit":
        qs = _flashsplit_questions(vsa, spec, states)
    else:
        qs = _datatype_questions(vsa, spec, domain, states, seed, sample_limit)
    uniq = {}
    for q in qs:
        uniq.setdefault(q.qid, q)
    return tuple(sorted(uniq.values(), key=lambda q: q.qid))


def _state_refs(states, spec) -> list:
    """Stable (ref, state) listing: the caller's pool first, then any
    spec-only states, numbered consecutively."""
    out = list(enumerate(states))
    known = list(states)
    for st in spec_states(spec):
        if st not in known:
            out.append((len(known), st))
            known.append(st)
    return out


def _cluster_outputs(programs, st: State, ops, ranking: Ranking) -> dict:
    """Distinct output -> best raw rank among the sampled programs.
    Programs that fail on the state are skipped."""
    clusters: dict = {}
    for p in programs:
        try:
            o = evaluate(p, st, ops)
        except EvalError:
            continue
        raw = ranking.program_score(p)
        if o not in clusters or raw > clusters[o]:
            clusters[o] = raw
    return clusters


def _option_order(clusters: dict) -> list:
    return sorted(clusters.items(), key=lambda kv: (-kv[1], value_sort_key(kv[0])))


def _flashfill_questions(vsa, spec, domain, states, seed, sample_limit,
                         max_options) -> list:
    ops = domain.grammar.operators
    ranking = domain.ranking
    programs = sample_programs(vsa, sample_limit, seed)
    labeled = {st for st, c in spec if category(c) == DEFINITIVE}
    out: list = []
    refs = _state_refs(states, spec)
    for ref, st in refs:
        if st in labeled:
            continue
        clusters = _cluster_outputs(programs, st, ops, ranking)
        if len(clusters) < 2:
            continue
        ordered = _option_order(clusters)
        options = tuple(o for o, _ in ordered[:max_options])
        out.append(MultipleChoiceOutput(f"mc:{ref:03d}", ref, st, options))
    out.extend(_relevance_questions(programs, refs))
    out.extend(_datatype_from_refs(programs, refs, ops, ranking))
    return out


def _relevance_questions(programs, refs) -> list:
    """One yes/no per input column that some candidates read and others
    ignore; columns everyone agrees on have nothing to ask."""
    if not refs or not programs:
        return []
    ref, st = refs[0]
    row = st.get("vs")
    if not isinstance(row, ListV):
        return []
    out = []
    for col in range(len(row.items)):
        used = unused = False
        for p in programs:
            if references_column(p, col, st):
                used = True
            else:
                unused = True
            if used and unused:
                break
        if used and unused:
            out.append(BooleanRelevance(f"rel:{col:03d}", ref, st, col))
    return out


def _datatype_from_refs(programs, refs, ops, ranking) -> list:
    out = []
    for ref, st in refs:
        clusters = _cluster_outputs(programs, st, ops, ranking)
        if len(clusters) < 2:
            continue
        ordered = _option_order(clusters)
        types = {type_of(o) for o, _ in ordered}
        if len(types) < 2:
            continue
        top_type = type_of(ordered[0][0])
        out.append(BooleanDatatype(f"dt:{ref:03d}", ref, st, top_type))
    return out


def _datatype_questions(vsa, spec, domain, states, seed, sample_limit) -> list:
    ops = domain.grammar.operators
    ranking = domain.ranking
    programs = sample_programs(vsa, sample_limit, seed)
    return _datatype_from_refs(programs, _state_refs(states, spec), ops, ranking)


def _flashsplit_questions(vsa, spec, states) -> list:
    by_state: dict = {}
    for st, c in spec:
        if not isinstance(c, (Relevance, Provenance)):
            by_state.setdefault(st, []).append(c)
    out: list = []
    for ref, st in _state_refs(states, spec):
        possets = []
        for vec, _ in vsa.cluster((st,)):
            o = vec[0]
            if o is BOTTOM or not isinstance(o, ListV):
                continue
            pos = frozenset(split_positions(o, st))
            ok = all(constraint_holds(c, o, st) for c in by_state.get(st, ()))
            possets.append((pos, ok))
        if len(possets) < 2:
            continue
        union = frozenset().union(*(p for p, _ in possets))
        inter = frozenset.intersection(*(p for p, _ in possets))
        for p in sorted(union - inter):
            out.append(BinaryPosition(f"bin:{ref:03d}:{p:05d}", ref, st, p))
        sats = [pos for pos, ok in possets if ok]
        if (by_state.get(st) and len(sats) == 1 and sats[0]
                and any(not (sats[0] <= pos) for pos, _ in possets)):
            out.append(Confirmation(f"conf:{ref:03d}", ref, st,
                                    tuple(sorted(sats[0]))))
    return out


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

def disambiguate(vsa: Vsa, spec: Spec, score_fn, threshold: float,
                 domain=None, states=(), *, questions=None,
                 seed: int = 0) -> Optional[object]:
    """The question most worth asking, or None when even the best one
    scores under the threshold (the current top program is good enough
    to show instead). Ties break toward the smaller question id."""
    if questions is None:
        if vsa.is_empty():
            return None
        questions = generate_questions(vsa, spec, domain, states, seed=seed)
    best = None
    best_score = -math.inf
    for q in sorted(questions, key=lambda q: q.qid):
        s = float(score_fn(q, vsa, spec))
        if best is None or s > best_score:
            best, best_score = q, s
    if best is None or best_score < threshold:
        return None
    return best


# ---------------------------------------------------------------------------
# responses
# ---------------------------------------------------------------------------

def response_to_constraint(question, response) -> list:
    """Constraint pairs a response stands for. Empty list means the
    response carries no information (unknown)."""
    st = question.state
    if isinstance(question, MultipleChoiceOutput):
        if response == "none":
            return [(st, NotEquals(v)) for v in question.options]
        if (isinstance(response, int) and not isinstance(response, bool)
                and 0 <= response < len(question.options)):
            return [(st, Equals(question.options[response]))]
        raise InvalidResponse(f"{response!r} is not an option index or 'none'")
    tok = _ynu(response)
    if tok == "unknown":
        return []
    if isinstance(question, BinaryPosition):
        if tok == "yes":
            return [(st, Subsequence((IntV(question.position),)))]
        return [(st, NotContains(IntV(question.position)))]
    if isinstance(question, Confirmation):
        if tok == "yes":
            return [(st, Subsequence(tuple(IntV(p) for p in question.positions)))]
        return [(st, FalseC())]
    if isinstance(question, BooleanDatatype):
        if tok == "yes":
            return [(st, Datatype(question.sem_type))]
        return [(st, NotDatatype(question.sem_type))]
    if isinstance(question, BooleanRelevance):
        return [(st, Relevance(question.column, tok == "yes"))]
    raise InvalidResponse(f"unknown question kind {question!r}")


def _ynu(response) -> str:
    tok = response.lower() if isinstance(response, str) else response
    if tok not in _YNU:
        raise InvalidResponse(f"{response!r} is not yes/no/unknown")
    return tok


# ---------------------------------------------------------------------------
# wire format
# ---------------------------------------------------------------------------

def question_to_json(q) -> dict:
    base = {"id": q.qid, "kind": q.kind, "state_ref": q.state_ref,
            "responses": list(q.responses())}
    if isinstance(q, MultipleChoiceOutput):
        base["options"] = [value_to_json(v) for v in q.options]
    elif isinstance(q, BinaryPosition):
        base["position"] = q.position
    elif isinstance(q, Confirmation):
        base["positions"] = list(q.positions)
    elif isinstance(q, BooleanDatatype):
        base["type"] = str(q.sem_type)
    elif isinstance(q, BooleanRelevance):
        base["column"] = q.column
    return base
