"""Interactive synthesis sessions.

A session is the conversation state machine behind the HTTP service and
the benchmark harness: inputs are fixed at creation, each batch of
constraints appends one round, and the status walks from active to
converged or failed. FlashFill and FlashSplit sessions ride on the
incremental interaction state; extract sessions hold a field registry
and take named per-field constraints instead.

Questions are offered per round: the current space is analyzed lazily
on the first question request after a round and the offer stays valid
until the next round supersedes it, which is what the stale-answer
check (HTTP 409) is about. FlashSplit confirmation questions are the
one pre-fold case: they are detected while a constraint batch is being
applied, against the space that batch is about to narrow, because that
is the only moment "exactly one candidate splitting satisfies the new
example" is visible.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass
from typing import Optional

from .constraints import (NamedSpec, Spec, constraint_from_json,
                          pair_to_json, state_from_json)
from .domains import Domain, domain_names, get_domain
from .errors import (EvalError, LearnError, NotFitted, SessionClosed,
                     StaleQuestion)
from .hypothesizer import (DEFAULT_SPLIT_T, DEFAULT_THRESHOLD, RankingScore,
                           SplitScore, disambiguate, generate_questions,
                           question_to_json)
from .hypothesizer import response_to_constraint as _response_pairs
from .incremental import learn_iter, start_session
from .operators import evaluate
from .programs import Program, program_text
from .values import ListV, RegionV, StrV, TreeV, value_to_json

ACTIVE = "active"
CONVERGED = "converged"
FAILED = "failed"

_UNPICKED = object()


@dataclass(frozen=True)
class SessionRound:
    """One appended round: the new constraints, the narrowed space's
    summary, and the wall time the narrowing took."""
    index: int
    pairs: Spec
    volume: int
    top_text: Optional[str]
    wall_ms: float
    via: str = "constraints"

    def to_json(self, status: str) -> dict:
        return {
            "round": self.index,
            "constraints": [pair_to_json(st, c) for st, c in self.pairs],
            "volume": self.volume,
            "top_program_text": self.top_text,
            "wall_ms": round(self.wall_ms, 3),
            "via": self.via,
            "status": status,
        }


def _normalize_inputs(domain: str, inputs) -> tuple:
    if not isinstance(inputs, (list, tuple)) or not inputs:
        raise ValueError("inputs must be a non-empty list")
    if domain == "flashfill":
        rows = []
        for row in inputs:
            if isinstance(row, str):
                row = [row]
            if (not isinstance(row, (list, tuple)) or not row
                    or not all(isinstance(c, str) for c in row)):
                raise ValueError("flashfill rows are lists of cell strings")
            rows.append(tuple(row))
        return tuple(rows)
    if not all(isinstance(x, str) for x in inputs):
        raise ValueError(f"{domain} inputs are strings")
    return tuple(inputs)


class Session:
    """One interactive synthesis conversation.

    `post_constraints` and `answer` append rounds for FlashFill and
    FlashSplit; `post_named` and `lock_field` drive extract sessions.
    All methods raise the package errors; the HTTP layer maps them to
    status codes. Callers that share a session across threads take
    `lock` around each call.
    """

    def __init__(self, domain: str, inputs, seed: int = 0,
                 sid: Optional[str] = None,
                 threshold: Optional[float] = None,
                 split_t: int = DEFAULT_SPLIT_T):
        if domain not in domain_names():
            raise ValueError(f"unknown domain {domain!r}")
        self.sid = sid or uuid.uuid4().hex[:12]
        self.domain: Domain = get_domain(domain)
        self.inputs = _normalize_inputs(domain, inputs)
        self.seed = seed
        self.lock = threading.Lock()
        self.rounds: list = []
        self.status = ACTIVE
        make = self.domain.make_state
        self.input_states = tuple(make(list(x) if domain == "flashfill"
                                       else x) for x in self.inputs)
        self.istate = None
        self.xsession = None
        if domain == "extract":
            self.xsession = self.domain.extras["session"](self.domain)
        else:
            self.istate = start_session(self.domain, self.input_states)
        ops = self.domain.grammar.operators
        if domain == "flashsplit":
            self.score_fn = SplitScore(split_t)
            self.threshold = 0.0 if threshold is None else threshold
        else:
            self.score_fn = RankingScore(self.domain.ranking, ops, seed=seed)
            self.threshold = (DEFAULT_THRESHOLD if threshold is None
                              else threshold)
        self._questions: Optional[dict] = None
        self._qround = -1
        self._picked = _UNPICKED
        self._pre_fold = None
        self._pre_fold_round = -1
        self._conf_asked: set = set()

    # -- space queries -----------------------------------------------------

    def _vsa(self):
        if self.xsession is not None:
            return self.xsession.vsa()
        try:
            return self.istate.vsa
        except NotFitted:
            return None

    def volume(self) -> int:
        v = self._vsa()
        return 0 if v is None else v.volume()

    def top_program(self) -> Optional[Program]:
        v = self._vsa()
        if v is None or v.is_empty():
            return None
        if self.xsession is not None:
            got = self.xsession.top_programs(1)
            return got[0][1] if got else None
        if self.domain.name == "flashsplit":
            got = self.domain.extras["top_k"](v.arena, v.root,
                                              self.input_states, 1)
            return got[0][1] if got else None
        return v.top_k(self.domain.ranking, 1)[0][1]

    def preview(self) -> list:
        """Top-1 program's output on every input, None where it errors."""
        p = self.top_program()
        out = []
        for st in self.input_states:
            if p is None:
                out.append(None)
                continue
            try:
                out.append(evaluate(p, st, self.domain.grammar.operators))
            except EvalError:
                out.append(None)
        return out

    def preview_json(self) -> dict:
        vals = self.preview()
        return {
            "round": len(self.rounds),
            "outputs": [None if v is None else value_to_json(v)
                        for v in vals],
            "display": [_display(v) for v in vals],
        }

    # -- rounds -------------------------------------------------------------

    def _check_writable(self) -> None:
        if self.status == FAILED:
            raise SessionClosed("a failed session accepts only reads")

    def _spec(self) -> Spec:
        if self.xsession is not None:
            spec = []
            for entry in self.xsession.fields.values():
                spec.extend(entry.spec)
            return tuple(spec)
        return self.istate.spec

    def _append_round(self, pairs: Spec, wall_ms: float,
                      via: str) -> SessionRound:
        vol = self.volume()
        top = self.top_program()
        rec = SessionRound(index=len(self.rounds) + 1, pairs=pairs,
                           volume=vol,
                           top_text=None if top is None else program_text(top),
                           wall_ms=wall_ms, via=via)
        self.rounds.append(rec)
        if vol == 0:
            self.status = FAILED
        elif self.status == CONVERGED:
            self.status = ACTIVE
        self._questions = None
        self._qround = -1
        self._picked = _UNPICKED
        return rec

    def post_constraints(self, pairs: Spec, via: str = "constraints"
                         ) -> SessionRound:
        self._check_writable()
        pairs = tuple(pairs)
        if not pairs:
            raise ValueError("no constraints given")
        if self.xsession is not None:
            raise LearnError("extract sessions take named field constraints"
                             " (POST .../fields/{id}/constraints)")
        pre = None
        if (self.domain.name == "flashsplit"
                and self.istate.root is not None):
            pre = (self.istate.vsa, self.istate.spec + pairs)
        t0 = time.perf_counter()
        learn_iter(self.istate, pairs)
        rec = self._append_round(pairs, (time.perf_counter() - t0) * 1e3, via)
        self._pre_fold = pre if self.status == ACTIVE else None
        self._pre_fold_round = len(self.rounds)
        return rec

    def post_named(self, field_id: str, symbol: Optional[str],
                   pairs: Spec) -> SessionRound:
        self._check_writable()
        if self.xsession is None:
            raise LearnError("named field constraints need an extract"
                             " session")
        pairs = tuple(pairs)
        if not pairs:
            raise ValueError("no constraints given")
        entry = self.xsession.fields.get(field_id)
        sym = symbol or (entry.symbol if entry is not None else None)
        if sym is None:
            raise LearnError("a new field needs a symbol ('er' or 'seq')")
        t0 = time.perf_counter()
        self.xsession.learn_named(NamedSpec(field_id, sym, pairs))
        return self._append_round(pairs, (time.perf_counter() - t0) * 1e3,
                                  f"field:{field_id}")

    def lock_field(self, field_id: str) -> Program:
        self._check_writable()
        if self.xsession is None:
            raise LearnError("field locking needs an extract session")
        if field_id not in self.xsession.fields:
            raise KeyError(field_id)
        return self.xsession.lock(field_id)

    def accept(self) -> None:
        """Explicit user acceptance of the current top program."""
        if self.status == ACTIVE and self.volume() > 0:
            self.status = CONVERGED

    # -- questions ------------------------------------------------------------

    def _ensure_questions(self) -> None:
        n = len(self.rounds)
        if self._questions is not None and self._qround == n:
            return
        self._picked = _UNPICKED
        self._qround = n
        self._questions = {}
        vsa = self._vsa()
        if vsa is None or vsa.is_empty() or self.status == FAILED:
            return
        qs = generate_questions(vsa, self._spec(), self.domain,
                                self.input_states, seed=self.seed)
        qmap = {q.qid: q for q in qs}
        if self._pre_fold is not None and self._pre_fold_round == n:
            pvsa, pspec = self._pre_fold
            for q in generate_questions(pvsa, pspec, self.domain,
                                        self.input_states, seed=self.seed):
                if (q.kind == "confirmation" and q.qid not in qmap
                        and (q.state, q.positions) not in self._conf_asked):
                    qmap[q.qid] = q
        self._questions = qmap

    def question(self):
        """The question most worth asking now, or None. Cached per round."""
        self._ensure_questions()
        if self._picked is _UNPICKED:
            qs = tuple(self._questions.values())
            picked = None
            if qs:
                picked = disambiguate(self._vsa(), self._spec(),
                                      self.score_fn, self.threshold,
                                      questions=qs)
            self._picked = picked
        return self._picked

    def question_json(self) -> Optional[dict]:
        q = self.question()
        if q is None:
            return None
        score = self.score_fn(q, self._vsa(), self._spec())
        out = question_to_json(q)
        out["score"] = float(score)
        out["mode"] = getattr(score, "mode", "exact")
        out["round"] = len(self.rounds)
        return out

    def answer(self, qid: str, response,
               round_seen: Optional[int] = None) -> Optional[SessionRound]:
        """Fold one response in. Returns the appended round, or None when
        the response carried no information (unknown)."""
        self._check_writable()
        if round_seen is not None and round_seen != len(self.rounds):
            raise StaleQuestion(
                f"question was offered at round {round_seen}, session is at"
                f" round {len(self.rounds)}")
        self._ensure_questions()
        q = self._questions.get(qid)
        if q is None:
            raise StaleQuestion(f"question {qid!r} is not on offer")
        if q.kind == "confirmation":
            self._conf_asked.add((q.state, q.positions))
        pairs = _response_pairs(q, response)
        if not pairs:
            del self._questions[qid]
            self._picked = _UNPICKED
            return None
        return self.post_constraints(tuple(pairs), via=f"question:{qid}")

    # -- wire format -----------------------------------------------------------

    def summary_json(self) -> dict:
        top = self.top_program()
        return {
            "round": len(self.rounds),
            "volume": self.volume(),
            "top_program_text": None if top is None else program_text(top),
            "status": self.status,
        }

    def to_json(self) -> dict:
        out = {
            "id": self.sid,
            "domain": self.domain.name,
            "status": self.status,
            "seed": self.seed,
            "inputs": [list(x) if isinstance(x, tuple) else x
                       for x in self.inputs],
            "round": len(self.rounds),
            "volume": self.volume(),
            "rounds": [r.to_json(self.status) for r in self.rounds],
        }
        top = self.top_program()
        out["top_program_text"] = None if top is None else program_text(top)
        if self._questions is not None and self._qround == len(self.rounds) \
                and self._picked is not _UNPICKED:
            out["question"] = (None if self._picked is None
                               else question_to_json(self._picked))
        else:
            out["question"] = None
        if self.xsession is not None:
            xs = self.xsession
            listed = ([] if xs.rows_field is None else [xs.rows_field])
            listed += [e for e in xs.order if e != xs.rows_field]
            fields = {}
            for i, e in enumerate(listed):
                entry = xs.fields[e]
                fields[e] = {
                    "symbol": entry.symbol,
                    "locked": entry.locked,
                    "volume": xs.arena.volume(entry.root),
                    "order": i,
                }
            out["fields"] = fields
            out["shape"] = list(xs.shape())
        return out

    def parse_pairs(self, items) -> Spec:
        """Decode wire constraints. Each item carries the constraint JSON
        plus either a `row` index into the session inputs or a full
        `state` object."""
        docs = self._docs()
        pairs = []
        if not isinstance(items, (list, tuple)):
            raise ValueError("constraints must be a list")
        for item in items:
            if not isinstance(item, dict):
                raise ValueError("each constraint is an object")
            try:
                c = constraint_from_json(item, docs)
                if "row" in item:
                    i = item["row"]
                    if not isinstance(i, int) \
                            or not (0 <= i < len(self.inputs)):
                        raise ValueError(f"row {i!r} out of range")
                    st = self.input_states[i]
                elif "state" in item:
                    st = state_from_json(item["state"], docs)
                else:
                    raise ValueError("constraint needs a 'row' or a 'state'")
            except (KeyError, TypeError, AttributeError) as exc:
                raise ValueError(f"malformed constraint: {exc}") from exc
            pairs.append((st, c))
        return tuple(pairs)

    def _docs(self) -> dict:
        if self.domain.name == "flashfill":
            return {}
        return {d: d for d in self.inputs}


def _display(v):
    """A plain-text rendering of a preview value for list views."""
    if v is None:
        return None
    if isinstance(v, StrV):
        return v.text
    if isinstance(v, RegionV):
        return v.slice()
    if isinstance(v, ListV):
        return [_display(x) for x in v.items]
    if isinstance(v, TreeV):
        return None
    return str(v)
