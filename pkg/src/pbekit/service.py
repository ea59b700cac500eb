"""HTTP face of the interactive sessions.

One process hosts many sessions in memory under an LRU cap; restarting
loses them, transcripts are the durable artifact. All endpoints live
under /api/v1 and speak JSON; requests to the same session are
serialized by the session lock while distinct sessions run in
parallel. Optionally serves a static browser UI from a directory, but
nothing here depends on one existing.
"""

from __future__ import annotations

import os
from collections import OrderedDict
from threading import Lock
from typing import Any, Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import (InvalidResponse, LearnError, PbeError, SessionClosed,
                     StaleQuestion)
from .programs import program_text
from .session import Session

API = "/api/v1"


class SessionStore:
    """In-memory session table with LRU eviction."""

    def __init__(self, cap: int = 64):
        self.cap = cap
        self._lock = Lock()
        self._table: OrderedDict = OrderedDict()

    def add(self, session: Session) -> None:
        with self._lock:
            self._table[session.sid] = session
            self._table.move_to_end(session.sid)
            while len(self._table) > self.cap:
                self._table.popitem(last=False)

    def get(self, sid: str) -> Session:
        with self._lock:
            s = self._table.get(sid)
            if s is None:
                raise KeyError(sid)
            self._table.move_to_end(sid)
            return s

    def __len__(self) -> int:
        with self._lock:
            return len(self._table)


def _error_json(status: int, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": type(exc).__name__,
                                 "detail": str(exc)})


def create_app(store: Optional[SessionStore] = None,
               ui_dir: Optional[str] = None, cap: int = 64) -> FastAPI:
    app = FastAPI(title="pbekit", docs_url=None, redoc_url=None)
    sessions = store or SessionStore(cap)
    app.state.sessions = sessions

    @app.exception_handler(KeyError)
    def _not_found(request: Request, exc: KeyError):
        return _error_json(404, exc)

    @app.exception_handler(StaleQuestion)
    @app.exception_handler(SessionClosed)
    def _conflict(request: Request, exc: PbeError):
        return _error_json(409, exc)

    @app.exception_handler(LearnError)
    @app.exception_handler(InvalidResponse)
    @app.exception_handler(ValueError)
    def _unprocessable(request: Request, exc: Exception):
        return _error_json(422, exc)

    @app.post(API + "/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        domain = payload.get("domain")
        if not isinstance(domain, str):
            raise ValueError("missing 'domain'")
        seed = payload.get("seed", 0)
        if not isinstance(seed, int):
            raise ValueError("'seed' must be an integer")
        s = Session(domain, payload.get("inputs"), seed=seed)
        sessions.add(s)
        return {"id": s.sid, "domain": s.domain.name, "status": s.status}

    @app.get(API + "/sessions/{sid}")
    def get_session(sid: str):
        s = sessions.get(sid)
        with s.lock:
            return s.to_json()

    @app.get(API + "/sessions/{sid}/preview")
    def get_preview(sid: str):
        s = sessions.get(sid)
        with s.lock:
            return s.preview_json()

    @app.get(API + "/sessions/{sid}/question")
    def get_question(sid: str):
        s = sessions.get(sid)
        with s.lock:
            return s.question_json()

    @app.post(API + "/sessions/{sid}/constraints")
    def post_constraints(sid: str, payload: Any = Body(...)):
        s = sessions.get(sid)
        items = payload.get("constraints") if isinstance(payload, dict) \
            else payload
        with s.lock:
            rec = s.post_constraints(s.parse_pairs(items))
            return rec.to_json(s.status)

    @app.post(API + "/sessions/{sid}/answer")
    def post_answer(sid: str, payload: dict = Body(...)):
        s = sessions.get(sid)
        qid = payload.get("question_id")
        if not isinstance(qid, str):
            raise ValueError("missing 'question_id'")
        if "response" not in payload:
            raise ValueError("missing 'response'")
        round_seen = payload.get("round")
        if round_seen is not None and not isinstance(round_seen, int):
            raise ValueError("'round' must be an integer")
        with s.lock:
            rec = s.answer(qid, payload["response"], round_seen)
            if rec is None:
                return s.summary_json()
            return rec.to_json(s.status)

    @app.post(API + "/sessions/{sid}/fields/{field_id}/constraints")
    def post_field_constraints(sid: str, field_id: str,
                               payload: dict = Body(...)):
        s = sessions.get(sid)
        symbol = payload.get("symbol")
        if symbol is not None and not isinstance(symbol, str):
            raise ValueError("'symbol' must be a string")
        with s.lock:
            rec = s.post_named(field_id, symbol,
                               s.parse_pairs(payload.get("constraints")))
            return rec.to_json(s.status)

    @app.post(API + "/sessions/{sid}/fields/{field_id}/lock")
    def post_field_lock(sid: str, field_id: str):
        s = sessions.get(sid)
        with s.lock:
            p = s.lock_field(field_id)
            return {"field": field_id, "locked": True,
                    "program": program_text(p)}

    @app.post(API + "/sessions/{sid}/accept")
    def post_accept(sid: str):
        s = sessions.get(sid)
        with s.lock:
            s.accept()
            return s.summary_json()

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
