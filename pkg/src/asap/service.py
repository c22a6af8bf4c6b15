"""HTTP JSON API for live pairwise-comparison sessions.

A session owns an experiment state, a sampling strategy and a queue of
pending pairs.  Served pairs get an opaque id; an outcome is accepted exactly
once per served pair, which makes client retries idempotent.  Presentation
order (left/right) is randomized at serve time but records are always stored
in canonical index order with the outcome sign adjusted, so the inference
core never sees presentation effects.

Persistence is an append-only JSON-lines event log (create/serve/outcome);
state is rebuilt by replaying it, and outcome events are flushed to disk
before they are acknowledged.
"""
from __future__ import annotations

import json
import threading
from contextlib import asynccontextmanager
import time
import uuid
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .core import (
    ComparisonRecord,
    ExperimentState,
    ModelConfig,
    ScorePosterior,
    standard_trials,
)
from .samplers import AsapSampler, SamplerKind, make_sampler


class SamplerOptions(BaseModel):
    kind: str = "asap"
    selective: bool = True
    batch: bool = True
    seed: int = 0


class CreateSessionRequest(BaseModel):
    labels: list[str] = Field(min_length=2)
    urls: list[str] | None = None
    sampler: SamplerOptions = Field(default_factory=SamplerOptions)
    beta: float = 1.0


class OutcomeRequest(BaseModel):
    pair_id: str
    choice: str  # "first" | "second", relative to the served presentation


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class Session:
    """Single live experiment; all mutation happens under ``lock``."""

    def __init__(self, session_id: str, labels: list[str],
                 urls: list[str] | None, options: SamplerOptions,
                 beta: float) -> None:
        self.id = session_id
        self.labels = labels
        self.urls = urls
        self.options = options
        self.lock = threading.Lock()
        n = len(labels)
        config = ModelConfig(beta=beta)
        self.state = ExperimentState(n, config)
        kind = SamplerKind(options.kind, selective=options.selective,
                           batch=options.batch, seed=options.seed)
        self.kind = kind
        self.sampler = make_sampler(kind, n, config,
                                    np.random.default_rng(options.seed))
        self.present_rng = np.random.default_rng([options.seed, 1])
        self.queue: list[tuple[int, int]] = []
        # pair_id -> (i, j, flipped); removed once answered
        self.pending: dict[str, tuple[int, int, bool]] = {}
        self.created_at = time.time()
        self.updated_at = self.created_at

    @property
    def n(self) -> int:
        return self.state.n

    def _refill(self) -> None:
        self.queue = list(self.sampler.propose(self.state))

    def serve_pair(self, pair_id: str | None = None,
                   flipped: bool | None = None) -> dict | None:
        """Pop the next pair, refilling when the queue is empty and nothing
        is awaiting an answer.  Returns None when outcomes are outstanding."""
        if not self.queue:
            if self.pending:
                return None
            self._refill()
        i, j = self.queue.pop(0)
        if flipped is None:
            flipped = bool(self.present_rng.random() < 0.5)
        if pair_id is None:
            pair_id = uuid.uuid4().hex
        self.pending[pair_id] = (i, j, flipped)
        first, second = (j, i) if flipped else (i, j)
        self.updated_at = time.time()
        return {
            "pair_id": pair_id,
            "first": self._condition(first),
            "second": self._condition(second),
        }

    def _condition(self, index: int) -> dict:
        entry: dict[str, Any] = {"index": index, "label": self.labels[index]}
        if self.urls is not None:
            entry["url"] = self.urls[index]
        return entry

    def apply_outcome(self, pair_id: str, choice: str) -> ComparisonRecord:
        if choice not in ("first", "second"):
            raise ApiError(422, "invalid_choice",
                           "choice must be 'first' or 'second'")
        if pair_id not in self.pending:
            raise ApiError(409, "unknown_or_answered_pair",
                           f"pair {pair_id} was not served or is already answered")
        i, j = sorted(self.pending[pair_id][:2])
        _, _, flipped = self.pending.pop(pair_id)
        preferred_first_presented = choice == "first"
        # map back to canonical order: outcome is +1 iff the lower index won
        presented = (j, i) if flipped else (i, j)
        winner = presented[0] if preferred_first_presented else presented[1]
        outcome = 1 if winner == i else -1
        record = ComparisonRecord(len(self.state.history), i, j, outcome)
        self.state.append(record)
        self.sampler.observe(self.state, record)
        self._refresh_posterior()
        self.updated_at = time.time()
        return record

    def _refresh_posterior(self) -> None:
        if isinstance(self.sampler, AsapSampler):
            if self.sampler.mode == "full":
                self.sampler.engine.refresh()
            mu, var = self.sampler.posterior_arrays()
            self.state.set_posterior(ScorePosterior(mu, var))
        else:
            self.state.refresh_posterior()

    def scale_payload(self) -> dict:
        posterior = self.state.posterior
        means = posterior.means
        order = np.argsort(-means, kind="stable")
        ranks = np.empty(self.n, int)
        # competition ranking: equal means share a rank
        rank = 0
        last_mean = None
        for position, idx in enumerate(order):
            if last_mean is None or means[idx] != last_mean:
                rank = position + 1
                last_mean = means[idx]
            ranks[idx] = rank
        trials = len(self.state.history)
        return {
            "session_id": self.id,
            "trials": trials,
            "standard_trials": standard_trials(self.n, trials),
            "scores": [
                {
                    "index": i,
                    "label": self.labels[i],
                    "mean": float(posterior.means[i]),
                    "variance": float(posterior.variances[i]),
                    "rank": int(ranks[i]),
                }
                for i in range(self.n)
            ],
        }


class SessionStore:
    def __init__(self, persist_path) -> None:
        self.path = Path(persist_path)
        self.lock = threading.Lock()
        self.sessions: dict[str, Session] = {}
        if self.path.exists():
            self._replay()
        self._log = self.path.open("a")

    def _replay(self) -> None:
        with self.path.open() as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event["type"]
                if kind == "create":
                    session = Session(
                        event["session"], event["labels"], event.get("urls"),
                        SamplerOptions(**event["sampler"]), event["beta"],
                    )
                    self.sessions[session.id] = session
                elif kind == "serve":
                    session = self.sessions[event["session"]]
                    # force the logged pair to the head of the queue
                    pair = (event["first"], event["second"])
                    if pair in session.queue:
                        session.queue.remove(pair)
                    session.queue.insert(0, pair)
                    session.serve_pair(event["pair_id"], event["flipped"])
                elif kind == "outcome":
                    session = self.sessions[event["session"]]
                    session.apply_outcome(event["pair_id"], event["choice"])

    def _append(self, event: dict) -> None:
        self._log.write(json.dumps(event, sort_keys=True) + "\n")
        self._log.flush()

    def create(self, request: CreateSessionRequest) -> Session:
        labels = request.labels
        if len(set(labels)) != len(labels):
            raise ApiError(400, "duplicate_labels", "labels must be distinct")
        if request.urls is not None and len(request.urls) != len(labels):
            raise ApiError(400, "url_count_mismatch",
                           "urls must match labels in length")
        session = Session(uuid.uuid4().hex, labels, request.urls,
                          request.sampler, request.beta)
        with self.lock:
            self.sessions[session.id] = session
            self._append({
                "type": "create", "session": session.id, "labels": labels,
                "urls": request.urls, "sampler": request.sampler.model_dump(),
                "beta": request.beta, "ts": session.created_at,
            })
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session",
                           f"no session with id {session_id}")
        return session

    def log_serve(self, session: Session, payload: dict) -> None:
        i, j, flipped = session.pending[payload["pair_id"]]
        self._append({
            "type": "serve", "session": session.id,
            "pair_id": payload["pair_id"], "first": i, "second": j,
            "flipped": flipped, "ts": time.time(),
        })

    def log_outcome(self, session: Session, pair_id: str, choice: str) -> None:
        # write-ahead: persisted before the outcome is applied or acknowledged
        self._append({
            "type": "outcome", "session": session.id, "pair_id": pair_id,
            "choice": choice, "ts": time.time(),
        })

    def close(self) -> None:
        self._log.flush()
        self._log.close()


def create_app(persist_path="asap_sessions.jsonl",
               static_dir=None) -> FastAPI:
    store = SessionStore(persist_path)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        store.close()

    app = FastAPI(title="asap live experiment service", lifespan=lifespan)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        session = store.create(request)
        return {
            "session_id": session.id,
            "n": session.n,
            "labels": session.labels,
            "sampler": session.options.model_dump(),
            "beta": session.state.config.beta,
        }

    @app.get("/sessions/{session_id}/next")
    def next_pair(session_id: str):
        session = store.get(session_id)
        with session.lock:
            payload = session.serve_pair()
            if payload is None:
                return {"status": "awaiting_outcomes",
                        "pending": len(session.pending)}
            store.log_serve(session, payload)
        payload["status"] = "ok"
        return payload

    @app.post("/sessions/{session_id}/outcomes")
    def submit_outcome(session_id: str, request: OutcomeRequest):
        session = store.get(session_id)
        with session.lock:
            if request.pair_id not in session.pending:
                raise ApiError(409, "unknown_or_answered_pair",
                               f"pair {request.pair_id} was not served or is "
                               "already answered")
            if request.choice not in ("first", "second"):
                raise ApiError(422, "invalid_choice",
                               "choice must be 'first' or 'second'")
            store.log_outcome(session, request.pair_id, request.choice)
            session.apply_outcome(request.pair_id, request.choice)
            return {
                "status": "ok",
                "trials": len(session.state.history),
                "standard_trials": standard_trials(
                    session.n, len(session.state.history)),
                "pending": len(session.pending) + len(session.queue),
            }

    @app.get("/sessions/{session_id}/scale")
    def get_scale(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return session.scale_payload()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="static")

    return app
