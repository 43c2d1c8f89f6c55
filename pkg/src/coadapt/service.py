"""HTTP API over live sessions.

One in-memory session table; requests to the same session serialize on a
per-session lock, different sessions proceed in parallel. Terminal sessions
are persisted as JSON logs (plus PNGs) when a logs directory is configured.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import rl
from .errors import CollisionError, InvalidEdit, InvalidPrompt, OutOfRange, SessionClosed
from .generator import Vocabulary, png_data_uri
from .prompts import edit_from_json
from .session import (
    RoundRecord,
    SessionConfig,
    SessionLog,
    SessionState,
    SimulatedUser,
    accept_session,
    heuristic_proposals,
    new_session,
    propose_edits,
    save_log,
    state_features,
    step_round,
)

DEFAULT_TTL_SECONDS = 30 * 60


@dataclass
class _Entry:
    state: SessionState
    user: Optional[SimulatedUser]
    records: list[RoundRecord]
    images: list
    initial_prompt: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_activity: float = field(default_factory=time.monotonic)
    persisted: bool = False


class CreateSessionBody(BaseModel):
    prompt: str
    seed: int = 0
    target: Optional[str] = None


class EditBody(BaseModel):
    edit: dict
    use_injection: bool = True


def _image_payload(img) -> dict:
    h, w, c = img.pixels.shape
    return {"h": h, "w": w, "c": c, "data": img.pixels.reshape(-1).tolist()}


def _state_payload(entry: _Entry) -> dict:
    state = entry.state
    heat = state.stack.token_heatmaps()
    return {
        "id": state.session_id,
        "round": state.round,
        "status": state.status,
        "clip_score": state.last_reward,
        "reward_history": list(state.rewards),
        "prompt": state.prompt.to_json(),
        "image": _image_payload(state.image),
        "image_png": png_data_uri(state.image),
        "attention": {
            "tokens": list(state.prompt.surfaces),
            "heatmaps": [row.tolist() for row in heat],
        },
    }


def create_app(
    cfg: SessionConfig,
    policy: Optional[rl.PolicyParams] = None,
    logs_dir=None,
    static_dir=None,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
) -> FastAPI:
    app = FastAPI(title="coadapt session service")
    vocab = Vocabulary(cfg.generator)
    table: dict[str, _Entry] = {}
    table_lock = threading.Lock()
    counter = {"n": 0}
    logs_path = Path(logs_dir) if logs_dir else None

    def _evict_idle() -> None:
        now = time.monotonic()
        with table_lock:
            stale = [sid for sid, e in table.items() if now - e.last_activity > ttl_seconds]
            for sid in stale:
                table.pop(sid, None)

    def _get(sid: str) -> _Entry:
        with table_lock:
            entry = table.get(sid)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        entry.last_activity = time.monotonic()
        return entry

    def _persist(entry: _Entry) -> None:
        if logs_path is None or entry.persisted or not entry.state.terminal:
            return
        log = SessionLog(
            id=entry.state.session_id,
            initial_prompt=entry.initial_prompt,
            rounds=entry.records,
            status=entry.state.status,
            images=entry.images,
        )
        try:
            save_log(log, logs_path)
        except CollisionError:
            pass
        entry.persisted = True

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        _evict_idle()
        try:
            state = new_session(body.prompt, body.seed, cfg)
        except (InvalidPrompt, OutOfRange) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with table_lock:
            counter["n"] += 1
            sid = f"svc-{counter['n']:06d}-{state.session_id[5:]}"
        state = SessionState(
            session_id=sid,
            round=state.round,
            prompt=state.prompt,
            image=state.image,
            stack=state.stack,
            rewards=state.rewards,
            status=state.status,
            seed=state.seed,
        )
        user = SimulatedUser.from_text(body.target, cfg) if body.target else None
        entry = _Entry(
            state=state,
            user=user,
            records=[RoundRecord(0, "", None, state.last_reward, f"images/{sid}_r0.png")],
            images=[state.image],
            initial_prompt=body.prompt,
        )
        with table_lock:
            table[sid] = entry
        return _state_payload(entry)

    @app.get("/api/sessions/{sid}")
    def get_session(sid: str):
        return _state_payload(_get(sid))

    @app.post("/api/sessions/{sid}/edits")
    def post_edit(sid: str, body: EditBody):
        entry = _get(sid)
        with entry.lock:
            if entry.state.terminal:
                raise HTTPException(status_code=409, detail=f"session is {entry.state.status}")
            try:
                edit = edit_from_json(body.edit, vocab)
                state = step_round(entry.state, edit, body.use_injection, cfg)
            except (InvalidEdit, OutOfRange, InvalidPrompt) as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            except SessionClosed as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            entry.state = state
            applied = state.last_edit
            entry.records.append(
                RoundRecord(
                    state.round,
                    "",
                    applied.to_json() if applied is not None else None,
                    state.last_reward,
                    f"images/{sid}_r{state.round}.png",
                )
            )
            entry.images.append(state.image)
            _persist(entry)
        return _state_payload(entry)

    @app.get("/api/sessions/{sid}/suggestions")
    def get_suggestions(sid: str):
        entry = _get(sid)
        with entry.lock:
            feats = state_features(entry.state, cfg)
            if policy is not None:
                probs = np.exp(rl.action_logprobs(policy, feats))
            else:
                probs = np.full(rl.N_ACTIONS, 1.0 / rl.N_ACTIONS)
            if entry.user is not None:
                props = propose_edits(entry.user, entry.state, cfg)
            else:
                props = heuristic_proposals(entry.state, cfg)
            return {
                "probabilities": {
                    name: float(p) for name, p in zip(rl.ACTIONS, probs)
                },
                "candidates": [
                    {
                        "strategy": p.strategy,
                        "edit": p.edit.to_json(),
                        "feedback": p.feedback,
                    }
                    for p in props
                ],
            }

    @app.post("/api/sessions/{sid}/accept")
    def post_accept(sid: str):
        entry = _get(sid)
        with entry.lock:
            if entry.state.terminal:
                raise HTTPException(status_code=409, detail=f"session is {entry.state.status}")
            entry.state = accept_session(entry.state)
            _persist(entry)
        return _state_payload(entry)

    @app.get("/api/health")
    def health():
        return {"ok": True, "sessions": len(table)}

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
