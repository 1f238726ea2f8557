"""HTTP service for live relevance-feedback sessions.

JSON endpoints: POST /sessions, GET /sessions/{id}/results, POST
/sessions/{id}/feedback, POST /sessions/{id}/refine, GET
/sessions/{id}/history, GET /corpus/items/{id}. Error bodies carry
``{code, message}``. Sessions live in memory; per-session operations are
serialized by a lock while distinct sessions proceed concurrently. Re-ranking
goes through the same code path as the simulated evaluation loop, so equal
label sequences yield equal rankings.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import model
from .corpus import FeatureCorpus
from .linear import cosine_scores
from .metrics import average_precision, precision_at_k, ranking_order
from .protocols import IrrfConfig, refit_scores

HISTORY_TOP_K = 200
DEFAULT_RESULT_K = 24


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CreateSessionRequest(BaseModel):
    query_id: str | None = None
    query_vector: list[float] | None = None
    k: int = DEFAULT_RESULT_K


class FeedbackLabel(BaseModel):
    item_id: str
    relevant: bool


class FeedbackRequest(BaseModel):
    labels: list[FeedbackLabel]


@dataclass
class SessionState:
    """Mutable state of one retrieval session; guarded by ``lock``."""

    session_id: str
    query_vector: np.ndarray
    query_class: int | None
    pool: dict[int, int] = field(default_factory=dict)  # local row -> label
    iteration: int = 0
    scores: np.ndarray | None = None
    order: np.ndarray | None = None
    history: list[list[tuple[str, float]]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(corpus: FeatureCorpus, params=None, method: str = "hc",
               adapt_cfg: model.AdaptConfig | None = None, split: str = "all",
               assets_base: str | None = None,
               irrf_cfg: IrrfConfig | None = None) -> FastAPI:
    """Build the service bound to one corpus, method and checkpoint."""
    cfg = irrf_cfg or IrrfConfig(method=method, adapt=adapt_cfg or model.AdaptConfig())
    if method == "hc":
        params = model.resolve_params(params, dim=corpus.dim)

    if split == "all":
        rows = np.arange(corpus.rows)
    else:
        rows = corpus.split_rows(split)
        if rows.size == 0:
            raise ValueError(f"split {split!r} is empty")
    X = corpus.data[rows].astype(np.float64)
    local_ids = [corpus.ids[r] for r in rows.tolist()]
    id_to_local = {item: i for i, item in enumerate(local_ids)}
    local_labels = corpus.class_labels[rows]

    app = FastAPI(title="hyperclass feedback service")
    sessions: dict[str, SessionState] = {}
    sessions_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    def get_session(session_id: str) -> SessionState:
        with sessions_lock:
            state = sessions.get(session_id)
        if state is None:
            raise ApiError(404, "unknown_session", f"no session with id {session_id!r}")
        return state

    def results_payload(state: SessionState, k: int) -> list[dict]:
        k = max(1, min(k, len(local_ids)))
        out = []
        for rank, local in enumerate(state.order[:k].tolist()):
            out.append({
                "id": local_ids[local],
                "score": float(state.scores[local]),
                "rank": rank,
                "label": state.pool.get(local),
            })
        return out

    def snapshot(state: SessionState) -> None:
        top = state.order[:HISTORY_TOP_K]
        state.history.append([(local_ids[i], float(state.scores[i])) for i in top.tolist()])

    def metrics_payload(state: SessionState) -> dict | None:
        if state.query_class is None:
            return None
        truth = local_labels == state.query_class
        if not truth.any():
            return None
        return {"map": average_precision(state.scores, truth),
                "p50": precision_at_k(state.scores, truth, 50)}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if (req.query_id is None) == (req.query_vector is None):
            raise ApiError(400, "bad_query", "provide exactly one of query_id or query_vector")
        query_class = None
        if req.query_id is not None:
            local = id_to_local.get(req.query_id)
            if local is None:
                raise ApiError(404, "unknown_item", f"no corpus item {req.query_id!r}")
            qvec = X[local]
            query_class = int(local_labels[local])
        else:
            qvec = np.asarray(req.query_vector, dtype=np.float64)
            if qvec.shape != (corpus.dim,):
                raise ApiError(400, "dimension_mismatch",
                               f"query vector has dimension {qvec.size}, corpus has {corpus.dim}")
            if not np.all(np.isfinite(qvec)):
                raise ApiError(400, "bad_query", "query vector contains non-finite values")
            local = None
        state = SessionState(session_id=uuid.uuid4().hex, query_vector=qvec,
                             query_class=query_class)
        if local is not None:
            state.pool[local] = 1
        state.scores = cosine_scores(X, qvec)
        state.order = ranking_order(state.scores)
        snapshot(state)
        with sessions_lock:
            sessions[state.session_id] = state
        return {"session_id": state.session_id, "iteration": 0,
                "query_id": req.query_id, "results": results_payload(state, req.k),
                "metrics": metrics_payload(state)}

    @app.get("/sessions/{session_id}/results")
    def get_results(session_id: str, k: int = DEFAULT_RESULT_K):
        state = get_session(session_id)
        with state.lock:
            return {"session_id": session_id, "iteration": state.iteration,
                    "results": results_payload(state, k)}

    @app.post("/sessions/{session_id}/feedback")
    def submit_feedback(session_id: str, req: FeedbackRequest):
        state = get_session(session_id)
        with state.lock:
            for entry in req.labels:
                local = id_to_local.get(entry.item_id)
                if local is None:
                    raise ApiError(404, "unknown_item", f"no corpus item {entry.item_id!r}")
                state.pool[local] = 1 if entry.relevant else 0
            return {"session_id": session_id, "pool_size": len(state.pool)}

    @app.post("/sessions/{session_id}/refine")
    def refine(session_id: str, k: int = DEFAULT_RESULT_K):
        state = get_session(session_id)
        with state.lock:
            if 1 not in state.pool.values():
                raise ApiError(400, "no_positive_feedback",
                               "refine needs at least one relevant item in the pool")
            try:
                state.scores = refit_scores(
                    cfg.method, X, list(state.pool), list(state.pool.values()),
                    init_params=params, query_vector=state.query_vector, cfg=cfg)
            except FloatingPointError as exc:
                raise ApiError(500, "adaptation_failed", str(exc))
            state.order = ranking_order(state.scores)
            state.iteration += 1
            snapshot(state)
            return {"session_id": session_id, "iteration": state.iteration,
                    "results": results_payload(state, k),
                    "metrics": metrics_payload(state)}

    @app.get("/sessions/{session_id}/history")
    def get_history(session_id: str):
        state = get_session(session_id)
        with state.lock:
            snapshots = [
                {"iteration": it,
                 "items": [{"id": i, "score": s, "rank": r}
                           for r, (i, s) in enumerate(entries)]}
                for it, entries in enumerate(state.history)
            ]
            trajectories: dict[str, list[dict]] = {}
            for it, entries in enumerate(state.history):
                for rank, (item_id, _) in enumerate(entries):
                    trajectories.setdefault(item_id, []).append({"iteration": it, "rank": rank})
            return {"session_id": session_id, "iteration": state.iteration,
                    "snapshots": snapshots, "trajectories": trajectories}

    @app.get("/corpus/items/{item_id}")
    def corpus_item(item_id: str):
        local = id_to_local.get(item_id)
        if local is None:
            raise ApiError(404, "unknown_item", f"no corpus item {item_id!r}")
        row = int(rows[local])
        display = corpus.display_paths[row] if corpus.display_paths else None
        thumbnail = None
        if display and assets_base:
            thumbnail = assets_base.rstrip("/") + "/" + display.lstrip("/")
        preview = corpus.data[row, :32].astype(float).round(4).tolist()
        return {"id": item_id, "class_label": int(corpus.class_labels[row]),
                "split": corpus.splits[row], "display_path": display,
                "thumbnail_url": thumbnail, "feature_preview": preview}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "rows": len(local_ids), "dim": corpus.dim,
                "method": cfg.method, "split": split}

    return app
