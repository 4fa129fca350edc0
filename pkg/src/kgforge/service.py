"""HTTP service for the review console and KG queries.

Serves the annotation queue (read + label), KG statistics, and the three
conversation applications over an immutable KG snapshot loaded at startup.
Labels are the only mutation; they are serialized under a lock and flushed
to the queue file immediately, so a restart never loses a decision.
Pipelines run through the CLI only, never through the service.
"""
from __future__ import annotations

import os
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import apps
from .kg_store import KGError, KnowledgeGraph, UnknownItemError
from .pipelines import AlreadyLabeledError, AnnotationQueue, PipelineError, UnknownTaskError
from .sequence_tagger import DictionaryTagger


@dataclass
class ServiceConfig:
    kg_path: str
    queue_path: str
    listen_address: str = "127.0.0.1:8776"
    auth_token: str | None = None
    static_dir: str | None = None

    def __post_init__(self) -> None:
        for path in (self.kg_path, self.queue_path):
            if not os.path.exists(path):
                raise FileNotFoundError(f"service config path does not exist: {path}")

    @property
    def host(self) -> str:
        return self.listen_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_address.rsplit(":", 1)[1])


class LabelRequest(BaseModel):
    label: str
    annotator: str | None = None
    override: bool = False


class RewriteRequest(BaseModel):
    utterance: str


class QARequest(BaseModel):
    question: str
    item_id: str


def create_app(config: ServiceConfig) -> FastAPI:
    kg = KnowledgeGraph.load(config.kg_path)
    queue = AnnotationQueue.load(config.queue_path)
    tagger = DictionaryTagger(kg.typed_value_dictionary())
    lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        with lock:  # graceful shutdown flushes queue writes
            queue.save(config.queue_path)

    app = FastAPI(title="kgforge", version="0.1.0", lifespan=lifespan)

    def check_auth(request: Request) -> None:
        if config.auth_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.auth_token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    auth = Depends(check_auth)

    @app.get("/tasks", dependencies=[auth])
    def get_tasks(kind: str | None = None, status: str | None = None, limit: int = 1000):
        if limit < 1:
            raise HTTPException(status_code=400, detail="limit must be >= 1")
        tasks = queue.select(kind=kind, status=status)
        return [t.to_dict() | {"status": t.status} for t in tasks[:limit]]

    @app.post("/tasks/{task_id}/label", dependencies=[auth])
    def post_label(task_id: str, body: LabelRequest):
        with lock:
            try:
                task = queue.label(task_id, body.label, annotator=body.annotator,
                                   override=body.override)
            except UnknownTaskError as e:
                raise HTTPException(status_code=404, detail=str(e)) from e
            except AlreadyLabeledError as e:
                raise HTTPException(status_code=409, detail=str(e)) from e
            except PipelineError as e:
                raise HTTPException(status_code=400, detail=str(e)) from e
            queue.save(config.queue_path)
            return task.to_dict() | {"status": task.status}

    @app.get("/kg/stats", dependencies=[auth])
    def get_stats():
        return kg.stats()

    @app.post("/query/rewrite", dependencies=[auth])
    def post_rewrite(body: RewriteRequest):
        result = apps.rewrite_query(body.utterance, kg)
        return {
            "detected_problems": result.detected_problems,
            "pois": result.pois,
            "category_hint": result.category_hint,
            "rewritten_query": result.rewritten_query,
        }

    @app.post("/qa", dependencies=[auth])
    def post_qa(body: QARequest):
        try:
            answer = apps.answer_property_question(body.question, body.item_id, tagger, kg)
        except (UnknownItemError, KGError) as e:
            raise HTTPException(status_code=404, detail=str(e)) from e
        return {
            "queried_property": answer.queried_property,
            "matched_values": answer.matched_values,
            "verdict": answer.verdict,
            "answer_text": answer.answer_text,
        }

    @app.get("/items/{item_id}/reason", dependencies=[auth])
    def get_reason(item_id: str):
        try:
            reason = apps.generate_reason(item_id, kg)
        except apps.NoReasoningPathError as e:
            return JSONResponse(status_code=422, content={"code": e.code, "message": str(e)})
        except KGError as e:
            raise HTTPException(status_code=404, detail=str(e)) from e
        category, value, prop, pois = reason.slots
        return {
            "item": reason.item,
            "slots": {"category": category, "value": value, "property": prop, "pois": list(pois)},
            "text": reason.text,
        }

    if config.static_dir and os.path.isdir(config.static_dir):
        app.mount("/console", StaticFiles(directory=config.static_dir, html=True), name="console")

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
