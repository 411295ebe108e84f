"""Live workspace service: CRUD over entity types and support examples, plus
prediction with per-example traces.  Content changes never retrain anything;
each support example is encoded once on ingest and cached.

Consistency model: one serialized writer per workspace, any number of readers.
Every mutation bumps the workspace revision and replaces an immutable state
snapshot, so a prediction runs against exactly one revision.  Durability is an
fsync'd append-only JSON-lines journal; a snapshot written on clean shutdown
compacts it.  After a crash the journal replays to the identical revision.
"""
from __future__ import annotations

import json
import logging
import os
import re
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .corpus import (
    CorpusError,
    SupportExample,
    assign_support_id,
    support_example_from_record,
    support_example_to_record,
)
from .encoders import Encoder, EncoderError, SupportEncoding
from .scoring import Prediction, ScoringConfig, predict as run_predict

log = logging.getLogger(__name__)

WORKSPACE_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]{0,63}$")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass(frozen=True)
class WorkspaceState:
    """Immutable snapshot; mutations build a new one and swap it in."""

    revision: int = 0
    entity_types: tuple[str, ...] = ()
    supports: "tuple[tuple[str, SupportExample], ...]" = ()

    def support_ids(self) -> set[str]:
        return {sid for sid, _ in self.supports}

    def by_type(self) -> dict[str, list[tuple[str, SupportExample]]]:
        grouped: dict[str, list[tuple[str, SupportExample]]] = {
            t: [] for t in self.entity_types
        }
        for sid, ex in self.supports:
            grouped.setdefault(ex.entity_type, []).append((sid, ex))
        return grouped


class Workspace:
    def __init__(self, workspace_id: str, encoder: Encoder, directory: Path | None) -> None:
        self.id = workspace_id
        self.encoder = encoder
        self.directory = directory
        self._lock = threading.RLock()
        self._journal = None
        self.state = WorkspaceState()
        self._encodings: dict[str, SupportEncoding] = {}
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)
            self._recover()
            self._journal = (directory / "journal.jsonl").open("a", encoding="utf-8")

    # -- persistence ---------------------------------------------------

    def _recover(self) -> None:
        snapshot_path = self.directory / "snapshot.json"
        state = WorkspaceState()
        if snapshot_path.exists():
            data = json.loads(snapshot_path.read_text(encoding="utf-8"))
            state = WorkspaceState(
                revision=data["revision"],
                entity_types=tuple(data["entity_types"]),
                supports=tuple(
                    (sid, support_example_from_record(record))
                    for sid, record in data["supports"]
                ),
            )
        journal_path = self.directory / "journal.jsonl"
        if journal_path.exists():
            for line in journal_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    log.warning("workspace %s: dropping truncated journal tail", self.id)
                    break
                if entry["revision"] <= state.revision:
                    continue
                state = self._apply(state, entry)
        self.state = state
        with torch.no_grad():
            self._encodings = {
                sid: self.encoder.encode_support(ex, support_id=sid)
                for sid, ex in state.supports
            }
        log.info(
            "workspace %s recovered at revision %d with %d supports",
            self.id, state.revision, len(state.supports),
        )

    @staticmethod
    def _apply(state: WorkspaceState, entry: dict) -> WorkspaceState:
        op = entry["op"]
        if op == "add_type":
            name = entry["name"]
            types = state.entity_types + ((name,) if name not in state.entity_types else ())
            return replace(state, revision=entry["revision"], entity_types=types)
        if op == "delete_type":
            name = entry["name"]
            return replace(
                state,
                revision=entry["revision"],
                entity_types=tuple(t for t in state.entity_types if t != name),
                supports=tuple(
                    (sid, ex) for sid, ex in state.supports if ex.entity_type != name
                ),
            )
        if op == "upsert_support":
            example = support_example_from_record(entry["record"])
            types = state.entity_types
            if example.entity_type not in types:
                types = types + (example.entity_type,)
            return replace(
                state,
                revision=entry["revision"],
                entity_types=types,
                supports=state.supports + ((entry["support_id"], example),),
            )
        if op == "delete_support":
            return replace(
                state,
                revision=entry["revision"],
                supports=tuple(
                    (sid, ex) for sid, ex in state.supports if sid != entry["support_id"]
                ),
            )
        raise ValueError(f"unknown journal op {op!r}")

    def _append_journal(self, entry: dict) -> None:
        if self._journal is None:
            return
        self._journal.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
        self._journal.flush()
        os.fsync(self._journal.fileno())

    def write_snapshot(self) -> None:
        if self.directory is None:
            return
        with self._lock:
            state = self.state
            payload = {
                "revision": state.revision,
                "entity_types": list(state.entity_types),
                "supports": [
                    [sid, support_example_to_record(ex)] for sid, ex in state.supports
                ],
            }
            tmp = self.directory / "snapshot.json.tmp"
            tmp.write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8")
            os.replace(tmp, self.directory / "snapshot.json")
            if self._journal is not None:
                self._journal.close()
                (self.directory / "journal.jsonl").write_text("", encoding="utf-8")
                self._journal = (self.directory / "journal.jsonl").open("a", encoding="utf-8")

    def close(self) -> None:
        self.write_snapshot()
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    # -- mutations -----------------------------------------------------

    def _commit(self, entry: dict, new_state: WorkspaceState) -> None:
        self._append_journal(entry)
        self.state = new_state

    def add_entity_type(self, name: str) -> int:
        if not name:
            raise ApiError(422, "invalid_entity_type", "entity type name must be non-empty")
        with self._lock:
            if name in self.state.entity_types:
                return self.state.revision
            entry = {"op": "add_type", "name": name, "revision": self.state.revision + 1}
            self._commit(entry, self._apply(self.state, entry))
            return self.state.revision

    def delete_entity_type(self, name: str) -> int:
        with self._lock:
            if name not in self.state.entity_types:
                raise ApiError(404, "unknown_entity_type", f"no entity type {name!r}")
            removed = [sid for sid, ex in self.state.supports if ex.entity_type == name]
            entry = {"op": "delete_type", "name": name, "revision": self.state.revision + 1}
            self._commit(entry, self._apply(self.state, entry))
            for sid in removed:
                self._encodings.pop(sid, None)
            return self.state.revision

    def upsert_support(self, record: dict) -> tuple[str, int]:
        try:
            example = support_example_from_record(record)
        except CorpusError as exc:
            raise ApiError(422, "invalid_support", str(exc)) from exc
        with self._lock:
            support_id = assign_support_id(example, self.state.support_ids())
            try:
                with torch.no_grad():
                    encoding = self.encoder.encode_support(example, support_id=support_id)
            except EncoderError as exc:
                raise ApiError(422, "encoding_failed", str(exc)) from exc
            entry = {
                "op": "upsert_support",
                "support_id": support_id,
                "record": support_example_to_record(example),
                "revision": self.state.revision + 1,
            }
            self._commit(entry, self._apply(self.state, entry))
            self._encodings[support_id] = encoding
            return support_id, self.state.revision

    def delete_support(self, support_id: str) -> int:
        with self._lock:
            if support_id not in self.state.support_ids():
                raise ApiError(404, "unknown_support", f"no support example {support_id!r}")
            entry = {
                "op": "delete_support",
                "support_id": support_id,
                "revision": self.state.revision + 1,
            }
            self._commit(entry, self._apply(self.state, entry))
            self._encodings.pop(support_id, None)
            return self.state.revision

    # -- reads -----------------------------------------------------------

    def entity_type_counts(self) -> list[dict]:
        state = self.state
        grouped = state.by_type()
        return [{"name": t, "count": len(grouped.get(t, []))} for t in state.entity_types]

    def predict(self, tokens: list[str], cfg: ScoringConfig) -> tuple[Prediction, int]:
        state = self.state  # one revision per prediction
        if not state.supports:
            raise ApiError(409, "empty_workspace", "workspace has no support examples")
        encodings: dict[str, list[SupportEncoding]] = {}
        for entity_type, group in state.by_type().items():
            encoded_group = [self._encodings[sid] for sid, _ in group]
            if encoded_group:
                encodings[entity_type] = encoded_group
        prediction = run_predict(tokens, encodings, self.encoder, cfg)
        return prediction, state.revision

    def cached_encoding(self, support_id: str) -> SupportEncoding:
        try:
            return self._encodings[support_id]
        except KeyError as exc:
            raise ApiError(404, "unknown_support", f"no support example {support_id!r}") from exc


class WorkspaceStore:
    def __init__(
        self,
        encoder: Encoder,
        data_dir: str | Path | None = None,
        checkpoint_id: str = "in-memory",
        scoring_defaults: ScoringConfig | None = None,
    ) -> None:
        self.encoder = encoder
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.checkpoint_id = checkpoint_id
        self.scoring_defaults = scoring_defaults or ScoringConfig()
        self._workspaces: dict[str, Workspace] = {}
        self._lock = threading.Lock()
        if self.data_dir is not None:
            root = self.data_dir / "workspaces"
            if root.exists():
                for child in sorted(root.iterdir()):
                    if child.is_dir():
                        self.get(child.name)

    def get(self, workspace_id: str) -> Workspace:
        if not WORKSPACE_ID_RE.match(workspace_id):
            raise ApiError(422, "invalid_workspace_id", f"bad workspace id {workspace_id!r}")
        with self._lock:
            ws = self._workspaces.get(workspace_id)
            if ws is None:
                directory = (
                    self.data_dir / "workspaces" / workspace_id
                    if self.data_dir is not None
                    else None
                )
                ws = Workspace(workspace_id, self.encoder, directory)
                self._workspaces[workspace_id] = ws
            return ws

    def close(self) -> None:
        with self._lock:
            for ws in self._workspaces.values():
                ws.close()


class SupportRecord(BaseModel):
    entity_type: str
    tokens: list[str]
    entity_start: int
    entity_end: int


class EntityTypeRequest(BaseModel):
    name: str


class PredictRequest(BaseModel):
    tokens: list[str] | None = None
    text: str | None = None
    algorithm: str | None = None
    k: int | None = None
    temperature: float | None = None
    top_n: int | None = None
    max_span_length: int | None = None


def _resolve_tokens(req: PredictRequest) -> list[str]:
    if req.tokens is not None and len(req.tokens) > 0:
        if any(not t for t in req.tokens):
            raise ApiError(422, "empty_query", "tokens must be non-empty strings")
        return req.tokens
    if req.text and req.text.split():
        return req.text.split()
    raise ApiError(422, "empty_query", "provide 'tokens' or whitespace-tokenizable 'text'")


def _resolve_config(req: PredictRequest, defaults: ScoringConfig) -> ScoringConfig:
    values = defaults.to_dict()
    for name in ("algorithm", "k", "temperature", "top_n", "max_span_length"):
        value = getattr(req, name)
        if value is not None:
            values[name] = value
    try:
        return ScoringConfig.from_dict(values)
    except ValueError as exc:
        raise ApiError(422, "invalid_config", str(exc)) from exc


def create_app(store: WorkspaceStore) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        store.close()

    app = FastAPI(title="spanmatch", lifespan=lifespan)

    @app.exception_handler(ApiError)
    async def handle_api_error(_: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "checkpoint": store.checkpoint_id}

    @app.get("/workspaces/{workspace_id}/revision")
    def revision(workspace_id: str) -> dict:
        ws = store.get(workspace_id)
        return {"revision": ws.state.revision, "checkpoint": store.checkpoint_id}

    @app.get("/workspaces/{workspace_id}/entity-types")
    def list_entity_types(workspace_id: str) -> dict:
        ws = store.get(workspace_id)
        return {"revision": ws.state.revision, "entity_types": ws.entity_type_counts()}

    @app.post("/workspaces/{workspace_id}/entity-types", status_code=201)
    def add_entity_type(workspace_id: str, body: EntityTypeRequest) -> dict:
        ws = store.get(workspace_id)
        rev = ws.add_entity_type(body.name)
        return {"revision": rev, "name": body.name}

    @app.delete("/workspaces/{workspace_id}/entity-types/{name}")
    def delete_entity_type(workspace_id: str, name: str) -> dict:
        ws = store.get(workspace_id)
        rev = ws.delete_entity_type(name)
        return {"revision": rev}

    @app.get("/workspaces/{workspace_id}/supports")
    def list_supports(workspace_id: str) -> dict:
        ws = store.get(workspace_id)
        state = ws.state
        return {
            "revision": state.revision,
            "supports": [
                {"support_id": sid, **support_example_to_record(ex)}
                for sid, ex in state.supports
            ],
        }

    @app.post("/workspaces/{workspace_id}/supports", status_code=201)
    def upsert_support(workspace_id: str, body: SupportRecord) -> dict:
        ws = store.get(workspace_id)
        support_id, rev = ws.upsert_support(body.model_dump())
        return {"revision": rev, "support_id": support_id}

    @app.delete("/workspaces/{workspace_id}/supports/{support_id}")
    def delete_support(workspace_id: str, support_id: str) -> dict:
        ws = store.get(workspace_id)
        rev = ws.delete_support(support_id)
        return {"revision": rev}

    @app.post("/workspaces/{workspace_id}/predict")
    def predict_endpoint(workspace_id: str, body: PredictRequest) -> dict:
        ws = store.get(workspace_id)
        tokens = _resolve_tokens(body)
        cfg = _resolve_config(body, store.scoring_defaults)
        prediction, rev = ws.predict(tokens, cfg)
        return {"revision": rev, "prediction": prediction.to_dict()}

    return app
