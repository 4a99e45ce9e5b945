"""HTTP API over the insight pipeline with file-backed session persistence.

One JSON file per session and per dataset, written atomically
(write-to-temp, rename), so a service restart reproduces every session
byte-identically.  Core modules are pure; the store plus a per-session lock
are the only shared state, which keeps concurrent requests to distinct
sessions independent.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .data import ExplanationTable, load_table, serialize_table
from .errors import (
    DuplicateRowId,
    EmptyTable,
    MalformedInput,
    NoParseError,
    ProviderUnavailable,
    SchemaViolation,
    UnknownInsightType,
    UnparseableClassification,
)
from .evaluator import evaluate
from .extractor import ExtractorConfig, InsightExtractor
from .grammar import render
from .insights import bind_document, validate
from .mapper import MappingResult, map_insight
from .pipeline import structure_text
from .visspec import DataRef, Encoding, VisSpec, compile as compile_spec, synthetic_field

DEFAULT_MAX_UPLOAD = 50 * 2**20


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class SessionStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "datasets").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- datasets ----------------------------------------------------------

    def dataset_path(self, dataset_id: str) -> Path:
        return self.root / "datasets" / f"{dataset_id}.json"

    def save_dataset(self, table: ExplanationTable) -> str:
        canonical = serialize_table(table, "json")
        dataset_id = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
        path = self.dataset_path(dataset_id)
        if not path.exists():
            _atomic_write(path, canonical)
        return dataset_id

    def load_dataset(self, dataset_id: str) -> ExplanationTable:
        path = self.dataset_path(dataset_id)
        if not path.exists():
            raise KeyError(dataset_id)
        return load_table(path.read_text(encoding="utf-8"), "json")

    # -- sessions ----------------------------------------------------------

    def session_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.json"

    def create_session(self, dataset_id: str) -> dict:
        session_id = uuid.uuid4().hex[:12]
        doc = {
            "id": session_id,
            "dataset_id": dataset_id,
            "current_spec": default_heatmap_spec(dataset_id).to_doc(),
            "insights": [],
            "created_at": _now(),
            "updated_at": _now(),
        }
        self.save_session(doc)
        return doc

    def save_session(self, doc: dict):
        doc["updated_at"] = _now()
        _atomic_write(self.session_path(doc["id"]), json.dumps(doc, sort_keys=True))

    def load_session(self, session_id: str) -> dict:
        path = self.session_path(session_id)
        if not path.exists():
            raise KeyError(session_id)
        return json.loads(path.read_text(encoding="utf-8"))


def default_heatmap_spec(dataset_id: str) -> VisSpec:
    """Entry view: attribution heatmap over all features, instances on x."""
    return VisSpec(
        data_ref=DataRef(dataset_id),
        mark="rect",
        encodings={
            "x": Encoding(synthetic_field("instance-index"), scale="ordinal"),
            "y": Encoding(synthetic_field("feature-name"), scale="ordinal"),
            "color": Encoding(synthetic_field("melted-attribution"), scale="diverging-color"),
        },
        title="Feature attribution heatmap",
    )


def model_card(table: ExplanationTable) -> dict:
    predictions = [r.prediction for r in table.rows]
    return {
        "n_rows": table.n_rows,
        "base_value": table.base_value,
        "features": [
            {"name": f.name, "kind": f.kind, "unit": f.unit, "description": f.description}
            for f in table.features
        ],
        "prediction": {
            "min": min(predictions),
            "max": max(predictions),
            "mean": sum(predictions) / len(predictions),
        },
        "warnings": list(table.warnings),
    }


def _slot_docs(slots) -> list[dict]:
    return [
        {"path": s.path, "state": s.state,
         "candidates": list(s.candidates) if s.candidates else None}
        for s in slots
    ]


class SessionBody(BaseModel):
    dataset_id: str


class InsightBody(BaseModel):
    text: str
    use_llm: bool = False


class CompletionBody(BaseModel):
    document: dict


def create_app(
    data_dir,
    extractor_config: ExtractorConfig | None = None,
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD,
    cors_origins: str = "*",
) -> FastAPI:
    app = FastAPI(title="xlint service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[o.strip() for o in cors_origins.split(",")],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(data_dir)
    extractor = InsightExtractor(extractor_config) if extractor_config else None
    app.state.store = store

    def get_session(session_id: str) -> dict:
        try:
            return store.load_session(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id!r}")

    def get_table(dataset_id: str) -> ExplanationTable:
        try:
            return store.load_dataset(dataset_id)
        except KeyError:
            raise HTTPException(404, f"unknown dataset {dataset_id!r}")

    def entry_response(session_doc: dict, index: int) -> dict:
        entry = session_doc["insights"][index]
        return {
            "index": index,
            "structured": entry["document"],
            "slots": entry["slots"],
            "rendered": entry["rendered"],
            "source": entry["source"],
            "trace_id": entry["trace_id"],
        }

    @app.post("/datasets")
    async def upload_dataset(request: Request):
        body = await request.body()
        if len(body) > max_upload_bytes:
            raise HTTPException(413, f"upload exceeds {max_upload_bytes} bytes")
        content_type = request.headers.get("content-type", "")
        stripped = body.lstrip()
        fmt = "json" if ("json" in content_type or stripped.startswith(b"{")) else "csv"
        try:
            table = load_table(body, fmt)
        except (MalformedInput, DuplicateRowId, EmptyTable) as exc:
            raise HTTPException(400, f"{type(exc).__name__}: {exc}")
        dataset_id = store.save_dataset(table)
        return {"dataset_id": dataset_id, "model_card": model_card(table)}

    @app.get("/datasets/{dataset_id}")
    def get_dataset(dataset_id: str):
        return {"dataset_id": dataset_id, "model_card": model_card(get_table(dataset_id))}

    @app.post("/sessions")
    def create_session(body: SessionBody):
        get_table(body.dataset_id)
        return store.create_session(body.dataset_id)

    @app.get("/sessions/{session_id}")
    def get_session_state(session_id: str):
        doc = get_session(session_id)
        table = get_table(doc["dataset_id"])
        spec = VisSpec.from_doc(doc["current_spec"])
        return {
            **doc,
            "model_card": model_card(table),
            "compiled_current_spec": compile_spec(spec, table),
        }

    @app.post("/sessions/{session_id}/insights")
    def submit_insight(session_id: str, body: InsightBody):
        with store.lock(session_id):
            doc = get_session(session_id)
            table = get_table(doc["dataset_id"])
            try:
                result = structure_text(body.text, table, extractor, use_llm=body.use_llm)
            except NoParseError as exc:
                raise HTTPException(422, f"NoParse: {exc}")
            except (UnparseableClassification, SchemaViolation) as exc:
                raise HTTPException(422, f"{type(exc).__name__}: {exc}")
            except ProviderUnavailable as exc:
                raise HTTPException(502, f"ProviderUnavailable: {exc}")
            index = len(doc["insights"])
            doc["insights"].append(
                {
                    "text": body.text,
                    "source": result.source,
                    "document": result.document,
                    "slots": _slot_docs(result.slots),
                    "rendered": result.rendered.to_doc(),
                    "trace_id": f"{session_id}:{index}",
                    "trace": result.trace.to_doc() if result.trace else None,
                    "verdict": None,
                    "mapping": None,
                }
            )
            store.save_session(doc)
            return entry_response(doc, index)

    @app.post("/sessions/{session_id}/insights/{index}")
    def complete_insight(session_id: str, index: int, body: CompletionBody):
        """Slot completion: the client sends the full updated document; the
        server re-validates (the UI never mutates insights client-side)."""
        with store.lock(session_id):
            doc = get_session(session_id)
            if not 0 <= index < len(doc["insights"]):
                raise HTTPException(404, f"no insight {index}")
            table = get_table(doc["dataset_id"])
            bound, bind_slots = bind_document(body.document, table)
            try:
                result = validate(bound)
            except UnknownInsightType as exc:
                raise HTTPException(422, f"UnknownInsightType: {exc}")
            slots = list(result.slots)
            known = {s.path for s in slots}
            slots.extend(s for s in bind_slots if s.path not in known)
            entry = doc["insights"][index]
            entry["document"] = bound
            entry["slots"] = _slot_docs(slots)
            entry["rendered"] = render(bound, slots, table).to_doc()
            entry["verdict"] = None
            entry["mapping"] = None
            store.save_session(doc)
            return entry_response(doc, index)

    @app.post("/sessions/{session_id}/insights/{index}/check")
    def check_insight(session_id: str, index: int):
        with store.lock(session_id):
            doc = get_session(session_id)
            if not 0 <= index < len(doc["insights"]):
                raise HTTPException(404, f"no insight {index}")
            entry = doc["insights"][index]
            if entry["slots"]:
                raise HTTPException(
                    409, {"error": "OpenSlots", "slots": entry["slots"]}
                )
            table = get_table(doc["dataset_id"])
            result = validate(entry["document"])
            if not result.ok:
                raise HTTPException(
                    409, {"error": "OpenSlots", "slots": _slot_docs(result.slots)}
                )
            insight = result.insight
            verdict = evaluate(insight, table)
            mapping = map_insight(insight, VisSpec.from_doc(doc["current_spec"]))
            entry["verdict"] = verdict.to_doc()
            entry["mapping"] = mapping.to_doc()
            store.save_session(doc)
            compiled = {
                "annotated": compile_spec(mapping.annotated_spec, table),
                "recommended": compile_spec(mapping.recommended_spec, table)
                if mapping.recommended_spec
                else None,
            }
            return {
                "verdict": entry["verdict"],
                "mapping": entry["mapping"],
                "compiled": compiled,
            }

    return app


def app_from_env() -> FastAPI:
    """App factory driven by environment variables (uvicorn --factory)."""
    data_dir = os.environ.get("XLINT_DATA_DIR", "./xlint-data")
    mode = os.environ.get("XLINT_LLM_MODE")
    config = None
    if mode:
        config = ExtractorConfig(
            provider_endpoint=os.environ.get("XLINT_LLM_ENDPOINT", "https://api.openai.com/v1"),
            model_name=os.environ.get("XLINT_LLM_MODEL", "gpt-4o"),
            api_key_env=os.environ.get("XLINT_LLM_KEY_ENV", "OPENAI_API_KEY"),
            mode=mode,
            fixture_dir=os.environ.get("XLINT_FIXTURE_DIR"),
        )
    return create_app(
        data_dir,
        extractor_config=config,
        cors_origins=os.environ.get("XLINT_CORS_ORIGINS", "*"),
    )


# re-exported for consumers that persist mappings
__all__ = [
    "DEFAULT_MAX_UPLOAD",
    "MappingResult",
    "SessionStore",
    "app_from_env",
    "create_app",
    "default_heatmap_spec",
    "model_card",
]
