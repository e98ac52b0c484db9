"""Stateless HTTP reward service for external RL training loops.

Grading is pure string work, so identical requests always produce identical
bytes.  Records can be pre-registered in bulk (content-addressed ids) so
per-rollout requests carry only (record_id, response_text) instead of
re-sending ~200-word captions.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Optional, Union

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, model_validator

from . import __version__
from .core import (
    Caption,
    CorruptionRecord,
    HallucinationType,
    NORMALIZATION_PROFILE,
    Span,
    VicritError,
    diff_spans,
    locate_span,
)
from .injector import validate_record
from .verifier import reward

__all__ = ["ApiError", "RewardRequest", "ServiceConfig", "create_app", "main"]

PORT_ENV = "VICRIT_PORT"
TOKEN_CAP_ENV = "VICRIT_TOKEN_CAP"
BATCH_CAP_ENV = "VICRIT_BATCH_CAP"
AUTH_TOKEN_ENV = "VICRIT_AUTH_TOKEN"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8071
    token_cap: int = 2048
    batch_cap: int = 256
    auth_token: Optional[str] = None
    normalization_profile: Mapping[str, object] = field(
        default_factory=lambda: dict(NORMALIZATION_PROFILE)
    )

    def config_hash(self) -> str:
        """Hash of every grading-relevant setting; auth is excluded since it
        cannot change scores."""
        canonical = json.dumps(
            {
                "normalization": dict(self.normalization_profile),
                "token_cap": self.token_cap,
                "batch_cap": self.batch_cap,
            },
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def load(cls, path: Optional[str | Path] = None) -> "ServiceConfig":
        """Config file (TOML) plus environment overrides."""
        values: dict = {}
        if path is not None:
            try:
                import tomllib  # type: ignore[import-not-found]
            except ModuleNotFoundError:
                import tomli as tomllib
            values = tomllib.loads(Path(path).read_text("utf-8"))
        if os.environ.get(PORT_ENV):
            values["port"] = int(os.environ[PORT_ENV])
        if os.environ.get(TOKEN_CAP_ENV):
            values["token_cap"] = int(os.environ[TOKEN_CAP_ENV])
        if os.environ.get(BATCH_CAP_ENV):
            values["batch_cap"] = int(os.environ[BATCH_CAP_ENV])
        if os.environ.get(AUTH_TOKEN_ENV):
            values["auth_token"] = os.environ[AUTH_TOKEN_ENV]
        return cls(**values)


class ApiError(Exception):
    def __init__(self, status: int, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.detail = detail

    def body(self) -> dict:
        out = {"error": {"status": self.status, "message": self.message}}
        if self.detail is not None:
            out["error"]["detail"] = self.detail
        return out


class RewardRequest(BaseModel):
    record_id: Optional[str] = None
    original_caption: Optional[str] = None
    corrupted_caption: Optional[str] = None
    hallucinated_span: Optional[Union[str, dict]] = None
    response_text: str
    mode: Literal["strict", "relaxed"] = "relaxed"

    @model_validator(mode="after")
    def _check_identifying_fields(self):
        if self.record_id is None and (self.original_caption is None or self.corrupted_caption is None):
            raise ValueError("provide either record_id or both caption fields")
        return self


class _Registry:
    """Content-addressed record store; writes swap a fresh dict so readers
    always see a consistent snapshot."""

    def __init__(self):
        self._records: dict[str, CorruptionRecord] = {}
        self._lock = threading.Lock()

    @staticmethod
    def record_id(record: CorruptionRecord) -> str:
        canonical = json.dumps(record.to_json(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def register(self, records: list[CorruptionRecord]) -> list[str]:
        ids = [self.record_id(r) for r in records]
        with self._lock:
            snapshot = dict(self._records)
            snapshot.update(zip(ids, records))
            self._records = snapshot
        return ids

    def get(self, record_id: str) -> Optional[CorruptionRecord]:
        return self._records.get(record_id)


def _resolve_record(req: RewardRequest, registry: _Registry, token_cap: int) -> CorruptionRecord:
    if req.record_id is not None:
        record = registry.get(req.record_id)
        if record is None:
            raise ApiError(404, f"unknown record_id {req.record_id!r}")
        return record

    original = Caption(req.original_caption)
    corrupted = Caption(req.corrupted_caption)
    if len(corrupted.tokens) > token_cap or len(original.tokens) > token_cap:
        raise ApiError(413, f"caption exceeds the configured token cap ({token_cap})")
    try:
        diff_o, diff_h = diff_spans(original, corrupted)
    except VicritError as exc:
        raise ApiError(422, f"caption pair is not a single-span corruption: {exc}")

    if req.hallucinated_span is None:
        o_span, h_span = diff_o, diff_h
    else:
        if isinstance(req.hallucinated_span, dict):
            try:
                h_span = Span.from_json(req.hallucinated_span)
            except (KeyError, ValueError) as exc:
                raise ApiError(422, f"bad hallucinated_span object: {exc}")
        else:
            spans = locate_span(corrupted, req.hallucinated_span)
            if len(spans) != 1:
                raise ApiError(
                    422, f"hallucinated_span occurs {len(spans)} times in the corrupted caption"
                )
            h_span = spans[0]
        o_span = diff_o

    record = CorruptionRecord(
        image_ref="",
        original=original,
        corrupted=corrupted,
        original_span=o_span,
        hallucinated_span=h_span,
        h_type=HallucinationType.OBJECT,  # label only; grading ignores it
    )
    violations = validate_record(record)
    if violations:
        raise ApiError(422, "record fails validation", detail=violations)
    return record


def _score(req: RewardRequest, registry: _Registry, token_cap: int) -> dict:
    record = _resolve_record(req, registry, token_cap)
    return reward(req.response_text, record, mode=req.mode).to_json()


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()
    registry = _Registry()
    app = FastAPI(title="vicrit reward service", version=__version__)
    app.state.config = config
    app.state.registry = registry

    def check_auth(request: Request) -> None:
        if config.auth_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.auth_token}":
            raise ApiError(401, "missing or invalid bearer token")

    @app.exception_handler(ApiError)
    async def on_api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_request: Request, exc: RequestValidationError):
        # schema violations are client errors, not unprocessable entities
        detail = [
            {"loc": [str(p) for p in e.get("loc", ())], "msg": e.get("msg"), "type": e.get("type")}
            for e in exc.errors()
        ]
        return JSONResponse(
            status_code=400,
            content={"error": {"status": 400, "message": "schema violation", "detail": detail}},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__, "config_hash": config.config_hash()}

    # sync handlers: grading is pure CPU work, so it runs in the thread pool
    # instead of serializing on the event loop
    @app.post("/v1/reward")
    def score_one(req: RewardRequest, _=Depends(check_auth)):
        return _score(req, registry, config.token_cap)

    @app.post("/v1/reward/batch")
    def score_batch(reqs: list[RewardRequest], _=Depends(check_auth)):
        if len(reqs) > config.batch_cap:
            raise ApiError(413, f"batch of {len(reqs)} exceeds the cap ({config.batch_cap})")
        out = []
        for req in reqs:
            try:
                out.append(_score(req, registry, config.token_cap))
            except ApiError as exc:
                out.append(exc.body())
        return out

    @app.post("/v1/records")
    async def register_records(request: Request, _=Depends(check_auth)):
        body = (await request.body()).decode("utf-8")
        records = []
        errors = []
        for i, line in enumerate(body.splitlines()):
            if not line.strip():
                continue
            try:
                record = CorruptionRecord.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                errors.append({"index": i, "violations": [f"ParseError: {exc}"]})
                continue
            if len(record.corrupted.tokens) > config.token_cap:
                errors.append({"index": i, "violations": ["CaptionTooLong: exceeds token cap"]})
                continue
            violations = validate_record(record)
            if violations:
                errors.append({"index": i, "violations": violations})
            else:
                records.append(record)
        if errors:
            raise ApiError(422, "some records fail validation", detail=errors)
        return {"ids": registry.register(records)}

    return app


def main(config: Optional[ServiceConfig] = None) -> None:
    """Run the service under uvicorn."""
    import uvicorn

    config = config or ServiceConfig.load()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")


if __name__ == "__main__":
    main()
