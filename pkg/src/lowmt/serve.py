"""HTTP translation service over one frozen checkpoint.

The model is loaded once and never changes for the process lifetime; greedy
responses are a pure function of (checkpoint fingerprint, request).  Decoding
runs under a bounded concurrency gate — requests beyond the waiting-room
limit are rejected with a `busy` error rather than queued without bound.

Error bodies always take the shape ``{"error": {"code": ..., "message": ...}}``
with codes: invalid_request, empty_text, text_too_long, unknown_language,
bad_mode, busy, decode_failure.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .checkpoint import Checkpoint, fingerprint_checkpoint, load_checkpoint
from .decoding import beam_translate, factor_index, greedy_translate_batch
from .errors import ConfigError
from .subword import SubwordModel

MODES = ("greedy", "beam")

ERROR_CODES = {
    "invalid_request": 422,
    "empty_text": 400,
    "text_too_long": 413,
    "unknown_language": 400,
    "bad_mode": 400,
    "busy": 503,
    "decode_failure": 500,
}


@dataclass(frozen=True)
class ServeConfig:
    max_chars: int = 2000
    max_concurrent: int = 2   # simultaneous decodes
    max_inflight: int = 64    # accepted requests (decoding + waiting for a slot)
    beam_size: int = 5
    cors_origins: tuple[str, ...] = ("*",)
    request_log: str | None = None  # opt-in append-only JSONL of request/response

    def __post_init__(self):
        if self.max_chars < 1:
            raise ConfigError("max_chars must be positive")
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be positive")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be positive")


class ServiceError(Exception):
    def __init__(self, code: str, message: str):
        if code not in ERROR_CODES:
            raise ConfigError(f"undeclared error code {code!r}")
        super().__init__(message)
        self.code = code
        self.message = message


class TranslateRequest(BaseModel):
    text: str
    tgt_lang: str
    src_lang: str | None = None  # metadata only; decoding needs just the target
    mode: str = "greedy"


_SEGMENTS = re.compile(r"[^.!?\n]*[.!?]+|[^.!?\n]+|\n", re.S)


def split_sentences(text: str) -> list[str]:
    """Cut on sentence-final punctuation and newlines, keeping every
    character: ``"".join(split_sentences(t)) == t``."""
    return _SEGMENTS.findall(text)


def translate_long(translate_batch, text: str) -> tuple[str, bool]:
    """Translate each sentence-like segment independently and stitch the
    outputs back together with the original separators.  Whitespace-only
    segments pass through untranslated; returns (stitched text, any-truncated).
    """
    pieces = split_sentences(text)
    jobs = [i for i, piece in enumerate(pieces) if piece.strip()]
    results = translate_batch([pieces[i].strip() for i in jobs])
    out = list(pieces)
    truncated = False
    for i, result in zip(jobs, results):
        lead = pieces[i][: len(pieces[i]) - len(pieces[i].lstrip())]
        trail = pieces[i][len(pieces[i].rstrip()):]
        out[i] = lead + result.text + trail
        truncated |= result.truncated
    return "".join(out), truncated


class TranslationService:
    """The shared immutable state behind the HTTP endpoints."""

    def __init__(self, checkpoint: Checkpoint, subword: SubwordModel,
                 languages: Sequence[str], config: ServeConfig = ServeConfig()):
        self.config = config
        self.languages = sorted(languages)
        if len(self.languages) != len(set(self.languages)):
            raise ConfigError("duplicate language codes")
        if checkpoint.config.factor_vocab < len(self.languages):
            raise ConfigError(
                f"model accepts {checkpoint.config.factor_vocab} factors but "
                f"{len(self.languages)} languages were declared"
            )
        self.model = checkpoint.restore_model()
        self.model.eval()
        self.subword = subword
        self.fingerprint = fingerprint_checkpoint(checkpoint)
        self.started = time.monotonic()
        self._gate = threading.Semaphore(config.max_concurrent)
        self._inflight = 0
        self._lock = threading.Lock()
        self._log_lock = threading.Lock()

    def uptime(self) -> float:
        return time.monotonic() - self.started

    def translate(self, req: TranslateRequest) -> dict:
        text = req.text
        if not text.strip():
            raise ServiceError("empty_text", "text is empty after trimming")
        if len(text) > self.config.max_chars:
            raise ServiceError(
                "text_too_long",
                f"text has {len(text)} characters; the limit is {self.config.max_chars}",
            )
        if req.tgt_lang not in self.languages:
            raise ServiceError(
                "unknown_language",
                f"unknown target language {req.tgt_lang!r}; "
                f"known: {', '.join(self.languages)}",
            )
        if req.mode not in MODES:
            raise ServiceError("bad_mode", f"mode must be one of: {', '.join(MODES)}")
        factor = factor_index(self.languages, req.tgt_lang)

        def translate_batch(segments):
            if req.mode == "greedy":
                return greedy_translate_batch(self.model, self.subword, segments, factor)
            return [beam_translate(self.model, self.subword, s, factor,
                                   beam_size=self.config.beam_size) for s in segments]

        with self._lock:
            if self._inflight >= self.config.max_inflight:
                raise ServiceError("busy", "too many requests in flight; retry shortly")
            self._inflight += 1
        try:
            with self._gate:
                start = time.monotonic()
                try:
                    translation, truncated = translate_long(translate_batch, text)
                except Exception as err:  # decoding is not supposed to throw
                    raise ServiceError("decode_failure", f"decoding failed: {err}") from err
                latency_ms = (time.monotonic() - start) * 1000.0
        finally:
            with self._lock:
                self._inflight -= 1
        response = {
            "translation": translation,
            "tgt_lang": req.tgt_lang,
            "src_lang": req.src_lang,
            "mode": req.mode,
            "fingerprint": self.fingerprint,
            "latency_ms": round(latency_ms, 3),
            "truncated": truncated,
        }
        if self.config.request_log:
            entry = {"time": time.time(), "request": req.model_dump(),
                     "response": response}
            with self._log_lock:
                with open(self.config.request_log, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return response


def _error_body(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def create_app(checkpoint: Checkpoint, subword: SubwordModel,
               languages: Sequence[str], config: ServeConfig = ServeConfig()) -> FastAPI:
    service = TranslationService(checkpoint, subword, languages, config)
    app = FastAPI(title="lowmt translation service")
    app.state.service = service
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def service_error(_: Request, err: ServiceError):
        return JSONResponse(status_code=ERROR_CODES[err.code],
                            content=_error_body(err.code, err.message))

    @app.exception_handler(RequestValidationError)
    async def validation_error(_: Request, err: RequestValidationError):
        return JSONResponse(status_code=ERROR_CODES["invalid_request"],
                            content=_error_body("invalid_request", str(err.errors())))

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "fingerprint": service.fingerprint,
            "uptime_s": round(service.uptime(), 3),
            "languages": service.languages,
        }

    @app.get("/languages")
    def get_languages():
        return {"languages": service.languages}

    @app.post("/translate")
    def translate(req: TranslateRequest):
        return service.translate(req)

    return app


def load_service_app(checkpoint_path: Path | str, subword_path: Path | str,
                     languages: Sequence[str],
                     config: ServeConfig = ServeConfig()) -> FastAPI:
    return create_app(load_checkpoint(checkpoint_path), SubwordModel.load(subword_path),
                      languages, config)
