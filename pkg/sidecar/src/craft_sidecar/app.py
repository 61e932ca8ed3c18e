"""FastAPI service: POST /embed, POST /similarity, GET /healthz.

Responses are pure functions of the request within one process lifetime;
the handlers hold the encoder and word-vector table read-only.
"""

from __future__ import annotations

from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoders import TEMPLATE_IDS, canonical_key
from .wordvec import FLOOR, WordVecTable


class EmbedRequest(BaseModel):
    kind: Literal["text", "image"]
    payload: str
    template_id: str = "photo_of"


class EmbedResponse(BaseModel):
    dim: int
    values: list[float]
    key: str


class SimilarityRequest(BaseModel):
    verb: str
    terms: list[str]


class SimilarityResponse(BaseModel):
    scores: list[float]
    missing: list[bool]
    floor: float = FLOOR


class HealthResponse(BaseModel):
    status: str
    dim: int
    model_id: str
    template_ids: list[str]


def create_app(encoder=None, wordvec: WordVecTable | None = None) -> FastAPI:
    app = FastAPI(title="craft-embed-sidecar")
    app.state.encoder = encoder
    app.state.wordvec = wordvec

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        # the wire contract reserves 422 for unknown templates
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        encoder = app.state.encoder
        return HealthResponse(
            status="ok" if encoder is not None else "degraded",
            dim=encoder.dim if encoder is not None else 0,
            model_id=encoder.model_id if encoder is not None else "none",
            template_ids=list(TEMPLATE_IDS),
        )

    @app.post("/embed", response_model=EmbedResponse)
    def embed(req: EmbedRequest):
        if req.template_id not in TEMPLATE_IDS:
            return JSONResponse(status_code=422,
                                content={"detail": f"unknown template {req.template_id!r}"})
        encoder = app.state.encoder
        if encoder is None:
            return JSONResponse(status_code=503, content={"detail": "model not loaded"})
        vec = encoder.encode(req.kind, req.payload)
        return EmbedResponse(dim=encoder.dim, values=vec.tolist(),
                             key=canonical_key(req.kind, req.payload))

    @app.post("/similarity", response_model=SimilarityResponse)
    def similarity(req: SimilarityRequest):
        table = app.state.wordvec
        if table is None:
            return JSONResponse(status_code=503,
                                content={"detail": "word vectors not loaded"})
        scores, missing = [], []
        for term in req.terms:
            score, miss = table.similarity(req.verb, term)
            scores.append(score)
            missing.append(miss)
        return SimilarityResponse(scores=scores, missing=missing)

    return app
