"""FastAPI application implementing the gateway wire contract."""

from __future__ import annotations

import hashlib

import httpx
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from model_server.backends import build_backends
from model_server.config import ServerConfig


class NliRequest(BaseModel):
    premise: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)


class EmbedRequest(BaseModel):
    text: str = Field(min_length=1)


class GenerateRequest(BaseModel):
    prompt: str = Field(min_length=1)
    params: dict = Field(default_factory=dict)


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    nli_backend, embed_backend = build_backends(config)

    app = FastAPI(title="falsirag-model-server")
    app.state.config = config

    def check_length(*texts: str) -> None:
        for text in texts:
            if len(text) > config.max_input_chars:
                raise HTTPException(
                    status_code=413,
                    detail=(
                        f"input of {len(text)} characters exceeds the limit of "
                        f"{config.max_input_chars}"
                    ),
                )

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok",
            "backend": config.backend,
            "nli_model": config.nli_model_id,
            "embed_model": config.embed_model_id,
            "generate_mode": config.generate_mode,
        }

    @app.post("/nli")
    def nli(request: NliRequest) -> dict:
        check_length(request.premise, request.hypothesis)
        return nli_backend.score(request.premise, request.hypothesis)

    @app.post("/embed")
    def embed(request: EmbedRequest) -> dict:
        check_length(request.text)
        return {"vector": embed_backend.embed(request.text)}

    @app.post("/generate")
    def generate(request: GenerateRequest) -> dict:
        check_length(request.prompt)
        if config.generate_mode == "echo":
            # Deterministic test double: no model is hosted here.
            digest = hashlib.sha256(request.prompt.encode("utf-8")).hexdigest()[:16]
            return {"text": f"echo:{digest}"}
        if not config.upstream_url:
            raise HTTPException(
                status_code=503,
                detail="no generator upstream configured; this server only proxies /generate",
            )
        response = httpx.post(
            f"{config.upstream_url.rstrip('/')}/generate",
            json={"prompt": request.prompt, "params": request.params},
            timeout=120.0,
        )
        if response.status_code != 200:
            raise HTTPException(status_code=502, detail=f"upstream returned {response.status_code}")
        return {"text": response.json()["text"]}

    return app
