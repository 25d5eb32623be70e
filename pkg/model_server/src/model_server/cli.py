from __future__ import annotations

import argparse

import uvicorn

from model_server.app import create_app
from model_server.config import DEFAULT_EMBED_MODEL, DEFAULT_NLI_MODEL, ServerConfig


def build_config(argv: list[str] | None = None) -> ServerConfig:
    parser = argparse.ArgumentParser(prog="falsirag-model-server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8808)
    parser.add_argument("--backend", choices=("transformers", "lexical"), default="transformers")
    parser.add_argument("--nli-model", default=DEFAULT_NLI_MODEL)
    parser.add_argument("--embed-model", default=DEFAULT_EMBED_MODEL)
    parser.add_argument("--max-input-chars", type=int, default=8000)
    parser.add_argument("--generate-mode", choices=("proxy", "echo"), default="proxy")
    parser.add_argument("--upstream-url")
    args = parser.parse_args(argv)
    return ServerConfig(
        nli_model_id=args.nli_model,
        embed_model_id=args.embed_model,
        host=args.host,
        port=args.port,
        max_input_chars=args.max_input_chars,
        backend=args.backend,
        generate_mode=args.generate_mode,
        upstream_url=args.upstream_url,
    )


def main(argv: list[str] | None = None) -> int:
    config = build_config(argv)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
