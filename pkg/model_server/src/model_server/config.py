from __future__ import annotations

from dataclasses import dataclass

DEFAULT_NLI_MODEL = "cross-encoder/nli-deberta-v3-large"
DEFAULT_EMBED_MODEL = "BAAI/bge-m3"


@dataclass
class ServerConfig:
    """Server settings; defaults target the reference model pair."""

    nli_model_id: str = DEFAULT_NLI_MODEL
    embed_model_id: str = DEFAULT_EMBED_MODEL
    host: str = "127.0.0.1"
    port: int = 8808
    max_input_chars: int = 8000
    backend: str = "transformers"  # transformers | lexical
    generate_mode: str = "proxy"  # proxy | echo
    upstream_url: str | None = None

    def __post_init__(self) -> None:
        if self.max_input_chars < 1:
            raise ValueError("max_input_chars must be >= 1")
        if self.backend not in ("transformers", "lexical"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.generate_mode not in ("proxy", "echo"):
            raise ValueError(f"unknown generate mode {self.generate_mode!r}")
