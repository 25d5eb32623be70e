from falsirag.gateway.core import (
    API_KEY_ENV,
    Backend,
    BackendUnavailable,
    Gateway,
    GatewayError,
    HttpTransport,
    LiveBackend,
    ModelCall,
    NliScore,
    RecordBackend,
    ReplayBackend,
    ReplayMiss,
    StoreConflict,
    StubBackend,
    TemplateSet,
    load_replay_store,
    render_passage_block,
    require_api_key,
)
from falsirag.gateway.stubs import NEGATION_MARKERS, RandomizedStubModels, StubModels, hash_embedding

__all__ = [
    "API_KEY_ENV",
    "Backend",
    "BackendUnavailable",
    "Gateway",
    "GatewayError",
    "HttpTransport",
    "LiveBackend",
    "ModelCall",
    "NEGATION_MARKERS",
    "NliScore",
    "RandomizedStubModels",
    "RecordBackend",
    "ReplayBackend",
    "ReplayMiss",
    "StoreConflict",
    "StubBackend",
    "StubModels",
    "TemplateSet",
    "hash_embedding",
    "load_replay_store",
    "render_passage_block",
    "require_api_key",
]
