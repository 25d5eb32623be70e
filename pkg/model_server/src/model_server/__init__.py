"""Local inference service speaking the retrieval pipeline's wire contract.

Routes: POST /nli, POST /embed, POST /generate (passthrough proxy), and
GET /healthz. Two model backends: "transformers" loads a real NLI
cross-encoder and embedding model once at startup; "lexical" is a
deterministic dependency-free stand-in for offline testing.
"""

__version__ = "0.1.0"
