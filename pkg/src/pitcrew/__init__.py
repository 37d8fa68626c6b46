"""Self-hostable copilot engine for on-call engineering workflows.

Subsystems:

- ``provider``: pluggable completion/embedding providers (scripted + HTTP)
- ``indexstore``: embedded multi-field document index (BM25, vector, RRF)
- ``querygen``: natural-language to structured search-query compilation
- ``retrieval``: incident / guide / code retrieval skills with re-ranking
- ``pipeline``: offline corpus preprocessing and index building
- ``orchestrator``: per-round agent planning and skill execution
- ``gateway``: stateless HTTP chat API with SSE streaming and telemetry
- ``evalkit``: offline/online evaluation framework
- ``cli``: operator entry point
"""

__version__ = "0.1.0"
