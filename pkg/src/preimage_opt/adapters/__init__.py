"""Optional HTTP adapters that bind the mapper, embedder and evaluator
contracts to external LLM services."""

from .llm import (EmptyValidationSetError, Example, LLMEmbedder, LLMMapper, LLMObjective,
                  WidthMismatchError, blackbox_evaluate, exact_match, f1_score,
                  whitebox_embed, whitebox_generate)
from .service import (AuthError, CacheMissError, ClientRequestError, RequestCache,
                      ServerError, ServiceClient, ServiceConfig, ServiceError, TransportError)

__all__ = [
    "AuthError", "CacheMissError", "ClientRequestError", "EmptyValidationSetError", "Example",
    "LLMEmbedder", "LLMMapper", "LLMObjective", "RequestCache", "ServerError", "ServiceClient",
    "ServiceConfig", "ServiceError", "TransportError", "WidthMismatchError",
    "blackbox_evaluate", "exact_match", "f1_score", "whitebox_embed", "whitebox_generate",
]
