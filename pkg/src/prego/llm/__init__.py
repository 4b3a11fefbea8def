from .client import (
    ChatCompletionsAdapter,
    ClientConfig,
    CompletionClient,
    LLMClientError,
    LLMError,
    LLMProtocolError,
)
from .latency import LatencyLog, LatencySample
from .stub import StubBehavior, StubServer, text_key

__all__ = [
    "ChatCompletionsAdapter",
    "ClientConfig",
    "CompletionClient",
    "LLMClientError",
    "LLMError",
    "LLMProtocolError",
    "LatencyLog",
    "LatencySample",
    "StubBehavior",
    "StubServer",
    "text_key",
]
