"""Minimal stdio client for the reward engine's serve mode."""

from .session import (
    BatchResult,
    BridgeError,
    BridgeSession,
    BridgeTimeout,
    MalformedResponse,
    SessionBusy,
)

__all__ = [
    "BatchResult",
    "BridgeError",
    "BridgeSession",
    "BridgeTimeout",
    "MalformedResponse",
    "SessionBusy",
]
