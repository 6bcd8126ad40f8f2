"""HTTP client SDK for the scene-graph reward service."""

from .client import ClientConfig, RewardServiceClient, TransportError

__version__ = "0.1.0"

__all__ = ["ClientConfig", "RewardServiceClient", "TransportError"]
