"""Thin, retry-aware client for the reward service's /v1 HTTP API.

No computation happens client-side; the service is the single source of
truth. Requests retry on transport failures and 5xx responses only (4xx
means the request itself is wrong and will not improve on retry). Safe for
concurrent use from multiple training workers: the underlying session pools
connections and the client keeps no other mutable state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import requests

DEFAULT_BACKOFF = (0.2, 0.5, 1.0)


class TransportError(Exception):
    """Raised when the service stays unreachable after the configured retries."""

    def __init__(self, message: str, last_status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.last_status = last_status
        self.attempts = attempts


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    timeout: float = 60.0
    max_retries: int = 3
    backoff: tuple[float, ...] = DEFAULT_BACKOFF

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        object.__setattr__(self, "backoff", tuple(self.backoff))


class RewardServiceClient:
    def __init__(self, config: ClientConfig, session: requests.Session | None = None):
        self.config = config
        self._base = config.base_url.rstrip("/")
        self._session = session or requests.Session()

    def close(self):
        self._session.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _delay(self, attempt: int) -> float:
        if not self.config.backoff:
            return 0.0
        return self.config.backoff[min(attempt, len(self.config.backoff) - 1)]

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = f"{self._base}{path}"
        attempts = self.config.max_retries + 1
        last_status = None
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                resp = self._session.request(method, url, json=payload,
                                             timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = exc
            else:
                last_status = resp.status_code
                if resp.status_code < 400:
                    return resp.json()
                if resp.status_code < 500:
                    # client errors are final: retrying cannot fix the request
                    raise TransportError(
                        f"{method} {path} rejected with {resp.status_code}: {resp.text}",
                        last_status=resp.status_code, attempts=attempt + 1)
                last_error = None
            if attempt + 1 < attempts:
                time.sleep(self._delay(attempt))
        detail = f": {last_error}" if last_error else ""
        raise TransportError(
            f"{method} {path} failed after {attempts} attempt(s){detail}",
            last_status=last_status, attempts=attempts)

    def score_batch(self, items: list[dict], config: dict | None = None) -> list[dict]:
        """Score completions; per-item errors come back as values in order.

        Items are ``{"sample_id", "image_id", "text"}`` dicts. An empty batch
        returns immediately without touching the network.
        """
        if not items:
            return []
        payload: dict = {"items": items}
        if config is not None:
            payload["config"] = config
        body = self._request("POST", "/v1/score", payload)
        if "error" in body:
            raise TransportError(f"score batch rejected: {body['error']}",
                                 last_status=None, attempts=1)
        return body["items"]

    def compute_advantages(self, groups: list[dict], epsilon: float | None = None) -> list[dict]:
        """Group-normalized advantages and objectives; per-group errors are values."""
        if not groups:
            return []
        payload: dict = {"groups": groups}
        if epsilon is not None:
            payload["epsilon"] = epsilon
        body = self._request("POST", "/v1/advantages", payload)
        if "error" in body:
            raise TransportError(f"advantage batch rejected: {body['error']}",
                                 last_status=None, attempts=1)
        return body["results"]

    def health(self) -> dict:
        return self._request("GET", "/v1/health")
