"""Minimal chat-completions HTTP client for model endpoints."""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import requests

from .core import VicritError

__all__ = ["ChatClient", "ChatClientConfig", "EndpointError"]

ENDPOINT_ENV = "VICRIT_ENDPOINT"
API_KEY_ENV = "VICRIT_API_KEY"


class EndpointError(VicritError):
    """The endpoint failed after all retries."""


@dataclass(frozen=True)
class ChatClientConfig:
    base_url: str
    model: str
    api_key: Optional[str] = None
    timeout: float = 120.0
    max_retries: int = 2
    backoff: float = 1.0
    temperature: float = 0.0
    max_tokens: Optional[int] = 1024
    image_mode: str = "url"  # url | base64 | none

    def __post_init__(self):
        if self.image_mode not in ("url", "base64", "none"):
            raise ValueError(f"unknown image_mode {self.image_mode!r}")


class ChatClient:
    """Synchronous client with retry/backoff; one instance per endpoint."""

    def __init__(self, config: ChatClientConfig, session: Optional[requests.Session] = None):
        self.config = config
        self._session = session or requests.Session()

    @classmethod
    def from_env(cls, model: str, **overrides) -> "ChatClient":
        base_url = os.environ.get(ENDPOINT_ENV)
        if not base_url:
            raise EndpointError(f"{ENDPOINT_ENV} is not set")
        return cls(
            ChatClientConfig(
                base_url=base_url,
                model=model,
                api_key=os.environ.get(API_KEY_ENV),
                **overrides,
            )
        )

    def _image_part(self, image_ref: str) -> dict:
        if self.config.image_mode == "base64":
            with open(image_ref, "rb") as fh:
                data = base64.b64encode(fh.read()).decode("ascii")
            return {"type": "image_url", "image_url": {"url": f"data:image/jpeg;base64,{data}"}}
        return {"type": "image_url", "image_url": {"url": image_ref}}

    def complete(self, messages: Sequence[dict], image_ref: Optional[str] = None) -> str:
        """Send one chat request and return the first choice's text."""
        messages = [dict(m) for m in messages]
        if image_ref and self.config.image_mode != "none" and messages:
            last = messages[-1]
            last["content"] = [
                self._image_part(image_ref),
                {"type": "text", "text": last["content"]},
            ]
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        if self.config.max_tokens is not None:
            payload["max_tokens"] = self.config.max_tokens
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"

        url = self.config.base_url.rstrip("/") + "/chat/completions"
        last_error: Optional[str] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self._session.post(url, json=payload, headers=headers, timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if resp.status_code == 200:
                    body = resp.json()
                    try:
                        return body["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError) as exc:
                        raise EndpointError(f"malformed completion payload: {exc}") from exc
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code < 500 and resp.status_code != 429:
                    break  # client error: retrying will not help
            if attempt < self.config.max_retries:
                time.sleep(self.config.backoff * (2**attempt))
        raise EndpointError(f"chat completion failed after {self.config.max_retries + 1} attempts: {last_error}")
