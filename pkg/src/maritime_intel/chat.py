"""Chat-completion clients: a live HTTP transport and deterministic mocks.

The wire format is the de-facto chat-completions shape: the request body is
{model, messages, temperature} and the answer is read from the first
choice's message content. ChatRequest additionally carries a local-only
`metadata` mapping that transports never serialize; mock clients read it to
produce deterministic answers (e.g. echoing reference narratives) without
any network dependency.
"""
from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Protocol

import requests


class TransportError(RuntimeError):
    """The completion endpoint could not be reached or answered garbage."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass
class ChatRequest:
    model: str
    messages: list[ChatMessage]
    temperature: float = 0.7
    metadata: dict = field(default_factory=dict)  # never sent on the wire

    def wire_body(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> str:
        """Return the assistant's reply text for one request."""
        ...


class HttpChatClient:
    """POSTs to any chat-completions-shaped endpoint with retries."""

    def __init__(self, endpoint: str, api_key_env: str = "QA_API_KEY",
                 timeout_s: float = 60.0, max_retries: int = 2,
                 retry_backoff_s: float = 1.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.retry_backoff_s = retry_backoff_s

    def complete(self, request: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = requests.post(self.endpoint, json=request.wire_body(),
                                     headers=headers, timeout=self.timeout_s)
                resp.raise_for_status()
                payload = resp.json()
                return payload["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.retry_backoff_s * (attempt + 1))
        raise TransportError(f"chat endpoint failed after {self.max_retries + 1} "
                             f"attempts: {last_error}") from last_error


_PERTURB_NUMBER_RE = re.compile(
    r"(?<![\w.,])[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?"
)


def perturb_numbers(text: str, factor: float) -> str:
    """Scale every number in the text by (1 + factor); zeros become `factor`
    so they move too."""
    def _sub(m: re.Match) -> str:
        value = float(m.group(0).replace(",", ""))
        shifted = factor if value == 0 else value * (1.0 + factor)
        return f"{shifted:.4f}".rstrip("0").rstrip(".")

    return _PERTURB_NUMBER_RE.sub(_sub, text)


class StaticChatClient:
    """Always answers with the same canned text (service demos and tests)."""

    def __init__(self, text: str):
        self.text = text
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        return self.text


class MockChatClient:
    """Deterministic stand-in for a teacher model.

    Modes:
      echo     answer every question with its reference narrative
      perturb  echo with every number scaled by (1 + perturbation)
      fail     raise TransportError on every call
    Reference narratives arrive via request.metadata["reference_answers"];
    metadata["single_slot"], when present, selects one question.
    """

    def __init__(self, mode: str = "echo", perturbation: float = 0.15):
        if mode not in ("echo", "perturb", "fail"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.perturbation = perturbation
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        if self.mode == "fail":
            raise TransportError("mock transport configured to fail")
        references: list[str] = request.metadata.get("reference_answers", [])
        transform = (lambda s: s) if self.mode == "echo" else (
            lambda s: perturb_numbers(s, self.perturbation))
        single = request.metadata.get("single_slot")
        if single is not None:
            return transform(references[single])
        return json.dumps({str(i + 1): transform(ref) for i, ref in enumerate(references)})
