"""LLM backends and an on-disk response cache.

Two backends share one call signature: a remote chat-completions client and
a rule-table mock used for tests and offline runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .domain import atomic_write_text, iter_jsonl
from .errors import BackendError, ConfigError

log = logging.getLogger(__name__)

SYSTEM_PROMPT = "You are a careful assistant that analyses customer product reviews."


class LlmBackend(Protocol):
    kind: str
    model: str

    def complete(self, system: str, user: str, *, review_id: str | None = None) -> str: ...


class RemoteBackend:
    """Chat-completions over HTTP at temperature 0."""

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key_env: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        if not endpoint:
            raise ConfigError("remote backend needs an endpoint")
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.temperature = 0
        self.session = session or requests.Session()

    def complete(self, system: str, user: str, *, review_id: str | None = None) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env and os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature,
        }
        try:
            resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except requests.RequestException as exc:
            raise BackendError(f"request to {self.endpoint} failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"unexpected response shape from {self.endpoint}: {exc}") from exc
        if not isinstance(content, str):
            raise BackendError("response message content is not a string")
        return content


@dataclass(frozen=True)
class MockRule:
    match: str
    response: str | None = None
    error: str | None = None


class MockBackend:
    """Canned responses chosen by review id, else by regex over the prompt.

    Rules are tried in file order: first every rule whose ``match`` equals the
    review id, then every rule whose ``match`` is a regex found in the user
    prompt. A rule with ``error`` set simulates a transport failure.
    """

    kind = "mock"

    def __init__(self, rules: list[MockRule], model: str = "mock"):
        self.rules = list(rules)
        self.model = model
        self.calls = 0
        self._patterns = [re.compile(r.match) for r in self.rules]

    @classmethod
    def from_file(cls, path: str | os.PathLike, model: str = "mock") -> MockBackend:
        rules = []
        for rec in iter_jsonl(path):
            if "match" not in rec or ("response" not in rec and "error" not in rec):
                raise ConfigError(f"mock rule needs 'match' and 'response' or 'error': {rec}")
            rules.append(MockRule(rec["match"], rec.get("response"), rec.get("error")))
        return cls(rules, model)

    def _find(self, user: str, review_id: str | None) -> MockRule | None:
        if review_id is not None:
            for rule in self.rules:
                if rule.match == review_id:
                    return rule
        for rule, pat in zip(self.rules, self._patterns):
            if pat.search(user):
                return rule
        return None

    def complete(self, system: str, user: str, *, review_id: str | None = None) -> str:
        self.calls += 1
        rule = self._find(user, review_id)
        if rule is None:
            raise BackendError(f"no mock rule matches review {review_id!r}")
        if rule.error is not None:
            raise BackendError(rule.error)
        return rule.response or ""


def cache_key(model: str, system: str, user: str) -> str:
    payload = json.dumps([model, system, user], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per (model, prompt) hash under ``directory``."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self.path_for(key)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            response = data["response"]
        except (FileNotFoundError, json.JSONDecodeError, KeyError, TypeError):
            self.misses += 1
            return None
        self.hits += 1
        return response

    def put(self, key: str, model: str, response: str) -> None:
        atomic_write_text(
            self.path_for(key),
            json.dumps({"model": model, "response": response}, ensure_ascii=False),
        )


class LlmClient:
    """Backend plus cache plus bounded retries for transport errors."""

    def __init__(
        self,
        backend: LlmBackend,
        cache: ResponseCache | None = None,
        *,
        retries: int = 3,
        backoff: float = 1.0,
        system_prompt: str = SYSTEM_PROMPT,
    ):
        if retries < 1:
            raise ConfigError("retries must be >= 1")
        self.backend = backend
        self.cache = cache
        self.retries = retries
        self.backoff = backoff
        self.system_prompt = system_prompt
        self.backend_calls = 0

    @property
    def model(self) -> str:
        return self.backend.model

    def complete(self, prompt: str, *, review_id: str | None = None) -> str:
        key = cache_key(self.backend.model, self.system_prompt, prompt)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        last: BackendError | None = None
        for attempt in range(self.retries):
            try:
                self.backend_calls += 1
                text = self.backend.complete(self.system_prompt, prompt, review_id=review_id)
                break
            except BackendError as exc:
                last = exc
                log.warning("backend call failed (attempt %d/%d): %s", attempt + 1, self.retries, exc)
                if attempt + 1 < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * 2**attempt)
        else:
            raise BackendError(f"backend failed after {self.retries} attempts: {last}")
        if self.cache is not None:
            self.cache.put(key, self.backend.model, text)
        return text
