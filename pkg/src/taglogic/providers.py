"""Pluggable providers for tag extraction and logic reasoning.

Three implementations share one duck-typed surface:

* MockProvider — a pure function of (seed, input); useful for tests, demos,
  and synthetic pipelines. No network, byte-identical across processes.
* FileReplayProvider — replays recorded request/response JSON-lines.
* RemoteProvider — JSON over HTTP POST with bounded retry; endpoint and
  auth token come from the environment or explicit arguments.

Also hosts the deterministic tag-text embedder (hashed token bag pushed
through a seeded random projection) used by the distilled logic model.
"""

from __future__ import annotations

import json
import os
import re
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import httpx
import numpy as np

from .knowledge import ItemRecord, Tag, TagKind, canonical_tag_text

ENDPOINT_ENV_VAR = "TAGLOGIC_ENDPOINT"
TOKEN_ENV_VAR = "TAGLOGIC_TOKEN"


class ProviderTransportError(RuntimeError):
    """Remote call failed after bounded retries; safe to retry later."""


class ProviderContractError(ValueError):
    """Provider returned an empty or malformed response."""


@dataclass(frozen=True)
class TagExtractionResponse:
    user_tags: tuple[str, ...]
    item_tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.user_tags or not self.item_tags:
            raise ProviderContractError("tag extraction returned an empty tag list")


@dataclass(frozen=True)
class LogicReasoningResponse:
    source_text: str
    source_kind: TagKind
    targets: tuple[str, ...]

    @property
    def target_kind(self) -> TagKind:
        return self.source_kind.other()

    def __post_init__(self) -> None:
        if not self.targets:
            raise ProviderContractError("logic reasoning returned no targets")


def _dedupe_canonical(texts: Iterable[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for t in texts:
        key = canonical_tag_text(t)
        if key:
            seen.setdefault(key, None)
    return tuple(seen)


def extract_tags(provider, item: ItemRecord) -> TagExtractionResponse:
    """Ask the provider for the item's user-role and item-topic tags,
    deduplicated after canonicalization."""
    resp = provider.extract_tags(item)
    user = _dedupe_canonical(resp.user_tags)
    topic = _dedupe_canonical(resp.item_tags)
    if not user or not topic:
        raise ProviderContractError(
            f"provider produced no usable tags for item {item.item_id}"
        )
    return TagExtractionResponse(user_tags=user, item_tags=topic)


def reason_logic(provider, tag: Tag) -> LogicReasoningResponse:
    """Ask the provider for opposite-kind tags logically connected to `tag`."""
    resp = provider.reason_logic(tag)
    targets = _dedupe_canonical(resp.targets)
    if not targets:
        raise ProviderContractError(f"provider produced no logic targets for {tag.text!r}")
    return LogicReasoningResponse(
        source_text=tag.text, source_kind=tag.kind, targets=targets
    )


# --- mock provider ------------------------------------------------------------

_ROLE_QUALIFIERS = (
    "music", "cooking", "cinema", "gardening", "fitness", "photography",
    "history", "chess", "cycling", "painting", "astronomy", "coding",
    "travel", "fashion", "wildlife", "diy",
)
_ROLE_NOUNS = (
    "enthusiast", "collector", "beginner", "teacher", "parent", "student",
    "professional", "hobbyist", "critic", "veteran",
)
_TOPIC_FACETS = (
    "basics", "tutorial", "review", "gear", "theory", "challenge",
    "daily life", "highlights", "tips", "history", "qna", "showcase",
)

MOCK_ROLE_POOL = tuple(f"{q} {n}" for q in _ROLE_QUALIFIERS for n in _ROLE_NOUNS)
MOCK_TOPIC_POOL = tuple(f"{q} {f}" for q in _ROLE_QUALIFIERS for f in _TOPIC_FACETS)


def _text_fingerprint(texts: Sequence[str]) -> int:
    return zlib.crc32("\x1f".join(texts).encode("utf-8"))


@dataclass
class MockProvider:
    """Deterministic stand-in for the tag-extraction and logic-reasoning
    models: every response is a pure function of (seed, input)."""

    seed: int = 0
    min_tags: int = 8
    max_tags: int = 10

    def _rng(self, *entropy: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, *entropy]))

    def extract_tags(self, item: ItemRecord) -> TagExtractionResponse:
        rng = self._rng(1, item.item_id, _text_fingerprint(item.text_fields))
        n_user = int(rng.integers(self.min_tags, self.max_tags + 1))
        n_item = int(rng.integers(self.min_tags, self.max_tags + 1))
        user = rng.choice(len(MOCK_ROLE_POOL), size=n_user, replace=False)
        topic = rng.choice(len(MOCK_TOPIC_POOL), size=n_item, replace=False)
        return TagExtractionResponse(
            user_tags=tuple(MOCK_ROLE_POOL[i] for i in user),
            item_tags=tuple(MOCK_TOPIC_POOL[i] for i in topic),
        )

    def reason_logic(self, tag: Tag) -> LogicReasoningResponse:
        key = zlib.crc32(canonical_tag_text(tag.text).encode("utf-8"))
        rng = self._rng(2, key, 0 if tag.kind is TagKind.USER_ROLE else 1)
        pool = MOCK_TOPIC_POOL if tag.kind is TagKind.USER_ROLE else MOCK_ROLE_POOL
        n = int(rng.integers(3, 9))
        picks = rng.choice(len(pool), size=n, replace=False)
        return LogicReasoningResponse(
            source_text=tag.text,
            source_kind=tag.kind,
            targets=tuple(pool[i] for i in picks),
        )


# --- file replay provider -----------------------------------------------------


def _extract_key(item_id: int) -> str:
    return f"extract:{item_id}"


def _reason_key(text: str, kind: TagKind) -> str:
    return f"reason:{kind.value}:{canonical_tag_text(text)}"


class FileReplayProvider:
    """Replays recorded provider calls from a JSON-lines file.

    Each line holds {"request": {...}, "response": {...}}; requests are
    keyed by item id (extraction) or canonical tag text + kind (reasoning).
    """

    def __init__(self, path: str | os.PathLike):
        self._responses: dict[str, dict] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                req, resp = entry["request"], entry["response"]
                if req["task"] == "extract_tags":
                    key = _extract_key(int(req["item_id"]))
                else:
                    key = _reason_key(req["tag"], TagKind(req["kind"]))
                self._responses[key] = resp

    def extract_tags(self, item: ItemRecord) -> TagExtractionResponse:
        resp = self._responses.get(_extract_key(item.item_id))
        if resp is None:
            raise ProviderContractError(f"no recorded extraction for item {item.item_id}")
        return TagExtractionResponse(
            user_tags=tuple(resp["user_tags"]), item_tags=tuple(resp["item_tags"])
        )

    def reason_logic(self, tag: Tag) -> LogicReasoningResponse:
        resp = self._responses.get(_reason_key(tag.text, tag.kind))
        if resp is None:
            raise ProviderContractError(f"no recorded reasoning for tag {tag.text!r}")
        return LogicReasoningResponse(
            source_text=tag.text, source_kind=tag.kind, targets=tuple(resp["targets"])
        )


def record_replay_file(
    path: str | os.PathLike,
    provider,
    items: Sequence[ItemRecord] = (),
    tags: Sequence[Tag] = (),
) -> None:
    """Capture provider outputs into a replay file."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            resp = extract_tags(provider, item)
            fh.write(json.dumps({
                "request": {"task": "extract_tags", "item_id": item.item_id},
                "response": {"user_tags": list(resp.user_tags),
                             "item_tags": list(resp.item_tags)},
            }, sort_keys=True))
            fh.write("\n")
        for tag in tags:
            resp = reason_logic(provider, tag)
            fh.write(json.dumps({
                "request": {"task": "reason_logic", "tag": tag.text,
                            "kind": tag.kind.value},
                "response": {"targets": list(resp.targets)},
            }, sort_keys=True))
            fh.write("\n")


# --- remote provider ----------------------------------------------------------


class RemoteProvider:
    """JSON-over-HTTP provider client with bounded retry.

    POSTs {"task": "extract_tags", "item": {...}} or
    {"task": "reason_logic", "tag": ..., "kind": ...} and expects the
    matching response object back.
    """

    def __init__(
        self,
        endpoint: str,
        token: Optional[str] = None,
        timeout: float = 10.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        headers = {"authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(
            timeout=timeout, headers=headers, transport=transport
        )

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteProvider":
        endpoint = os.environ.get(ENDPOINT_ENV_VAR)
        if not endpoint:
            raise ProviderTransportError(
                f"remote provider needs {ENDPOINT_ENV_VAR} to be set"
            )
        return cls(endpoint, token=os.environ.get(TOKEN_ENV_VAR), **kwargs)

    def _post(self, payload: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = self._client.post(self.endpoint, json=payload)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_exc = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff * (2 ** attempt))
        raise ProviderTransportError(
            f"remote provider failed after {self.max_retries} attempts: {last_exc}"
        )

    def extract_tags(self, item: ItemRecord) -> TagExtractionResponse:
        payload = {
            "task": "extract_tags",
            "item": {"item_id": item.item_id, "text_fields": item.text_fields},
        }
        if item.semantic_embedding is not None:
            payload["item"]["semantic_embedding"] = [
                float(x) for x in item.semantic_embedding
            ]
        body = self._post(payload)
        try:
            return TagExtractionResponse(
                user_tags=tuple(body["user_tags"]), item_tags=tuple(body["item_tags"])
            )
        except (KeyError, TypeError) as exc:
            raise ProviderContractError(f"malformed extraction response: {body}") from exc

    def reason_logic(self, tag: Tag) -> LogicReasoningResponse:
        body = self._post(
            {"task": "reason_logic", "tag": tag.text, "kind": tag.kind.value}
        )
        try:
            return LogicReasoningResponse(
                source_text=tag.text, source_kind=tag.kind,
                targets=tuple(body["targets"]),
            )
        except (KeyError, TypeError) as exc:
            raise ProviderContractError(f"malformed reasoning response: {body}") from exc

    def close(self) -> None:
        self._client.close()


T = TypeVar("T")
R = TypeVar("R")


def run_batched(fn: Callable[[T], R], inputs: Sequence[T], width: int = 4) -> list[R]:
    """Apply fn over inputs as bounded concurrent batches, preserving order."""
    if width <= 1 or len(inputs) <= 1:
        return [fn(x) for x in inputs]
    with ThreadPoolExecutor(max_workers=width) as pool:
        return list(pool.map(fn, inputs))


# --- deterministic tag-text embedder -------------------------------------------


@dataclass
class TagSemanticEmbedder:
    """Hashed token-bag embedding: tokens are counted into a fixed bucket
    space and pushed through a seeded random projection, then L2-normalized.
    Deterministic per text across processes."""

    dim: int = 32
    seed: int = 0
    n_buckets: int = 4096
    _projection: Optional[np.ndarray] = field(default=None, repr=False)

    _token_re = re.compile(r"[a-z0-9]+")

    def _ensure_projection(self) -> np.ndarray:
        if self._projection is None:
            rng = np.random.default_rng(np.random.SeedSequence([77, self.seed]))
            self._projection = rng.standard_normal((self.n_buckets, self.dim))
        return self._projection

    def __call__(self, text: str) -> np.ndarray:
        proj = self._ensure_projection()
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in self._token_re.findall(canonical_tag_text(text)):
            bucket = zlib.crc32(token.encode("utf-8")) % self.n_buckets
            vec += proj[bucket]
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec
