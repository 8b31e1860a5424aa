"""Shared domain types: tags, vocabularies, item/interaction records, and
the immutable knowledge snapshot with canonical-JSON serialization.

Tag texts are deduplicated by a canonical key (whitespace trim + Unicode case
fold), so "  Symphonist " and "symphonist" resolve to the same tag. Ids are
dense per kind and assigned in first-seen order, which keeps every artifact
that stores ids replay-stable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

SNAPSHOT_SCHEMA_VERSION = 1


class TagKind(str, Enum):
    USER_ROLE = "user_role"
    ITEM_TOPIC = "item_topic"

    def other(self) -> "TagKind":
        return TagKind.ITEM_TOPIC if self is TagKind.USER_ROLE else TagKind.USER_ROLE


class CanonicalizationError(ValueError):
    """An input tag string is empty after trim + case fold."""


class SnapshotVersionError(ValueError):
    """Snapshot file declares an unsupported schema_version."""


class CorruptSnapshotError(ValueError):
    """Snapshot file is truncated or not valid canonical JSON."""


def canonical_tag_text(text: str) -> str:
    """Trim and case-fold a tag string to its dedup key."""
    return text.strip().casefold()


@dataclass(frozen=True)
class Tag:
    id: int
    kind: TagKind
    text: str
    first_seen_day: int = 0

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("tag text must be non-empty")


@dataclass
class TagVocabulary:
    """Append-only text -> Tag map with dense ids per kind.

    Mutation is single-writer; the full set only ever grows (daily union
    updates never remove entries).
    """

    kind: TagKind
    entries: dict[str, Tag] = field(default_factory=dict)
    day: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, text: str) -> Optional[Tag]:
        return self.entries.get(canonical_tag_text(text))

    def tags(self) -> list[Tag]:
        """All tags in id order."""
        return sorted(self.entries.values(), key=lambda t: t.id)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "day": self.day,
            "entries": [
                [key, tag.id, tag.text, tag.first_seen_day]
                for key, tag in sorted(self.entries.items(), key=lambda kv: kv[1].id)
            ],
        }

    @classmethod
    def from_json(cls, blob: Mapping) -> "TagVocabulary":
        kind = TagKind(blob["kind"])
        entries = {
            key: Tag(id=tid, kind=kind, text=text, first_seen_day=day)
            for key, tid, text, day in blob["entries"]
        }
        return cls(kind=kind, entries=entries, day=blob["day"])


def update_vocabulary(
    vocab: TagVocabulary, new_tags: Sequence[str], day: Optional[int] = None
) -> tuple[TagVocabulary, list[Tag]]:
    """Union a batch of tag strings into the vocabulary.

    Previously unseen strings get fresh dense ids in input order; known
    strings resolve to their existing tag. Returns the updated vocabulary
    and the resolved tags in input order.

    Raises CanonicalizationError (naming the offending index) for strings
    that are empty after canonicalization.
    """
    if day is None:
        day = vocab.day
    entries = dict(vocab.entries)
    next_id = len(entries)
    resolved: list[Tag] = []
    for idx, raw in enumerate(new_tags):
        key = canonical_tag_text(raw)
        if not key:
            raise CanonicalizationError(
                f"tag string at index {idx} is empty after canonicalization: {raw!r}"
            )
        tag = entries.get(key)
        if tag is None:
            tag = Tag(id=next_id, kind=vocab.kind, text=key, first_seen_day=day)
            entries[key] = tag
            next_id += 1
        resolved.append(tag)
    return TagVocabulary(kind=vocab.kind, entries=entries, day=max(vocab.day, day)), resolved


@dataclass
class ItemRecord:
    """An item with its text surrogates, optional semantic embedding, and
    scored tag assignments (sorted by descending score, ties by smaller id).
    """

    item_id: int
    text_fields: list[str] = field(default_factory=list)
    semantic_embedding: Optional[np.ndarray] = None
    user_tags: list[tuple[int, float]] = field(default_factory=list)
    item_tags: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.semantic_embedding is not None:
            self.semantic_embedding = np.asarray(self.semantic_embedding, dtype=np.float64)
        self.user_tags = _normalize_tag_list(self.user_tags)
        self.item_tags = _normalize_tag_list(self.item_tags)

    def tags_of(self, kind: TagKind) -> list[tuple[int, float]]:
        return self.user_tags if kind is TagKind.USER_ROLE else self.item_tags


def _normalize_tag_list(pairs: Iterable[tuple[int, float]]) -> list[tuple[int, float]]:
    out = [(int(t), float(s)) for t, s in pairs]
    for t, s in out:
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"tag score out of [0,1]: tag {t} score {s}")
    out.sort(key=lambda ts: (-ts[1], ts[0]))
    return out


@dataclass(frozen=True)
class InteractionEvent:
    user_id: int
    item_id: int
    timestamp: int
    label: int = 1
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.label == 1 and self.weight <= 0:
            raise ValueError("positive events require weight > 0")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass
class Dataset:
    """Users, items, and chronologically ordered interaction events.

    Histories are kept in a deterministic total order (timestamp, then
    item id) per user; positive target sets are derived from label=1 events.
    """

    items: dict[int, ItemRecord]
    events: list[InteractionEvent]
    split_name: Optional[str] = None

    def __post_init__(self) -> None:
        self.events = sorted(
            self.events, key=lambda e: (e.user_id, e.timestamp, e.item_id)
        )

    @property
    def users(self) -> list[int]:
        return sorted({e.user_id for e in self.events})

    def history(self, user_id: int) -> list[InteractionEvent]:
        return [e for e in self.events if e.user_id == user_id]

    def histories(self) -> dict[int, list[InteractionEvent]]:
        out: dict[int, list[InteractionEvent]] = {}
        for e in self.events:
            out.setdefault(e.user_id, []).append(e)
        return out

    def positive_targets(self) -> dict[int, list[InteractionEvent]]:
        out: dict[int, list[InteractionEvent]] = {}
        for e in self.events:
            if e.label == 1:
                out.setdefault(e.user_id, []).append(e)
        return out

    def n_events(self) -> int:
        return len(self.events)


# --- knowledge snapshot -----------------------------------------------------
#
# The snapshot is the immutable daily bundle consumed by training and
# serving: both cover sets, both logic graphs, and the two distilled-model
# parameter blobs (kept as plain JSON-able dicts so that save/load is the
# identity and files are byte-stable).


@dataclass(frozen=True)
class KnowledgeSnapshot:
    day: int
    cover_set_user: "CoverSet"
    cover_set_item: "CoverSet"
    g_u2i: "LogicGraph"
    g_i2u: "LogicGraph"
    distilled_tag_model: Optional[dict] = None
    distilled_logic_model: Optional[dict] = None
    schema_version: int = SNAPSHOT_SCHEMA_VERSION

    def __post_init__(self) -> None:
        user_ids = set(self.cover_set_user.selected)
        item_ids = set(self.cover_set_item.selected)
        self.g_u2i.check_endpoints(user_ids, item_ids)
        self.g_i2u.check_endpoints(item_ids, user_ids)


def snapshot_to_json(s: KnowledgeSnapshot) -> dict:
    return {
        "schema_version": s.schema_version,
        "day": s.day,
        "cover_set_user": s.cover_set_user.to_json(),
        "cover_set_item": s.cover_set_item.to_json(),
        "g_u2i": s.g_u2i.to_json(),
        "g_i2u": s.g_i2u.to_json(),
        "distilled_tag_model": s.distilled_tag_model,
        "distilled_logic_model": s.distilled_logic_model,
    }


def snapshot_from_json(blob: Mapping) -> KnowledgeSnapshot:
    from .coverset import CoverSet
    from .graph import LogicGraph

    version = blob.get("schema_version")
    if version != SNAPSHOT_SCHEMA_VERSION:
        raise SnapshotVersionError(
            f"snapshot schema_version {version} is not supported "
            f"(expected {SNAPSHOT_SCHEMA_VERSION})"
        )
    return KnowledgeSnapshot(
        schema_version=version,
        day=blob["day"],
        cover_set_user=CoverSet.from_json(blob["cover_set_user"]),
        cover_set_item=CoverSet.from_json(blob["cover_set_item"]),
        g_u2i=LogicGraph.from_json(blob["g_u2i"]),
        g_i2u=LogicGraph.from_json(blob["g_i2u"]),
        distilled_tag_model=blob["distilled_tag_model"],
        distilled_logic_model=blob["distilled_logic_model"],
    )


def canonical_json_bytes(obj) -> bytes:
    """Canonical JSON: sorted keys, no whitespace. Byte-stable for a fixed
    structure (floats use shortest round-trip repr)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def snapshot_save(s: KnowledgeSnapshot, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(canonical_json_bytes(snapshot_to_json(s)))
        fh.write(b"\n")


def snapshot_load(path: str | os.PathLike) -> KnowledgeSnapshot:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        blob = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptSnapshotError(f"snapshot file {path} is corrupt: {exc}") from exc
    if not isinstance(blob, dict):
        raise CorruptSnapshotError(f"snapshot file {path} does not hold an object")
    return snapshot_from_json(blob)


# --- item / interaction files -----------------------------------------------
#
# Items file: JSON-lines, one record per line, tag assignments as
# [text, score] pairs (texts are resolved to ids at ingest).
# Interactions file: tab-separated  user_id  item_id  timestamp  label  weight.


def item_record_to_json(
    rec: ItemRecord,
    user_vocab: Optional[TagVocabulary] = None,
    item_vocab: Optional[TagVocabulary] = None,
) -> dict:
    def render(pairs: list[tuple[int, float]], vocab: Optional[TagVocabulary]) -> list:
        if vocab is None:
            return [[t, s] for t, s in pairs]
        by_id = {tag.id: tag.text for tag in vocab.entries.values()}
        return [[by_id[t], s] for t, s in pairs]

    blob = {
        "item_id": rec.item_id,
        "text_fields": rec.text_fields,
        "user_tags": render(rec.user_tags, user_vocab),
        "item_tags": render(rec.item_tags, item_vocab),
    }
    if rec.semantic_embedding is not None:
        blob["semantic_embedding"] = [float(x) for x in rec.semantic_embedding]
    return blob


def write_items_file(
    path: str | os.PathLike,
    records: Iterable[ItemRecord],
    user_vocab: Optional[TagVocabulary] = None,
    item_vocab: Optional[TagVocabulary] = None,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(item_record_to_json(rec, user_vocab, item_vocab),
                                sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def write_interactions_file(path: str | os.PathLike, events: Iterable[InteractionEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(f"{e.user_id}\t{e.item_id}\t{e.timestamp}\t{e.label}\t{e.weight!r}\n")


def with_day(vocab: TagVocabulary, day: int) -> TagVocabulary:
    return replace(vocab, day=day)
