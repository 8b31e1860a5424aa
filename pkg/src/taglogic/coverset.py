"""Dynamic cover-set maintenance.

Daily update rule: keep previously selected tags that are still fresh, then
greedily add the tag covering the most currently-uncovered items until the
coverage target tau is met (ties broken by smaller tag id), roll the D-day
tag recall history forward, and expire tags with no recalls anywhere in the
window. All functions are pure: they return new state objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

DEFAULT_TAU = 0.99
DEFAULT_WINDOW_DAYS = 30

ItemTagMapping = Mapping[int, frozenset[int] | set[int]]


class EmptyTagSetError(ValueError):
    """An item in the day's mapping carries no tags."""


@dataclass(frozen=True)
class TagItemHistory:
    """Ring of exactly D daily buckets, each mapping tag id -> count of
    items that recalled the tag that day. Appending evicts the oldest."""

    buckets: tuple[dict[int, int], ...]

    @classmethod
    def empty(cls, window_days: int = DEFAULT_WINDOW_DAYS) -> "TagItemHistory":
        if window_days < 1:
            raise ValueError("window must span at least one day")
        return cls(buckets=tuple({} for _ in range(window_days)))

    @property
    def window_days(self) -> int:
        return len(self.buckets)

    def append(self, day_counts: dict[int, int]) -> "TagItemHistory":
        return TagItemHistory(buckets=self.buckets[1:] + (dict(day_counts),))

    def total_recalls(self, tag_id: int) -> int:
        return sum(b.get(tag_id, 0) for b in self.buckets)

    def to_json(self) -> dict:
        return {"buckets": [sorted(b.items()) for b in self.buckets]}

    @classmethod
    def from_json(cls, blob: Mapping) -> "TagItemHistory":
        return cls(buckets=tuple({int(t): int(c) for t, c in b} for b in blob["buckets"]))


@dataclass(frozen=True)
class CoverSet:
    """Greedy-selected tag subset; `selected` preserves insertion order."""

    selected: tuple[int, ...] = ()
    tau: float = DEFAULT_TAU
    last_recall_day: dict[int, int] = field(default_factory=dict)
    last_update_day: int = -1

    def __post_init__(self) -> None:
        if len(set(self.selected)) != len(self.selected):
            raise ValueError("cover set contains duplicate tags")
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError("tau must lie in [0,1]")

    def __contains__(self, tag_id: int) -> bool:
        return tag_id in set(self.selected)

    def __len__(self) -> int:
        return len(self.selected)

    def to_json(self) -> dict:
        return {
            "selected": list(self.selected),
            "tau": self.tau,
            "last_recall_day": sorted(self.last_recall_day.items()),
            "last_update_day": self.last_update_day,
        }

    @classmethod
    def from_json(cls, blob: Mapping) -> "CoverSet":
        return cls(
            selected=tuple(blob["selected"]),
            tau=blob["tau"],
            last_recall_day={int(t): int(d) for t, d in blob["last_recall_day"]},
            last_update_day=blob["last_update_day"],
        )


@dataclass(frozen=True)
class UpdateReport:
    day: int
    added: tuple[int, ...]
    removed: tuple[int, ...]
    coverage: float
    size: int

    def to_json(self) -> dict:
        return {
            "day": self.day,
            "added": list(self.added),
            "removed": list(self.removed),
            "coverage": self.coverage,
            "size": self.size,
        }


def coverage_rate(m: ItemTagMapping, s: set[int] | frozenset[int]) -> float:
    """Fraction of items in m having at least one tag in s.

    An empty mapping covers vacuously (1.0), which keeps the greedy loop
    guard well-defined on quiet days.
    """
    if not m:
        return 1.0
    hit = sum(1 for tags in m.values() if not s.isdisjoint(tags))
    return hit / len(m)


def update_cover_set(
    cover: CoverSet,
    m: ItemTagMapping,
    h: TagItemHistory,
    day: int,
) -> tuple[CoverSet, TagItemHistory, UpdateReport]:
    """Run one day's cover-set reduction.

    Starting from the retained selection, greedily add the tag that covers
    the most currently-uncovered items until coverage reaches tau (ties by
    smaller tag id), append today's recall counts to the history (evicting
    the oldest bucket), and drop selected tags with zero recalls across the
    whole window.
    """
    if day <= cover.last_update_day:
        raise ValueError(
            f"update day {day} must be after previous update day {cover.last_update_day}"
        )
    for item_id, tags in m.items():
        if not tags:
            raise EmptyTagSetError(f"item {item_id} has an empty tag set")

    # Inverted index over today's mapping.
    items_of_tag: dict[int, set[int]] = {}
    for item_id, tags in m.items():
        for t in tags:
            items_of_tag.setdefault(t, set()).add(item_id)

    selected_set = set(cover.selected)
    covered: set[int] = set()
    for t in cover.selected:
        covered |= items_of_tag.get(t, set())

    n_items = len(m)
    added: list[int] = []
    if n_items > 0:
        candidates = set(items_of_tag) - selected_set
        while len(covered) / n_items < cover.tau:
            best_tag, best_gain = -1, 0
            for t in sorted(candidates):
                gain = len(items_of_tag[t] - covered)
                if gain > best_gain:
                    best_tag, best_gain = t, gain
            if best_gain == 0:
                break  # remaining items are uncoverable by unselected tags
            added.append(best_tag)
            candidates.discard(best_tag)
            covered |= items_of_tag[best_tag]

    working = list(cover.selected) + added

    day_counts = {t: len(items_of_tag[t]) for t in working if t in items_of_tag}
    new_history = h.append(day_counts)

    removed = tuple(t for t in working if new_history.total_recalls(t) == 0)
    removed_set = set(removed)
    new_selected = tuple(t for t in working if t not in removed_set)

    new_recall = {
        t: d for t, d in cover.last_recall_day.items() if t not in removed_set
    }
    for t in new_selected:
        if t in items_of_tag:
            new_recall[t] = day

    final_coverage = len(covered) / n_items if n_items else 1.0
    new_cover = CoverSet(
        selected=new_selected,
        tau=cover.tau,
        last_recall_day=new_recall,
        last_update_day=day,
    )
    report = UpdateReport(
        day=day,
        added=tuple(added),
        removed=removed,
        coverage=final_coverage,
        size=len(new_selected),
    )
    return new_cover, new_history, report


@dataclass(frozen=True)
class CoverSetStats:
    size: int
    daily_added: tuple[int, ...]
    daily_removed: tuple[int, ...]
    coverage: Optional[float]

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "daily_added": list(self.daily_added),
            "daily_removed": list(self.daily_removed),
            "coverage": self.coverage,
        }


def coverset_stats(
    cover: CoverSet,
    h: TagItemHistory,
    reports: Sequence[UpdateReport] = (),
) -> CoverSetStats:
    """Summarize the engine state; per-day expansion/removal counts come
    from the update reports accumulated by the caller."""
    return CoverSetStats(
        size=len(cover.selected),
        daily_added=tuple(len(r.added) for r in reports),
        daily_removed=tuple(len(r.removed) for r in reports),
        coverage=reports[-1].coverage if reports else None,
    )
