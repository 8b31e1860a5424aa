"""Directed bipartite logic graphs over cover-set tags, and the two-hop
tag exploration that walks them.

A graph maps user-role tags to item-topic tags (U2I) or the reverse (I2U).
Exploration starts from a weighted set of source-kind tags, hops through the
first graph to opposite-kind tags, hops back through the second graph, and
truncates/normalizes the result. Hard mode counts paths; soft mode
propagates edge-weight x node-weight sums and keeps nodes above a threshold.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional

import math


class GraphDirection(str, Enum):
    U2I = "u2i"
    I2U = "i2u"


class InvalidScoreError(ValueError):
    """A pairwise score was NaN or outside [0,1]."""


class UnknownTagError(KeyError):
    """A tag set references a tag outside the graph's source cover set."""


class ExplorationMode(str, Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class ExplorationConfig:
    mode: ExplorationMode = ExplorationMode.SOFT
    delta: float = 0.0
    top_k: int = 10

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


@dataclass(frozen=True)
class WeightedTagSet:
    """Mapping tag id -> weight >= 0; zero-weight entries are never stored."""

    weights: Mapping[int, float] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self) -> None:
        clean = {int(t): float(w) for t, w in self.weights.items() if w != 0.0}
        for t, w in clean.items():
            if w < 0:
                raise ValueError(f"negative weight for tag {t}")
        object.__setattr__(self, "weights", clean)
        if self.normalized and clean:
            total = sum(clean.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"normalized set sums to {total}, not 1")

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self.weights)

    def __len__(self) -> int:
        return len(self.weights)

    def __bool__(self) -> bool:
        return bool(self.weights)

    def get(self, tag_id: int) -> float:
        return self.weights.get(tag_id, 0.0)

    def normalize(self) -> "WeightedTagSet":
        if not self.weights:
            return WeightedTagSet({}, normalized=True)
        total = sum(self.weights.values())
        return WeightedTagSet(
            {t: w / total for t, w in self.weights.items()}, normalized=True
        )

    def truncate(self, top_k: int) -> "WeightedTagSet":
        """Keep the top_k heaviest tags (ties broken by smaller id)."""
        ranked = sorted(self.weights.items(), key=lambda tw: (-tw[1], tw[0]))
        return WeightedTagSet(dict(ranked[:top_k]), normalized=False)

    def items_by_weight(self) -> list[tuple[int, float]]:
        return sorted(self.weights.items(), key=lambda tw: (-tw[1], tw[0]))


@dataclass(frozen=True)
class LogicGraph:
    """Sparse adjacency: source tag id -> list of (target tag id, weight),
    sorted by descending weight (ties by smaller target id), at most
    branch_b entries per source."""

    direction: GraphDirection
    edges: Mapping[int, tuple[tuple[int, float], ...]] = field(default_factory=dict)
    branch_b: int = 20
    source_ids: frozenset[int] = frozenset()
    target_ids: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        for src, targets in self.edges.items():
            if len(targets) > self.branch_b:
                raise ValueError(f"source {src} exceeds branch budget {self.branch_b}")
            weights = [w for _, w in targets]
            if any(not (0.0 < w <= 1.0) for w in weights):
                raise ValueError(f"edge weights of source {src} must lie in (0,1]")
            order = sorted(targets, key=lambda tw: (-tw[1], tw[0]))
            if list(targets) != order:
                raise ValueError(f"edges of source {src} are not sorted by weight")

    def out_edges(self, source: int) -> tuple[tuple[int, float], ...]:
        return self.edges.get(source, ())

    def n_edges(self) -> int:
        return sum(len(t) for t in self.edges.values())

    def check_endpoints(self, sources: set[int], targets: set[int]) -> None:
        for src, outs in self.edges.items():
            if src not in sources:
                raise UnknownTagError(f"graph source {src} outside its cover set")
            for tgt, _ in outs:
                if tgt not in targets:
                    raise UnknownTagError(f"graph target {tgt} outside its cover set")

    def to_json(self) -> dict:
        return {
            "direction": self.direction.value,
            "branch_b": self.branch_b,
            "source_ids": sorted(self.source_ids),
            "target_ids": sorted(self.target_ids),
            "edges": [
                [src, [[t, w] for t, w in targets]]
                for src, targets in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_json(cls, blob: Mapping) -> "LogicGraph":
        return cls(
            direction=GraphDirection(blob["direction"]),
            branch_b=blob["branch_b"],
            source_ids=frozenset(blob["source_ids"]),
            target_ids=frozenset(blob["target_ids"]),
            edges={
                int(src): tuple((int(t), float(w)) for t, w in targets)
                for src, targets in blob["edges"]
            },
        )


def build_graph(
    score: Callable[[int, int], float],
    sources: Iterable[int],
    targets: Iterable[int],
    branch_b: int,
    direction: GraphDirection,
) -> LogicGraph:
    """Connect each source to its top-branch_b positively scored targets.

    Raises InvalidScoreError, naming the offending pair, if the score
    function returns NaN or a value outside [0,1].
    """
    source_list = sorted(set(sources))
    target_list = sorted(set(targets))
    if not source_list or not target_list:
        raise ValueError("cover sets must be non-empty to build a graph")
    edges: dict[int, tuple[tuple[int, float], ...]] = {}
    for src in source_list:
        scored: list[tuple[int, float]] = []
        for tgt in target_list:
            w = float(score(src, tgt))
            if math.isnan(w) or not (0.0 <= w <= 1.0):
                raise InvalidScoreError(
                    f"score for pair ({src}, {tgt}) is invalid: {w}"
                )
            if w > 0.0:
                scored.append((tgt, w))
        scored.sort(key=lambda tw: (-tw[1], tw[0]))
        top = tuple(scored[:branch_b])
        if top:
            edges[src] = top
    return LogicGraph(
        direction=direction,
        edges=edges,
        branch_b=branch_b,
        source_ids=frozenset(source_list),
        target_ids=frozenset(target_list),
    )


def explore(
    t0: WeightedTagSet,
    g_u2i: LogicGraph,
    g_i2u: LogicGraph,
    cfg: ExplorationConfig,
) -> tuple[WeightedTagSet, WeightedTagSet]:
    """Two-hop exploration: t0 -> (first graph) -> c1 -> (second graph) -> t1.

    Hard mode weights are path counts; soft mode aggregates
    edge_weight * node_weight sums and keeps nodes with weight > delta.
    t1 is truncated to cfg.top_k (weight desc, ties by smaller id) and
    normalized to sum one; c1 is returned unnormalized.
    """
    if not t0:
        raise ValueError("exploration requires a non-empty starting tag set")
    unknown = t0.support - g_u2i.source_ids
    if unknown:
        raise UnknownTagError(
            f"starting tags {sorted(unknown)} are outside the graph's cover set"
        )

    if cfg.mode is ExplorationMode.HARD:
        c1_weights: dict[int, float] = Counter()
        for t in t0.support:
            for c, _ in g_u2i.out_edges(t):
                c1_weights[c] += 1.0
        t1_weights: dict[int, float] = Counter()
        for c in c1_weights:
            for t_next, _ in g_i2u.out_edges(c):
                t1_weights[t_next] += c1_weights[c]
        c1 = WeightedTagSet(dict(c1_weights))
        t1 = WeightedTagSet(dict(t1_weights))
    else:
        c1_acc: dict[int, float] = {}
        for t, w_t in t0.weights.items():
            for c, w_edge in g_u2i.out_edges(t):
                c1_acc[c] = c1_acc.get(c, 0.0) + w_edge * w_t
        c1_acc = {c: w for c, w in c1_acc.items() if w > cfg.delta}
        t1_acc: dict[int, float] = {}
        for c, w_c in c1_acc.items():
            for t_next, w_edge in g_i2u.out_edges(c):
                t1_acc[t_next] = t1_acc.get(t_next, 0.0) + w_edge * w_c
        t1_acc = {t: w for t, w in t1_acc.items() if w > cfg.delta}
        c1 = WeightedTagSet(c1_acc)
        t1 = WeightedTagSet(t1_acc)

    t1 = t1.truncate(cfg.top_k).normalize()
    return c1, t1


def merge_tag_sets(t0: WeightedTagSet, t1: WeightedTagSet) -> WeightedTagSet:
    """Union with per-tag weight sums, renormalized to total one."""
    merged = dict(t0.weights)
    for t, w in t1.weights.items():
        merged[t] = merged.get(t, 0.0) + w
    return WeightedTagSet(merged).normalize()


@dataclass(frozen=True)
class DegreeStats:
    out_degree: dict[int, int]
    in_degree: dict[int, int]

    def to_json(self) -> dict:
        return {
            "out_degree": sorted(self.out_degree.items()),
            "in_degree": sorted(self.in_degree.items()),
        }


def graph_degree_stats(g: LogicGraph) -> DegreeStats:
    """Histograms {degree: node count} over nodes that carry edges."""
    out_counter: Counter[int] = Counter()
    in_per_node: Counter[int] = Counter()
    for src, targets in g.edges.items():
        if targets:
            out_counter[len(targets)] += 1
        for tgt, _ in targets:
            in_per_node[tgt] += 1
    in_counter: Counter[int] = Counter(in_per_node.values())
    return DegreeStats(out_degree=dict(out_counter), in_degree=dict(in_counter))


def top_tags(
    scores: Mapping[int, float] | Iterable[tuple[int, float]],
    k: int,
) -> WeightedTagSet:
    """Select the k best-scored tags (ties by smaller id); weights are the
    selected scores normalized to sum one."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pairs = scores.items() if isinstance(scores, Mapping) else scores
    ranked = sorted(pairs, key=lambda tw: (-tw[1], tw[0]))[:k]
    return WeightedTagSet(dict(ranked)).normalize()
