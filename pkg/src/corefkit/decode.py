"""From antecedent scores to clusters, including long-document merging."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import Mention

EPSILON = -1
SINGLETON = -2


class UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        self.add(a)
        self.add(b)
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller representative wins, keeps output independent of call order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[list]:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return sorted((sorted(g) for g in out.values()), key=lambda g: g[0])


@dataclass
class ClusterSet:
    clusters: list[list[Mention]] = field(default_factory=list)
    provenance: dict[tuple, int] = field(default_factory=dict)  # mention nodes -> example index

    def __post_init__(self):
        cl = [sorted(c, key=_mkey) for c in self.clusters if c]
        self.clusters = sorted(cl, key=lambda c: _mkey(c[0]))

    @property
    def mentions(self) -> list[Mention]:
        return [m for c in self.clusters for m in c]


def _mkey(m: Mention):
    return (m.sort_key, m.nodes)


def select_antecedents(scores: np.ndarray, antecedents: np.ndarray, num_virtual: int,
                       mention_scores: Optional[np.ndarray] = None,
                       singleton_mode: str = "off") -> tuple[dict[int, int], set[int]]:
    """Pick the best-scoring antecedent per span.

    ``scores`` is ``[K, num_virtual + C]`` with column 0 the dummy antecedent
    and, when ``num_virtual == 2``, column 1 the singleton antecedent;
    ``antecedents[i, c]`` is the span index behind column ``num_virtual + c``
    (-1 for padding). Ties go to the leftmost column, so the dummy wins a
    tie. Returns ``(links, singletons)``: span -> antecedent span, and spans
    emitted as single-mention clusters.
    """
    links: dict[int, int] = {}
    virtual_single: set[int] = set()
    best = np.argmax(scores, axis=1) if len(scores) else np.zeros(0, dtype=int)
    for i, col in enumerate(best):
        col = int(col)
        if col >= num_virtual:
            links[i] = int(antecedents[i, col - num_virtual])
        elif col == 1 and num_virtual == 2:
            virtual_single.add(i)
    linked = set(links) | set(links.values())
    singletons = set()
    if singleton_mode == "mentions" and mention_scores is not None:
        singletons = {i for i in range(len(scores)) if i not in linked and mention_scores[i] > 0}
    elif singleton_mode in ("dummy", "mask", "separate"):
        singletons = virtual_single - linked
    return links, singletons


def build_clusters(links: Mapping[Hashable, Hashable], singletons: Iterable[Hashable] = ()) -> list[list]:
    """Transitive closure of antecedent links, plus the given stand-alone items."""
    uf = UnionFind()
    for a, b in links.items():
        uf.union(a, b)
    for s in singletons:
        uf.add(s)
    return uf.groups()


@dataclass
class OverlapPlan:
    windows: list[tuple[int, int]]  # inclusive (first_segment, last_segment)
    mode: str = "none"
    filter_seen: bool = False

    def new_segments(self, k: int) -> tuple[int, int]:
        """Inclusive range of segments window ``k`` adds over window ``k - 1``."""
        first, last = self.windows[k]
        if k:
            first = max(first, self.windows[k - 1][1] + 1)
        return first, last


def plan_overlap(num_segments: int, max_segments: int, mode: str = "none",
                 filter_seen: bool = False) -> OverlapPlan:
    """Split ``num_segments`` into windows of at most ``max_segments``.

    ``none`` gives disjoint chunks, ``min`` shares one segment between
    consecutive windows, ``max`` advances by a single segment.
    """
    if num_segments < 1:
        raise ValueError("num_segments must be >= 1")
    if mode not in ("none", "min", "max"):
        raise ValueError(f"unknown overlap mode {mode!r}")
    if mode != "none" and max_segments < 2:
        raise ValueError("overlapping windows need max_segments >= 2")
    if max_segments < 1:
        raise ValueError("max_segments must be >= 1")
    stride = {"none": max_segments, "min": max_segments - 1, "max": 1}[mode]
    windows = []
    start = 0
    while True:
        end = min(start + max_segments, num_segments) - 1
        windows.append((start, end))
        if end == num_segments - 1:
            break
        start += stride
    return OverlapPlan(windows, mode, filter_seen)


def merge_overlapping_clusters(examples: Sequence[ClusterSet], plan: OverlapPlan,
                               segment_of: Callable[[Mention], int],
                               filter_seen: Optional[bool] = None) -> ClusterSet:
    """Union the clusters of consecutive windows through shared mentions.

    Mentions are identified by their node sets. With ``filter_seen`` a
    cluster of a later window is ignored unless one of its mentions ends in
    a segment that the previous window did not cover. ``segment_of`` maps a
    mention to the segment of its last node.
    """
    if filter_seen is None:
        filter_seen = plan.filter_seen
    if len(examples) == 1:
        return ClusterSet([list(c) for c in examples[0].clusters], dict(examples[0].provenance))
    uf = UnionFind()
    first_seen: dict[tuple, Mention] = {}
    provenance: dict[tuple, int] = {}
    for k, ex in enumerate(examples):
        lo, _ = plan.new_segments(k)
        for cluster in ex.clusters:
            if filter_seen and k and not any(segment_of(m) >= lo for m in cluster):
                continue
            for m in cluster:
                first_seen.setdefault(m.nodes, m)
                provenance.setdefault(m.nodes, k)
                uf.add(m.nodes)
            for m in cluster[1:]:
                uf.union(cluster[0].nodes, m.nodes)
    clusters = [[first_seen[n] for n in g] for g in uf.groups()]
    return ClusterSet(clusters, provenance)
