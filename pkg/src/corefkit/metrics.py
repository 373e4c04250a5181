"""Coreference evaluation: MUC, B-cubed, CEAF-m/e and related measures.

All counting is done with integers and :class:`fractions.Fraction`, so the
reported floats are the correctly rounded values of the exact ratios.
Entities are passed around as lists of mention keys; a key is the head
``NodeId`` under head matching or the full node tuple under exact matching.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence, Union

from .model import Document, Mention
from .segments import segment_document, segment_index

log = logging.getLogger(__name__)

Key = Hashable
Entities = list[list[Key]]

METRICS = ("MUC", "B3", "CEAF-m", "CEAF-e")


def _div(a, b) -> Fraction:
    return Fraction(0) if b == 0 else Fraction(a) / Fraction(b)


def f1(p, r) -> Fraction:
    p, r = Fraction(p), Fraction(r)
    return Fraction(0) if p + r == 0 else 2 * p * r / (p + r)


@dataclass
class Counts:
    """Precision and recall as numerator/denominator pairs (micro-summable)."""

    p_num: Fraction = Fraction(0)
    p_den: Fraction = Fraction(0)
    r_num: Fraction = Fraction(0)
    r_den: Fraction = Fraction(0)

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.p_num + other.p_num, self.p_den + other.p_den,
                      self.r_num + other.r_num, self.r_den + other.r_den)

    @property
    def precision(self) -> Fraction:
        return _div(self.p_num, self.p_den)

    @property
    def recall(self) -> Fraction:
        return _div(self.r_num, self.r_den)

    @property
    def f1(self) -> Fraction:
        return f1(self.precision, self.recall)

    def prf(self) -> tuple[float, float, float]:
        return float(self.precision), float(self.recall), float(self.f1)


# ---------------------------------------------------------------------------
# mention alignment


def mention_key(m: Mention, match: str) -> Key:
    if match == "head":
        return m.head
    if match == "exact":
        return m.nodes
    raise ValueError(f"unknown match mode {match!r}")


def entity_keys(doc: Document, match: str = "head") -> Entities:
    """Entities of ``doc`` as key lists; a key shared by several mentions is kept once.

    Mentions are visited in document order and the earliest mention with a
    given key wins, so later mentions sharing that key are dropped.
    """
    visits = []
    for ei, e in enumerate(doc.entities):
        for m in e.mentions:
            visits.append((m.sort_key, m.nodes, ei, m))
    visits.sort(key=lambda v: (v[0], v[1], v[2]))
    owner: dict[Key, int] = {}
    out: list[list[Key]] = [[] for _ in doc.entities]
    for _, _, ei, m in visits:
        k = mention_key(m, match)
        if k in owner:
            if owner[k] == ei:
                log.warning("doc %s entity %s: duplicate mention key %s, deduplicated",
                            doc.doc_id, doc.entities[ei].id, k)
            continue
        owner[k] = ei
        out[ei].append(k)
    return [e for e in out if e]


def prepare_for_scoring(gold: Document, system: Document, match: str = "head",
                        keep_singletons: bool = False,
                        collapse_first: bool = True) -> tuple[Entities, Entities]:
    """Key both sides and drop singleton entities unless ``keep_singletons``.

    With ``collapse_first`` (default) singletons are removed after mentions
    sharing a key are collapsed; otherwise entities with a single mention are
    removed before collapsing.
    """
    sides = []
    for doc in (gold, system):
        if not keep_singletons and not collapse_first:
            doc = doc.with_entities([e for e in doc.entities if len(e.mentions) > 1])
        ents = entity_keys(doc, match)
        if not keep_singletons and collapse_first:
            ents = [e for e in ents if len(e) > 1]
        sides.append(ents)
    return sides[0], sides[1]


# ---------------------------------------------------------------------------
# link, mention and entity based metrics


def _muc_side(key: Entities, response: Entities) -> tuple[int, int]:
    owner = {k: i for i, e in enumerate(response) for k in e}
    num = den = 0
    for e in key:
        parts = set()
        unmatched = 0
        for k in e:
            if k in owner:
                parts.add(owner[k])
            else:
                unmatched += 1
        num += len(e) - (len(parts) + unmatched)
        den += len(e) - 1
    return num, den


def muc_counts(gold: Entities, system: Entities) -> Counts:
    r_num, r_den = _muc_side(gold, system)
    p_num, p_den = _muc_side(system, gold)
    return Counts(Fraction(p_num), Fraction(p_den), Fraction(r_num), Fraction(r_den))


def muc(gold: Entities, system: Entities) -> tuple[float, float, float]:
    return muc_counts(gold, system).prf()


def _b3_side(key: Entities, response: Entities) -> tuple[Fraction, int]:
    owner = {k: set(e) for e in response for k in e}
    num = Fraction(0)
    den = 0
    for e in key:
        es = set(e)
        for k in e:
            other = owner.get(k)
            if other is not None:
                num += Fraction(len(es & other), len(es))
            den += 1
    return num, den


def b_cubed_counts(gold: Entities, system: Entities) -> Counts:
    r_num, r_den = _b3_side(gold, system)
    p_num, p_den = _b3_side(system, gold)
    return Counts(p_num, Fraction(p_den), r_num, Fraction(r_den))


def b_cubed(gold: Entities, system: Entities) -> tuple[float, float, float]:
    return b_cubed_counts(gold, system).prf()


def _phi(g: set, s: set, similarity: str) -> Fraction:
    common = len(g & s)
    if similarity == "mention-count":
        return Fraction(common)
    if similarity == "entity-F1":
        return Fraction(2 * common, len(g) + len(s))
    raise ValueError(f"unknown CEAF similarity {similarity!r}")


def kuhn_munkres(cost: Sequence[Sequence]) -> list[int]:
    """Minimum-cost assignment of every row to a distinct column (rows <= columns).

    Shortest augmenting path form of the Hungarian method with row/column
    potentials, O(n^2 m). Works with any ordered numeric type, including
    ``Fraction``, so optimal totals are exact. Returns ``col[i]`` per row.
    """
    n = len(cost)
    if n == 0:
        return []
    m = len(cost[0])
    if n > m:
        raise ValueError("kuhn_munkres needs rows <= columns; transpose the matrix")
    inf = float("inf")
    u = [0] * (n + 1)
    v = [0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row matched to column j (1-based, 0 = free)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta, j1 = inf, 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta, j1 = minv[j], j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = [0] * n
    for j in range(1, m + 1):
        if p[j]:
            col[p[j] - 1] = j - 1
    return col


def optimal_alignment(gold: Entities, system: Entities, similarity: str) -> tuple[Fraction, list[tuple[int, int]]]:
    """Best one-to-one entity alignment: (total similarity, [(gold idx, system idx)])."""
    if not gold or not system:
        return Fraction(0), []
    gs, ss = [set(e) for e in gold], [set(e) for e in system]
    sim = [[_phi(g, s, similarity) for s in ss] for g in gs]
    if len(gs) <= len(ss):
        col = kuhn_munkres([[-x for x in row] for row in sim])
        pairs = list(enumerate(col))
    else:
        col = kuhn_munkres([[-sim[i][j] for i in range(len(gs))] for j in range(len(ss))])
        pairs = sorted((i, j) for j, i in enumerate(col))
    total = sum((sim[i][j] for i, j in pairs), Fraction(0))
    return total, pairs


def ceaf_counts(gold: Entities, system: Entities, similarity: str = "entity-F1") -> Counts:
    total, _ = optimal_alignment(gold, system, similarity)
    p_den = sum((_phi(set(s), set(s), similarity) for s in system), Fraction(0))
    r_den = sum((_phi(set(g), set(g), similarity) for g in gold), Fraction(0))
    return Counts(total, p_den, total, r_den)


def ceaf(gold: Entities, system: Entities, similarity: str = "entity-F1") -> tuple[float, float, float]:
    return ceaf_counts(gold, system, similarity).prf()


def brute_force_alignment(gold: Entities, system: Entities, similarity: str) -> Fraction:
    """Exhaustive search over all one-to-one alignments (oracle for small inputs)."""
    gs, ss = [set(e) for e in gold], [set(e) for e in system]
    if len(gs) > len(ss):
        gs, ss = ss, gs
    best = Fraction(0)
    for perm in itertools.permutations(range(len(ss)), len(gs)):
        best = max(best, sum((_phi(gs[i], ss[j], similarity) for i, j in enumerate(perm)), Fraction(0)))
    return best


def document_counts(gold: Entities, system: Entities) -> dict[str, Counts]:
    return {
        "MUC": muc_counts(gold, system),
        "B3": b_cubed_counts(gold, system),
        "CEAF-m": ceaf_counts(gold, system, "mention-count"),
        "CEAF-e": ceaf_counts(gold, system, "entity-F1"),
    }


# ---------------------------------------------------------------------------
# corpus level report


@dataclass
class MetricReport:
    scores: dict[str, tuple[float, float, float]] = field(default_factory=dict)  # metric -> (P, R, F1)
    primary: float = 0.0

    @classmethod
    def from_counts(cls, counts: dict[str, Counts]) -> "MetricReport":
        scores = {name: counts[name].prf() for name in METRICS}
        primary = (counts["MUC"].f1 + counts["B3"].f1 + counts["CEAF-e"].f1) / 3
        return cls(scores, float(primary))

    def to_rows(self) -> str:
        lines = ["metric\tP\tR\tF1"]
        for name in METRICS:
            p, r, f = self.scores[name]
            lines.append(f"{name}\t{p!r}\t{r!r}\t{f!r}")
        lines.append(f"primary\t\t\t{self.primary!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_rows(cls, text: str) -> "MetricReport":
        scores = {}
        primary = 0.0
        for line in text.strip().splitlines()[1:]:
            cols = line.split("\t")
            if cols[0] == "primary":
                primary = float(cols[3])
            else:
                scores[cols[0]] = (float(cols[1]), float(cols[2]), float(cols[3]))
        return cls(scores, primary)

    def to_table(self) -> str:
        lines = [f"{'metric':<8} {'P':>8} {'R':>8} {'F1':>8}"]
        for name in METRICS:
            p, r, f = self.scores[name]
            lines.append(f"{name:<8} {100 * p:8.2f} {100 * r:8.2f} {100 * f:8.2f}")
        lines.append(f"{'primary':<8} {'':>8} {'':>8} {100 * self.primary:8.2f}")
        return "\n".join(lines)


def pair_documents(gold: Iterable[Document], system: Iterable[Document]) -> list[tuple[Document, Document]]:
    g = {d.doc_id: d for d in gold}
    s = {d.doc_id: d for d in system}
    missing_sys = sorted(set(g) - set(s))
    missing_gold = sorted(set(s) - set(g))
    if missing_sys or missing_gold:
        raise ValueError(f"document ids differ: missing in system {missing_sys}, missing in gold {missing_gold}")
    return [(g[k], s[k]) for k in g]


def corpus_counts(gold: Iterable[Document], system: Iterable[Document], match: str = "head",
                  keep_singletons: bool = False, collapse_first: bool = True) -> dict[str, Counts]:
    total = {name: Counts() for name in METRICS}
    for gd, sd in pair_documents(gold, system):
        ge, se = prepare_for_scoring(gd, sd, match, keep_singletons, collapse_first)
        for name, c in document_counts(ge, se).items():
            total[name] = total[name] + c
    return total


def primary_score(gold: Iterable[Document], system: Iterable[Document], match: str = "head",
                  keep_singletons: bool = False, collapse_first: bool = True) -> MetricReport:
    """Micro-averaged metrics over paired documents; primary = mean F1 of MUC, B3, CEAF-e."""
    return MetricReport.from_counts(corpus_counts(gold, system, match, keep_singletons, collapse_first))


def mention_scores(gold: Iterable[Document], system: Iterable[Document], match: str = "head",
                   singletons_only: bool = False) -> tuple[float, float, float]:
    """Mention detection P/R/F1 over keys (optionally only singleton entities)."""
    tp = n_gold = n_sys = 0
    for gd, sd in pair_documents(gold, system):
        sides = []
        for doc in (gd, sd):
            ents = entity_keys(doc, match)
            if singletons_only:
                ents = [e for e in ents if len(e) == 1]
            sides.append({k for e in ents for k in e})
        tp += len(sides[0] & sides[1])
        n_gold += len(sides[0])
        n_sys += len(sides[1])
    p, r = _div(tp, n_sys), _div(tp, n_gold)
    return float(p), float(r), float(f1(p, r))


# ---------------------------------------------------------------------------
# mention overlap and long-distance statistics


def _mor_counts(gold: Document, system: Document) -> tuple[int, int]:
    by_head: dict = {}
    for m in sorted(system.mentions, key=lambda m: (m.sort_key, m.nodes)):
        by_head.setdefault(m.head, []).append(m)
    overlap = total = 0
    for g in sorted(gold.mentions, key=lambda m: (m.sort_key, m.nodes)):
        total += len(g.nodes)
        cands = by_head.get(g.head)
        if cands:
            s = cands.pop(0)
            overlap += len(set(g.nodes) & set(s.nodes))
    return overlap, total


def mention_overlap_ratio(gold: Union[Document, Iterable[Document]],
                          system: Union[Document, Iterable[Document]]) -> float:
    """Share of gold mention tokens covered by the system mention matched on the same head.

    Gold mentions are visited in document order and each takes the earliest
    unused system mention with the same head.
    """
    if isinstance(gold, Document):
        pairs = [(gold, system)]
    else:
        pairs = pair_documents(gold, system)
    overlap = total = 0
    for gd, sd in pairs:
        o, t = _mor_counts(gd, sd)
        overlap += o
        total += t
    return float(_div(overlap, total))


def _mention_blocks(doc: Document, n: int, segment_length: int):
    segments = segment_document(doc, segment_length)
    seg = segment_index(segments, len(doc.nodes))
    return segments, (lambda m: seg[doc.index[m.nodes[0]]] // n)


def cross_segment_stats(doc: Document, n: int, segment_length: int = 512) -> tuple[float, float, float]:
    """Percentages of (links crossing N-segment blocks, mentions whose nearest
    antecedent is in another block, segments beyond the first block).

    A link is any pair of mentions of one entity; a mention belongs to the
    block of its first node.
    """
    segments, block = _mention_blocks(doc, n, segment_length)
    links = crossing = with_ante = nearest_cross = 0
    for e in doc.entities:
        ms = sorted(e.mentions, key=lambda m: (m.sort_key, m.nodes))
        blocks = [block(m) for m in ms]
        for i in range(len(ms)):
            for j in range(i):
                links += 1
                crossing += blocks[i] != blocks[j]
            if i:
                with_ante += 1
                nearest_cross += blocks[i] != blocks[i - 1]
    over = max(0, len(segments) - n)
    return (float(100 * _div(crossing, links)), float(100 * _div(nearest_cross, with_ante)),
            float(100 * _div(over, len(segments))))


def cross_segment_link_counts(gold: Document, system: Document, n: int, segment_length: int = 512,
                              match: str = "head") -> tuple[int, int]:
    """(recovered, total) gold links that cross an N-segment block boundary.

    A gold link counts as recovered when both mention keys sit in one
    system entity.
    """
    _, block = _mention_blocks(gold, n, segment_length)
    owner = {k: i for i, e in enumerate(entity_keys(system, match)) for k in e}
    hit = total = 0
    for e in gold.entities:
        ms = e.mentions
        for i in range(len(ms)):
            for j in range(i):
                if block(ms[i]) == block(ms[j]):
                    continue
                total += 1
                a, b = mention_key(ms[i], match), mention_key(ms[j], match)
                hit += a in owner and owner.get(b) == owner[a]
    return hit, total
