"""Synthetic corpora with a coreference pattern that is solvable by lookup.

Every entity draws a class ``k`` (distinct within a document). Its first
mention is the name token ``N{k}`` and later mentions are the pronoun
``P{k}``. Everything else is filler ``w{r}``. Each sentence is a chain of
filler tokens (the first one is the root) with mention tokens attached as
leaves of the nearest filler.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .model import ROOT, Document, Entity, Mention, Node, NodeId


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = 40          # number of entity classes (name/pronoun pairs)
    filler_size: int = 40
    documents: int = 200
    sentences_per_doc: int = 6
    sentence_length: int = 8
    entities_per_doc: int = 4
    max_mentions: int = 3         # mentions of a non-singleton entity: 2..max_mentions
    singleton_rate: float = 0.0
    cross_segment_rate: float = 0.0
    cross_segment_gap: int = 4    # segments spanned by a cross-segment chain
    segment_length: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.entities_per_doc > self.vocab_size:
            raise ValueError("entities_per_doc cannot exceed vocab_size")
        if self.sentence_length < 2 or self.sentences_per_doc < 1:
            raise ValueError("need sentence_length >= 2 and sentences_per_doc >= 1")
        if self.max_mentions < 2:
            raise ValueError("max_mentions must be >= 2")
        if not (0 <= self.singleton_rate <= 1 and 0 <= self.cross_segment_rate <= 1):
            raise ValueError("rates must lie in [0, 1]")
        slots = self.sentences_per_doc * (self.sentence_length - 1)
        if self.entities_per_doc * self.max_mentions > slots:
            raise ValueError("documents too short for the requested mentions")


def _slots_by_segment(spec: SynthSpec) -> list[list[int]]:
    """Mention slots grouped by the segment their sentence lands in."""
    per_seg = max(1, spec.segment_length // spec.sentence_length)
    groups: list[list[int]] = []
    for s in range(spec.sentences_per_doc):
        if s % per_seg == 0:
            groups.append([])
        base = s * spec.sentence_length
        groups[-1].extend(base + t for t in range(spec.sentence_length - 1))
    return groups


def _place(spec: SynthSpec, rng: random.Random, sizes: list[int], cross: list[bool]) -> list[list[int]]:
    segs = _slots_by_segment(spec)
    free = set(s for g in segs for s in g)
    out: list[list[int]] = [[] for _ in sizes]
    # cross-segment chains first: one mention in each of gap + 1 consecutive segments
    for e, size in enumerate(sizes):
        if not cross[e]:
            continue
        gap = spec.cross_segment_gap
        starts = [s0 for s0 in range(len(segs) - gap)
                  if all(free & set(segs[s0 + d]) for d in range(gap + 1))]
        if not starts:
            cross[e] = False
            continue
        s0 = rng.choice(starts)
        for d in range(gap + 1):
            slot = rng.choice(sorted(free & set(segs[s0 + d])))
            free.discard(slot)
            out[e].append(slot)
    for e, size in enumerate(sizes):
        if cross[e]:
            continue
        picked = rng.sample(sorted(free), size)
        free.difference_update(picked)
        out[e] = sorted(picked)
    return out


def generate_document(spec: SynthSpec, rng: random.Random, doc_id: str) -> Document:
    classes = rng.sample(range(spec.vocab_size), spec.entities_per_doc)
    sizes, cross = [], []
    for _ in classes:
        single = rng.random() < spec.singleton_rate
        sizes.append(1 if single else rng.randint(2, spec.max_mentions))
        cross.append(not single and rng.random() < spec.cross_segment_rate)
    placement = _place(spec, rng, sizes, cross)

    L = spec.sentence_length
    total = spec.sentences_per_doc * L
    owner: dict[int, tuple[int, bool]] = {}
    for e, slots in enumerate(placement):
        for rank, slot in enumerate(sorted(slots)):
            owner[slot] = (e, rank == 0)

    nodes: list[Node] = []
    for s in range(spec.sentences_per_doc):
        fillers = [t for t in range(L) if s * L + t not in owner]
        for t in range(L):
            pos = s * L + t
            nid = NodeId(s, t + 1)
            if pos in owner:
                e, first = owner[pos]
                form = f"{'N' if first else 'P'}{classes[e]}"
                anchor = min(fillers, key=lambda f: (abs(f - t), f))
                nodes.append(Node(nid, form, NodeId(s, anchor + 1), "nmod", upos="PROPN" if first else "PRON"))
            else:
                prev = [f for f in fillers if f < t]
                head = NodeId(s, prev[-1] + 1) if prev else ROOT
                nodes.append(Node(nid, f"w{rng.randrange(spec.filler_size)}", head,
                                  "dep" if prev else "root", upos="X"))
    entities = []
    for e, slots in enumerate(placement):
        ms = []
        for slot in sorted(slots):
            nid = NodeId(slot // L, slot % L + 1)
            ms.append(Mention((nid,), nid))
        entities.append(Entity(f"e{e + 1}", ms))
    entities.sort(key=lambda en: en.mentions[0].sort_key)
    bounds = list(range(0, total, L))
    comments = [[f"# sent_id = {doc_id}-{s + 1}"] for s in range(spec.sentences_per_doc)]
    return Document(doc_id, nodes, bounds, entities, comments)


def generate(spec: SynthSpec) -> list[Document]:
    """Deterministic corpus for ``spec.seed``; gold entities are attached to each document."""
    rng = random.Random(spec.seed)
    return [generate_document(spec, rng, f"synth{spec.seed}-{i}") for i in range(spec.documents)]


def oracle_predict(doc: Document) -> Document:
    """Lookup baseline: tokens of one class form a cluster.

    Linking every pronoun to the nearest preceding token of its class and
    taking the transitive closure gives the same grouping. A lone name is
    a singleton; a lone pronoun (its antecedent out of view) is dropped.
    """
    groups: dict[str, list[Node]] = {}
    for n in doc.nodes:
        if n.form[:1] in ("N", "P") and n.form[1:].isdigit():
            groups.setdefault(n.form[1:], []).append(n)
    entities = []
    for k, ns in groups.items():
        if len(ns) > 1 or ns[0].form[0] == "N":
            entities.append([Mention((x.id,), x.id) for x in ns])
    entities.sort(key=lambda ms: ms[0].sort_key)
    return doc.with_entities([Entity(f"e{i + 1}", ms) for i, ms in enumerate(entities)])
