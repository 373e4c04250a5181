"""In-memory representation of CorefUD documents.

A document is a flat sequence of nodes (regular words and empty nodes) split
into sentences, with a dependency tree per sentence and a list of entities,
each entity being a cluster of mentions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional, Union

log = logging.getLogger(__name__)


class NodeId(NamedTuple):
    """Position of a node; tuple ordering is document order.

    ``token_index`` is the CoNLL-U integer id (1-based for words). Empty
    node ``t.k`` has ``token_index=t`` and ``empty_suffix=k``.
    """

    sentence_index: int
    token_index: int
    empty_suffix: int = 0

    @property
    def is_empty(self) -> bool:
        return self.empty_suffix > 0

    def conllu_id(self) -> str:
        if self.empty_suffix:
            return f"{self.token_index}.{self.empty_suffix}"
        return str(self.token_index)


class _Root:
    __slots__ = ()

    def __repr__(self) -> str:
        return "ROOT"

    def __reduce__(self):
        return "ROOT"


ROOT = _Root()

Head = Union[NodeId, _Root]


@dataclass
class Node:
    id: NodeId
    form: str
    head: Head
    deprel: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    deps: str = "_"
    misc: str = "_"  # MISC without the Entity attribute

    @property
    def is_empty(self) -> bool:
        return self.id.is_empty


@dataclass(frozen=True)
class Mention:
    nodes: tuple[NodeId, ...]
    head: NodeId
    # opaque bracket attributes (text after the entity id), kept for round trips
    attrs: str = ""

    def __post_init__(self):
        if not isinstance(self.nodes, tuple):
            object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def first(self) -> NodeId:
        return self.nodes[0]

    @property
    def last(self) -> NodeId:
        return self.nodes[-1]

    @property
    def sort_key(self) -> tuple[NodeId, NodeId]:
        return (self.nodes[0], self.nodes[-1])

    @property
    def is_zero(self) -> bool:
        return all(n.is_empty for n in self.nodes)


@dataclass
class Entity:
    id: str
    mentions: list[Mention]

    @property
    def is_singleton(self) -> bool:
        return len(self.mentions) == 1


@dataclass
class Document:
    doc_id: str
    nodes: list[Node]
    sentence_boundaries: list[int]  # start offset of each sentence in ``nodes``
    entities: list[Entity] = field(default_factory=list)
    # raw comment lines per sentence, "# newdoc" excluded
    comments: list[list[str]] = field(default_factory=list)
    # raw multiword-token lines, emitted before the node they precede
    multiword: dict[NodeId, str] = field(default_factory=dict)

    @property
    def num_words(self) -> int:
        return sum(1 for n in self.nodes if not n.is_empty)

    @property
    def num_sentences(self) -> int:
        return len(self.sentence_boundaries)

    @property
    def mentions(self) -> list[Mention]:
        return [m for e in self.entities for m in e.mentions]

    def sentence_ranges(self) -> list[tuple[int, int]]:
        """Half-open ``(start, end)`` node offsets of each sentence."""
        ends = self.sentence_boundaries[1:] + [len(self.nodes)]
        return list(zip(self.sentence_boundaries, ends))

    @cached_property
    def index(self) -> dict[NodeId, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def sentence_of(self) -> list[int]:
        out = [0] * len(self.nodes)
        for s, (a, b) in enumerate(self.sentence_ranges()):
            for i in range(a, b):
                out[i] = s
        return out

    @cached_property
    def children(self) -> dict[NodeId, list[NodeId]]:
        kids: dict[NodeId, list[NodeId]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.head is not ROOT and n.head in kids:
                kids[n.head].append(n.id)
        return kids

    @cached_property
    def depth(self) -> dict[NodeId, int]:
        """Edges to ROOT; a node attached to ROOT has depth 1.

        Nodes on a cycle get a depth larger than the node count.
        """
        depth: dict[NodeId, int] = {}
        limit = len(self.nodes) + 1
        for n in self.nodes:
            chain = []
            cur: Head = n.id
            while cur is not ROOT and cur not in depth and len(chain) <= limit:
                chain.append(cur)
                node = self.node(cur)
                cur = node.head if node is not None else ROOT
            base = 0 if cur is ROOT else depth.get(cur, limit)
            for k, nid in enumerate(reversed(chain), start=1):
                depth[nid] = base + k
        return depth

    def node(self, nid: NodeId) -> Optional[Node]:
        i = self.index.get(nid)
        return None if i is None else self.nodes[i]

    def subdocument(self, start: int, end: int, doc_id: Optional[str] = None) -> "Document":
        """Nodes ``[start, end)`` (sentence aligned) with entities restricted to it.

        Mentions not fully inside the window are dropped; entities left
        without mentions disappear. Node ids are kept as they are.
        """
        keep = {n.id for n in self.nodes[start:end]}
        bounds = [b - start for b in self.sentence_boundaries if start <= b < end]
        first_sent = next(i for i, b in enumerate(self.sentence_boundaries) if b >= start)
        comments = self.comments[first_sent:first_sent + len(bounds)] if self.comments else []
        entities = []
        for e in self.entities:
            ms = [m for m in e.mentions if all(n in keep for n in m.nodes)]
            if ms:
                entities.append(Entity(e.id, ms))
        multiword = {k: v for k, v in self.multiword.items() if k in keep}
        return Document(doc_id or self.doc_id, self.nodes[start:end], bounds, entities, comments, multiword)

    def with_entities(self, entities: list[Entity]) -> "Document":
        return Document(self.doc_id, self.nodes, self.sentence_boundaries, entities, self.comments,
                        self.multiword)


def is_contiguous(doc: Document, mention: Mention) -> bool:
    """True if the mention nodes form one run in the node sequence."""
    idx = [doc.index[n] for n in mention.nodes]
    return idx[-1] - idx[0] + 1 == len(idx)


def validate_document(doc: Document) -> list[str]:
    """Return a description of every broken invariant (empty if none)."""
    errors: list[str] = []
    seen: set[NodeId] = set()
    prev: Optional[NodeId] = None
    for n in doc.nodes:
        if n.id in seen:
            errors.append(f"node {n.id.conllu_id()} (sentence {n.id.sentence_index}): duplicate node id")
        seen.add(n.id)
        if prev is not None and n.id <= prev:
            errors.append(f"node {n.id.conllu_id()} (sentence {n.id.sentence_index}): out of document order")
        prev = n.id
        if min(n.id) < 0:
            errors.append(f"node {n.id}: negative index")

    bounds = doc.sentence_boundaries
    if doc.nodes and (not bounds or bounds[0] != 0):
        errors.append("sentence boundaries must start at offset 0")
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) or (bounds and bounds[-1] >= max(len(doc.nodes), 1)):
        errors.append("sentence boundaries must be strictly increasing offsets inside the document")
    else:
        for s, (a, b) in enumerate(doc.sentence_ranges()):
            labels = {doc.nodes[i].id.sentence_index for i in range(a, b)}
            if len(labels) > 1:
                errors.append(f"sentence {s}: nodes carry different sentence indices {sorted(labels)}")

    for n in doc.nodes:
        if n.head is ROOT:
            continue
        if n.head not in doc.index:
            errors.append(f"node {n.id.conllu_id()} (sentence {n.id.sentence_index}): head {n.head} does not exist")
        elif n.head.sentence_index != n.id.sentence_index:
            errors.append(f"node {n.id.conllu_id()} (sentence {n.id.sentence_index}): head in another sentence")
        elif n.head == n.id:
            errors.append(f"node {n.id.conllu_id()} (sentence {n.id.sentence_index}): cycle (self-loop)")

    for cyc in _find_cycles(doc):
        names = " -> ".join(c.conllu_id() for c in cyc)
        errors.append(f"sentence {cyc[0].sentence_index}: dependency cycle {names}")

    for e in doc.entities:
        if not e.mentions:
            errors.append(f"entity {e.id}: no mentions")
        node_sets = set()
        for k, m in enumerate(e.mentions):
            where = f"entity {e.id} mention {k}"
            if not m.nodes:
                errors.append(f"{where}: empty node list")
                continue
            if any(a >= b for a, b in zip(m.nodes, m.nodes[1:])):
                errors.append(f"{where}: nodes not in document order or duplicated")
            missing = [x for x in m.nodes if x not in doc.index]
            if missing:
                errors.append(f"{where}: nodes {[x.conllu_id() for x in missing]} do not exist")
            if m.head not in m.nodes:
                errors.append(f"{where}: head {m.head} not among mention nodes")
            key = frozenset(m.nodes)
            if key in node_sets:
                errors.append(f"{where}: duplicate mention (same node set) within entity")
            node_sets.add(key)
            if len({x.sentence_index for x in m.nodes}) > 1:
                log.warning("%s spans several sentences", where)
    return errors


def _find_cycles(doc: Document) -> list[list[NodeId]]:
    color: dict[NodeId, int] = {}
    cycles = []
    for n in doc.nodes:
        path: list[NodeId] = []
        cur: Head = n.id
        while cur is not ROOT and cur in doc.index and color.get(cur, 0) == 0:
            color[cur] = 1
            path.append(cur)
            cur = doc.nodes[doc.index[cur]].head
        if cur is not ROOT and color.get(cur) == 1 and cur in path:
            cycles.append(path[path.index(cur):])
        for p in path:
            color[p] = 2
    return cycles


def mention_is_single_subtree(doc: Document, m: Mention) -> bool:
    """True iff the mention is exactly its head plus all head descendants."""
    if m.head not in doc.index:
        raise KeyError(f"mention head {m.head} not in document {doc.doc_id}")
    return set(m.nodes) == set(descendants(doc, m.head))


def descendants(doc: Document, nid: NodeId) -> list[NodeId]:
    """``nid`` and everything below it, in document order."""
    out, stack = [], [nid]
    seen = set()
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        out.append(cur)
        stack.extend(doc.children.get(cur, ()))
    return sorted(out)
