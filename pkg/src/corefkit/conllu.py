"""Reader and writer for CoNLL-U files with CorefUD ``Entity=`` annotations."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .model import ROOT, Document, Entity, Mention, Node, NodeId
from .syntax import select_head

log = logging.getLogger(__name__)

GLOBAL_ENTITY = "# global.Entity = eid-etype-head-other-infstat-minspan-link-identity"

_ID_RE = re.compile(r"^(\d+)(?:\.(\d+))?$")
_MWT_RE = re.compile(r"^\d+-\d+$")
_SUBSPAN_RE = re.compile(r"\[(\d+)/(\d+)\]")


class ConlluError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class EntityEvent:
    kind: str  # "open" | "close" | "single"
    entity_id: str
    subspan: Optional[tuple[int, int]] = None
    attrs: str = ""  # raw text after the id, e.g. "-person-1"


def parse_entity_events(value: str) -> list[EntityEvent]:
    """Decode the value of an ``Entity=`` MISC attribute into bracket events."""
    events = []
    i, n = 0, len(value)

    def read_id(j):
        k = j
        while k < n and value[k] not in "-[()":
            k += 1
        if k == j:
            raise ConlluError(f"empty entity id in {value!r}")
        return value[j:k], k

    def read_subspan(j):
        if j < n and value[j] == "[":
            m = _SUBSPAN_RE.match(value, j)
            if not m:
                raise ConlluError(f"malformed discontinuous part marker in {value!r}")
            k, total = int(m.group(1)), int(m.group(2))
            if not 1 <= k <= total:
                raise ConlluError(f"part {k}/{total} out of range in {value!r}")
            return (k, total), m.end()
        return None, j

    while i < n:
        if value[i] == "(":
            eid, i = read_id(i + 1)
            sub, i = read_subspan(i)
            j = i
            while j < n and value[j] not in "()":
                j += 1
            attrs = value[i:j]
            if attrs and not attrs.startswith("-"):
                raise ConlluError(f"unexpected text {attrs!r} in {value!r}")
            i = j
            if i < n and value[i] == ")":
                events.append(EntityEvent("single", eid, sub, attrs))
                i += 1
            else:
                events.append(EntityEvent("open", eid, sub, attrs))
        else:
            eid, i = read_id(i)
            sub, i = read_subspan(i)
            if i >= n or value[i] != ")":
                raise ConlluError(f"expected ')' after {eid!r} in {value!r}")
            events.append(EntityEvent("close", eid, sub))
            i += 1
    return events


def _parse_id(text: str, sent: int, lineno: int) -> NodeId:
    m = _ID_RE.match(text)
    if not m:
        raise ConlluError(f"malformed node id {text!r}", lineno)
    return NodeId(sent, int(m.group(1)), int(m.group(2) or 0))


@dataclass
class _Part:
    eid: str
    start: int
    subspan: Optional[tuple[int, int]]
    attrs: str
    line: int


@dataclass
class _DocBuilder:
    doc_id: str
    nodes: list[Node] = field(default_factory=list)
    bounds: list[int] = field(default_factory=list)
    comments: list[list[str]] = field(default_factory=list)
    mwt: dict[int, str] = field(default_factory=dict)
    open: dict[str, list[_Part]] = field(default_factory=dict)
    pending: dict[str, list[list]] = field(default_factory=dict)  # discontinuous: [indices, attrs, total, next_k]
    mentions: dict[str, list[tuple[list[int], str]]] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)

    def register(self, eid):
        if eid not in self.mentions:
            self.mentions[eid] = []
            self.order.append(eid)

    def add_part(self, eid, start, end, subspan, attrs, line):
        self.register(eid)
        idx = list(range(start, end + 1))
        if subspan is None:
            self.mentions[eid].append((idx, attrs))
            return
        k, total = subspan
        stack = self.pending.setdefault(eid, [])
        if k == 1:
            stack.append([idx, attrs, total, 2])
        else:
            cand = [p for p in stack if p[2] == total and p[3] == k]
            if not cand:
                raise ConlluError(f"entity {eid}: part {k}/{total} without preceding parts", line)
            p = cand[-1]
            p[0].extend(idx)
            p[3] += 1
        if k == total:
            p = [p for p in stack if p[2] == total and p[3] == total + 1][-1]
            stack.remove(p)
            self.mentions[eid].append((sorted(set(p[0])), p[1]))


class _Reader:
    def __init__(self, text: str):
        self.lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
        self.docs: list[Document] = []
        self.head_field: Optional[int] = None
        self.doc: Optional[_DocBuilder] = None
        self.sent_comments: list[str] = []
        self.sent_rows: list[tuple[int, list[str]]] = []

    def run(self) -> list[Document]:
        for lineno, line in enumerate(self.lines, start=1):
            if not line.strip():
                self.end_sentence()
                continue
            if line.startswith("#"):
                if self.sent_rows:
                    raise ConlluError("comment inside a sentence", lineno)
                self.comment(line, lineno)
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise ConlluError(f"expected 10 columns, found {len(cols)}", lineno)
            self.sent_rows.append((lineno, cols))
        self.end_sentence()
        self.end_document()
        return self.docs

    def comment(self, line, lineno):
        body = line[1:].strip()
        if body.startswith("newdoc"):
            self.end_document()
            m = re.match(r"newdoc\s+id\s*=\s*(.*)$", body)
            self.doc = _DocBuilder(m.group(1).strip() if m else f"doc{len(self.docs) + 1}")
            return
        if body.startswith("global.Entity"):
            fields = body.split("=", 1)[1].strip().split("-")
            self.head_field = fields.index("head") if "head" in fields else None
        self.sent_comments.append(line)

    def end_sentence(self):
        if not self.sent_rows:
            if self.sent_comments and self.doc is None:
                self.doc = _DocBuilder(f"doc{len(self.docs) + 1}")
            return
        if self.doc is None:
            self.doc = _DocBuilder(f"doc{len(self.docs) + 1}")
        d = self.doc
        sent = len(d.bounds)
        d.bounds.append(len(d.nodes))
        d.comments.append(self.sent_comments)
        self.sent_comments = []
        heads = []
        pending_mwt = None
        for lineno, cols in self.sent_rows:
            if _MWT_RE.match(cols[0]):
                pending_mwt = "\t".join(cols)
                continue
            nid = _parse_id(cols[0], sent, lineno)
            misc_items = [] if cols[9] == "_" else cols[9].split("|")
            entity_value = None
            rest = []
            for item in misc_items:
                if item.startswith("Entity="):
                    entity_value = item[len("Entity="):]
                else:
                    rest.append(item)
            if nid.is_empty:
                head_txt, deprel = "0", "_"
                if cols[8] != "_":
                    head_txt, _, deprel = cols[8].split("|")[0].partition(":")
            else:
                head_txt, deprel = cols[6], cols[7]
            if head_txt == "0":
                head = ROOT
            else:
                head = _parse_id(head_txt, sent, lineno)
                heads.append((head, lineno))
            node = Node(nid, cols[1], head, deprel, cols[2], cols[3], cols[4], cols[5], cols[8],
                        "|".join(rest) if rest else "_")
            pos = len(d.nodes)
            if pending_mwt is not None:
                d.mwt[pos] = pending_mwt
                pending_mwt = None
            d.nodes.append(node)
            if entity_value:
                try:
                    events = parse_entity_events(entity_value)
                except ConlluError as exc:
                    raise ConlluError(str(exc), lineno) from None
                self.apply(events, pos, lineno)
        ids = {n.id for n in d.nodes[d.bounds[-1]:]}
        for head, lineno in heads:
            if head not in ids:
                raise ConlluError(f"unknown head reference {head.conllu_id()}", lineno)
        self.sent_rows = []

    def apply(self, events: Iterable[EntityEvent], pos: int, lineno: int):
        d = self.doc
        for ev in events:
            if ev.kind == "single":
                d.add_part(ev.entity_id, pos, pos, ev.subspan, ev.attrs, lineno)
            elif ev.kind == "open":
                d.register(ev.entity_id)
                d.open.setdefault(ev.entity_id, []).append(_Part(ev.entity_id, pos, ev.subspan, ev.attrs, lineno))
            else:
                stack = d.open.get(ev.entity_id, [])
                match = next((k for k in range(len(stack) - 1, -1, -1) if stack[k].subspan == ev.subspan), None)
                if match is None:
                    raise ConlluError(f"closing bracket for {ev.entity_id} without opening", lineno)
                part = stack.pop(match)
                d.add_part(ev.entity_id, part.start, pos, part.subspan, part.attrs, lineno)

    def end_document(self):
        d = self.doc
        self.doc = None
        if d is None:
            return
        if not d.nodes:
            return
        for stack in d.open.values():
            if stack:
                raise ConlluError(f"unclosed mention of entity {stack[0].eid}", stack[0].line)
        for eid, stack in d.pending.items():
            if stack:
                raise ConlluError(f"entity {eid}: discontinuous mention is missing parts")
        doc = Document(d.doc_id, d.nodes, d.bounds, [], d.comments,
                       {d.nodes[i].id: line for i, line in d.mwt.items()})
        entities = []
        for eid in d.order:
            mentions = []
            for idx, attrs in d.mentions[eid]:
                nodes = tuple(d.nodes[i].id for i in idx)
                mentions.append(Mention(nodes, self.mention_head(doc, nodes, attrs), attrs))
            if mentions:
                mentions.sort(key=lambda m: (m.sort_key, m.nodes))
                entities.append(Entity(eid, mentions))
        entities.sort(key=lambda e: (e.mentions[0].sort_key, e.mentions[0].nodes, e.id))
        doc.entities = entities
        self.docs.append(doc)

    def mention_head(self, doc: Document, nodes: tuple[NodeId, ...], attrs: str) -> NodeId:
        if self.head_field is not None and attrs:
            fields = attrs[1:].split("-")
            k = self.head_field - 1
            if 0 <= k < len(fields) and fields[k].isdigit():
                h = int(fields[k])
                if 1 <= h <= len(nodes):
                    return nodes[h - 1]
                log.warning("head index %d outside mention in %s", h, doc.doc_id)
        return select_head(doc, nodes)


def parse_corpus(text: str) -> list[Document]:
    """Parse CoNLL-U text into documents (one per ``# newdoc`` block)."""
    return _Reader(text).run()


def read_corpus(path) -> list[Document]:
    with open(path, encoding="utf-8") as f:
        return parse_corpus(f.read())


def _parts(doc: Document, m: Mention) -> list[tuple[int, int]]:
    idx = [doc.index[n] for n in m.nodes]
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i != prev + 1:
            runs.append((start, prev))
            start = i
        prev = i
    runs.append((start, prev))
    return runs


def entity_columns(doc: Document) -> list[str]:
    """The ``Entity=`` value for every node ("" where nothing happens)."""
    parts = []  # (start, -end, entity rank, mention rank, k, eid, subspan, attrs)
    for ei, e in enumerate(doc.entities):
        for mi, m in enumerate(e.mentions):
            runs = _parts(doc, m)
            for k, (a, b) in enumerate(runs, start=1):
                sub = f"[{k}/{len(runs)}]" if len(runs) > 1 else ""
                parts.append((a, -b, ei, mi, k, e.id, sub, m.attrs if k == 1 else ""))
    parts.sort()
    opens: dict[int, list[str]] = {}
    closes: dict[int, list[tuple[int, str]]] = {}
    for rank, (a, neg_b, _, _, _, eid, sub, attrs) in enumerate(parts):
        b = -neg_b
        if a == b:
            opens.setdefault(a, []).append(f"({eid}{sub}{attrs})")
        else:
            opens.setdefault(a, []).append(f"({eid}{sub}{attrs}")
            closes.setdefault(b, []).append((rank, f"{eid}{sub})"))
    out = []
    for i in range(len(doc.nodes)):
        cl = [s for _, s in sorted(closes.get(i, []), reverse=True)]
        out.append("".join(cl + opens.get(i, [])))
    return out


def write_corpus(docs: Iterable[Document]) -> str:
    """Serialize documents to canonical CoNLL-U (LF line endings)."""
    lines: list[str] = []
    for doc in docs:
        ent = entity_columns(doc)
        for s, (a, b) in enumerate(doc.sentence_ranges()):
            if s == 0:
                lines.append(f"# newdoc id = {doc.doc_id}")
            if s < len(doc.comments):
                lines.extend(doc.comments[s])
            for i in range(a, b):
                if doc.nodes[i].id in doc.multiword:
                    lines.append(doc.multiword[doc.nodes[i].id])
                lines.append(_node_line(doc.nodes[i], ent[i]))
            lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def _node_line(n: Node, entity: str) -> str:
    misc = [] if n.misc == "_" else n.misc.split("|")
    if entity:
        misc.insert(0, f"Entity={entity}")
    misc_txt = "|".join(misc) if misc else "_"
    if n.is_empty:
        head, deprel = "_", "_"
        deps = n.deps
        if deps == "_" and not (n.head is ROOT and n.deprel == "_"):
            deps = f"{0 if n.head is ROOT else n.head.conllu_id()}:{n.deprel}"
    else:
        head = "0" if n.head is ROOT else n.head.conllu_id()
        deprel, deps = n.deprel, n.deps
    cols = [n.id.conllu_id(), n.form, n.lemma, n.upos, n.xpos, n.feats, head, deprel, deps, misc_txt]
    return "\t".join(cols)


def write_corpus_file(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_corpus(docs))
