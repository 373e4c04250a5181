"""Dataset, entity and mention statistics over parsed corpora."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .model import Document, is_contiguous, mention_is_single_subtree

ENTITY_BUCKETS = ("1", "2", "3", "4", "5+")
MENTION_BUCKETS = ("0", "1", "2", "3", "4", "5+")


@dataclass
class StatsReport:
    docs: int = 0
    sentences: int = 0
    words: int = 0
    empty_nodes: int = 0
    entities: int = 0
    entity_max_length: int = 0
    entity_length_sum: int = 0
    entity_lengths: dict[str, int] = field(default_factory=lambda: dict.fromkeys(ENTITY_BUCKETS, 0))
    # mention figures cover mentions of non-singleton entities unless include_singletons
    mentions: int = 0
    mention_max_length: int = 0
    mention_length_sum: int = 0
    mention_lengths: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MENTION_BUCKETS, 0))
    with_empty: int = 0
    with_gap: int = 0
    non_tree: int = 0

    @property
    def entities_per_1k(self) -> float:
        return 1000 * self.entities / self.words if self.words else 0.0

    @property
    def entity_avg_length(self) -> float:
        return self.entity_length_sum / self.entities if self.entities else 0.0

    @property
    def mentions_per_1k(self) -> float:
        return 1000 * self.mentions / self.words if self.words else 0.0

    @property
    def mention_avg_length(self) -> float:
        return self.mention_length_sum / self.mentions if self.mentions else 0.0

    def entity_distribution(self) -> dict[str, float]:
        return {k: _pct(v, self.entities) for k, v in self.entity_lengths.items()}

    def mention_distribution(self) -> dict[str, float]:
        return {k: _pct(v, self.mentions) for k, v in self.mention_lengths.items()}

    @property
    def pct_with_empty(self) -> float:
        return _pct(self.with_empty, self.mentions)

    @property
    def pct_with_gap(self) -> float:
        return _pct(self.with_gap, self.mentions)

    @property
    def pct_non_tree(self) -> float:
        return _pct(self.non_tree, self.mentions)

    def __add__(self, other: "StatsReport") -> "StatsReport":
        out = StatsReport()
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, dict):
                setattr(out, f.name, {k: a[k] + b[k] for k in a})
            elif f.name.endswith("max_length"):
                setattr(out, f.name, max(a, b))
            else:
                setattr(out, f.name, a + b)
        return out

    def rows(self) -> list[tuple[str, str]]:
        """Machine-readable (name, value) pairs; raw counts and derived figures."""
        out = [(f.name, str(getattr(self, f.name))) for f in fields(self) if not isinstance(getattr(self, f.name), dict)]
        out += [(f"entity_length_{k}", str(v)) for k, v in self.entity_lengths.items()]
        out += [(f"mention_length_{k}", str(v)) for k, v in self.mention_lengths.items()]
        out += [
            ("entities_per_1k", repr(self.entities_per_1k)),
            ("entity_avg_length", repr(self.entity_avg_length)),
            ("mentions_per_1k", repr(self.mentions_per_1k)),
            ("mention_avg_length", repr(self.mention_avg_length)),
            ("pct_with_empty", repr(self.pct_with_empty)),
            ("pct_with_gap", repr(self.pct_with_gap)),
            ("pct_non_tree", repr(self.pct_non_tree)),
        ]
        return out

    def to_table(self) -> str:
        ed, md = self.entity_distribution(), self.mention_distribution()
        return "\n".join([
            f"docs {self.docs}  sentences {self.sentences}  words {self.words}  empty nodes {self.empty_nodes}",
            f"entities {self.entities}  per 1k words {self.entities_per_1k:.1f}  "
            f"max length {self.entity_max_length}  avg length {self.entity_avg_length:.1f}",
            "entity lengths  " + "  ".join(f"{k}: {v:.1f}%" for k, v in ed.items()),
            f"mentions {self.mentions}  per 1k words {self.mentions_per_1k:.1f}  "
            f"max length {self.mention_max_length}  avg length {self.mention_avg_length:.1f}",
            "mention lengths  " + "  ".join(f"{k}: {v:.1f}%" for k, v in md.items()),
            f"w/empty {self.pct_with_empty:.1f}%  w/gap {self.pct_with_gap:.1f}%  non-tree {self.pct_non_tree:.1f}%",
        ])


def _pct(a: int, b: int) -> float:
    return 100 * a / b if b else 0.0


def _bucket(n: int, labels) -> str:
    top = labels[-1]
    lo = int(labels[0])
    return top if n >= int(top[:-1]) else str(max(n, lo))


def document_stats(doc: Document, include_singletons: bool = False) -> StatsReport:
    st = StatsReport(docs=1, sentences=doc.num_sentences, words=doc.num_words)
    st.empty_nodes = len(doc.nodes) - st.words
    for e in doc.entities:
        n = len(e.mentions)
        st.entities += 1
        st.entity_length_sum += n
        st.entity_max_length = max(st.entity_max_length, n)
        st.entity_lengths[_bucket(n, ENTITY_BUCKETS)] += 1
        if n == 1 and not include_singletons:
            continue
        for m in e.mentions:
            length = sum(1 for x in m.nodes if not x.is_empty)
            st.mentions += 1
            st.mention_length_sum += length
            st.mention_max_length = max(st.mention_max_length, length)
            st.mention_lengths[_bucket(length, MENTION_BUCKETS)] += 1
            st.with_empty += any(x.is_empty for x in m.nodes)
            st.with_gap += not is_contiguous(doc, m)
            st.non_tree += not mention_is_single_subtree(doc, m)
    return st


def compute_stats(corpus: list[Document], include_singletons: bool = False) -> StatsReport:
    """Totals over a corpus (Table 1-3 style figures).

    Mention figures follow the non-singleton convention (mentions of
    singleton entities are skipped) unless ``include_singletons`` is set.
    """
    total = StatsReport()
    for doc in corpus:
        total = total + document_stats(doc, include_singletons)
    return total
