"""Dependency-tree helpers: head selection, subtree spans, tree paths."""
from __future__ import annotations

from dataclasses import dataclass

from .model import ROOT, Document, Mention, NodeId, descendants

PAD = (None, "<pad>")


@dataclass(frozen=True)
class SyntaxFeatureConfig:
    max_tree_depth: int = 5
    deprel_embedding_dim: int = 16
    token_embedding_dim: int = 64

    def __post_init__(self):
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")
        if self.deprel_embedding_dim < 1 or self.token_embedding_dim < 1:
            raise ValueError("embedding dims must be positive")

    @property
    def feature_width(self) -> int:
        return self.max_tree_depth * (self.token_embedding_dim + self.deprel_embedding_dim)


def select_head(doc: Document, m: Mention | list[NodeId] | tuple[NodeId, ...]) -> NodeId:
    """The mention node closest to ROOT; ties go to the leftmost node."""
    nodes = m.nodes if isinstance(m, Mention) else m
    depth = doc.depth
    return min(nodes, key=lambda n: (depth[n], n))


def reconstruct_span_from_head(doc: Document, head: NodeId) -> Mention:
    if head not in doc.index:
        raise KeyError(f"{head} not in document {doc.doc_id}")
    return Mention(tuple(descendants(doc, head)), head)


def tree_path_to_root(doc: Document, n: NodeId, cfg: SyntaxFeatureConfig) -> list[tuple]:
    """``(node, deprel)`` pairs from ``n`` upwards, padded/truncated to ``max_tree_depth``."""
    if n is ROOT or n not in doc.index:
        raise KeyError(f"{n!r} is not a node of document {doc.doc_id}")
    path: list[tuple] = []
    cur = n
    while cur is not ROOT and len(path) < cfg.max_tree_depth:
        node = doc.nodes[doc.index[cur]]
        path.append((cur, node.deprel))
        cur = node.head
    path.extend([PAD] * (cfg.max_tree_depth - len(path)))
    return path
