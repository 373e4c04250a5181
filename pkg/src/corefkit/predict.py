"""Run a trained scorer over whole documents, window by window."""
from __future__ import annotations

import bisect
from typing import Optional

import torch

from .conllu import GLOBAL_ENTITY
from .decode import ClusterSet, build_clusters, merge_overlapping_clusters, plan_overlap, select_antecedents
from .model import Document, Entity, Mention
from .scorer import CorefScorer, ScoreTable
from .segments import segment_document
from .syntax import reconstruct_span_from_head, select_head


def _candidate_mention(model: CorefScorer, doc: Document, table: ScoreTable, cand: int) -> Mention:
    s, e = (int(v) for v in table.candidates[cand])
    if model.cfg.heads_only:
        m = reconstruct_span_from_head(doc, doc.nodes[s].id)
    else:
        nodes = tuple(n.id for n in doc.nodes[s:e + 1])
        if model.cfg.span2head != "off":
            logits = model.head_logits(table.span_reprs[cand], table.token_reprs, s, e)
            picked = model.predict_heads(table, cand)
            # several heads may pass the threshold; the mention keeps the most probable one
            pos = max(picked, key=lambda p: (float(logits[p]), -p))
            head = nodes[pos]
        else:
            head = select_head(doc, nodes)
        m = Mention(nodes, head)
    return Mention(m.nodes, m.head, f"--{m.nodes.index(m.head) + 1}")


@torch.no_grad()
def predict_window(model: CorefScorer, doc: Document) -> ClusterSet:
    """Clusters predicted for one window (a sentence-aligned sub-document)."""
    f = model.featurize(doc)
    table = model(f)
    kept = table.kept
    links, singles = select_antecedents(
        table.scores.double().numpy(), table.antecedents.numpy(), table.num_virtual,
        table.mention_scores[kept].double().numpy(), model.cfg.singleton_mode)
    groups = build_clusters(links, singles)
    clusters = [[_candidate_mention(model, doc, table, int(kept[i])) for i in g] for g in groups]
    return ClusterSet(clusters)


def predict_document(model: CorefScorer, doc: Document, max_segments: Optional[int] = None,
                     overlap: str = "none", filter_seen: bool = False) -> Document:
    """Predicted entities for ``doc``; long documents are split into overlapping windows."""
    model.eval()
    if not doc.nodes:
        return doc.with_entities([])
    if max_segments is None:
        max_segments = 8 if model.cfg.heads_only else 6
    segs = segment_document(doc, model.cfg.segment_length)
    plan = plan_overlap(len(segs), max_segments, overlap, filter_seen)
    examples = [predict_window(model, doc.subdocument(segs[a][0], segs[b][1])) for a, b in plan.windows]
    starts = [a for a, _ in segs]

    def segment_of(m: Mention) -> int:
        return bisect.bisect_right(starts, doc.index[m.last]) - 1

    merged = merge_overlapping_clusters(examples, plan, segment_of, filter_seen)
    entities = [Entity(f"c{i + 1}", list(c)) for i, c in enumerate(merged.clusters)]
    return with_head_declaration(doc.with_entities(entities))


def with_head_declaration(doc: Document) -> Document:
    """Make sure the first sentence declares the entity attribute layout we write."""
    comments = [list(c) for c in doc.comments] or [[]]
    comments[0] = [c for c in comments[0] if not c.startswith("# global.Entity")]
    comments[0].insert(0, GLOBAL_ENTITY)
    out = doc.with_entities(doc.entities)
    out.comments = comments
    return out
