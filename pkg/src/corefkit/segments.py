"""Sentence-aligned segmentation of documents into fixed-size token windows."""
from __future__ import annotations

from .model import Document


def segment_document(doc: Document, segment_length: int) -> list[tuple[int, int]]:
    """Half-open node ranges, each a run of whole sentences.

    Sentences are packed greedily while the segment stays within
    ``segment_length`` nodes; a single sentence longer than that becomes a
    segment of its own. Empty nodes count as tokens since the encoder sees
    them.
    """
    if segment_length < 1:
        raise ValueError("segment_length must be positive")
    segments: list[tuple[int, int]] = []
    start = end = None
    for a, b in doc.sentence_ranges():
        if start is None:
            start, end = a, b
        elif b - start <= segment_length:
            end = b
        else:
            segments.append((start, end))
            start, end = a, b
    if start is not None:
        segments.append((start, end))
    return segments


def segment_index(segments: list[tuple[int, int]], num_nodes: int) -> list[int]:
    """Segment number of every node offset."""
    out = [0] * num_nodes
    for s, (a, b) in enumerate(segments):
        for i in range(a, b):
            out[i] = s
    return out
