"""Multilingual coreference resolution over CorefUD CoNLL-U data."""
from .conllu import parse_corpus, read_corpus, write_corpus, write_corpus_file
from .model import ROOT, Document, Entity, Mention, Node, NodeId, validate_document

__version__ = "0.1.0"

__all__ = [
    "ROOT", "Document", "Entity", "Mention", "Node", "NodeId",
    "parse_corpus", "read_corpus", "write_corpus", "write_corpus_file", "validate_document",
]
