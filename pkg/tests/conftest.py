from pathlib import Path

import pytest

from corefkit.conllu import read_corpus
from corefkit.model import ROOT, Document, Entity, Mention, Node, NodeId

DATA = Path(__file__).parent / "data"


def flat_doc(n_tokens, clusters, doc_id="t", sentence_length=None):
    """Doc of filler tokens; ``clusters`` lists token offsets, each a one-word mention."""
    sentence_length = sentence_length or n_tokens
    nodes = []
    for i in range(n_tokens):
        s, t = divmod(i, sentence_length)
        head = ROOT if t == 0 else NodeId(s, t)
        nodes.append(Node(NodeId(s, t + 1), f"w{i}", head, "root" if t == 0 else "dep"))
    bounds = list(range(0, n_tokens, sentence_length))
    ents = [Entity(f"e{k}", [Mention((nodes[i].id,), nodes[i].id) for i in sorted(c)]) for k, c in enumerate(clusters)]
    return Document(doc_id, nodes, bounds, ents)


@pytest.fixture(scope="session")
def rich_docs():
    return read_corpus(DATA / "rich.conllu")


@pytest.fixture(scope="session")
def stats_docs():
    return read_corpus(DATA / "stats.conllu")


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
