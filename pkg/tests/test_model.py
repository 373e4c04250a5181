from corefkit.model import (
    ROOT,
    Document,
    Entity,
    Mention,
    Node,
    NodeId,
    descendants,
    is_contiguous,
    mention_is_single_subtree,
    validate_document,
)
from corefkit.segments import segment_document, segment_index

from conftest import flat_doc


def tree_doc(heads):
    """One sentence; ``heads[i]`` is the 1-based head of token i + 1 (0 = root)."""
    nodes = [Node(NodeId(0, i + 1), f"t{i + 1}", ROOT if h == 0 else NodeId(0, h), "dep") for i, h in enumerate(heads)]
    return Document("tree", nodes, [0])


def nid(i):
    return NodeId(0, i)


class TestValidate:
    def test_clean_fixture(self, rich_docs):
        assert all(validate_document(d) == [] for d in rich_docs)

    def test_head_outside_mention(self):
        doc = tree_doc([0, 1, 1])
        doc.entities.append(Entity("e1", [Mention((nid(1), nid(2)), nid(3))]))
        errors = validate_document(doc)
        assert len(errors) == 1 and "e1" in errors[0]

    def test_cycle(self):
        doc = tree_doc([0, 3, 2])
        errors = validate_document(doc)
        assert len(errors) == 1 and "cycle" in errors[0]

    def test_missing_head(self):
        doc = tree_doc([0, 9])
        assert any("does not exist" in e for e in validate_document(doc))

    def test_duplicate_mention(self):
        doc = flat_doc(3, [[0, 0]])
        assert any("duplicate" in e for e in validate_document(doc))


class TestSubtrees:
    def test_whole_subtree(self):
        doc = tree_doc([0, 1, 2, 2, 1])
        m = Mention((nid(2), nid(3), nid(4)), nid(2))
        assert mention_is_single_subtree(doc, m)

    def test_missing_descendant(self):
        doc = tree_doc([0, 1, 2, 2, 1])
        assert not mention_is_single_subtree(doc, Mention((nid(2), nid(3)), nid(2)))

    def test_hand_built_five_nodes(self):
        # 3 is a child of 2, 2 also has child 4 outside the mention
        doc = tree_doc([0, 1, 2, 2, 1])
        assert descendants(doc, nid(2)) == [nid(2), nid(3), nid(4)]
        assert not mention_is_single_subtree(doc, Mention((nid(2), nid(3)), nid(2)))

    def test_contiguity(self):
        doc = tree_doc([0, 1, 1, 1])
        assert is_contiguous(doc, Mention((nid(1), nid(2)), nid(1)))
        assert not is_contiguous(doc, Mention((nid(1), nid(3)), nid(1)))


class TestDocument:
    def test_depth(self):
        doc = tree_doc([0, 1, 2])
        assert [doc.depth[nid(i)] for i in (1, 2, 3)] == [1, 2, 3]

    def test_subdocument_drops_partial_mentions(self):
        doc = flat_doc(6, [[0, 3], [4, 5]], sentence_length=3)
        sub = doc.subdocument(3, 6)
        assert len(sub.nodes) == 3 and sub.sentence_boundaries == [0]
        assert [len(e.mentions) for e in sub.entities] == [1, 2]

    def test_counts(self, rich_docs):
        d = rich_docs[0]
        assert d.num_sentences == 2 and d.num_words == 15 and len(d.nodes) == 16


class TestSegments:
    def test_greedy_sentence_packing(self):
        doc = flat_doc(12, [], sentence_length=3)
        assert segment_document(doc, 7) == [(0, 6), (6, 12)]
        assert segment_document(doc, 3) == [(0, 3), (3, 6), (6, 9), (9, 12)]

    def test_long_sentence_alone(self):
        doc = flat_doc(8, [], sentence_length=8)
        assert segment_document(doc, 4) == [(0, 8)]

    def test_index(self):
        assert segment_index([(0, 2), (2, 3)], 3) == [0, 0, 1]
