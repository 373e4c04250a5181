from hypothesis import given, settings
from hypothesis import strategies as st

from corefkit.stats import StatsReport, compute_stats
from corefkit.synth import SynthSpec, generate


class TestHandCounts:
    def test_dataset_columns(self, stats_docs):
        st_ = compute_stats(stats_docs)
        assert (st_.docs, st_.sentences, st_.words, st_.empty_nodes) == (1, 2, 10, 1)

    def test_entities(self, stats_docs):
        st_ = compute_stats(stats_docs)
        assert st_.entities == 2
        assert st_.entities_per_1k == 200.0
        assert st_.entity_max_length == 2 and st_.entity_avg_length == 1.5
        assert st_.entity_distribution()["1"] == 50.0

    def test_mentions_skip_singletons(self, stats_docs):
        st_ = compute_stats(stats_docs)
        # "big dog" (two words, not a whole subtree) and a zero mention on an empty node
        assert st_.mentions == 2
        assert st_.mention_lengths["0"] == 1 and st_.mention_lengths["2"] == 1
        assert st_.pct_with_empty == 50.0
        assert st_.pct_non_tree == 50.0
        assert st_.pct_with_gap == 0.0

    def test_include_singletons(self, stats_docs):
        st_ = compute_stats(stats_docs, include_singletons=True)
        assert st_.mentions == 3 and st_.mention_lengths["1"] == 1

    def test_gap_counted(self, rich_docs):
        st_ = compute_stats(rich_docs, include_singletons=True)
        assert st_.with_gap == 1

    def test_table_rendering(self, stats_docs):
        text = compute_stats(stats_docs).to_table()
        assert "non-tree 50.0%" in text and "per 1k words 200.0" in text
        rows = dict(compute_stats(stats_docs).rows())
        assert rows["entities"] == "2" and rows["mention_length_0"] == "1"


class TestProperties:
    def test_empty_corpus(self):
        st_ = compute_stats([])
        assert st_ == StatsReport()
        assert st_.entities_per_1k == 0.0 and st_.pct_non_tree == 0.0

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000), st.randoms(use_true_random=False))
    def test_order_invariant_and_additive(self, seed, rnd):
        docs = generate(SynthSpec(documents=5, seed=seed, singleton_rate=0.3))
        shuffled = list(docs)
        rnd.shuffle(shuffled)
        total = compute_stats(docs)
        assert compute_stats(shuffled) == total
        assert total.entities == sum(compute_stats([d]).entities for d in docs)
        assert abs(sum(total.entity_distribution().values()) - 100) < 1e-9
