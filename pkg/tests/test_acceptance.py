"""Acceptance checks, one per headline requirement.

Each test records a ``PASS``/``FAIL`` line; the lines are printed in the
terminal summary of the run (see ``conftest.py``) and also when this file
is executed directly with ``python3 tests/test_acceptance.py``.
"""
import itertools
import random
import sys
import time
from fractions import Fraction

import pytest
import torch

from corefkit.cli import gradcheck_fixture
from corefkit.conllu import parse_corpus, write_corpus
from corefkit.decode import ClusterSet, merge_overlapping_clusters, plan_overlap
from corefkit.metrics import (
    b_cubed_counts,
    brute_force_alignment,
    ceaf_counts,
    cross_segment_link_counts,
    mention_scores,
    muc_counts,
    optimal_alignment,
    primary_score,
)
from corefkit.model import Entity
from corefkit.predict import predict_document
from corefkit.scorer import SINGLETON_MODES, CorefScorer, ModelConfig, build_vocabs, candidate_spans
from corefkit.segments import segment_document
from corefkit.stats import compute_stats
from corefkit.synth import SynthSpec, generate, oracle_predict
from corefkit.training import CorpusEntry, TrainConfig, build_model, evaluate, finite_difference_check, train

from conftest import DATA

RESULTS: list[str] = []

# narrow layers keep 30 configurations under the time limit; all extensions stay on
GRADCHECK_DIMS = dict(embedding_dim=16, hidden_dim=16, width_dim=8, distance_dim=8, deprel_dim=4, context_window=8)


def report(name: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


class TestAcceptance:
    def test_metric_oracle(self):
        t0 = time.perf_counter()
        gold, sys_ = [["a", "b", "c"], ["d", "e"]], [["a", "b"], ["c", "d", "e"]]
        got = (muc_counts(gold, sys_).f1, b_cubed_counts(gold, sys_).f1,
               ceaf_counts(gold, sys_, "mention-count").f1, ceaf_counts(gold, sys_, "entity-F1").f1)
        want = (Fraction(2, 3), Fraction(11, 15), Fraction(4, 5), Fraction(4, 5))
        dt = time.perf_counter() - t0
        report("metric oracle", got == want and dt < 1.0,
               f"MUC {got[0]} B3 {got[1]} CEAF-m {got[2]} CEAF-e {got[3]} in {dt:.3f}s")

    def test_ceaf_alignment_optimal(self):
        t0 = time.perf_counter()
        rng = random.Random(0)
        bad = 0
        for i in range(200):
            items = list(range(rng.randint(1, 14)))
            gold, sys_ = {}, {}
            for it in items:
                gold.setdefault(rng.randrange(6), []).append(it)
                if rng.random() < 0.85:
                    sys_.setdefault(rng.randrange(6), []).append(it)
            g, s = list(gold.values()), list(sys_.values())
            sim = "entity-F1" if i % 2 else "mention-count"
            bad += optimal_alignment(g, s, sim)[0] != brute_force_alignment(g, s, sim)
        dt = time.perf_counter() - t0
        report("CEAF alignment", bad == 0 and dt < 10.0, f"{200 - bad}/200 equal to brute force in {dt:.2f}s")

    def test_identity_and_empty(self):
        docs = generate(SynthSpec(documents=5, seed=11, singleton_rate=0.3))
        ident = primary_score(docs, docs)
        empty = primary_score(docs, [d.with_entities([]) for d in docs])
        ok = (all(f == 1.0 for _, _, f in ident.scores.values()) and ident.primary == 1.0
              and all(f == 0.0 for _, _, f in empty.scores.values()) and empty.primary == 0.0)
        report("identity / empty", ok, f"identity primary {ident.primary}, empty primary {empty.primary}")

    def test_gradcheck_matrix(self):
        t0 = time.perf_counter()
        docs = gradcheck_fixture()
        vocab, rels = build_vocabs(docs)
        worst, failures = 0.0, []
        for heads_only, s2h, mode in itertools.product((False, True), ("off", "multiclass", "binary"),
                                                      SINGLETON_MODES):
            cfg = ModelConfig(vocab_size=len(vocab), num_deprels=len(rels), use_tree_features=True,
                              heads_only=heads_only, span2head=s2h, singleton_mode=mode, **GRADCHECK_DIMS)
            with torch.random.fork_rng():
                torch.manual_seed(0)
                model = CorefScorer(cfg, vocab, rels)
            rep = finite_difference_check(model, [model.featurize(d) for d in docs], coords_per_param=32)
            worst = max(worst, rep.max_error)
            if rep.max_error >= 1e-4:
                failures.append((heads_only, s2h, mode, rep.max_error))
        dt = time.perf_counter() - t0
        report("gradcheck", not failures and dt < 300,
               f"30 configurations, max rel. error {worst:.2e} in {dt:.0f}s" + (f", failing {failures}" if failures else ""))

    def test_learning(self):
        t0 = time.perf_counter()
        train_docs = generate(SynthSpec(documents=200, seed=0))
        dev = generate(SynthSpec(documents=40, seed=1))
        best, steps = _train_until(train_docs, dev, TrainConfig(seed=0, log_every=0), 0.90)

        s_train = generate(SynthSpec(documents=200, seed=0, singleton_rate=0.5))
        s_dev = generate(SynthSpec(documents=40, seed=1, singleton_rate=0.5))
        cfg = TrainConfig(seed=0, log_every=0, singleton_mode="mentions")
        model = _train_until(s_train, s_dev, cfg, 0.90, return_model=True)
        single_f1 = mention_scores(s_dev, [predict_document(model, d) for d in s_dev], singletons_only=True)[2]
        dt = time.perf_counter() - t0
        report("learning", best >= 0.90 and single_f1 >= 0.85 and dt < 900,
               f"held-out primary {best:.3f} after {steps} steps, singleton mention F1 {single_f1:.3f}, {dt:.0f}s")

    def test_overlap_plan(self):
        plan = plan_overlap(6, 4, "max")
        report("overlap plan", len(plan.windows) == 3 and plan.windows == [(0, 3), (1, 4), (2, 5)],
               f"windows {plan.windows}")

    def test_cross_segment_monotone(self):
        spec = SynthSpec(documents=20, sentences_per_doc=40, sentence_length=8, entities_per_doc=12,
                         cross_segment_rate=0.5, cross_segment_gap=3, segment_length=16, seed=5)
        docs = generate(spec)
        recall = {}
        for mode in ("none", "min", "max"):
            hit = total = 0
            for d in docs:
                h, t = cross_segment_link_counts(d, _windowed_oracle(d, mode, 4, 16), 4, segment_length=16)
                hit, total = hit + h, total + t
            recall[mode] = hit / total
        ok = recall["max"] >= recall["min"] >= recall["none"] == 0 and total > 0
        report("cross-segment recall", ok, " ".join(f"{k} {v:.3f}" for k, v in recall.items())
               + f" over {total} crossing links")

    def test_round_trip(self):
        texts = [(p.name, p.read_text(encoding="utf-8")) for p in sorted(DATA.glob("*.conllu"))]
        texts.append(("synthetic", write_corpus(generate(SynthSpec(documents=100, seed=0, singleton_rate=0.3,
                                                                   cross_segment_rate=0.3)))))
        bad = []
        for name, text in texts:
            first = parse_corpus(text)
            out1 = write_corpus(first)
            second = parse_corpus(out1)
            if second != first or write_corpus(second) != out1:
                bad.append(name)
        report("round trip", not bad, f"{len(texts) - len(bad)}/{len(texts)} fixtures stable"
               + (f", unstable {bad}" if bad else ""))

    def test_heads_only_candidates(self):
        docs = list(parse_corpus((DATA / "rich.conllu").read_text(encoding="utf-8")))
        docs += generate(SynthSpec(documents=20, seed=2))
        worst = max(len(candidate_spans(d, 30, heads_only=True)) - d.num_words for d in docs)
        report("heads-only candidates", worst <= 0, f"max(count - T) = {worst} over {len(docs)} documents")

    def test_stats_fixture(self):
        st = compute_stats(parse_corpus((DATA / "stats.conllu").read_text(encoding="utf-8")))
        got = (st.docs, st.sentences, st.words, st.empty_nodes, st.entities, st.mentions,
               st.mention_lengths.get("0"), st.mention_lengths.get("2"), st.non_tree, st.with_empty)
        want = (1, 2, 10, 1, 2, 2, 1, 1, 1, 1)
        report("corpus stats", got == want, f"got {got}, hand counts {want}")


def _train_until(train_docs, dev, cfg, target, return_model=False, max_steps=5000, every=500):
    """Train in one run, scoring ``dev`` every ``every`` steps; stop once ``target`` is reached."""

    class Reached(Exception):
        pass

    cfg.steps, cfg.eval_every = max_steps, every
    model = build_model(cfg, train_docs)
    state = {"best": 0.0, "steps": max_steps}

    def watch(rec):
        if rec.dev_score is not None:
            state["best"] = max(state["best"], rec.dev_score)
            if rec.dev_score >= target:
                state["steps"] = rec.step
                raise Reached

    try:
        train([(CorpusEntry("synth"), train_docs)], cfg, model=model, dev=dev, on_step=watch)
    except Reached:
        pass
    model.eval()
    return model if return_model else (state["best"], state["steps"])


def _windowed_oracle(doc, mode, cap, segment_length):
    segs = segment_document(doc, segment_length)
    plan = plan_overlap(len(segs), cap, mode)
    examples = []
    for a, b in plan.windows:
        pred = oracle_predict(doc.subdocument(segs[a][0], segs[b][1]))
        examples.append(ClusterSet([list(e.mentions) for e in pred.entities]))
    starts = [s for s, _ in segs]
    seg_of = lambda m: max(i for i, s in enumerate(starts) if s <= doc.index[m.nodes[-1]])
    merged = merge_overlapping_clusters(examples, plan, seg_of)
    return doc.with_entities([Entity(f"c{i}", c) for i, c in enumerate(merged.clusters)])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
