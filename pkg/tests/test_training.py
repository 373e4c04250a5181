import math
import random

import pytest
import torch

from corefkit.scorer import ConfigError, marginal_loss, singleton_bce_loss
from corefkit.synth import SynthSpec, generate
from corefkit.training import (
    CorpusEntry,
    MixtureSpec,
    StepRecord,
    TrainConfig,
    TrainingDiverged,
    build_model,
    finite_difference_check,
    read_config,
    relative_error,
    sample_training_window,
    train,
)

from conftest import flat_doc

TINY = dict(embedding_dim=8, hidden_dim=8, width_dim=4, distance_dim=4, deprel_dim=3, context_window=4,
            max_span_width=3, segment_length=16)


def tiny_docs(n=4, seed=0, **kw):
    return generate(SynthSpec(documents=n, sentences_per_doc=3, sentence_length=6, entities_per_doc=2,
                              segment_length=16, seed=seed, **kw))


class TestMarginalLoss:
    def test_only_dummy(self):
        scores = torch.zeros(1, 1)
        gold = torch.ones(1, 1, dtype=torch.bool)
        assert float(marginal_loss(scores, gold)) == 0.0

    def test_uniform_two_way(self):
        scores = torch.zeros(1, 2)
        gold = torch.tensor([[False, True]])
        assert math.isclose(float(marginal_loss(scores, gold)), math.log(2), rel_tol=1e-6)

    def test_hand_marginal(self):
        scores = torch.tensor([[0.0, 1.0, 2.0]])
        gold = torch.tensor([[False, True, True]])
        z = 1 + math.e + math.e ** 2
        expect = -math.log((math.e + math.e ** 2) / z)
        assert math.isclose(float(marginal_loss(scores, gold)), expect, rel_tol=1e-5)

    def test_masked_columns_ignored(self):
        scores = torch.tensor([[0.0, -math.inf, 0.0]])
        gold = torch.tensor([[False, False, True]])
        assert math.isclose(float(marginal_loss(scores, gold)), math.log(2), rel_tol=1e-6)

    def test_empty_gold_row_is_an_error(self):
        with pytest.raises(RuntimeError):
            marginal_loss(torch.zeros(1, 2), torch.zeros(1, 2, dtype=torch.bool))


class TestSingletonBCE:
    def test_zero_scores(self):
        loss = singleton_bce_loss(torch.zeros(3), torch.tensor([True, False, True]))
        assert math.isclose(float(loss), 3 * math.log(2), rel_tol=1e-6)

    def test_saturation(self):
        assert float(singleton_bce_loss(torch.tensor([50.0]), torch.tensor([True]))) < 1e-12

    def test_hand_values(self):
        s = torch.tensor([1.0, -2.0])
        y = torch.tensor([True, False])
        sig = lambda v: 1 / (1 + math.exp(-v))
        expect = -math.log(sig(1.0)) - math.log(1 - sig(-2.0))
        assert math.isclose(float(singleton_bce_loss(s, y)), expect, rel_tol=1e-6)


class TestWindows:
    def test_short_document_whole(self):
        doc = flat_doc(9, [], sentence_length=3)
        cfg = TrainConfig(max_segments=6, segment_length=3)
        assert sample_training_window(doc, cfg, random.Random(0)) == (doc, 0)

    def test_offsets_uniform(self):
        doc = flat_doc(30, [], sentence_length=3)
        cfg = TrainConfig(max_segments=6, segment_length=3)
        rng = random.Random(0)
        seen = {sample_training_window(doc, cfg, rng)[1] for _ in range(300)}
        assert seen == {0, 1, 2, 3, 4}

    def test_cut_cluster_becomes_singleton(self):
        doc = flat_doc(12, [[1, 10]], sentence_length=3)
        cfg = TrainConfig(max_segments=2, segment_length=3)
        for seed in range(20):
            window, offset = sample_training_window(doc, cfg, random.Random(seed))
            if offset == 0:
                assert [len(e.mentions) for e in window.entities] == [1]
                break
        else:
            pytest.fail("offset 0 never drawn")


class TestConfig:
    def test_defaults(self):
        assert TrainConfig().max_segments == 6
        assert TrainConfig(heads_only=True).max_segments == 8

    def test_heads_only_excludes_span2head(self):
        with pytest.raises(ConfigError):
            TrainConfig(heads_only=True, span2head="binary")

    def test_read_config(self, tmp_path):
        text = ("steps = 5\nsingleton_mode = mentions  # comment\n"
                "corpus = a.conllu name=a language=cs\ncorpus = b.conllu language=en singletons=false\n"
                "exclusion = language-zero-shot\ntarget = cs\nout = m.ckpt\n")
        cfg, mix, extras = read_config(text, tmp_path)
        assert cfg.steps == 5 and cfg.singleton_mode == "mentions"
        assert [e.label for e in mix.included()] == ["b"]
        assert mix.entries[1].singletons is False
        assert extras["out"] == str(tmp_path / "m.ckpt")

    @pytest.mark.parametrize("text", ["bogus = 1", "steps", "corpus = a.conllu colour=red", "steps = many"])
    def test_bad_config(self, text):
        with pytest.raises((ConfigError, ValueError)):
            read_config(text)

    def test_dataset_exclusion(self):
        mix = MixtureSpec([CorpusEntry("x.conllu"), CorpusEntry("y.conllu")], "dataset-zero-shot", "x")
        assert [e.label for e in mix.included()] == ["y"]
        with pytest.raises(ConfigError):
            MixtureSpec([CorpusEntry("x.conllu")], "dataset-zero-shot", "x").included()


class TestTraining:
    def test_zero_steps_unchanged(self):
        docs = tiny_docs()
        cfg = TrainConfig(steps=0, **TINY)
        init = build_model(cfg, docs)
        before = {k: v.clone() for k, v in init.state_dict().items()}
        model, history = train([(CorpusEntry("syn"), docs)], cfg, model=init)
        assert history == []
        assert all(torch.equal(before[k], v) for k, v in model.state_dict().items())

    def test_loss_decreases(self):
        docs = tiny_docs(8)
        cfg = TrainConfig(steps=400, log_every=0, **TINY)
        _, history = train([(CorpusEntry("syn"), docs)], cfg)
        early = sum(r.loss for r in history[:50]) / 50
        late = sum(r.loss for r in history[-50:]) / 50
        assert late < early

    def test_deterministic(self):
        docs = tiny_docs()
        cfg = TrainConfig(steps=20, **TINY)
        _, a = train([(CorpusEntry("syn"), docs)], cfg)
        _, b = train([(CorpusEntry("syn"), docs)], cfg)
        assert [r.loss for r in a] == [r.loss for r in b]

    def test_excluded_corpus_never_sampled(self):
        mix = MixtureSpec([CorpusEntry("a", language="cs"), CorpusEntry("b", language="en")],
                          "language-zero-shot", "cs")
        docs = {"a": tiny_docs(seed=1), "b": tiny_docs(seed=2)}
        cfg = TrainConfig(steps=15, **TINY)
        _, history = train([(e, docs[e.path]) for e in mix.included()], cfg)
        assert {r.corpus for r in history} == {"b"}

    def test_divergence_reported(self):
        docs = tiny_docs()
        cfg = TrainConfig(steps=3, **TINY)
        model = build_model(cfg, docs)
        with torch.no_grad():
            model.tok_emb.weight.fill_(float("nan"))
        with pytest.raises(TrainingDiverged, match="step 1"):
            train([(CorpusEntry("syn"), docs)], cfg, model=model)

    def test_on_step_and_log_line(self):
        docs = tiny_docs()
        seen = []
        train([(CorpusEntry("syn"), docs)], TrainConfig(steps=3, **TINY), on_step=seen.append)
        assert [r.step for r in seen] == [1, 2, 3]
        assert StepRecord(4, 0.5, "syn").to_line() == "4\t0.5\tsyn\t"

    def test_no_documents(self):
        with pytest.raises(ConfigError):
            train([], TrainConfig(steps=1))


class TestGradCheck:
    def test_relative_error(self):
        assert relative_error(1.0, 1.0) == 0.0
        assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)

    def test_zero_model(self):
        docs = tiny_docs(1)
        model = build_model(TrainConfig(**TINY), docs)
        with torch.no_grad():
            for p in model.parameters():
                p.zero_()
        rep = finite_difference_check(model, [model.featurize(docs[0])], coords_per_param=4)
        assert rep.max_error < 1e-6

    def test_full_model_passes(self):
        docs = tiny_docs(1)
        cfg = TrainConfig(use_tree_features=True, singleton_mode="dummy", span2head="binary", **TINY)
        model = build_model(cfg, docs)
        rep = finite_difference_check(model, [model.featurize(docs[0])], coords_per_param=6)
        assert rep.max_error < 1e-4
        assert rep.lines()[-1].startswith("max")

    def test_corrupted_gradient_detected(self):
        docs = tiny_docs(1)
        model = build_model(TrainConfig(**TINY), docs)
        hook = lambda name, g: g * 1.5 if name == "ffnn_m.0.weight" else g
        rep = finite_difference_check(model, [model.featurize(docs[0])], coords_per_param=6, grad_hook=hook)
        assert rep.per_parameter["ffnn_m.0.weight"] > 1e-2
