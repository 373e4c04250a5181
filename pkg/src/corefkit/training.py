"""Training loop, window sampling, corpus mixtures and the gradient checker."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .conllu import read_corpus
from .metrics import primary_score
from .model import Document
from .scorer import (SINGLETON_MODES, SPAN2HEAD_MODES, ConfigError, CorefScorer, DocFeatures, ModelConfig,
                     _coerce, build_vocabs, marginal_loss, singleton_bce_loss)
from .segments import segment_document

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "CorpusEntry", "MixtureSpec", "StepRecord", "TrainingDiverged", "read_config",
           "sample_training_window", "train", "finite_difference_check", "marginal_loss", "singleton_bce_loss"]

EXCLUSION_MODES = ("none", "dataset-zero-shot", "language-zero-shot")


@dataclass
class TrainConfig:
    max_segments: Optional[int] = None  # 6, or 8 in heads-only mode
    segment_length: int = 512
    learning_rate: float = 0.01
    momentum: float = 0.9
    clip_norm: float = 5.0
    optimizer: str = "sgd"
    steps: int = 1000
    singleton_mode: str = "off"
    heads_only: bool = False
    span2head: str = "off"
    use_tree_features: bool = False
    seed: int = 0
    log_every: int = 100
    eval_every: int = 0
    # encoder / scorer sizes
    embedding_dim: int = 64
    context_window: int = 16
    hidden_dim: int = 64
    width_dim: int = 20
    distance_dim: int = 20
    deprel_dim: int = 16
    max_tree_depth: int = 5
    max_span_width: int = 30
    keep_ratio: float = 0.4
    max_antecedents: int = 50
    dropout: float = 0.3

    def __post_init__(self):
        if self.max_segments is None:
            self.max_segments = 8 if self.heads_only else 6
        if self.max_segments < 1:
            raise ConfigError("max_segments must be >= 1")
        if self.singleton_mode not in SINGLETON_MODES:
            raise ConfigError(f"singleton_mode must be one of {SINGLETON_MODES}")
        if self.span2head not in SPAN2HEAD_MODES:
            raise ConfigError(f"span2head must be one of {SPAN2HEAD_MODES}")
        if self.span2head != "off" and self.heads_only:
            raise ConfigError("span2head needs full spans; it cannot be combined with heads_only")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer must be sgd or adam")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")

    def model_config(self, vocab_size: int, num_deprels: int) -> ModelConfig:
        shared = {f.name for f in fields(ModelConfig)} & set(asdict(self))
        return ModelConfig(vocab_size=vocab_size, num_deprels=num_deprels,
                           **{k: getattr(self, k) for k in shared})


@dataclass(frozen=True)
class CorpusEntry:
    path: str
    name: str = ""
    language: str = ""
    include: bool = True
    singletons: bool = True  # whether singleton entities are annotated

    @property
    def label(self) -> str:
        return self.name or Path(self.path).stem


@dataclass
class MixtureSpec:
    entries: list[CorpusEntry] = field(default_factory=list)
    exclusion: str = "none"
    target: str = ""  # corpus name or language left out in zero-shot modes

    def __post_init__(self):
        if self.exclusion not in EXCLUSION_MODES:
            raise ConfigError(f"exclusion must be one of {EXCLUSION_MODES}")
        if self.exclusion != "none" and not self.target:
            raise ConfigError("zero-shot exclusion needs a target")

    def included(self) -> list[CorpusEntry]:
        out = []
        for e in self.entries:
            if not e.include:
                continue
            if self.exclusion == "dataset-zero-shot" and e.label == self.target:
                continue
            if self.exclusion == "language-zero-shot" and e.language == self.target:
                continue
            out.append(e)
        if not out:
            raise ConfigError("the mixture includes no corpus")
        return out


def _parse_corpus_line(value: str) -> CorpusEntry:
    parts = value.split()
    if not parts:
        raise ConfigError("empty corpus entry")
    opts = {}
    for p in parts[1:]:
        if "=" not in p:
            raise ConfigError(f"corpus option must be key=value, got {p!r}")
        k, v = p.split("=", 1)
        opts[k] = v
    kw = {}
    for f in fields(CorpusEntry):
        if f.name in opts:
            kw[f.name] = _coerce(opts.pop(f.name), f.type)
    if opts:
        raise ConfigError(f"unknown corpus options: {sorted(opts)}")
    return CorpusEntry(parts[0], **kw)


def read_config(text: str, base: Optional[Path] = None) -> tuple[TrainConfig, MixtureSpec, dict[str, str]]:
    """Parse a ``key = value`` training config.

    ``corpus = <path> [name=..] [language=..] [include=..] [singletons=..]``
    may repeat; ``exclusion`` and ``target`` set the mixture mode. Other
    keys go to TrainConfig, except ``dev``, ``out`` and ``init`` which are
    returned in the extras mapping. Relative paths resolve against ``base``.
    """
    train_kw: dict = {}
    mix_kw: dict = {}
    extras: dict[str, str] = {}
    entries = []
    names = {f.name: f.type for f in fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "corpus":
            e = _parse_corpus_line(value)
            if base is not None and not Path(e.path).is_absolute():
                e = CorpusEntry(str(base / e.path), e.name, e.language, e.include, e.singletons)
            entries.append(e)
        elif key in ("exclusion", "target"):
            mix_kw[key] = value
        elif key in ("dev", "out", "init"):
            extras[key] = str(base / value) if base is not None and not Path(value).is_absolute() else value
        elif key in names:
            train_kw[key] = None if key == "max_segments" and value.lower() == "auto" else _coerce(value, names[key])
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return TrainConfig(**train_kw), MixtureSpec(entries, **mix_kw), extras


def sample_training_window(doc: Document, cfg: TrainConfig, rng: random.Random) -> tuple[Document, int]:
    """A random run of ``max_segments`` whole segments and its segment offset."""
    segs = segment_document(doc, cfg.segment_length) if doc.nodes else []
    if len(segs) <= cfg.max_segments:
        return doc, 0
    offset = rng.randrange(len(segs) - cfg.max_segments + 1)
    start = segs[offset][0]
    end = segs[offset + cfg.max_segments - 1][1]
    return doc.subdocument(start, end), offset


@dataclass
class StepRecord:
    step: int
    loss: float
    corpus: str
    dev_score: Optional[float] = None

    def to_line(self) -> str:
        dev = "" if self.dev_score is None else repr(self.dev_score)
        return f"{self.step}\t{self.loss!r}\t{self.corpus}\t{dev}"


class TrainingDiverged(RuntimeError):
    pass


def build_model(cfg: TrainConfig, docs: Sequence[Document]) -> CorefScorer:
    vocab, rels = build_vocabs(docs)
    mcfg = cfg.model_config(len(vocab), len(rels))
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return CorefScorer(mcfg, vocab, rels)


def train(corpora: Sequence[tuple[CorpusEntry, Sequence[Document]]], cfg: TrainConfig,
          model: Optional[CorefScorer] = None, dev: Optional[Sequence[Document]] = None,
          on_step: Optional[Callable[[StepRecord], None]] = None) -> tuple[CorefScorer, list[StepRecord]]:
    """Per-document SGD over the concatenation of ``corpora``.

    Every step draws one document uniformly from all documents (no corpus
    weighting), trains on a random window of it and logs the loss. With
    ``model`` given training continues from it (fine-tuning).
    """
    pool = [(entry, d) for entry, docs in corpora for d in docs]
    if not pool:
        raise ConfigError("no training documents")
    if model is None:
        model = build_model(cfg, [d for _, d in pool])
    model.train()
    rng = random.Random(cfg.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    if cfg.optimizer == "adam":
        opt = torch.optim.Adam(params, lr=cfg.learning_rate)
    else:
        opt = torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum)
    cache: dict[tuple[int, int], DocFeatures] = {}
    history: list[StepRecord] = []
    # dropout masks come from torch's global generator; seed it without leaking state
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        for step in range(1, cfg.steps + 1):
            k = rng.randrange(len(pool))
            entry, doc = pool[k]
            window, offset = sample_training_window(doc, cfg, rng)
            key = (k, offset)
            if key not in cache:
                cache[key] = model.featurize(window, entry.singletons)
            loss = model.loss(cache[key])
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDiverged(f"step {step}: loss {value} on {doc.doc_id} ({entry.label}); "
                                       f"try a lower learning rate than {cfg.learning_rate}")
            opt.zero_grad()
            if loss.requires_grad:
                loss.backward()
                if cfg.clip_norm > 0:
                    torch.nn.utils.clip_grad_norm_(params, cfg.clip_norm)
                opt.step()
            rec = StepRecord(step, value, entry.label)
            if dev and cfg.eval_every and step % cfg.eval_every == 0:
                rec.dev_score = evaluate(model, dev)
                model.train()
            if cfg.log_every and step % cfg.log_every == 0:
                log.info("step %d loss %.4f corpus %s%s", step, value, entry.label,
                         "" if rec.dev_score is None else f" dev {rec.dev_score:.4f}")
            history.append(rec)
            if on_step:
                on_step(rec)
    model.eval()
    return model, history


def evaluate(model: CorefScorer, docs: Sequence[Document], match: str = "head") -> float:
    from .predict import predict_document

    system = [predict_document(model, d) for d in docs]
    return primary_score(docs, system, match).primary


def load_corpora(mixture: MixtureSpec) -> list[tuple[CorpusEntry, list[Document]]]:
    return [(e, read_corpus(e.path)) for e in mixture.included()]


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    max_error: float
    per_parameter: dict[str, float]
    coordinates: int

    def lines(self) -> list[str]:
        out = [f"{name}\t{err:.3e}" for name, err in self.per_parameter.items()]
        out.append(f"max\t{self.max_error:.3e}\t({self.coordinates} coordinates)")
        return out


def relative_error(a: float, n: float, floor: float = 1e-6) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def finite_difference_check(model: CorefScorer, features: Sequence[DocFeatures], eps: float = 1e-4,
                            coords_per_param: int = 32, seed: int = 0,
                            grad_hook: Optional[Callable[[str, torch.Tensor], torch.Tensor]] = None,
                            ) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    The model is evaluated in float64 with pruning disabled so the loss is
    smooth in every parameter. Up to ``coords_per_param`` coordinates of
    each parameter array are sampled (all of them for small arrays).
    ``grad_hook`` may rewrite analytic gradients, which lets tests check
    that the harness notices a wrong gradient.
    """
    model = model.double()
    model.eval()  # no dropout while comparing gradients

    def total_loss() -> torch.Tensor:
        return sum((model.loss(f, prune=False) for f in features), torch.zeros((), dtype=torch.float64))

    model.zero_grad()
    total_loss().backward()
    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    count = 0
    with torch.no_grad():
        for name, p in model.named_parameters():
            grad = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            if grad_hook is not None:
                grad = grad_hook(name, grad)
            flat, gflat = p.view(-1), grad.view(-1)
            n = flat.numel()
            idx = np.arange(n) if n <= coords_per_param else rng.choice(n, coords_per_param, replace=False)
            worst = 0.0
            for i in idx:
                orig = float(flat[i])
                flat[i] = orig + eps
                up = float(total_loss())
                flat[i] = orig - eps
                down = float(total_loss())
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                worst = max(worst, relative_error(float(gflat[i]), numeric))
                count += 1
            per_param[name] = worst
    return GradCheckReport(max(per_param.values(), default=0.0), per_param, count)
