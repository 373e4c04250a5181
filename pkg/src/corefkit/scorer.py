"""End-to-end mention-ranking coreference scorer.

Token vectors come from a small trainable encoder (embeddings, one local
self-attention layer with sinusoidal relative positions, optional
dependency-path features). Spans are represented as
``[x_start, x_end, attended sum, width embedding]`` and scored with a
mention FFNN, a bilinear coarse scorer used for pruning and a pairwise
FFNN. The dummy antecedent always scores 0.
"""
from __future__ import annotations

import math
import struct
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .model import ROOT, Document
from .segments import segment_document
from .syntax import SyntaxFeatureConfig

SINGLETON_MODES = ("off", "dummy", "mask", "separate", "mentions")
VIRTUAL_SINGLETON_MODES = ("dummy", "mask", "separate")
SPAN2HEAD_MODES = ("off", "multiclass", "binary")

# upper bounds of distance buckets; the last bucket is open ended
DISTANCE_BUCKETS = (0, 1, 2, 3, 4, 7, 15, 31, 63)
NUM_DISTANCE_BUCKETS = len(DISTANCE_BUCKETS) + 1
VIRTUAL_DISTANCE = NUM_DISTANCE_BUCKETS  # extra row used against the singleton embedding


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embedding_dim: int = 64
    context_window: int = 16
    segment_length: int = 512

    def __post_init__(self):
        if not self.segment_length >= self.context_window >= 1:
            raise ConfigError("need segment_length >= context_window >= 1")


@dataclass
class ModelConfig:
    vocab_size: int = 3
    num_deprels: int = 2
    embedding_dim: int = 64
    context_window: int = 16
    segment_length: int = 512
    hidden_dim: int = 64
    width_dim: int = 20
    distance_dim: int = 20
    deprel_dim: int = 16
    max_tree_depth: int = 5
    max_span_width: int = 30
    keep_ratio: float = 0.4
    max_antecedents: int = 50
    dropout: float = 0.0
    use_tree_features: bool = False
    heads_only: bool = False
    span2head: str = "off"
    singleton_mode: str = "off"

    def __post_init__(self):
        if self.singleton_mode not in SINGLETON_MODES:
            raise ConfigError(f"singleton_mode must be one of {SINGLETON_MODES}")
        if self.span2head not in SPAN2HEAD_MODES:
            raise ConfigError(f"span2head must be one of {SPAN2HEAD_MODES}")
        if not 0 < self.keep_ratio <= 1:
            raise ConfigError("keep_ratio must be in (0, 1]")
        if self.max_antecedents < 1 or self.max_span_width < 1:
            raise ConfigError("max_antecedents and max_span_width must be >= 1")
        self.encoder  # validates window/segment sizes

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.vocab_size, self.embedding_dim, self.context_window, self.segment_length)

    @property
    def syntax(self) -> Optional[SyntaxFeatureConfig]:
        if not self.use_tree_features:
            return None
        return SyntaxFeatureConfig(self.max_tree_depth, self.deprel_dim, self.embedding_dim)

    @property
    def token_dim(self) -> int:
        syn = self.syntax
        return self.embedding_dim + (syn.feature_width if syn else 0)

    @property
    def span_dim(self) -> int:
        return 3 * self.token_dim + self.width_dim

    @property
    def num_virtual(self) -> int:
        return 2 if self.singleton_mode in VIRTUAL_SINGLETON_MODES else 1

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, values: dict) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in values:
                kwargs[f.name] = _coerce(values[f.name], f.type)
        return cls(**kwargs)


def _coerce(value, type_name):
    if not isinstance(value, str):
        return value
    if type_name in ("bool", bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if type_name in ("int", int):
        return int(value)
    if type_name in ("float", float):
        return float(value)
    return value


class Vocab:
    """String to index map with reserved entries at the front."""

    def __init__(self, items: Sequence[str] = (), specials: Sequence[str] = ("<pad>", "<unk>")):
        self.items = list(specials)
        self.specials = len(specials)
        self.index = {s: i for i, s in enumerate(self.items)}
        for it in items:
            self.add(it)

    def add(self, item: str) -> int:
        if item not in self.index:
            self.index[item] = len(self.items)
            self.items.append(item)
        return self.index[item]

    def get(self, item: str) -> int:
        return self.index.get(item, 1)

    def __len__(self) -> int:
        return len(self.items)


TOKEN_SPECIALS = ("<pad>", "<unk>", "<zero>")
ZERO_FORM = 2


def build_vocabs(docs: Sequence[Document]) -> tuple[Vocab, Vocab]:
    forms = Vocab(specials=TOKEN_SPECIALS)
    rels = Vocab()
    for d in docs:
        for n in d.nodes:
            if not (n.is_empty and n.form == "_"):
                forms.add(n.form)
            rels.add(n.deprel)
    return forms, rels


def distance_bucket(d: torch.Tensor) -> torch.Tensor:
    bounds = torch.tensor(DISTANCE_BUCKETS, dtype=d.dtype)
    return torch.bucketize(d, bounds)


# ---------------------------------------------------------------------------
# document featurization


@dataclass
class DocFeatures:
    doc: Document
    token_ids: torch.Tensor        # [n]
    segment_ids: torch.Tensor      # [n]
    word_pos: torch.Tensor         # [n] number of words before the node
    num_words: int
    starts: torch.Tensor           # [N] candidate span first node
    ends: torch.Tensor             # [N] candidate span last node (inclusive)
    span_index: torch.Tensor       # [N, W] node offsets inside each span (clamped)
    span_mask: torch.Tensor        # [N, W]
    path_nodes: torch.Tensor       # [n, D] ancestors, n = padding row
    path_rels: torch.Tensor        # [n, D] deprel ids, 0 = padding
    gold_cluster: torch.Tensor     # [N] gold entity index or -1
    gold_singleton: torch.Tensor   # [N] bool
    gold_mention: torch.Tensor     # [N] bool
    gold_head: torch.Tensor        # [N] relative head offset or -1
    singletons_annotated: bool = True

    @property
    def num_candidates(self) -> int:
        return len(self.starts)


def candidate_spans(doc: Document, max_width: int, heads_only: bool) -> list[tuple[int, int]]:
    """Word-bounded node ranges inside one sentence, at most ``max_width`` nodes.

    In heads-only mode every word is a candidate of its own.
    """
    out = []
    for a, b in doc.sentence_ranges():
        words = [i for i in range(a, b) if not doc.nodes[i].is_empty]
        if heads_only:
            out.extend((i, i) for i in words)
            continue
        for k, s in enumerate(words):
            for e in words[k:]:
                if e - s + 1 > max_width:
                    break
                out.append((s, e))
    return out


def _mention_key(doc: Document, m, cfg: ModelConfig):
    idx = [doc.index[n] for n in m.nodes]
    if cfg.heads_only:
        h = doc.index[m.head]
        return None if doc.nodes[h].is_empty else (h, h)
    words = [i for i in idx if not doc.nodes[i].is_empty]
    if not words:
        return None
    a, b = words[0], words[-1]
    if doc.sentence_of[a] != doc.sentence_of[b] or b - a + 1 > cfg.max_span_width:
        return None
    return (a, b)


def featurize(doc: Document, vocab: Vocab, rels: Vocab, cfg: ModelConfig,
              singletons_annotated: bool = True) -> DocFeatures:
    n = len(doc.nodes)
    tok = [ZERO_FORM if (x.is_empty and x.form == "_") else vocab.get(x.form) for x in doc.nodes]
    seg = np.zeros(n, dtype=np.int64)
    for s, (a, b) in enumerate(segment_document(doc, cfg.segment_length) if n else []):
        seg[a:b] = s
    word_pos = np.cumsum([0] + [0 if x.is_empty else 1 for x in doc.nodes])[:n]

    spans = candidate_spans(doc, cfg.max_span_width, cfg.heads_only)
    N, W = len(spans), cfg.max_span_width
    starts = np.array([s for s, _ in spans], dtype=np.int64)
    ends = np.array([e for _, e in spans], dtype=np.int64)
    offs = np.arange(W)
    span_index = starts[:, None] + offs[None, :] if N else np.zeros((0, W), dtype=np.int64)
    span_mask = span_index <= ends[:, None] if N else np.zeros((0, W), dtype=bool)
    span_index = np.minimum(span_index, max(n - 1, 0))

    D = cfg.max_tree_depth
    path_nodes = np.full((n, D), n, dtype=np.int64)
    path_rels = np.zeros((n, D), dtype=np.int64)
    for i, x in enumerate(doc.nodes):
        cur, k = x.id, 0
        while cur is not ROOT and k < D and cur in doc.index:
            j = doc.index[cur]
            path_nodes[i, k] = j
            path_rels[i, k] = rels.get(doc.nodes[j].deprel)
            cur = doc.nodes[j].head
            k += 1

    cand_pos = {sp: i for i, sp in enumerate(spans)}
    gold_cluster = np.full(N, -1, dtype=np.int64)
    gold_singleton = np.zeros(N, dtype=bool)
    gold_head = np.full(N, -1, dtype=np.int64)
    ordered = sorted(((m.sort_key, m.nodes, ci, m) for ci, e in enumerate(doc.entities) for m in e.mentions),
                     key=lambda t: (t[0], t[1], t[2]))
    for _, _, ci, m in ordered:
        key = _mention_key(doc, m, cfg)
        if key is None or key not in cand_pos:
            continue
        c = cand_pos[key]
        if gold_cluster[c] >= 0:
            continue
        gold_cluster[c] = ci
        gold_singleton[c] = len(doc.entities[ci].mentions) == 1
        h = doc.index[m.head]
        if key[0] <= h <= key[1]:
            gold_head[c] = h - key[0]

    t = torch.as_tensor
    return DocFeatures(
        doc=doc,
        token_ids=t(np.array(tok, dtype=np.int64)),
        segment_ids=t(seg),
        word_pos=t(word_pos.astype(np.int64)),
        num_words=doc.num_words,
        starts=t(starts), ends=t(ends),
        span_index=t(span_index.astype(np.int64)), span_mask=t(span_mask),
        path_nodes=t(path_nodes), path_rels=t(path_rels),
        gold_cluster=t(gold_cluster), gold_singleton=t(gold_singleton),
        gold_mention=t(gold_cluster >= 0), gold_head=t(gold_head),
        singletons_annotated=singletons_annotated,
    )


# ---------------------------------------------------------------------------
# building blocks


def ffnn(d_in: int, hidden: int, d_out: int = 1, dropout: float = 0.0) -> nn.Sequential:
    # smooth activation keeps finite-difference checks free of kinks
    return nn.Sequential(nn.Linear(d_in, hidden), nn.GELU(), nn.Dropout(dropout), nn.Linear(hidden, d_out))


def sinusoidal(offsets: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    ang = offsets.to(torch.float64)[:, None] * freq[None, :]
    out = torch.zeros(len(offsets), dim, dtype=torch.float64)
    out[:, 0:2 * half:2] = torch.sin(ang)
    out[:, 1:2 * half:2] = torch.cos(ang)
    return out


def head_positions(logits: torch.Tensor) -> set[int]:
    """Positions whose sigmoid probability exceeds 0.5, else the argmax."""
    probs = torch.sigmoid(logits)
    picked = {int(i) for i in torch.nonzero(probs > 0.5).flatten()}
    return picked or {int(torch.argmax(logits))}


def coarse_to_fine_prune(mention_scores: torch.Tensor, g: torch.Tensor, w_c: torch.Tensor,
                         num_words: int, keep_ratio: float, max_antecedents: int):
    """Keep the top ``ceil(keep_ratio * num_words)`` spans, then the top-c earlier antecedents.

    Returns ``(kept, antecedents, ante_mask, coarse)``: kept candidate
    indices in document order, ``[K, c]`` antecedent positions into
    ``kept``, validity mask and the bilinear scores of the kept pairs.
    Selection uses a stable sort so ties resolve to earlier spans and a
    larger ratio only ever adds spans.
    """
    n_cand = len(mention_scores)
    k = min(n_cand, math.ceil(keep_ratio * num_words - 1e-9))
    order = torch.sort(-mention_scores.detach(), stable=True).indices[:k]
    kept = torch.sort(order).values
    sm = mention_scores[kept]
    gk = g[kept]
    coarse = gk @ w_c @ gk.T
    K = len(kept)
    lower = torch.tril(torch.ones(K, K, dtype=torch.bool), diagonal=-1)
    pair = (sm[:, None] + sm[None, :] + coarse).detach().masked_fill(~lower, -math.inf)
    c = max(1, min(max_antecedents, max(K - 1, 1)))
    ante = torch.sort(pair, dim=1, descending=True, stable=True).indices[:, :c]
    mask = torch.gather(lower, 1, ante) if K else torch.zeros(0, c, dtype=torch.bool)
    return kept, ante, mask, torch.gather(coarse, 1, ante) if K else coarse.new_zeros(0, c)


@dataclass
class ScoreTable:
    candidates: torch.Tensor      # [N, 2] (start, end)
    mention_scores: torch.Tensor  # [N] all candidates
    kept: torch.Tensor            # [K] candidate indices
    antecedents: torch.Tensor     # [K, c] positions into kept, -1 invalid
    scores: torch.Tensor          # [K, V + c] with -inf where invalid
    num_virtual: int
    span_reprs: torch.Tensor      # [N, span_dim]
    token_reprs: torch.Tensor     # [n, token_dim]

    def probabilities(self) -> torch.Tensor:
        return torch.softmax(self.scores, dim=1)


# ---------------------------------------------------------------------------
# model


class CorefScorer(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab: Optional[Vocab] = None, rels: Optional[Vocab] = None):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab or Vocab(specials=TOKEN_SPECIALS)
        self.rels = rels or Vocab()
        d, h = cfg.embedding_dim, cfg.hidden_dim
        self.tok_emb = nn.Embedding(cfg.vocab_size, d)
        self.drop = nn.Dropout(cfg.dropout)
        self.attn_q = nn.Linear(d, d)
        self.attn_k = nn.Linear(d, d, bias=False)  # a key bias cancels in the softmax
        self.attn_v = nn.Linear(d, d)
        self.attn_o = nn.Linear(d, d)
        if cfg.use_tree_features:
            self.deprel_emb = nn.Embedding(cfg.num_deprels, cfg.deprel_dim)
        dx, dg = cfg.token_dim, cfg.span_dim
        self.span_attn = nn.Linear(dx, 1, bias=False)  # a bias would cancel in the softmax
        self.width_emb = nn.Embedding(cfg.max_span_width, cfg.width_dim)
        self.ffnn_m = ffnn(dg, h, dropout=cfg.dropout)
        self.w_coarse = nn.Parameter(torch.zeros(dg, dg))
        self.distance_emb = nn.Embedding(NUM_DISTANCE_BUCKETS + 1, cfg.distance_dim)
        self.ffnn_a = ffnn(3 * dg + cfg.distance_dim, h, dropout=cfg.dropout)
        if cfg.singleton_mode in VIRTUAL_SINGLETON_MODES:
            self.singleton_emb = nn.Parameter(torch.zeros(dg))
        if cfg.singleton_mode == "separate":
            self.ffnn_s = ffnn(dg, h, dropout=cfg.dropout)
        if cfg.span2head == "multiclass":
            self.head_multi = ffnn(dg, h, cfg.max_span_width, dropout=cfg.dropout)
        elif cfg.span2head == "binary":
            self.head_binary = ffnn(dg + dx, h, dropout=cfg.dropout)
        self.reset_parameters()

    def reset_parameters(self):
        for name, p in self.named_parameters():
            if name.endswith("bias"):
                nn.init.zeros_(p)
            elif p.dim() == 1:
                nn.init.normal_(p, std=0.1)
            elif "emb" in name:
                nn.init.normal_(p, std=0.5)
            elif name == "w_coarse":
                nn.init.normal_(p, std=0.01)
            else:
                nn.init.xavier_uniform_(p)

    @property
    def dtype(self) -> torch.dtype:
        return self.tok_emb.weight.dtype

    def featurize(self, doc: Document, singletons_annotated: bool = True) -> DocFeatures:
        return featurize(doc, self.vocab, self.rels, self.cfg, singletons_annotated)

    # -- encoder ------------------------------------------------------------

    def encode(self, f: DocFeatures) -> torch.Tensor:
        """One vector per node; identical local contexts give identical vectors."""
        n = len(f.token_ids)
        d = self.cfg.embedding_dim
        if n == 0:
            return torch.zeros(0, self.cfg.token_dim, dtype=self.dtype)
        e = self.drop(self.tok_emb(f.token_ids))
        half = self.cfg.context_window // 2
        q, k, v = self.attn_q(e), self.attn_k(e), self.attn_v(e)
        rel = sinusoidal(torch.arange(-half, half + 1), d).to(self.dtype)
        pos = torch.arange(n)
        offset = pos[None, :] - pos[:, None]
        allowed = (offset.abs() <= half) & (f.segment_ids[None, :] == f.segment_ids[:, None])
        rel_logits = torch.gather(q @ rel.T, 1, (offset.clamp(-half, half) + half))
        logits = (q @ k.T + rel_logits) / math.sqrt(d)
        att = torch.softmax(logits.masked_fill(~allowed, -math.inf), dim=1)
        x = e + self.attn_o(att @ v)
        if self.cfg.use_tree_features:
            x = torch.cat([x, self.tree_features(x, f)], dim=1)
        return x

    def tree_features(self, x: torch.Tensor, f: DocFeatures) -> torch.Tensor:
        padded = torch.cat([x, x.new_zeros(1, x.shape[1])], dim=0)
        nodes = padded[f.path_nodes]                       # [n, D, d]
        rels = self.deprel_emb(f.path_rels)                # [n, D, dr]
        return torch.cat([nodes, rels], dim=2).reshape(len(x), -1)

    # -- spans --------------------------------------------------------------

    def span_representations(self, x: torch.Tensor, f: DocFeatures) -> torch.Tensor:
        if f.num_candidates == 0:
            return x.new_zeros(0, self.cfg.span_dim)
        att = self.span_attn(x).squeeze(1)[f.span_index].masked_fill(~f.span_mask, -math.inf)
        alpha = torch.softmax(att, dim=1)
        x_hat = (alpha[:, :, None] * x[f.span_index]).sum(1)
        width = self.width_emb(f.ends - f.starts)
        return torch.cat([x[f.starts], x[f.ends], x_hat, width], dim=1)

    def span_representation(self, x: torch.Tensor, start: int, end: int) -> torch.Tensor:
        """Representation of a single node range ``[start, end]``."""
        idx = torch.arange(start, end + 1)
        alpha = torch.softmax(self.span_attn(x[idx]).squeeze(1), dim=0)
        x_hat = (alpha[:, None] * x[idx]).sum(0)
        width = self.width_emb(torch.tensor(end - start))
        return torch.cat([x[start], x[end], x_hat, width])

    def mention_score(self, g: torch.Tensor) -> torch.Tensor:
        return self.ffnn_m(g).squeeze(-1)

    def pair_score(self, gi: torch.Tensor, gj: torch.Tensor, dist: torch.Tensor) -> torch.Tensor:
        """FFNN_a over ``[g_i, g_j, g_i * g_j, distance]``; inputs broadcast."""
        first, act, drop, last = self.ffnn_a
        dg = self.cfg.span_dim
        w = first.weight
        hidden = (gi @ w[:, :dg].T + gj @ w[:, dg:2 * dg].T + (gi * gj) @ w[:, 2 * dg:3 * dg].T
                  + self.distance_emb(dist) @ w[:, 3 * dg:].T + first.bias)
        return last(drop(act(hidden))).squeeze(-1)

    def _pair_scores_indexed(self, gk: torch.Tensor, ante: torch.Tensor, dist: torch.Tensor) -> torch.Tensor:
        # same as pair_score(gk[:, None], gk[ante], dist) without materializing [K, c, 3 dg] inputs
        first, act, drop, last = self.ffnn_a
        dg = self.cfg.span_dim
        w = first.weight
        a = gk @ w[:, :dg].T
        b = gk @ w[:, dg:2 * dg].T
        w3 = w[:, 2 * dg:3 * dg]
        if gk.shape[0] ** 2 * w.shape[0] <= 4_000_000:
            # all pairs as one batched matmul, then pick the kept antecedents
            full = (gk[None, :, :] * w3[:, None, :]) @ gk.T          # [h, K, K]
            prod = torch.gather(full.permute(1, 2, 0), 1, ante[:, :, None].expand(-1, -1, w.shape[0]))
        else:
            prod = (gk[:, None, :] * gk[ante]) @ w3.T
        hidden = a[:, None, :] + b[ante] + prod + (self.distance_emb.weight @ w[:, 3 * dg:].T)[dist] + first.bias
        return last(drop(act(hidden))).squeeze(-1)

    def singleton_score(self, g: torch.Tensor, variant: Optional[str] = None) -> torch.Tensor:
        """Score of the singleton virtual antecedent for span vectors ``g`` ([K, dg])."""
        variant = variant or self.cfg.singleton_mode
        if variant not in VIRTUAL_SINGLETON_MODES:
            raise ConfigError(f"no singleton antecedent in mode {variant!r}")
        if not hasattr(self, "singleton_emb") or (variant == "separate" and not hasattr(self, "ffnn_s")):
            raise ConfigError(f"singleton variant {variant!r} has no parameters allocated")
        s = self.singleton_emb
        if variant == "separate":
            return self.ffnn_s(g).squeeze(-1) + self.ffnn_s(s).squeeze(-1)
        out = self.mention_score(g) + self.mention_score(s)
        if variant == "dummy":
            dist = torch.full((len(g),), VIRTUAL_DISTANCE, dtype=torch.long)
            out = out + g @ self.w_coarse @ s + self.pair_score(g, s, dist)
        return out

    # -- full scoring ---------------------------------------------------------

    def forward(self, f: DocFeatures, prune: bool = True) -> ScoreTable:
        x = self.encode(f)
        g = self.span_representations(x, f)
        sm = self.mention_score(g) if len(g) else g.new_zeros(0)
        ratio = self.cfg.keep_ratio if prune else 1.0
        c = self.cfg.max_antecedents if prune else max(f.num_candidates, 1)
        num_words = f.num_words if prune else f.num_candidates
        kept, ante, mask, coarse = coarse_to_fine_prune(sm, g, self.w_coarse, num_words, ratio, c)
        gk, smk = g[kept], sm[kept]
        K, C = ante.shape
        starts = f.starts[kept]
        dist = distance_bucket(f.word_pos[starts][:, None] - f.word_pos[starts[ante]])
        fine = self._pair_scores_indexed(gk, ante, dist) if K else coarse
        total = smk[:, None] + smk[ante] + coarse + fine
        total = total.masked_fill(~mask, -math.inf)
        cols = [total.new_zeros(K, 1)]
        if self.cfg.num_virtual == 2:
            cols.append(self.singleton_score(gk)[:, None])
        scores = torch.cat(cols + [total], dim=1)
        return ScoreTable(
            candidates=torch.stack([f.starts, f.ends], dim=1),
            mention_scores=sm, kept=kept, antecedents=ante.masked_fill(~mask, -1),
            scores=scores, num_virtual=self.cfg.num_virtual, span_reprs=g, token_reprs=x,
        )

    # -- losses ---------------------------------------------------------------

    def gold_mask(self, table: ScoreTable, f: DocFeatures) -> torch.Tensor:
        V = table.num_virtual
        cl = f.gold_cluster[table.kept]
        ante = table.antecedents
        ante_cl = torch.where(ante >= 0, cl[ante.clamp(min=0)], torch.full_like(ante, -1))
        real = (ante >= 0) & (cl[:, None] >= 0) & (ante_cl == cl[:, None])
        none = ~real.any(dim=1)
        virtual = torch.zeros(len(cl), V, dtype=torch.bool)
        if V == 2:
            single = none & f.gold_singleton[table.kept]
            virtual[:, 1] = single
            virtual[:, 0] = none & ~single
        else:
            virtual[:, 0] = none
        return torch.cat([virtual, real], dim=1)

    def loss(self, f: DocFeatures, prune: bool = True) -> torch.Tensor:
        table = self(f, prune=prune)
        total = marginal_loss(table.scores, self.gold_mask(table, f))
        if self.cfg.singleton_mode == "mentions" and f.singletons_annotated:
            total = total + singleton_bce_loss(table.mention_scores, f.gold_mention)
        if self.cfg.span2head != "off":
            total = total + self.head_loss(table, f)
        return total

    def head_logits(self, g: torch.Tensor, x: torch.Tensor, start: int, end: int) -> torch.Tensor:
        width = end - start + 1
        if self.cfg.span2head == "multiclass":
            return self.head_multi(g)[:width]
        toks = x[start:end + 1]
        return self.head_binary(torch.cat([g.expand(width, -1), toks], dim=1)).squeeze(-1)

    def head_loss(self, table: ScoreTable, f: DocFeatures) -> torch.Tensor:
        idx = torch.nonzero(f.gold_head >= 0).flatten()
        if len(idx) == 0:
            return table.scores.new_zeros(())
        W = self.cfg.max_span_width
        g = table.span_reprs[idx]
        starts, ends = f.starts[idx], f.ends[idx]
        target = torch.zeros(len(idx), W, dtype=g.dtype)
        target[torch.arange(len(idx)), f.gold_head[idx]] = 1
        valid = f.span_mask[idx]
        if self.cfg.span2head == "multiclass":
            logits = self.head_multi(g)
        else:
            x = table.token_reprs
            toks = x[f.span_index[idx]]                                   # [M, W, dx]
            logits = self.head_binary(torch.cat([g[:, None, :].expand(-1, W, -1), toks], dim=2)).squeeze(-1)
        bce = nn.functional.binary_cross_entropy_with_logits(logits, target, reduction="none")
        return (bce * valid).sum()

    # -- prediction -------------------------------------------------------------

    @torch.no_grad()
    def predict_heads(self, table: ScoreTable, cand: int) -> set[int]:
        s, e = (int(v) for v in table.candidates[cand])
        logits = self.head_logits(table.span_reprs[cand], table.token_reprs, s, e)
        return head_positions(logits)


def marginal_loss(scores: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """Negative log marginal likelihood of the gold antecedents, summed over spans."""
    if len(scores) == 0:
        return scores.new_zeros(())
    if not bool(gold.any(dim=1).all()):
        raise RuntimeError("every span needs at least one gold antecedent (the dummy at least)")
    gold_scores = scores.masked_fill(~gold, -math.inf)
    return (torch.logsumexp(scores, dim=1) - torch.logsumexp(gold_scores, dim=1)).sum()


def singleton_bce_loss(mention_scores: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy of every candidate being a gold mention, summed."""
    if len(mention_scores) == 0:
        return mention_scores.new_zeros(())
    return nn.functional.binary_cross_entropy_with_logits(
        mention_scores, labels.to(mention_scores.dtype), reduction="sum")


# ---------------------------------------------------------------------------
# checkpoints
#
# layout (little endian):
#   b"CKPT" u32 version
#   u32 length + utf-8 config text ("key = value" lines)
#   u32 count + u32-length-prefixed utf-8 strings  (token vocabulary)
#   u32 count + u32-length-prefixed utf-8 strings  (deprel vocabulary)
#   u32 arrays, each: u16 name length, name, u8 ndim, u32 dims, float32 data

MAGIC = b"CKPT"
VERSION = 1


def _write_str(buf: list, s: str):
    data = s.encode("utf-8")
    buf.append(struct.pack("<I", len(data)))
    buf.append(data)


def save_checkpoint(model: CorefScorer, path) -> None:
    buf: list[bytes] = [MAGIC, struct.pack("<I", VERSION)]
    _write_str(buf, model.cfg.to_text())
    for vocab in (model.vocab, model.rels):
        buf.append(struct.pack("<I", len(vocab.items)))
        for it in vocab.items:
            _write_str(buf, it)
    params = list(model.named_parameters())
    buf.append(struct.pack("<I", len(params)))
    for name, p in params:
        raw = name.encode("utf-8")
        buf.append(struct.pack("<H", len(raw)))
        buf.append(raw)
        buf.append(struct.pack("<B", p.dim()))
        buf.append(struct.pack(f"<{p.dim()}I", *p.shape))
        buf.append(p.detach().cpu().numpy().astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(buf))


def load_checkpoint(path) -> CorefScorer:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = 4
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")

    def read_str():
        nonlocal pos
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        s = data[pos:pos + n].decode("utf-8")
        pos += n
        return s

    cfg = ModelConfig.from_mapping(parse_kv(read_str()))
    vocabs = []
    for _ in range(2):
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        items = [read_str() for _ in range(count)]
        v = Vocab(specials=())
        for it in items:
            v.add(it)
        v.specials = len(TOKEN_SPECIALS) if not vocabs else 2
        vocabs.append(v)
    model = CorefScorer(cfg, vocabs[0], vocabs[1])
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        state[name] = torch.from_numpy(arr.astype(np.float32))
    model.load_state_dict(state)
    return model


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; repeated keys keep the last value."""
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
