"""Cloze reader over subword-augmented word embeddings.

Each token gets a word embedding (through the short list, so filtered
words share one unknown row) and a subword embedding built by a BiGRU
over its BPE units. The two are fused by a configurable operator, run
through stacked gated-attention layers against the query, and the answer
distribution aggregates per-position probability over repeated words.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from . import neural
from .autodiff import Tensor
from .bpe import MergeTable, SubwordVocab
from .configio import load_kv, save_kv
from .data import PLACEHOLDER, ClozeExample
from .neural import GruParams, ParamStore
from .vocab import (
    ShortList,
    Vocabulary,
    index_subwords,
    index_word,
    load_short_list,
    save_short_list,
)

INTEGRATION_OPS = ("concat", "sum", "mul")


@dataclass
class ReaderConfig:
    integration_op: str = "mul"
    num_layers: int = 3
    hidden: int = 128
    word_dim: int = 200
    subword_dim: int = 100
    gamma: float = 0.9
    num_merges: int = 1000
    dropout: float = 0.5

    def __post_init__(self):
        if self.integration_op not in INTEGRATION_OPS:
            raise ValueError(f"unknown integration op: {self.integration_op!r}")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        for name in ("hidden", "word_dim", "subword_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_merges < 0:
            raise ValueError("num_merges must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"invalid filter ratio: {self.gamma}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def subword_out_dim(self) -> int:
        # sum and mul need the subword vector in word-embedding space
        return self.word_dim if self.integration_op in ("sum", "mul") else self.subword_dim

    @property
    def embed_dim(self) -> int:
        if self.integration_op == "concat":
            return self.word_dim + self.subword_dim
        return self.word_dim


@dataclass
class LayerParams:
    doc_fwd: GruParams
    doc_bwd: GruParams
    query_fwd: GruParams
    query_bwd: GruParams


class ReaderModel:
    """Parameters plus the fitted tokenization artifacts.

    Parameter creation order is fixed; it defines both the rng draw
    sequence at init and the checkpoint layout.
    """

    def __init__(
        self,
        config: ReaderConfig,
        merges: MergeTable,
        subwords: SubwordVocab,
        vocab: Vocabulary,
        short_list: ShortList,
        seed: int = 0,
    ):
        self.config = config
        self.merges = merges
        self.subwords = subwords
        self.vocab = vocab
        self.short_list = short_list
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        store = self.params
        # word rows at near-unit norm: uniform limit 1/sqrt(d) keeps the fused
        # mul/sum signal at a trainable scale; subword rows use the flat 0.05
        self.word_emb = store.add(
            "word_emb",
            neural.uniform_init(
                rng,
                (short_list.kept_count + 1, config.word_dim),
                scale=1.0 / np.sqrt(config.word_dim),
            ),
        )
        self.sub_emb = store.add(
            "sub_emb", neural.uniform_init(rng, (subwords.size, config.subword_dim))
        )
        self.sub_enc_fwd = neural.init_gru(
            store, "sub_enc/fwd", config.subword_dim, config.hidden, rng
        )
        self.sub_enc_bwd = neural.init_gru(
            store, "sub_enc/bwd", config.subword_dim, config.hidden, rng
        )
        self.sub_proj_w = store.add(
            "sub_proj/W",
            neural.fan_scaled_init(rng, (config.subword_out_dim, 2 * config.hidden)),
        )
        self.sub_proj_b = store.add("sub_proj/b", np.zeros(config.subword_out_dim))
        self.layers: list[LayerParams] = []
        for i in range(1, config.num_layers + 1):
            doc_in = config.embed_dim if i == 1 else 2 * config.hidden
            self.layers.append(
                LayerParams(
                    doc_fwd=neural.init_gru(
                        store, f"layer{i}/doc/fwd", doc_in, config.hidden, rng
                    ),
                    doc_bwd=neural.init_gru(
                        store, f"layer{i}/doc/bwd", doc_in, config.hidden, rng
                    ),
                    query_fwd=neural.init_gru(
                        store, f"layer{i}/query/fwd", config.embed_dim, config.hidden, rng
                    ),
                    query_bwd=neural.init_gru(
                        store, f"layer{i}/query/bwd", config.embed_dim, config.hidden, rng
                    ),
                )
            )

    @property
    def unk_word_index(self) -> int:
        return self.short_list.unk_index


@dataclass
class AnswerDistribution:
    """Per-position probabilities plus their per-word aggregation."""

    doc_tokens: tuple[str, ...]
    per_position: np.ndarray
    positions: dict[str, list[int]]
    per_candidate: dict[str, float]


@dataclass
class ForwardPass:
    example: ClozeExample
    p: Tensor
    dist: AnswerDistribution
    alphas: list[np.ndarray] | None
    h_doc_final: Tensor
    q_t: Tensor


def build_distribution(p: np.ndarray, doc_tokens: tuple[str, ...]) -> AnswerDistribution:
    positions: dict[str, list[int]] = {}
    for i, token in enumerate(doc_tokens):
        positions.setdefault(token, []).append(i)
    p = np.asarray(p, dtype=np.float64)
    per_candidate = {w: float(p[ix].sum()) for w, ix in positions.items()}
    return AnswerDistribution(tuple(doc_tokens), p.copy(), positions, per_candidate)


def answer(dist: AnswerDistribution) -> str:
    """Highest aggregated probability; ties go to the earliest first position."""
    return min(
        dist.per_candidate,
        key=lambda w: (-dist.per_candidate[w], dist.positions[w][0]),
    )


def subword_encode_batch(model: ReaderModel, words: list[str]) -> Tensor:
    """Subword embeddings for a list of words, stacked as (n, subword_out_dim)."""
    if not words:
        raise ValueError("subword_encode_batch: empty word list")
    seqs = [index_subwords(w, model.merges, model.subwords) for w in words]
    lengths = np.array([len(s) for s in seqs], dtype=np.intp)
    t_max = int(lengths.max())
    idx = np.zeros((len(words), t_max), dtype=np.intp)
    for i, seq in enumerate(seqs):
        idx[i, : len(seq)] = seq
    flat = ad.gather_rows(model.sub_emb, idx.reshape(-1))
    x3 = ad.reshape(flat, (len(words), t_max, model.config.subword_dim))
    h = neural.bigru_batch(x3, lengths, model.sub_enc_fwd, model.sub_enc_bwd)
    finals = neural.bigru_finals(h, lengths)
    return neural.dense(finals, model.sub_proj_w, model.sub_proj_b)


def subword_embed(model: ReaderModel, word: str) -> Tensor:
    return ad.take_row(subword_encode_batch(model, [word]), 0)


def _combine(op: str, we: Tensor, se: Tensor) -> Tensor:
    if op == "concat":
        return ad.concat([we, se], axis=1)
    if op == "sum":
        return ad.add(we, se)
    if op == "mul":
        return ad.mul(we, se)
    raise ValueError(f"unknown integration op: {op!r}")


def augment_words(model: ReaderModel, words: list[str]) -> Tensor:
    """Fused token embeddings (n, embed_dim); one row per distinct word.

    A word outside the short list reads the shared unknown word row, but
    its subword branch is always computed from the original spelling.
    """
    word_idx = np.array(
        [index_word(w, model.short_list) for w in words], dtype=np.intp
    )
    we = ad.gather_rows(model.word_emb, word_idx)
    se = subword_encode_batch(model, words)
    return _combine(model.config.integration_op, we, se)


def augment(model: ReaderModel, word: str) -> Tensor:
    return ad.take_row(augment_words(model, [word]), 0)


def encode(model: ReaderModel, tokens, fwd: GruParams, bwd: GruParams) -> Tensor:
    """Fused embeddings for a token sequence run through one BiGRU: (n, 2h)."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("encode: empty token sequence")
    distinct: dict[str, int] = {}
    for tok in tokens:
        distinct.setdefault(tok, len(distinct))
    embedded = augment_words(model, list(distinct))
    rows = ad.gather_rows(embedded, [distinct[t] for t in tokens])
    x3, lengths = ad.pad_stack([rows])
    h = neural.bigru_batch(x3, lengths, fwd, bwd)
    return ad.slice_rows(h, 0, len(tokens))


def gated_attention_layer(h_doc: Tensor, h_query: Tensor) -> tuple[Tensor, Tensor]:
    """Per-token query attention followed by the elementwise gate.

    Returns the gated document states (k_doc, dim) and the attention
    matrix (k_doc, k_query) whose rows sum to one.
    """
    if h_doc.ndim != 2 or h_query.ndim != 2:
        raise ValueError("gated_attention_layer: expected 2-D state matrices")
    if h_doc.shape[1] != h_query.shape[1]:
        raise ValueError(
            "gated_attention_layer: state dims differ "
            f"({h_doc.shape[1]} vs {h_query.shape[1]})"
        )
    scores = ad.matmul(h_doc, ad.transpose(h_query))
    alpha = ad.softmax(scores)
    beta = ad.matmul(alpha, h_query)
    return ad.mul(h_doc, beta), alpha


def predict(h_doc, q_t, doc_tokens) -> AnswerDistribution:
    """Softmax over document positions of each position's match with q_t."""
    if not isinstance(h_doc, Tensor):
        h_doc = Tensor(h_doc)
    if not isinstance(q_t, Tensor):
        q_t = Tensor(q_t)
    doc_tokens = tuple(doc_tokens)
    if h_doc.ndim != 2 or h_doc.shape[0] != len(doc_tokens):
        raise ValueError("predict: h_doc must have one row per document token")
    p = ad.softmax(ad.matmul(h_doc, q_t))
    return build_distribution(p.data, doc_tokens)


def _validate_example(ex: ClozeExample) -> None:
    n = ex.query.count(PLACEHOLDER)
    if n == 0:
        raise ValueError(f"example {ex.id!r}: query has no placeholder")
    if n > 1:
        raise ValueError(f"example {ex.id!r}: query has {n} placeholders")
    if not ex.document:
        raise ValueError(f"example {ex.id!r}: empty document")


def forward_batch(
    model: ReaderModel,
    examples: list[ClozeExample],
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    collect_attention: bool = False,
) -> list[ForwardPass]:
    """Run the reader over a batch; one shared graph, one result per example."""
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if not examples:
        raise ValueError("forward_batch: empty batch")
    cfg = model.config
    if mode == "train" and cfg.dropout > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    for ex in examples:
        _validate_example(ex)

    distinct: dict[str, int] = {}
    for ex in examples:
        for token in ex.document + ex.query:
            if token not in distinct:
                distinct[token] = len(distinct)
    embedded = augment_words(model, list(distinct))

    doc_mats = [
        ad.gather_rows(embedded, [distinct[t] for t in ex.document])
        for ex in examples
    ]
    query_mats = [
        ad.gather_rows(embedded, [distinct[t] for t in ex.query])
        for ex in examples
    ]
    x_doc, d_lens = ad.pad_stack(doc_mats)
    x_query, q_lens = ad.pad_stack(query_mats)

    alphas: list[list[np.ndarray]] = [[] for _ in examples]
    doc_in = x_doc
    hq_final: list[Tensor] = []
    for layer_i, layer in enumerate(model.layers, start=1):
        d_in, q_in = doc_in, x_query
        if layer_i > 1 and mode == "train" and cfg.dropout > 0:
            d_in = neural.dropout(d_in, cfg.dropout, mode, rng)
            q_in = neural.dropout(q_in, cfg.dropout, mode, rng)
        h_doc = neural.bigru_batch(d_in, d_lens, layer.doc_fwd, layer.doc_bwd)
        h_query = neural.bigru_batch(q_in, q_lens, layer.query_fwd, layer.query_bwd)
        gated: list[Tensor] = []
        hq_final = []
        for i in range(len(examples)):
            hd_i = ad.slice_rows(h_doc, i, int(d_lens[i]))
            hq_i = ad.slice_rows(h_query, i, int(q_lens[i]))
            x_i, alpha_i = gated_attention_layer(hd_i, hq_i)
            gated.append(x_i)
            hq_final.append(hq_i)
            if collect_attention:
                alphas[i].append(alpha_i.data.copy())
        doc_in, d_lens = ad.pad_stack(gated)

    results: list[ForwardPass] = []
    for i, ex in enumerate(examples):
        h_final = ad.slice_rows(doc_in, i, int(d_lens[i]))
        q_t = ad.take_row(hq_final[i], ex.placeholder_position)
        p = ad.softmax(ad.matmul(h_final, q_t))
        dist = build_distribution(p.data, ex.document)
        results.append(
            ForwardPass(
                ex, p, dist, alphas[i] if collect_attention else None, h_final, q_t
            )
        )
    return results


def forward(
    model: ReaderModel,
    example: ClozeExample,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    collect_attention: bool = False,
) -> ForwardPass:
    return forward_batch(model, [example], mode, rng, collect_attention)[0]


_CKPT_FILES = {
    "config": "reader.cfg",
    "merges": "merges.txt",
    "vocab": "vocab.tsv",
    "shortlist": "shortlist.tsv",
    "subwords": "subwords.tsv",
    "params": "params.bin",
    "manifest": "params.manifest",
}


def save_model(model: ReaderModel, ckpt_dir) -> None:
    os.makedirs(ckpt_dir, exist_ok=True)
    path = lambda key: os.path.join(ckpt_dir, _CKPT_FILES[key])
    save_kv(
        {f.name: getattr(model.config, f.name) for f in fields(ReaderConfig)},
        path("config"),
    )
    model.merges.save(path("merges"))
    model.vocab.save(path("vocab"))
    save_short_list(model.short_list, model.vocab, path("shortlist"))
    model.subwords.save(path("subwords"))
    model.params.save(path("params"), path("manifest"))


def load_model(ckpt_dir) -> ReaderModel:
    path = lambda key: os.path.join(ckpt_dir, _CKPT_FILES[key])
    for key in _CKPT_FILES:
        if not os.path.exists(path(key)):
            raise FileNotFoundError(f"checkpoint is missing {_CKPT_FILES[key]}")
    raw = load_kv(path("config"))
    known = {f.name for f in fields(ReaderConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown reader config keys: {sorted(unknown)}")
    config = ReaderConfig(**raw)
    merges = MergeTable.load(path("merges"))
    vocab = Vocabulary.load(path("vocab"))
    short_list, _ = load_short_list(path("shortlist"))
    subwords = SubwordVocab.load(path("subwords"))
    model = ReaderModel(config, merges, subwords, vocab, short_list, seed=0)
    model.params.load_values(path("params"), path("manifest"))
    return model
