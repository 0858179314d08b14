"""Hierarchical sequence encoder.

Per token: character embeddings -> character BiLSTM -> self-attention over
the characters -> a second (modeling) BiLSTM whose final states form the
token vector. Per sentence: that vector is concatenated with the word
embedding and optional POS / language embeddings, passed through dropout,
a word-level BiLSTM, and dropout again, yielding one contextual state per
token. Dropout applies only to the word-level BiLSTM inputs and outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError


@dataclass
class EncoderConfig:
    char_emb: int = 25
    char_hidden: int = 25
    word_hidden: int = 200
    word_emb: int = 100
    lang_emb: int = 100
    pos_emb: int = 64
    dropout: float = 0.5
    use_pos: bool = False
    use_lang: bool = False

    def __post_init__(self):
        for name in ("char_emb", "char_hidden", "word_hidden", "word_emb", "lang_emb", "pos_emb"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"encoder extent {name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")

    @property
    def token_width(self) -> int:
        """Width of the word-level BiLSTM input per token."""
        width = self.word_emb + 2 * self.char_hidden
        if self.use_pos:
            width += self.pos_emb
        if self.use_lang:
            width += self.lang_emb
        return width

    @property
    def state_width(self) -> int:
        """Width of the contextual state per token."""
        return 2 * self.word_hidden


def lstm_init(rng, input_size: int, hidden_size: int, dtype, prefix: str) -> dict[str, Tensor]:
    """Single-direction LSTM parameters; gates stacked input, forget, cell, output."""
    return {
        f"{prefix}.w_x": ad.init_weight(rng, (4 * hidden_size, input_size), dtype),
        f"{prefix}.w_h": ad.init_weight(rng, (4 * hidden_size, hidden_size), dtype),
        f"{prefix}.bias": ad.init_zeros((4 * hidden_size,), dtype),
    }


def lstm_run(params: dict[str, Tensor], prefix: str, inputs: list[Tensor], hidden_size: int):
    """Run the LSTM recurrence; returns per-step states and the final (h, c)."""
    if not inputs:
        raise DimensionError("lstm_run over an empty sequence")
    w_x = params[f"{prefix}.w_x"]
    w_h = params[f"{prefix}.w_h"]
    bias = params[f"{prefix}.bias"]
    dtype = w_x.dtype
    h = ad.zeros((hidden_size,), dtype)
    c = ad.zeros((hidden_size,), dtype)
    states = []
    hs = hidden_size
    for x in inputs:
        gates = ad.matmul(w_x, x) + ad.matmul(w_h, h) + bias
        i = ad.sigmoid(ad.narrow(gates, 0, hs))
        f = ad.sigmoid(ad.narrow(gates, hs, 2 * hs))
        g = ad.tanh(ad.narrow(gates, 2 * hs, 3 * hs))
        o = ad.sigmoid(ad.narrow(gates, 3 * hs, 4 * hs))
        c = ad.mul(f, c) + ad.mul(i, g)
        h = ad.mul(o, ad.tanh(c))
        states.append(h)
    return states, (h, c)


def bilstm_init(rng, input_size: int, hidden_size: int, dtype, prefix: str) -> dict[str, Tensor]:
    params = {}
    params.update(lstm_init(rng, input_size, hidden_size, dtype, f"{prefix}.fwd"))
    params.update(lstm_init(rng, input_size, hidden_size, dtype, f"{prefix}.bwd"))
    return params


def bilstm_run(params: dict[str, Tensor], prefix: str, inputs: list[Tensor], hidden_size: int):
    """Both directions; per-step concatenated states plus concatenated finals.

    The final vector pairs the forward state after the last element with the
    backward state after the first element.
    """
    fwd_states, (fwd_last, _) = lstm_run(params, f"{prefix}.fwd", inputs, hidden_size)
    bwd_rev, (bwd_last, _) = lstm_run(params, f"{prefix}.bwd", list(reversed(inputs)), hidden_size)
    bwd_states = list(reversed(bwd_rev))
    states = [ad.concat([f, b]) for f, b in zip(fwd_states, bwd_states)]
    final = ad.concat([fwd_last, bwd_last])
    return states, final


def char_self_attention(states: list[Tensor]) -> tuple[list[Tensor], np.ndarray]:
    """Scaled dot-product self-attention with queries = keys = values.

    Returns the mixed states and the attention matrix (rows sum to 1) for
    tracing.
    """
    x = ad.stack_rows(states)
    d = x.shape[1]
    scores = ad.scale(ad.matmul(x, ad.transpose(x)), 1.0 / math.sqrt(d))
    weights = ad.softmax(scores, axis=1)
    mixed = ad.matmul(weights, x)
    out = [ad.row(mixed, i) for i in range(len(states))]
    return out, weights.data.copy()


class HierarchicalEncoder:
    """Owns the embedding tables and LSTM stacks; encodes one sentence at a time."""

    def __init__(
        self,
        cfg: EncoderConfig,
        n_words: int,
        n_chars: int,
        n_pos: int,
        n_langs: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        p: dict[str, Tensor] = {}
        p["word_emb"] = ad.init_embedding(rng, (n_words, cfg.word_emb), self.dtype)
        p["char_emb"] = ad.init_embedding(rng, (n_chars, cfg.char_emb), self.dtype)
        if cfg.use_pos:
            p["pos_emb"] = ad.init_embedding(rng, (n_pos, cfg.pos_emb), self.dtype)
        if cfg.use_lang:
            p["lang_emb"] = ad.init_embedding(rng, (n_langs, cfg.lang_emb), self.dtype)
        p.update(bilstm_init(rng, cfg.char_emb, cfg.char_hidden, self.dtype, "char_lstm"))
        p.update(bilstm_init(rng, 2 * cfg.char_hidden, cfg.char_hidden, self.dtype, "model_lstm"))
        p.update(bilstm_init(rng, cfg.token_width, cfg.word_hidden, self.dtype, "word_lstm"))
        self.params = p

    def token_vector(self, char_ids: list[int], trace: bool = False):
        """Character pipeline for one token; optionally keeps the attention map."""
        if not char_ids:
            raise DimensionError("cannot encode a token with no characters")
        emb = ad.embedding_lookup(self.params["char_emb"], char_ids)
        char_inputs = [ad.row(emb, i) for i in range(len(char_ids))]
        char_states, _ = bilstm_run(self.params, "char_lstm", char_inputs, self.cfg.char_hidden)
        mixed, attention = char_self_attention(char_states)
        _, final = bilstm_run(self.params, "model_lstm", mixed, self.cfg.char_hidden)
        return final, (attention if trace else None)

    def encode(
        self,
        word_ids: list[int],
        char_id_seqs: list[list[int]],
        pos_ids: list[int] | None,
        lang_id: int | None,
        train: bool,
        rng: np.random.Generator,
        trace: bool = False,
    ):
        """Contextual state per token plus (optionally) per-token attention maps."""
        cfg = self.cfg
        if cfg.use_pos and pos_ids is None:
            raise ConfigError("encoder configured with POS embeddings but no POS ids given")
        if cfg.use_lang and lang_id is None:
            raise ConfigError("encoder configured with language embeddings but no language given")
        n = len(word_ids)
        word_rows = ad.embedding_lookup(self.params["word_emb"], word_ids)
        pos_rows = (
            ad.embedding_lookup(self.params["pos_emb"], pos_ids) if cfg.use_pos else None
        )
        lang_vec = (
            ad.row(self.params["lang_emb"], lang_id) if cfg.use_lang else None
        )

        traces = []
        inputs = []
        for i in range(n):
            token_vec, attention = self.token_vector(char_id_seqs[i], trace=trace)
            if trace:
                traces.append(attention)
            parts = [ad.row(word_rows, i), token_vec]
            if pos_rows is not None:
                parts.append(ad.row(pos_rows, i))
            if lang_vec is not None:
                parts.append(lang_vec)
            vec = ad.concat(parts)
            inputs.append(ad.dropout(vec, cfg.dropout, rng, train))

        states, _ = bilstm_run(self.params, "word_lstm", inputs, cfg.word_hidden)
        states = [ad.dropout(h, cfg.dropout, rng, train) for h in states]
        return states, traces
