"""The full tagger: shared encoder, per-dimension CRF decoders, optional
language factoring. One instance owns all parameters and a seeded generator
for its stochastic ops, so a fixed seed gives bit-identical runs.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .corpus import Sentence, Vocabulary
from .crf import FeatureDecoderBank
from .encoder import EncoderConfig, HierarchicalEncoder
from .errors import ConfigError
from .schema import NULL, POS, FeatureSchema
from .typology import LanguageProjection, TypologyVector, factor_state


class MorphTagger:
    """Sentence-level loss and prediction over a feature schema.

    decode_dims selects which dimensions get decoders (all of them for the
    plain model, all but POS when POS embeddings come from a separate
    tagger). With `typology` given, decoder inputs are the vectorized outer
    product of the contextual state and the projected typology code
    ("replace"), or that concatenated to the state ("concat").
    """

    def __init__(
        self,
        schema: FeatureSchema,
        vocab: Vocabulary,
        enc_cfg: EncoderConfig,
        decode_dims: list[str] | None = None,
        seed: int = 13,
        dtype="float32",
        typology: dict[str, TypologyVector] | None = None,
        typology_dim: int = 20,
        typology_mode: str = "replace",
    ):
        self.schema = schema
        self.vocab = vocab
        self.enc_cfg = enc_cfg
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.decode_dims = list(decode_dims) if decode_dims is not None else list(schema.dimensions)
        self.rng = np.random.default_rng(seed)
        self.typology_dim = typology_dim
        self.typology_mode = typology_mode

        if enc_cfg.use_pos and POS in self.decode_dims:
            raise ConfigError("POS cannot be both an encoder input and a decoded dimension")

        self.encoder = HierarchicalEncoder(
            enc_cfg,
            n_words=vocab.n_words,
            n_chars=vocab.n_chars,
            n_pos=len(schema.labels[POS]),
            n_langs=vocab.n_languages,
            rng=self.rng,
            dtype=self.dtype,
        )

        self.projection = None
        if typology is not None:
            if typology_mode not in ("replace", "concat"):
                raise ConfigError(f"unknown typology mode {typology_mode!r}")
            self.projection = LanguageProjection(typology, typology_dim, self.rng, self.dtype)
            if typology_mode == "replace":
                decoder_width = enc_cfg.state_width * typology_dim
            else:
                decoder_width = enc_cfg.state_width * (1 + typology_dim)
        else:
            decoder_width = enc_cfg.state_width

        self.bank = FeatureDecoderBank(schema, self.decode_dims, decoder_width, self.rng, self.dtype)
        self.pos_index = {lab: i for i, lab in enumerate(schema.labels[POS])}

    # -- parameters ----------------------------------------------------------

    def named_parameters(self) -> dict[str, ad.Tensor]:
        params: dict[str, ad.Tensor] = {}
        for name, t in self.encoder.params.items():
            params[f"encoder.{name}"] = t
        params.update(self.bank.named_parameters())
        if self.projection is not None:
            params.update(self.projection.params)
        return params

    # -- encoding ------------------------------------------------------------

    def _lookup(self, sentence: Sentence):
        word_ids = [self.vocab.word_id(t.form) for t in sentence.tokens]
        char_seqs = [self.vocab.char_ids(t.form) for t in sentence.tokens]
        pos_ids = None
        if self.enc_cfg.use_pos:
            pos_ids = []
            for t in sentence.tokens:
                if t.predicted_pos not in self.pos_index:
                    raise ConfigError(
                        f"token {t.form!r} carries POS {t.predicted_pos!r} outside the schema"
                    )
                pos_ids.append(self.pos_index[t.predicted_pos])
        lang_id = self.vocab.lang_id(sentence.language) if self.enc_cfg.use_lang else None
        return word_ids, char_seqs, pos_ids, lang_id

    def decoder_inputs(self, sentence: Sentence, train: bool, trace: bool = False):
        """Contextual states for the scored span, factored if configured."""
        word_ids, char_seqs, pos_ids, lang_id = self._lookup(sentence)
        states, traces = self.encoder.encode(
            word_ids, char_seqs, pos_ids, lang_id, train=train, rng=self.rng, trace=trace
        )
        lo, hi = sentence.scored_span()
        states = states[lo:hi]
        traces = traces[lo:hi] if trace else traces
        if self.projection is not None:
            code = self.projection.code(sentence.language)
            if self.typology_mode == "replace":
                states = [factor_state(h, code) for h in states]
            else:
                states = [ad.concat([h, factor_state(h, code)]) for h in states]
        return states, traces

    # -- training and inference ------------------------------------------------

    def loss(self, sentence: Sentence, train: bool = True) -> ad.Tensor:
        """Summed decoder negative log-likelihood over the scored tokens."""
        states, _ = self.decoder_inputs(sentence, train=train)
        gold = [self.schema.extend(t.annotation) for t in sentence.scored_tokens()]
        return self.bank.nll(states, gold)

    def predict(self, sentence: Sentence, trace: bool = False):
        """Per-token assignments over all schema dimensions.

        Dimensions without a decoder (POS under the two-stage setup) are
        filled from the token's predicted POS; gold annotations are never
        consulted.
        """
        states, traces = self.decoder_inputs(sentence, train=False, trace=trace)
        decoded = self.bank.decode(states)
        out = []
        for tok, assignment in zip(sentence.scored_tokens(), decoded):
            full = dict(assignment)
            for dim in self.schema.dimensions:
                if dim not in full:
                    full[dim] = tok.predicted_pos if dim == POS else NULL
            out.append(full)
        return (out, traces) if trace else (out, None)
