"""Training loops, early stopping, checkpointing, and the transfer regimes.

One plain SGD update per sentence at a fixed learning rate, epochs shuffled
under the model's seeded generator, best checkpoint selected by dev
exact-match accuracy with patience-based early stopping. Checkpoints are a
text manifest (config, schema, vocabulary, parameter names and shapes) plus
a binary blob of little-endian parameter values in manifest order.
"""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .corpus import Sentence, Vocabulary, add_sentinels, prepare_cluster
from .encoder import EncoderConfig
from .errors import CheckpointError, ConfigError
from .metrics import evaluate_assignments
from .model import MorphTagger
from .schema import NULL, POS, FeatureSchema, build_schema
from .typology import (
    TypologyVector,
    build_typology_vector,
    finalize_cluster_vectors,
)

FORMAT_VERSION = "morphcrf-checkpoint-v1"

MODES = ("mdcrf", "mdcrf+pos", "multi", "multi+polyglot")


@dataclass
class TrainConfig:
    lr: float = 0.015
    dropout: float = 0.5
    max_epochs: int = 200
    patience: int = 10
    seed: int = 13
    mode: str = "mdcrf"
    cluster_cap: int = 5000
    clip_norm: float | None = None
    min_count: int = 1
    dtype: str = "float32"
    typology_dim: int = 20
    typology_mode: str = "replace"

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.max_epochs < 0 or self.patience <= 0:
            raise ConfigError("epochs must be >= 0 and patience positive")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")


@dataclass
class TrainResult:
    model: MorphTagger
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_accuracy: float = 0.0
    log_lines: list[str] = field(default_factory=list)


def predict_corpus(model: MorphTagger, sentences: list[Sentence]) -> list[dict[str, str]]:
    """Flat per-token predictions over all scored tokens."""
    out = []
    for sent in sentences:
        assignments, _ = model.predict(sent)
        out.extend(assignments)
    return out


def gold_corpus(model_schema: FeatureSchema, sentences: list[Sentence]) -> list[dict[str, str]]:
    return [model_schema.extend(t.annotation) for s in sentences for t in s.scored_tokens()]


def run_training(
    model: MorphTagger,
    train_sents: list[Sentence],
    dev_sents: list[Sentence],
    tcfg: TrainConfig,
) -> TrainResult:
    """SGD with per-epoch shuffling and best-dev selection.

    The model is left holding the best parameters seen. With max_epochs of
    zero the model is returned untouched.
    """
    result = TrainResult(model=model)
    if tcfg.max_epochs == 0:
        return result
    params = model.named_parameters()
    gold_dev = gold_corpus(model.schema, dev_sents)
    best = {name: t.data.copy() for name, t in params.items()}
    best_acc = -1.0
    best_epoch = 0
    stale = 0
    n_train = len(train_sents)

    for epoch in range(1, tcfg.max_epochs + 1):
        order = model.rng.permutation(n_train)
        total = 0.0
        for i in order:
            loss = model.loss(train_sents[int(i)], train=True)
            ad.backward(loss)
            total += loss.item()
            ad.sgd_step(params, tcfg.lr, clip_norm=tcfg.clip_norm)
        train_loss = total / max(n_train, 1)

        pred_dev = predict_corpus(model, dev_sents)
        report = evaluate_assignments(gold_dev, pred_dev)
        result.history.append(
            {"epoch": epoch, "train_loss": train_loss,
             "dev_accuracy": report.accuracy, "dev_f1_micro": report.f1_micro}
        )
        result.log_lines.append(
            f"epoch\t{epoch}\ttrain_loss\t{train_loss:.6f}"
            f"\tdev_acc\t{report.accuracy:.6f}\tdev_f1\t{report.f1_micro:.6f}"
        )
        if report.accuracy > best_acc:
            best_acc = report.accuracy
            best_epoch = epoch
            best = {name: t.data.copy() for name, t in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.patience:
                break

    for name, t in params.items():
        t.data = best[name]
    result.best_epoch = best_epoch
    result.best_dev_accuracy = max(best_acc, 0.0)
    return result


# ---------------------------------------------------------------------------
# Mode orchestration
# ---------------------------------------------------------------------------


def pos_only_schema(schema: FeatureSchema) -> FeatureSchema:
    return FeatureSchema(dimensions=[POS], labels={POS: list(schema.labels[POS])})


def tag_pos(model: MorphTagger, sentences: list[Sentence]):
    """Write the model's POS predictions onto the tokens, in place."""
    for sent in sentences:
        assignments, _ = model.predict(sent)
        for tok, assignment in zip(sent.scored_tokens(), assignments):
            tok.predicted_pos = assignment[POS]


def train_pos_tagger(
    train_sents: list[Sentence],
    dev_sents: list[Sentence],
    schema: FeatureSchema,
    enc_cfg: EncoderConfig,
    tcfg: TrainConfig,
    tag_also: list[list[Sentence]] = (),
) -> TrainResult:
    """Stage one of the two-stage setup: a POS-only tagger.

    After training, POS predictions are written onto the train and dev
    corpora and any extra corpora supplied, so a downstream analyzer never
    needs gold POS.
    """
    if POS not in schema.dimensions:
        raise ConfigError("POS dimension missing from schema")
    pos_schema = pos_only_schema(schema)
    cfg = replace(enc_cfg, use_pos=False)
    vocab = Vocabulary(train_sents, min_count=tcfg.min_count)
    model = MorphTagger(pos_schema, vocab, cfg, seed=tcfg.seed, dtype=tcfg.dtype)
    result = run_training(model, train_sents, dev_sents, tcfg)
    for corpus in [train_sents, dev_sents, *tag_also]:
        tag_pos(model, corpus)
    return result


def train_analyzer(
    train_sents: list[Sentence],
    dev_sents: list[Sentence],
    schema: FeatureSchema,
    enc_cfg: EncoderConfig,
    tcfg: TrainConfig,
) -> TrainResult:
    """Monolingual analyzer; with mode mdcrf+pos the POS dimension is read
    from token.predicted_pos (set by a prior POS tagger) instead of decoded."""
    with_pos = tcfg.mode == "mdcrf+pos"
    if with_pos:
        def untagged(sents):
            return all(t.predicted_pos == NULL for s in sents for t in s.scored_tokens())

        if untagged(train_sents) or untagged(dev_sents):
            raise ConfigError("mode mdcrf+pos requires POS predictions on the corpora")
        decode_dims = [d for d in schema.dimensions if d != POS]
    else:
        decode_dims = list(schema.dimensions)
    cfg = replace(enc_cfg, use_pos=with_pos)
    vocab = Vocabulary(train_sents, min_count=tcfg.min_count)
    model = MorphTagger(
        schema, vocab, cfg, decode_dims=decode_dims, seed=tcfg.seed, dtype=tcfg.dtype
    )
    return run_training(model, train_sents, dev_sents, tcfg)


def train_multisource(
    train_corpora: dict[str, list[Sentence]],
    dev_corpora: dict[str, list[Sentence]],
    enc_cfg: EncoderConfig,
    tcfg: TrainConfig,
    typology: dict[str, TypologyVector] | None = None,
    use_lang: bool = True,
) -> TrainResult:
    """One model over a language cluster.

    Member corpora are mixed under the cap rule with sentinel language-id
    tokens, the schema and vocabulary are unions over the members, and
    language embeddings condition the encoder. Mode multi+polyglot
    additionally factors decoder inputs by the projected typology vector
    (corpus-derived vectors are built here when none are supplied).
    """
    for lang, sents in train_corpora.items():
        if not sents:
            raise ConfigError(f"cluster member {lang!r} has no training data")
    all_train = [s for lang in sorted(train_corpora) for s in train_corpora[lang]]
    schema = build_schema(t.annotation for s in all_train for t in s.tokens)

    rng = np.random.default_rng(tcfg.seed)
    mixed_train = prepare_cluster(train_corpora, cap=tcfg.cluster_cap, rng=rng, sentinels=use_lang)
    mixed_dev = []
    for lang in sorted(dev_corpora):
        wrapped = [add_sentinels(s) for s in dev_corpora[lang]] if use_lang else dev_corpora[lang]
        mixed_dev.extend(wrapped)

    vocab = Vocabulary(mixed_train, min_count=tcfg.min_count)
    cfg = replace(enc_cfg, use_lang=use_lang)

    vectors = None
    if tcfg.mode == "multi+polyglot":
        if typology is None:
            raw = {
                lang: build_typology_vector(train_corpora[lang], schema, lang)
                for lang in train_corpora
            }
            vectors = finalize_cluster_vectors(raw)
        else:
            vectors = typology

    model = MorphTagger(
        schema,
        vocab,
        cfg,
        seed=tcfg.seed,
        dtype=tcfg.dtype,
        typology=vectors,
        typology_dim=tcfg.typology_dim,
        typology_mode=tcfg.typology_mode,
    )
    return run_training(model, mixed_train, mixed_dev, tcfg)


def check_schema_covers(schema: FeatureSchema, sentences: list[Sentence]):
    """Raise listing any labels in the corpus that the schema lacks."""
    novel = set()
    for sent in sentences:
        for tok in sent.tokens:
            for dim, value in tok.annotation.items():
                if dim not in schema.label_index or value not in schema.label_index[dim]:
                    novel.add(f"{dim}={value}")
    if novel:
        raise CheckpointError(
            "target corpus carries labels unknown to the checkpoint: "
            + ", ".join(sorted(novel))
        )


def finetune(
    model: MorphTagger,
    train_sents: list[Sentence],
    dev_sents: list[Sentence],
    tcfg: TrainConfig,
) -> TrainResult:
    """Continue SGD from a cluster checkpoint on one member language."""
    check_schema_covers(model.schema, train_sents + dev_sents)
    if model.enc_cfg.use_lang:
        train_sents = [add_sentinels(s) for s in train_sents]
        dev_sents = [add_sentinels(s) for s in dev_sents]
        for sents in (train_sents, dev_sents):
            for s in sents:
                if s.language not in model.vocab.lang_to_id:
                    raise CheckpointError(
                        f"language {s.language!r} was not a member of the checkpoint's cluster"
                    )
    return run_training(model, train_sents, dev_sents, tcfg)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

MANIFEST = "manifest.txt"
BLOB = "params.bin"


def _config_lines(model: MorphTagger, tcfg: TrainConfig) -> list[str]:
    e = model.enc_cfg
    lines = [
        f"mode\t{tcfg.mode}",
        f"lr\t{tcfg.lr!r}",
        f"dropout\t{e.dropout!r}",
        f"max_epochs\t{tcfg.max_epochs}",
        f"patience\t{tcfg.patience}",
        f"seed\t{tcfg.seed}",
        f"cluster_cap\t{tcfg.cluster_cap}",
        f"clip_norm\t{'none' if tcfg.clip_norm is None else repr(tcfg.clip_norm)}",
        f"min_count\t{tcfg.min_count}",
        f"dtype\t{model.dtype.name}",
        f"char_emb\t{e.char_emb}",
        f"char_hidden\t{e.char_hidden}",
        f"word_hidden\t{e.word_hidden}",
        f"word_emb\t{e.word_emb}",
        f"lang_emb\t{e.lang_emb}",
        f"pos_emb\t{e.pos_emb}",
        f"use_pos\t{int(e.use_pos)}",
        f"use_lang\t{int(e.use_lang)}",
        "decode_dims\t" + "\t".join(model.decode_dims),
        f"typology_dim\t{model.typology_dim}",
        f"typology_mode\t{model.typology_mode}",
    ]
    return lines


def save_checkpoint(path: str, model: MorphTagger, tcfg: TrainConfig, best_dev_accuracy: float):
    """Write manifest + blob atomically (temp directory then rename)."""
    tmp = path.rstrip("/\\") + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    params = model.named_parameters()
    lines = [f"format\t{FORMAT_VERSION}", f"best_dev_accuracy\t{best_dev_accuracy!r}"]
    lines.append("[config]")
    lines.extend(_config_lines(model, tcfg))
    lines.append("[schema]")
    lines.extend(model.schema.to_text().rstrip("\n").split("\n"))
    lines.append("[vocab]")
    lines.extend(model.vocab.to_lines())
    if model.projection is not None:
        lines.append("[typology]")
        vectors = model.projection.vectors
        any_vec = next(iter(vectors.values()))
        lines.append("features\t" + "\t".join(any_vec.feature_names))
        for lang in sorted(vectors):
            vals = "\t".join(repr(float(v)) for v in vectors[lang].values)
            lines.append(f"lang\t{lang}\t{vals}")
    lines.append("[params]")
    for name, t in params.items():
        dims = ",".join(str(d) for d in t.data.shape)
        lines.append(f"{name}\t{dims}")

    with open(os.path.join(tmp, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    wire = "<f4" if model.dtype == np.float32 else "<f8"
    with open(os.path.join(tmp, BLOB), "wb") as fh:
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype=wire).tobytes())

    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def _split_sections(lines: list[str]) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {"": []}
    current = ""
    for line in lines:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        else:
            sections[current].append(line)
    return sections


def load_checkpoint(path: str) -> tuple[MorphTagger, TrainConfig, float]:
    manifest = os.path.join(path, MANIFEST)
    if not os.path.exists(manifest):
        raise CheckpointError(f"no checkpoint manifest at {manifest}")
    with open(manifest, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    sections = _split_sections(lines)

    head = dict(line.split("\t", 1) for line in sections[""] if line)
    if head.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {head.get('format')!r}")
    best = float(head["best_dev_accuracy"])

    cfg: dict[str, list[str]] = {}
    for line in sections["config"]:
        parts = line.split("\t")
        cfg[parts[0]] = parts[1:]

    enc_cfg = EncoderConfig(
        char_emb=int(cfg["char_emb"][0]),
        char_hidden=int(cfg["char_hidden"][0]),
        word_hidden=int(cfg["word_hidden"][0]),
        word_emb=int(cfg["word_emb"][0]),
        lang_emb=int(cfg["lang_emb"][0]),
        pos_emb=int(cfg["pos_emb"][0]),
        dropout=float(cfg["dropout"][0]),
        use_pos=bool(int(cfg["use_pos"][0])),
        use_lang=bool(int(cfg["use_lang"][0])),
    )
    clip = cfg["clip_norm"][0]
    tcfg = TrainConfig(
        lr=float(cfg["lr"][0]),
        dropout=float(cfg["dropout"][0]),
        max_epochs=int(cfg["max_epochs"][0]),
        patience=int(cfg["patience"][0]),
        seed=int(cfg["seed"][0]),
        mode=cfg["mode"][0],
        cluster_cap=int(cfg["cluster_cap"][0]),
        clip_norm=None if clip == "none" else float(clip),
        min_count=int(cfg["min_count"][0]),
        dtype=cfg["dtype"][0],
        typology_dim=int(cfg["typology_dim"][0]),
        typology_mode=cfg["typology_mode"][0],
    )

    schema = FeatureSchema.from_text("\n".join(sections["schema"]))
    vocab = Vocabulary.from_lines(sections["vocab"])

    typology = None
    if "typology" in sections:
        feats: list[str] = []
        typology = {}
        for line in sections["typology"]:
            parts = line.split("\t")
            if parts[0] == "features":
                feats = parts[1:]
            elif parts[0] == "lang":
                typology[parts[1]] = TypologyVector(parts[1], feats, [float(x) for x in parts[2:]])

    model = MorphTagger(
        schema,
        vocab,
        enc_cfg,
        decode_dims=cfg["decode_dims"],
        seed=tcfg.seed,
        dtype=tcfg.dtype,
        typology=typology,
        typology_dim=tcfg.typology_dim,
        typology_mode=tcfg.typology_mode,
    )

    params = model.named_parameters()
    declared = []
    for line in sections["params"]:
        name, dims = line.split("\t")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        declared.append((name, shape))
    if [n for n, _ in declared] != list(params.keys()):
        raise CheckpointError("checkpoint parameter list does not match the model")

    wire = np.dtype("<f4") if tcfg.dtype == "float32" else np.dtype("<f8")
    with open(os.path.join(path, BLOB), "rb") as fh:
        blob = fh.read()
    offset = 0
    for name, shape in declared:
        t = params[name]
        if t.data.shape != shape:
            raise CheckpointError(f"parameter {name} has shape {t.data.shape}, manifest says {shape}")
        count = int(np.prod(shape)) if shape else 1
        chunk = np.frombuffer(blob, dtype=wire, count=count, offset=offset)
        offset += count * wire.itemsize
        t.data = chunk.astype(model.dtype).reshape(shape).copy()
    if offset != len(blob):
        raise CheckpointError(f"blob has {len(blob)} bytes, manifest accounts for {offset}")
    return model, tcfg, best
