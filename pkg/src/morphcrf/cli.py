"""Batch command line: schema building, training, fine-tuning, prediction,
evaluation, and typology export.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every command validates its input paths up front, never mutates them, and
is byte-for-byte reproducible given the same inputs and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

from .corpus import (
    Sentence,
    add_sentinels,
    load_corpus,
    parse_cluster_file,
    read_conllu,
    write_conllu,
)
from .encoder import EncoderConfig
from .errors import ConfigError, TaggerError
from .metrics import evaluate_assignments
from .model import MorphTagger
from .schema import build_schema, compose_prediction, load_dictionary
from .training import (
    TrainConfig,
    finetune,
    load_checkpoint,
    save_checkpoint,
    tag_pos,
    train_analyzer,
    train_multisource,
    train_pos_tagger,
)
from .typology import (
    build_typology_vector,
    finalize_cluster_vectors,
    load_word_order_subset,
    read_typology_table,
    write_typology_table,
)

CHECKPOINT_DIR = "checkpoint"
POS_CHECKPOINT_DIR = "pos_checkpoint"


def _require_file(path: str | None, flag: str) -> str:
    if not path:
        raise ConfigError(f"missing required flag {flag}")
    if not os.path.exists(path):
        raise ConfigError(f"{flag}: no such file {path}")
    return path


def _out_dir(path: str | None) -> str:
    if not path:
        raise ConfigError("missing required flag --out")
    os.makedirs(path, exist_ok=True)
    return path


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _encoder_config(args, use_pos=False, use_lang=False) -> EncoderConfig:
    return EncoderConfig(
        char_emb=args.char_emb,
        char_hidden=args.char_hidden,
        word_hidden=args.word_hidden,
        word_emb=args.word_emb,
        lang_emb=args.lang_emb_dim,
        pos_emb=args.pos_emb_dim,
        dropout=args.dropout,
        use_pos=use_pos,
        use_lang=use_lang,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        dropout=args.dropout,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        mode=args.mode,
        cluster_cap=args.cap,
        clip_norm=args.clip_norm,
        min_count=args.min_count,
        dtype=args.dtype,
        typology_dim=args.typology_dim,
    )


def _load_annotated(path: str, lang: str, mapping, flag: str):
    sentences, unmapped = load_corpus(_require_file(path, flag), lang, mapping)
    if unmapped:
        total = sum(unmapped.values())
        print(f"warning: {total} unmapped values dropped from {path}", file=sys.stderr)
    return sentences


def _cluster_corpora(args, mapping):
    clusters = parse_cluster_file(_require_file(args.cluster, "--cluster"))
    if len(clusters) != 1:
        raise ConfigError("training takes a cluster file with exactly one cluster stanza")
    cluster = clusters[0]
    train_corpora: dict[str, list[Sentence]] = {}
    dev_corpora: dict[str, list[Sentence]] = {}
    for member in cluster.members:
        if not member.train_path:
            raise ConfigError(f"cluster member {member.language} has no train path")
        train_corpora[member.language] = _load_annotated(
            member.train_path, member.language, mapping, "--cluster"
        )
        if member.dev_path:
            dev_corpora[member.language] = _load_annotated(
                member.dev_path, member.language, mapping, "--cluster"
            )
    if not dev_corpora:
        raise ConfigError(f"cluster {cluster.name} has no dev corpora for model selection")
    return cluster, train_corpora, dev_corpora


def _predicted_feats(model: MorphTagger, sentences: list[Sentence], trace: bool = False):
    """Composed tagset strings per sentence, wrapping in sentinels as needed."""
    feats = []
    traces = []
    for sent in sentences:
        ready = add_sentinels(sent) if model.enc_cfg.use_lang else sent
        assignments, attn = model.predict(ready, trace=trace)
        feats.append([compose_prediction(a, model.schema) for a in assignments])
        traces.append(attn)
    return feats, traces


def _write_run(out: str, result, tcfg, log_name="train.log"):
    save_checkpoint(os.path.join(out, CHECKPOINT_DIR), result.model, tcfg, result.best_dev_accuracy)
    _write(os.path.join(out, log_name), "".join(line + "\n" for line in result.log_lines))


def _resolve_checkpoint(path: str) -> tuple[str, str | None]:
    """Accept either a run directory or a bare checkpoint directory."""
    direct = os.path.join(path, "manifest.txt")
    nested = os.path.join(path, CHECKPOINT_DIR, "manifest.txt")
    if os.path.exists(direct):
        parent = os.path.dirname(os.path.abspath(path))
        pos = os.path.join(parent, POS_CHECKPOINT_DIR)
        return path, pos if os.path.exists(pos) else None
    if os.path.exists(nested):
        pos = os.path.join(path, POS_CHECKPOINT_DIR)
        return os.path.join(path, CHECKPOINT_DIR), pos if os.path.exists(pos) else None
    raise ConfigError(f"--checkpoint: no checkpoint under {path}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    mapping = load_dictionary(_require_file(args.dict, "--dict"))
    tcfg = _train_config(args)
    out = _out_dir(args.out)

    if args.mode in ("mdcrf", "mdcrf+pos"):
        train_sents = _load_annotated(args.train, args.lang, mapping, "--train")
        dev_sents = _load_annotated(args.dev, args.lang, mapping, "--dev")
        schema = build_schema(t.annotation for s in train_sents for t in s.tokens)
        if args.mode == "mdcrf+pos":
            pos_result = train_pos_tagger(
                train_sents, dev_sents, schema, _encoder_config(args), tcfg
            )
            save_checkpoint(
                os.path.join(out, POS_CHECKPOINT_DIR),
                pos_result.model, tcfg, pos_result.best_dev_accuracy,
            )
            _write(os.path.join(out, "pos_train.log"),
                   "".join(line + "\n" for line in pos_result.log_lines))
        result = train_analyzer(train_sents, dev_sents, schema, _encoder_config(args), tcfg)
        dev_for_output = dev_sents
    else:
        _, train_corpora, dev_corpora = _cluster_corpora(args, mapping)
        typology = None
        if args.typology:
            langs = sorted(train_corpora)
            table = read_typology_table(_require_file(args.typology, "--typology"))
            missing = [l for l in langs if l not in table]
            if missing:
                raise ConfigError(f"--typology: no rows for languages {missing}")
            typology = {l: table[l] for l in langs}
        result = train_multisource(
            train_corpora, dev_corpora, _encoder_config(args), tcfg,
            typology=typology, use_lang=not args.no_lang_emb,
        )
        dev_for_output = [s for lang in sorted(dev_corpora) for s in dev_corpora[lang]]

    _write_run(out, result, tcfg)
    feats, _ = _predicted_feats(result.model, dev_for_output)
    write_conllu(dev_for_output, os.path.join(out, "dev_pred.conllu"), feats)
    print(f"best dev accuracy {result.best_dev_accuracy:.4f} at epoch {result.best_epoch}")
    return 0


def cmd_finetune(args) -> int:
    ckpt_dir, pos_dir = _resolve_checkpoint(_require_file(args.checkpoint, "--checkpoint"))
    mapping = load_dictionary(_require_file(args.dict, "--dict"))
    model, tcfg, _ = load_checkpoint(ckpt_dir)
    for field in ("lr", "max_epochs", "patience", "seed"):
        value = getattr(args, field)
        if value is not None:
            setattr(tcfg, field, value)
    out = _out_dir(args.out)

    train_sents = _load_annotated(args.train, args.lang, mapping, "--train")
    dev_sents = _load_annotated(args.dev, args.lang, mapping, "--dev")
    if model.enc_cfg.use_pos:
        if pos_dir is None:
            raise ConfigError("checkpoint uses POS embeddings but has no pos_checkpoint sibling")
        pos_model, _, _ = load_checkpoint(pos_dir)
        tag_pos(pos_model, train_sents)
        tag_pos(pos_model, dev_sents)

    result = finetune(model, train_sents, dev_sents, tcfg)
    _write_run(out, result, tcfg)
    print(f"best dev accuracy {result.best_dev_accuracy:.4f} at epoch {result.best_epoch}")
    return 0


def cmd_predict(args) -> int:
    ckpt_dir, pos_dir = _resolve_checkpoint(_require_file(args.checkpoint, "--checkpoint"))
    model, _, _ = load_checkpoint(ckpt_dir)
    out = _out_dir(args.out)
    sentences = read_conllu(_require_file(args.test, "--test"), args.lang)
    if not sentences:
        _write(os.path.join(out, "predictions.conllu"), "")
        print("warning: empty input, empty output written", file=sys.stderr)
        return 0

    if model.enc_cfg.use_pos:
        if pos_dir is None:
            raise ConfigError("checkpoint uses POS embeddings but has no pos_checkpoint sibling")
        pos_model, _, _ = load_checkpoint(pos_dir)
        tag_pos(pos_model, sentences)

    feats, traces = _predicted_feats(model, sentences, trace=args.attention)
    write_conllu(sentences, os.path.join(out, "predictions.conllu"), feats)

    if args.attention:
        for i, (sent, attn) in enumerate(zip(sentences, traces), start=1):
            lines = [f"# sentence {i}"]
            for tok, matrix in zip(sent.scored_tokens(), attn):
                lines.append(f"token\t{tok.form}")
                chars = list(tok.form)
                lines.append("\t".join([""] + chars))
                for ci, ch in enumerate(chars):
                    weights = "\t".join(f"{w:.6f}" for w in matrix[ci])
                    lines.append(f"{ch}\t{weights}")
            _write(os.path.join(out, f"attention_{i:04d}.txt"), "\n".join(lines) + "\n")

    if args.transitions:
        for dim in model.bank.dims:
            safe = dim.replace("/", "_")
            _write(os.path.join(out, f"transitions_{safe}.txt"),
                   model.bank.layers[dim].transition_text())
    return 0


def cmd_evaluate(args) -> int:
    mapping = load_dictionary(_require_file(args.dict, "--dict"))
    gold_sents = _load_annotated(args.gold, args.lang, mapping, "--gold")
    pred_sents = _load_annotated(args.pred, args.lang, mapping, "--pred")
    if len(gold_sents) != len(pred_sents):
        raise TaggerError(
            f"alignment mismatch: {len(gold_sents)} gold sentences vs {len(pred_sents)} predicted"
        )
    gold_flat, pred_flat = [], []
    for i, (g, p) in enumerate(zip(gold_sents, pred_sents), start=1):
        gt, pt = g.scored_tokens(), p.scored_tokens()
        if len(gt) != len(pt) or any(a.form != b.form for a, b in zip(gt, pt)):
            raise TaggerError(f"alignment mismatch at sentence {i}")
        gold_flat.extend(t.annotation for t in gt)
        pred_flat.extend(t.annotation for t in pt)

    schema = build_schema(iter(gold_flat + pred_flat))
    report = evaluate_assignments(gold_flat, pred_flat, schema if args.per_feature else None)
    print(report.to_text(), end="")
    if args.out:
        out = _out_dir(args.out)
        _write(os.path.join(out, "report.txt"), report.to_text())
        _write(os.path.join(out, "report.tsv"), report.to_kv_lines())
    return 0


def cmd_typology(args) -> int:
    mapping = load_dictionary(_require_file(args.dict, "--dict"))
    clusters = parse_cluster_file(_require_file(args.cluster, "--cluster"))
    if len(clusters) != 1:
        raise ConfigError("typology takes a cluster file with exactly one cluster stanza")
    members = clusters[0].members
    out = _out_dir(args.out)

    corpora = {}
    for member in members:
        if not member.train_path:
            raise ConfigError(f"cluster member {member.language} has no train path")
        corpora[member.language] = _load_annotated(
            member.train_path, member.language, mapping, "--cluster"
        )
    all_sents = [s for lang in sorted(corpora) for s in corpora[lang]]
    schema = build_schema(t.annotation for s in all_sents for t in s.tokens)
    raw = {
        lang: build_typology_vector(corpora[lang], schema, lang) for lang in corpora
    }
    vectors = finalize_cluster_vectors(raw)
    write_typology_table(vectors, os.path.join(out, "typology.tsv"))
    print(f"wrote typology vectors for {len(vectors)} languages "
          f"({len(next(iter(vectors.values())))} features)")
    return 0


def cmd_schema(args) -> int:
    mapping = load_dictionary(_require_file(args.dict, "--dict"))
    sentences = _load_annotated(args.train, args.lang, mapping, "--train")
    schema = build_schema(t.annotation for s in sentences for t in s.tokens)
    out = _out_dir(args.out)
    _write(os.path.join(out, "schema.txt"), schema.to_text())
    for dim in schema.dimensions:
        print(f"{dim}\t{len(schema.labels[dim])} labels")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--lang", default="und", help="language id for monolingual corpora")
    p.add_argument("--out", help="output directory")


def _add_hyper(p: argparse.ArgumentParser):
    p.add_argument("--lr", type=float, default=0.015)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--max-epochs", type=int, default=200, dest="max_epochs")
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--min-count", type=int, default=1, dest="min_count")
    p.add_argument("--clip-norm", type=float, default=None, dest="clip_norm")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--char-emb", type=int, default=25, dest="char_emb")
    p.add_argument("--char-hidden", type=int, default=25, dest="char_hidden")
    p.add_argument("--word-hidden", type=int, default=200, dest="word_hidden")
    p.add_argument("--word-emb", type=int, default=100, dest="word_emb")
    p.add_argument("--lang-emb-dim", type=int, default=100, dest="lang_emb_dim")
    p.add_argument("--pos-emb-dim", type=int, default=64, dest="pos_emb_dim")
    p.add_argument("--typology-dim", type=int, default=20, dest="typology_dim")
    p.add_argument("--cap", type=int, default=5000, help="per-language sentence cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphcrf",
        description="Contextual morphological analysis with feature-wise CRF decoders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--mode", choices=("mdcrf", "mdcrf+pos", "multi", "multi+polyglot"),
                   default="mdcrf")
    p.add_argument("--train", help="training CoNLL-U (monolingual modes)")
    p.add_argument("--dev", help="development CoNLL-U (monolingual modes)")
    p.add_argument("--dict", help="value-to-dimension dictionary")
    p.add_argument("--cluster", help="cluster file with paths (multi modes)")
    p.add_argument("--typology", help="precomputed typology table (multi+polyglot)")
    p.add_argument("--no-lang-emb", action="store_true", dest="no_lang_emb",
                   help="ablate language embeddings and sentinels in multi modes")
    _add_common(p)
    _add_hyper(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="continue a cluster checkpoint on one language")
    p.add_argument("--checkpoint", help="run directory or checkpoint directory")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--dict")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None, dest="max_epochs")
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lang", default="und")
    p.add_argument("--out")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="tag a CoNLL-U file with a trained model")
    p.add_argument("--checkpoint")
    p.add_argument("--test", help="input CoNLL-U")
    p.add_argument("--attention", action="store_true", help="write attention traces")
    p.add_argument("--transitions", action="store_true", help="write transition exports")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--gold")
    p.add_argument("--pred")
    p.add_argument("--dict")
    p.add_argument("--per-feature", action="store_true", dest="per_feature")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("typology", help="build per-language typology vectors")
    p.add_argument("--cluster")
    p.add_argument("--dict")
    _add_common(p)
    p.set_defaults(func=cmd_typology)

    p = sub.add_parser("schema", help="build and export a feature schema")
    p.add_argument("--train")
    p.add_argument("--dict")
    _add_common(p)
    p.set_defaults(func=cmd_schema)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TaggerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
