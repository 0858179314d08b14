"""CoNLL-U ingestion, vocabularies, language clusters, and mixed-corpus sampling.

Sentences keep enough of the original file (comments, token columns) to be
written back with only the morphology column replaced. The multi-source
regime mixes cluster corpora under a per-language cap with deterministic
seeded sampling, upsamples the smaller members to the cap, and wraps every
sentence in language-id sentinel tokens that are excluded from loss and
scoring.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusterError, ConlluParseError
from .schema import NULL, POS, decompose_tagset

UNK = "<unk>"
PAD = "<pad>"

FORM_COL = 1
FEATS_COL = 5
N_COLS = 10


@dataclass
class Token:
    form: str
    raw_feats: str = NULL
    annotation: dict[str, str] = field(default_factory=dict)
    predicted_pos: str = NULL
    is_sentinel: bool = False
    columns: list[str] | None = None

    @property
    def chars(self) -> list[str]:
        return list(self.form)

    @property
    def gold_pos(self) -> str:
        return self.annotation.get(POS, NULL)


@dataclass
class Sentence:
    tokens: list[Token]
    language: str
    comments: list[str] = field(default_factory=list)
    skipped_lines: list[tuple[int, str]] = field(default_factory=list)
    has_sentinels: bool = False

    def scored_tokens(self) -> list[Token]:
        """Tokens that participate in loss and metrics (sentinels excluded)."""
        if self.has_sentinels:
            return self.tokens[1:-1]
        return self.tokens

    def scored_span(self) -> tuple[int, int]:
        if self.has_sentinels:
            return 1, len(self.tokens) - 1
        return 0, len(self.tokens)


def sentinel_form(language: str) -> str:
    return f"<{language}>"


def read_conllu(path: str, language: str) -> list[Sentence]:
    """Parse a 10-column CoNLL-U file into sentences.

    Comment lines and multiword-token / empty-node id lines are skipped but
    remembered so the file can be re-emitted. A token line with the wrong
    column count raises with its line number.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    comments: list[str] = []
    skipped: list[tuple[int, str]] = []

    def flush():
        nonlocal tokens, comments, skipped
        if tokens:
            sentences.append(
                Sentence(tokens=tokens, language=language, comments=comments, skipped_lines=skipped)
            )
        tokens, comments, skipped = [], [], []

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                comments.append(line)
                continue
            cols = line.split("\t")
            if len(cols) != N_COLS:
                raise ConlluParseError(
                    f"{path}:{lineno}: expected {N_COLS} tab-separated columns, got {len(cols)}"
                )
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                # multiword-token range or empty node: not a scorable token
                skipped.append((len(tokens), line))
                continue
            tokens.append(Token(form=cols[FORM_COL], raw_feats=cols[FEATS_COL], columns=cols))
    flush()

    if not sentences:
        print(f"warning: {path} contains no sentences", file=sys.stderr)
    return sentences


def write_conllu(sentences: list[Sentence], path: str, feats: list[list[str]] | None = None):
    """Write sentences back out, optionally replacing the FEATS column.

    `feats[i][j]` is the tagset string for token j of sentence i; None keeps
    the original annotation. Sentinel tokens are never written.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for si, sent in enumerate(sentences):
            for line in sent.comments:
                fh.write(line + "\n")
            real = sent.scored_tokens()
            skipped = dict(sent.skipped_lines)
            for ti, tok in enumerate(real):
                if ti in skipped:
                    fh.write(skipped[ti] + "\n")
                cols = list(tok.columns) if tok.columns else default_columns(tok, ti)
                if feats is not None:
                    cols[FEATS_COL] = feats[si][ti]
                fh.write("\t".join(cols) + "\n")
            if len(real) in skipped:
                fh.write(skipped[len(real)] + "\n")
            fh.write("\n")


def default_columns(tok: Token, index: int) -> list[str]:
    cols = ["_"] * N_COLS
    cols[0] = str(index + 1)
    cols[FORM_COL] = tok.form
    cols[FEATS_COL] = tok.raw_feats
    return cols


def annotate_sentences(
    sentences: list[Sentence], mapping: dict[str, str], strict: bool = False
) -> dict[str, int]:
    """Decompose every token's raw tagset in place; returns unmapped-value counts."""
    unmapped_counts: dict[str, int] = {}
    for sent in sentences:
        for tok in sent.tokens:
            assignment, unmapped = decompose_tagset(tok.raw_feats, mapping, strict=strict)
            tok.annotation = assignment
            for v in unmapped:
                unmapped_counts[v] = unmapped_counts.get(v, 0) + 1
    return unmapped_counts


def load_corpus(path: str, language: str, mapping: dict[str, str], strict: bool = False):
    """read_conllu + decomposition in one step."""
    sentences = read_conllu(path, language)
    unmapped = annotate_sentences(sentences, mapping, strict=strict)
    return sentences, unmapped


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocabulary:
    """Dense word / character / language index spaces with UNK fallback.

    Words seen fewer than `min_count` times map to UNK at lookup time.
    Sentinel forms and specials are exempt from the threshold.
    """

    def __init__(self, sentences: list[Sentence], min_count: int = 1):
        if not sentences:
            raise ClusterError("cannot build a vocabulary from an empty corpus")
        self.min_count = min_count
        word_counts: dict[str, int] = {}
        chars: set[str] = set()
        langs: set[str] = set()
        for sent in sentences:
            langs.add(sent.language)
            for tok in sent.tokens:
                if tok.is_sentinel:
                    continue
                word_counts[tok.form] = word_counts.get(tok.form, 0) + 1
                chars.update(tok.form)

        self.word_counts = word_counts
        self.word_to_id: dict[str, int] = {UNK: 0, PAD: 1}
        self.languages = sorted(langs)
        for lang in self.languages:
            self.word_to_id[sentinel_form(lang)] = len(self.word_to_id)
        for form in sorted(word_counts):
            if form not in self.word_to_id:
                self.word_to_id[form] = len(self.word_to_id)

        self.char_to_id: dict[str, int] = {UNK: 0, PAD: 1}
        for ch in sorted(chars):
            self.char_to_id[ch] = len(self.char_to_id)

        self.lang_to_id = {lang: i for i, lang in enumerate(self.languages)}

    @property
    def n_words(self) -> int:
        return len(self.word_to_id)

    @property
    def n_chars(self) -> int:
        return len(self.char_to_id)

    @property
    def n_languages(self) -> int:
        return len(self.lang_to_id)

    def word_id(self, form: str) -> int:
        idx = self.word_to_id.get(form)
        if idx is None:
            return self.word_to_id[UNK]
        if idx >= 2 + len(self.languages) and self.word_counts.get(form, 0) < self.min_count:
            return self.word_to_id[UNK]
        return idx

    def char_ids(self, form: str) -> list[int]:
        unk = self.char_to_id[UNK]
        return [self.char_to_id.get(ch, unk) for ch in form]

    def lang_id(self, language: str) -> int:
        if language not in self.lang_to_id:
            raise ClusterError(f"language {language!r} is not in the vocabulary")
        return self.lang_to_id[language]

    def to_lines(self) -> list[str]:
        lines = [f"min_count\t{self.min_count}"]
        for form, _ in sorted(self.word_to_id.items(), key=lambda kv: kv[1]):
            lines.append(f"word\t{form}\t{self.word_counts.get(form, 0)}")
        for ch, _ in sorted(self.char_to_id.items(), key=lambda kv: kv[1]):
            lines.append(f"char\t{ch}")
        for lang in self.languages:
            lines.append(f"language\t{lang}")
        return lines

    @classmethod
    def from_lines(cls, lines: list[str]) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab.min_count = 1
        vocab.word_to_id = {}
        vocab.word_counts = {}
        vocab.char_to_id = {}
        vocab.languages = []
        for line in lines:
            parts = line.split("\t")
            if parts[0] == "min_count":
                vocab.min_count = int(parts[1])
            elif parts[0] == "word":
                vocab.word_to_id[parts[1]] = len(vocab.word_to_id)
                vocab.word_counts[parts[1]] = int(parts[2])
            elif parts[0] == "char":
                vocab.char_to_id[parts[1]] = len(vocab.char_to_id)
            elif parts[0] == "language":
                vocab.languages.append(parts[1])
        vocab.lang_to_id = {lang: i for i, lang in enumerate(vocab.languages)}
        return vocab


# ---------------------------------------------------------------------------
# Clusters and the multi-source sampling regime
# ---------------------------------------------------------------------------


@dataclass
class ClusterMember:
    language: str
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None


@dataclass
class LanguageCluster:
    name: str
    members: list[ClusterMember]

    def __post_init__(self):
        if not self.members:
            raise ClusterError(f"cluster {self.name!r} has no members")


def parse_cluster_file(path: str) -> list[LanguageCluster]:
    """Parse a cluster config: '[name]' stanzas with one member per line.

    Member lines are 'language [train [dev [test]]]' separated by whitespace.
    """
    clusters: list[LanguageCluster] = []
    name = None
    members: list[ClusterMember] = []

    def flush():
        nonlocal members
        if name is not None:
            clusters.append(LanguageCluster(name=name, members=members))
        members = []

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                flush()
                name = line[1:-1].strip()
                continue
            if name is None:
                raise ClusterError(f"{path}:{lineno}: member line before any [cluster] header")
            parts = line.split()
            members.append(
                ClusterMember(
                    language=parts[0],
                    train_path=parts[1] if len(parts) > 1 else None,
                    dev_path=parts[2] if len(parts) > 2 else None,
                    test_path=parts[3] if len(parts) > 3 else None,
                )
            )
    flush()
    if not clusters:
        raise ClusterError(f"{path}: no clusters defined")
    return clusters


def add_sentinels(sentence: Sentence) -> Sentence:
    """Wrap a sentence in language-id sentinel tokens (null annotations)."""
    form = sentinel_form(sentence.language)
    mark = lambda: Token(form=form, raw_feats=NULL, annotation={}, is_sentinel=True)
    return Sentence(
        tokens=[mark()] + sentence.tokens + [mark()],
        language=sentence.language,
        comments=sentence.comments,
        skipped_lines=sentence.skipped_lines,
        has_sentinels=True,
    )


def prepare_cluster(
    corpora: dict[str, list[Sentence]],
    cap: int = 5000,
    rng: np.random.Generator | None = None,
    sentinels: bool = True,
) -> list[Sentence]:
    """Mix member corpora into one training corpus under the cap rule.

    The effective target is min(cap, largest member size). A member at or
    above the target contributes a uniform sample of exactly target
    sentences; a smaller member is upsampled by whole-corpus repetition plus
    a random remainder so every language contributes the same count. The
    mixed corpus is shuffled deterministically under the given generator.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for lang, sents in corpora.items():
        if not sents:
            raise ClusterError(f"cluster member {lang!r} has an empty corpus")
    target = min(cap, max(len(s) for s in corpora.values()))
    mixed: list[Sentence] = []
    for lang in sorted(corpora):
        sents = corpora[lang]
        n = len(sents)
        if n >= target:
            picked_idx = rng.choice(n, size=target, replace=False)
            picked = [sents[i] for i in sorted(picked_idx)]
        else:
            repeats, remainder = divmod(target, n)
            picked = list(sents) * repeats
            if remainder:
                extra_idx = rng.choice(n, size=remainder, replace=False)
                picked.extend(sents[i] for i in sorted(extra_idx))
        mixed.extend(add_sentinels(s) if sentinels else s for s in picked)
    order = rng.permutation(len(mixed))
    return [mixed[i] for i in order]
