"""Per-language typology vectors and the outer-product language factoring.

Vectors are built from training-corpus annotation statistics (proportions of
tokens carrying a dimension, POS-conditioned value proportions, and distinct
value counts), or loaded from a file of precomputed word-order features.
A language's vector is projected to a small code f = tanh(W t + b); each
contextual state h is factored as vec(h outer f) before decoding.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ClusterError, DimensionError
from .schema import NULL, POS

BIGRAM_DIMS = ("Case", "Gender", "Number", "Person")
CORE_POS = ("ADJ", "N", "PRO", "V")
POS_MIN_SHARE = 0.05
COUNT_SUFFIX = "nlabels"

WORD_ORDER_FEATURES = [
    "S-SVO", "S-SOV", "S-VSO", "S-VOS", "S-OVS", "S-OSV",
    "S-SUBJECT-BEFORE-VERB", "S-SUBJECT-AFTER-VERB",
    "S-OBJECT-AFTER-VERB", "S-OBJECT-BEFORE-VERB",
    "S-SUBJECT-BEFORE-OBJECT", "S-SUBJECT-AFTER-OBJECT",
    "S-ADPOSITION-BEFORE-NOUN", "S-ADPOSITION-AFTER-NOUN",
    "S-POSSESSOR-BEFORE-NOUN", "S-POSSESSOR-AFTER-NOUN",
    "S-ADJECTIVE-BEFORE-NOUN", "S-ADJECTIVE-AFTER-NOUN",
]


class TypologyVector:
    """Named feature values for one language, in a fixed feature order."""

    def __init__(self, language: str, feature_names: list[str], values):
        if len(feature_names) != len(values):
            raise DimensionError(
                f"{language}: {len(feature_names)} feature names for {len(values)} values"
            )
        self.language = language
        self.feature_names = list(feature_names)
        self.values = np.asarray(values, dtype=np.float64)

    def __len__(self):
        return len(self.feature_names)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, self.values))


def build_typology_vector(sentences, schema, language: str) -> TypologyVector:
    """Raw per-language vector from a decomposed corpus.

    Features, all keyed by name:
      <Dim>              share of tokens with a non-null value for Dim
      <P>-<Dim>-<value>  share of tokens that are POS P with Dim=value
                         (Dim in Case/Gender/Number/Person; P in the core
                         POS set or any POS covering >= 5% of tokens)
      <P>-<Dim>-nlabels  distinct values of Dim observed under POS P
                         (left unnormalized here; cluster finalization
                         rescales counts by the cluster-wide maximum)
    """
    tokens = [t for s in sentences for t in s.scored_tokens()]
    if not tokens:
        raise ClusterError(f"cannot build typology for {language!r}: empty corpus")
    total = len(tokens)

    pos_counts: dict[str, int] = {}
    for tok in tokens:
        pos = tok.annotation.get(POS, NULL)
        if pos != NULL:
            pos_counts[pos] = pos_counts.get(pos, 0) + 1
    pos_set = {p for p in CORE_POS if p in pos_counts}
    pos_set.update(p for p, c in pos_counts.items() if c / total >= POS_MIN_SHARE)

    feats: dict[str, float] = {}
    for dim in schema.dimensions:
        non_null = sum(1 for t in tokens if t.annotation.get(dim, NULL) != NULL)
        feats[dim] = non_null / total

    bigram_dims = [d for d in BIGRAM_DIMS if d in schema.dimensions]
    distinct: dict[tuple[str, str], set[str]] = {}
    pair_counts: dict[str, int] = {}
    for tok in tokens:
        pos = tok.annotation.get(POS, NULL)
        if pos not in pos_set:
            continue
        for dim in bigram_dims:
            value = tok.annotation.get(dim, NULL)
            if value == NULL:
                continue
            pair_counts[f"{pos}-{dim}-{value}"] = pair_counts.get(f"{pos}-{dim}-{value}", 0) + 1
            distinct.setdefault((pos, dim), set()).add(value)

    for pos in sorted(pos_set):
        for dim in bigram_dims:
            for value in sorted(schema.labels[dim]):
                if value == NULL:
                    continue
                key = f"{pos}-{dim}-{value}"
                feats[key] = pair_counts.get(key, 0) / total
            feats[f"{pos}-{dim}-{COUNT_SUFFIX}"] = float(len(distinct.get((pos, dim), ())))

    names = sorted(feats)
    return TypologyVector(language, names, [feats[n] for n in names])


def finalize_cluster_vectors(vectors: dict[str, TypologyVector]) -> dict[str, TypologyVector]:
    """Align, prune, and normalize the member vectors of one cluster.

    Feature lists are unioned (missing entries read 0), features that are
    zero for every member are removed, and count features are divided by
    their cluster-wide maximum so every entry lands in [0, 1].
    """
    if not vectors:
        raise ClusterError("no typology vectors to finalize")
    union = sorted({n for v in vectors.values() for n in v.feature_names})
    table = {lang: v.as_dict() for lang, v in vectors.items()}
    kept = [n for n in union if any(table[lang].get(n, 0.0) != 0.0 for lang in table)]
    out: dict[str, TypologyVector] = {}
    maxima = {
        n: max(table[lang].get(n, 0.0) for lang in table)
        for n in kept
        if n.endswith(COUNT_SUFFIX)
    }
    for lang in sorted(vectors):
        row = []
        for n in kept:
            val = table[lang].get(n, 0.0)
            if n.endswith(COUNT_SUFFIX) and maxima[n] > 0:
                val = val / maxima[n]
            row.append(val)
        out[lang] = TypologyVector(lang, kept, row)
    return out


def write_typology_table(vectors: dict[str, TypologyVector], path: str):
    """Tabular export: header of feature names, one row per language."""
    langs = sorted(vectors)
    names = vectors[langs[0]].feature_names
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["language"] + names) + "\n")
        for lang in langs:
            vals = "\t".join(f"{v:.6g}" for v in vectors[lang].values)
            fh.write(f"{lang}\t{vals}\n")


def read_typology_table(path: str) -> dict[str, TypologyVector]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ClusterError(f"typology table {path} is empty")
    header = lines[0].split("\t")
    names = header[1:]
    out = {}
    for line in lines[1:]:
        parts = line.split("\t")
        out[parts[0]] = TypologyVector(parts[0], names, [float(x) for x in parts[1:]])
    return out


def load_word_order_subset(path: str, languages: list[str]) -> dict[str, TypologyVector]:
    """Load the 18 precomputed word-order features for the given languages."""
    table = read_typology_table(path)
    out = {}
    for lang in languages:
        if lang not in table:
            raise ClusterError(f"language {lang!r} missing from typology file {path}")
        row = table[lang].as_dict()
        missing = [n for n in WORD_ORDER_FEATURES if n not in row]
        if missing:
            raise ClusterError(f"typology file {path} lacks features {missing}")
        out[lang] = TypologyVector(lang, WORD_ORDER_FEATURES,
                                   [row[n] for n in WORD_ORDER_FEATURES])
    return out


# ---------------------------------------------------------------------------
# Language factoring
# ---------------------------------------------------------------------------


class LanguageProjection:
    """Per-language projection of the typology vector to a small code."""

    def __init__(self, vectors: dict[str, TypologyVector], code_dim: int, rng, dtype):
        self.code_dim = code_dim
        self.vectors = vectors
        self.inputs = {
            lang: ad.constant(vec.values.astype(dtype)) for lang, vec in vectors.items()
        }
        self.params: dict[str, Tensor] = {}
        for lang in sorted(vectors):
            width = len(vectors[lang])
            self.params[f"typology.{lang}.w"] = ad.init_weight(rng, (code_dim, width), dtype)
            self.params[f"typology.{lang}.b"] = ad.init_zeros((code_dim,), dtype)

    def code(self, language: str) -> Tensor:
        """tanh(W t + b) for one language."""
        if language not in self.inputs:
            raise ClusterError(f"no typology vector for language {language!r}")
        w = self.params[f"typology.{language}.w"]
        b = self.params[f"typology.{language}.b"]
        return ad.tanh(ad.matmul(w, self.inputs[language]) + b)


def factor_state(state: Tensor, code: Tensor) -> Tensor:
    """Row-major vectorization of the outer product state x code."""
    d = state.shape[0]
    k = code.shape[0]
    outer = ad.matmul(ad.reshape(state, (d, 1)), ad.reshape(code, (1, k)))
    return ad.reshape(outer, (d * k,))
