"""Shared fixtures: synthetic corpora and gradient-check helpers."""

from __future__ import annotations

import numpy as np
import pytest

from morphcrf.corpus import Sentence, Token
from morphcrf.schema import decompose_tagset

# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def numeric_grad(f, tensor, eps=1e-4):
    """Central finite differences of a scalar-valued callable w.r.t. tensor.data."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_rel_err(analytic, numeric, abs_floor=1e-8):
    """Worst-case |a-n| / max(|a|+|n|, floor); tiny pairs count as exact."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), abs_floor)
    rel = diff / denom
    rel[diff < abs_floor] = 0.0
    return float(rel.max()) if rel.size else 0.0


def check_grads(loss_fn, params, eps=1e-4, tol=1e-3):
    """Assert analytic gradients of loss_fn match finite differences.

    loss_fn() must rebuild the graph from the current parameter values and
    return the scalar loss tensor. Returns the worst relative error seen.
    """
    from morphcrf import autodiff as ad

    loss = loss_fn()
    ad.backward(loss)
    analytic = {name: t.grad.copy() for name, t in params.items()}
    ad.zero_grads(params)
    worst = 0.0
    for name, t in params.items():
        numeric = numeric_grad(lambda: loss_fn().item(), t, eps=eps)
        err = max_rel_err(analytic[name], numeric)
        assert err <= tol, f"gradient of {name}: rel err {err:.2e} > {tol}"
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

TOY_DICT = {
    "N": "POS", "V": "POS", "M": "POS", "NA": "POS", "NB": "POS",
    "NC": "POS", "ND": "POS", "CONJ": "POS", "PRO": "POS", "ADJ": "POS",
    "NOM": "Case", "ACC": "Case",
    "FEM": "Gender", "MASC": "Gender", "NEUT": "Gender",
    "SG": "Number", "PL": "Number",
    "3": "Person", "1": "Person",
}


def sentences_from_tokens(token_lists, language, mapping=TOY_DICT) -> list[Sentence]:
    """Build annotated sentences from [(form, feats), ...] lists."""
    out = []
    for rows in token_lists:
        tokens = []
        for form, feats in rows:
            assignment, _ = decompose_tagset(feats, mapping)
            tokens.append(Token(form=form, raw_feats=feats, annotation=assignment))
        out.append(Sentence(tokens=tokens, language=language))
    return out


def render_conllu(token_lists) -> str:
    """CoNLL-U text for [(form, feats), ...] lists."""
    blocks = []
    for rows in token_lists:
        lines = []
        for i, (form, feats) in enumerate(rows, start=1):
            cols = [str(i), form, "_", "_", "_", feats, "_", "_", "_", "_"]
            lines.append("\t".join(cols))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


NOUN_STEMS = ["tal", "mor", "vek", "sil"]
VERB_STEMS = ["run", "pol", "dar", "fen"]
CASE_SUFFIX = {"a": "NOM", "en": "ACC"}


def suffix_language(n_sentences: int, seed: int, min_len=3, max_len=6):
    """POS and Case fully determined by the surface form.

    Noun stems carry a case suffix (-a nominative, -en accusative); verb
    stems appear bare. Returns [(form, feats), ...] per sentence.
    """
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        rows = []
        for _ in range(length):
            if rng.random() < 0.6:
                stem = NOUN_STEMS[int(rng.integers(len(NOUN_STEMS)))]
                suffix = ["a", "en"][int(rng.integers(2))]
                rows.append((stem + suffix, f"N;{CASE_SUFFIX[suffix]}"))
            else:
                stem = VERB_STEMS[int(rng.integers(len(VERB_STEMS)))]
                rows.append((stem, "V"))
        corpus.append(rows)
    return corpus


MARKERS = {"ta": "NA", "ku": "NB", "pi": "NC", "so": "ND"}
GENDER_OF = {"NA": "FEM", "NB": "MASC", "NC": "NEUT", "ND": None}
AMBIGUOUS_NOUNS = ["lor", "gan", "miv", "tes", "bal", "rud"]


def pos_gender_language(n_sentences: int, seed: int, min_nouns=3, max_nouns=5):
    """Gender is a function of POS, and POS of the sentence-initial marker.

    Every sentence opens with one marker word; each following noun takes
    the marker's POS class and that class's gender. The noun forms are
    shared across all classes, so neither POS nor Gender can be read off a
    token's own surface."""
    rng = np.random.default_rng(seed)
    corpus = []
    markers = list(MARKERS)
    for _ in range(n_sentences):
        marker = markers[int(rng.integers(len(markers)))]
        pos = MARKERS[marker]
        gender = GENDER_OF[pos]
        rows = [(marker, "M")]
        for _ in range(int(rng.integers(min_nouns, max_nouns + 1))):
            noun = AMBIGUOUS_NOUNS[int(rng.integers(len(AMBIGUOUS_NOUNS)))]
            rows.append((noun, f"{pos};{gender}" if gender else pos))
        corpus.append(rows)
    return corpus


HOMOGRAPH_FORMS = ["bo", "ke", "du", "lan", "mir"]


def homograph_pair(n_sentences: int, seed: int):
    """Two languages sharing every surface form with conflicting tags.

    Language one tags every token CONJ; language two tags the same token
    as a pronoun with a full bundle. Returns (corpus_l1, corpus_l2).
    """
    rng = np.random.default_rng(seed)
    l1, l2 = [], []
    for _ in range(n_sentences):
        length = int(rng.integers(2, 5))
        forms = [HOMOGRAPH_FORMS[int(rng.integers(len(HOMOGRAPH_FORMS)))] for _ in range(length)]
        l1.append([(f, "CONJ") for f in forms])
        l2.append([(f, "3;MASC;PRO;NOM;SG") for f in forms])
    return l1, l2


@pytest.fixture
def toy_dict():
    return dict(TOY_DICT)


@pytest.fixture
def toy_dict_file(tmp_path):
    path = tmp_path / "toy.dict"
    lines = ["# toy value-to-dimension dictionary"]
    lines += [f"{v}\t{d}" for v, d in sorted(TOY_DICT.items())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
