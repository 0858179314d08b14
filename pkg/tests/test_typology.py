"""Typology vectors from corpus statistics, cluster finalization, the
precomputed word-order subset, and the outer-product language factoring."""

import numpy as np
import pytest

from conftest import TOY_DICT, check_grads, sentences_from_tokens
from morphcrf import autodiff as ad
from morphcrf.errors import ClusterError, DimensionError
from morphcrf.schema import build_schema
from morphcrf.typology import (
    WORD_ORDER_FEATURES,
    LanguageProjection,
    TypologyVector,
    build_typology_vector,
    factor_state,
    finalize_cluster_vectors,
    load_word_order_subset,
    read_typology_table,
    write_typology_table,
)


def corpus_with_counts(lang, total, adj_fem, adj_neut=0):
    """`total` tokens; adj_fem of them ADJ;FEM, adj_neut ADJ;NEUT, rest N."""
    rows = []
    for _ in range(adj_fem):
        rows.append(("fema", "ADJ;FEM"))
    for _ in range(adj_neut):
        rows.append(("neuta", "ADJ;NEUT"))
    while len(rows) < total:
        rows.append(("noun", "N"))
    sentences = [rows[i:i + 10] for i in range(0, total, 10)]
    return sentences_from_tokens(sentences, lang)


def indoaryan_style_fixture():
    corpora = {
        "hi": corpus_with_counts("hi", 1000, adj_fem=54, adj_neut=0),
        "mr": corpus_with_counts("mr", 1000, adj_fem=144, adj_neut=144),
        "sa": corpus_with_counts("sa", 1000, adj_fem=80, adj_neut=159),
    }
    all_tokens = [t.annotation for sents in corpora.values() for s in sents for t in s.tokens]
    schema = build_schema(iter(all_tokens))
    return corpora, schema


class TestBuildVector:
    def test_adjective_gender_proportions(self):
        corpora, schema = indoaryan_style_fixture()
        raw = {l: build_typology_vector(corpora[l], schema, l) for l in corpora}
        vectors = finalize_cluster_vectors(raw)
        expected = {"hi": 0.054, "mr": 0.144, "sa": 0.080}
        for lang, want in expected.items():
            assert abs(vectors[lang].as_dict()["ADJ-Gender-FEM"] - want) <= 1e-3

    def test_missing_gender_is_zero_but_kept(self):
        corpora, schema = indoaryan_style_fixture()
        raw = {l: build_typology_vector(corpora[l], schema, l) for l in corpora}
        vectors = finalize_cluster_vectors(raw)
        assert "ADJ-Gender-NEUT" in vectors["hi"].feature_names
        assert vectors["hi"].as_dict()["ADJ-Gender-NEUT"] == 0.0
        assert vectors["sa"].as_dict()["ADJ-Gender-NEUT"] > 0.0

    def test_full_coverage_dimension_proportion(self):
        sents = sentences_from_tokens([[("aa", "N;FEM"), ("bb", "V;MASC")]], "xx")
        schema = build_schema(t.annotation for s in sents for t in s.tokens)
        vec = build_typology_vector(sents, schema, "xx")
        assert vec.as_dict()["Gender"] == 1.0

    def test_proportions_in_unit_interval_and_deterministic(self):
        corpora, schema = indoaryan_style_fixture()
        one = build_typology_vector(corpora["mr"], schema, "mr")
        two = build_typology_vector(corpora["mr"], schema, "mr")
        assert one.feature_names == two.feature_names
        np.testing.assert_array_equal(one.values, two.values)
        raw = {l: build_typology_vector(corpora[l], schema, l) for l in corpora}
        final = finalize_cluster_vectors(raw)
        for vec in final.values():
            assert (vec.values >= 0).all() and (vec.values <= 1).all()

    def test_cluster_pruning_aligns_feature_lists(self):
        corpora, schema = indoaryan_style_fixture()
        raw = {l: build_typology_vector(corpora[l], schema, l) for l in corpora}
        final = finalize_cluster_vectors(raw)
        names = [v.feature_names for v in final.values()]
        assert names[0] == names[1] == names[2]
        for name in names[0]:
            assert any(final[l].as_dict()[name] != 0.0 for l in final)

    def test_empty_corpus_rejected(self):
        schema = build_schema([{"POS": "N"}])
        with pytest.raises(ClusterError):
            build_typology_vector([], schema, "xx")


class TestWordOrderSubset:
    def write_table(self, tmp_path, rows):
        path = tmp_path / "uriel.tsv"
        header = "language\t" + "\t".join(WORD_ORDER_FEATURES)
        lines = [header]
        for lang, values in rows.items():
            lines.append(lang + "\t" + "\t".join(str(v) for v in values))
        path.write_text("\n".join(lines) + "\n")
        return str(path)

    def test_strict_sov_row(self, tmp_path):
        sov = [0.0] * 18
        sov[WORD_ORDER_FEATURES.index("S-SOV")] = 1.0
        path = self.write_table(tmp_path, {"xx": sov})
        vec = load_word_order_subset(path, ["xx"])["xx"]
        assert vec.as_dict()["S-SOV"] == 1.0
        assert vec.as_dict()["S-SVO"] == 0.0

    def test_all_18_features_in_order(self, tmp_path):
        path = self.write_table(tmp_path, {"aa": list(np.linspace(0, 1, 18))})
        vec = load_word_order_subset(path, ["aa"])["aa"]
        assert vec.feature_names == WORD_ORDER_FEATURES
        assert len(vec) == 18

    def test_identical_rows_identical_vectors(self, tmp_path):
        row = [0.0, 1.0] * 9
        path = self.write_table(tmp_path, {"aa": row, "bb": row})
        out = load_word_order_subset(path, ["aa", "bb"])
        np.testing.assert_array_equal(out["aa"].values, out["bb"].values)

    def test_missing_language_rejected(self, tmp_path):
        path = self.write_table(tmp_path, {"aa": [0.0] * 18})
        with pytest.raises(ClusterError, match="bb"):
            load_word_order_subset(path, ["bb"])


class TestTableRoundTrip:
    def test_write_then_read(self, tmp_path):
        vectors = {
            "aa": TypologyVector("aa", ["f1", "f2"], [0.25, 0.5]),
            "bb": TypologyVector("bb", ["f1", "f2"], [0.0, 1.0]),
        }
        path = str(tmp_path / "t.tsv")
        write_typology_table(vectors, path)
        again = read_typology_table(path)
        assert set(again) == {"aa", "bb"}
        np.testing.assert_allclose(again["aa"].values, [0.25, 0.5])


class TestFactoring:
    def test_zero_vector_zero_bias_zero_output(self):
        vec = TypologyVector("xx", ["a", "b"], [0.0, 0.0])
        proj = LanguageProjection({"xx": vec}, code_dim=3,
                                  rng=np.random.default_rng(0), dtype=np.float64)
        code = proj.code("xx")
        np.testing.assert_array_equal(code.data, np.zeros(3))
        h = ad.Tensor(np.random.default_rng(1).uniform(-1, 1, 5))
        out = factor_state(h, code)
        np.testing.assert_array_equal(out.data, np.zeros(15))

    def test_output_width(self):
        h = ad.Tensor(np.ones(400))
        code = ad.Tensor(np.ones(20))
        assert factor_state(h, code).shape == (8000,)

    def test_bilinearity(self):
        rng = np.random.default_rng(2)
        h1 = ad.Tensor(rng.uniform(-1, 1, 6))
        h2 = ad.Tensor(rng.uniform(-1, 1, 6))
        code = ad.Tensor(rng.uniform(-1, 1, 4))
        two_h1 = ad.Tensor(2.0 * h1.data)
        np.testing.assert_allclose(
            factor_state(two_h1, code).data, 2.0 * factor_state(h1, code).data, atol=1e-6
        )
        h_sum = ad.Tensor(h1.data + h2.data)
        np.testing.assert_allclose(
            factor_state(h_sum, code).data,
            factor_state(h1, code).data + factor_state(h2, code).data,
            atol=1e-6,
        )

    def test_row_major_layout(self):
        h = ad.Tensor(np.array([1.0, 2.0]))
        code = ad.Tensor(np.array([10.0, 20.0, 30.0]))
        np.testing.assert_allclose(
            factor_state(h, code).data, [10.0, 20.0, 30.0, 20.0, 40.0, 60.0]
        )

    def test_gradients_flow_through_projection_and_state(self):
        vec = TypologyVector("xx", ["a", "b", "c"], [0.2, 0.8, 0.5])
        proj = LanguageProjection({"xx": vec}, code_dim=3,
                                  rng=np.random.default_rng(4), dtype=np.float64)
        h = ad.Tensor(np.random.default_rng(5).uniform(-1, 1, 4), requires_grad=True)
        params = dict(proj.params)
        params["state"] = h

        def loss():
            return ad.tensor_sum(ad.tanh(factor_state(h, proj.code("xx"))))

        check_grads(loss, params, eps=1e-4, tol=1e-3)

    def test_width_mismatch_rejected(self):
        vec = TypologyVector("xx", ["a"], [0.5])
        proj = LanguageProjection({"xx": vec}, code_dim=2,
                                  rng=np.random.default_rng(0), dtype=np.float64)
        proj.inputs["xx"] = ad.constant(np.zeros(3))
        with pytest.raises(DimensionError):
            proj.code("xx")
