"""Schema module: dictionary loading, tagset decomposition/composition,
schema construction and serialization."""

import itertools

import pytest

from morphcrf.errors import DictionaryError, SchemaError
from morphcrf.schema import (
    FeatureSchema,
    build_schema,
    compose_prediction,
    decompose_tagset,
    dimension_counts,
    load_dictionary,
)


class TestLoadDictionary:
    def test_basic_row(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("NOM\tCase\nN\tPOS\n")
        mapping = load_dictionary(str(p))
        assert mapping["NOM"] == "Case"
        assert dimension_counts(mapping) == {"Case": 1, "POS": 1}

    def test_empty_file_warns(self, tmp_path, capsys):
        p = tmp_path / "d.tsv"
        p.write_text("# only a comment\n")
        mapping = load_dictionary(str(p))
        assert mapping == {}
        assert "empty" in capsys.readouterr().err

    def test_conflicting_duplicate_cites_both_rows(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("NOM\tCase\nPL\tNumber\nNOM\tGender\n")
        with pytest.raises(DictionaryError, match=r"line 1"):
            load_dictionary(str(p))

    def test_missing_file(self):
        with pytest.raises(DictionaryError):
            load_dictionary("/nonexistent/dict.tsv")

    def test_covers_worked_example(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("N\tPOS\nPL\tNumber\nNOM\tCase\nFEM\tGender\n")
        mapping = load_dictionary(str(p))
        assignment, unmapped = decompose_tagset("N;PL;NOM;FEM", mapping)
        assert assignment == {"POS": "N", "Number": "PL", "Case": "NOM", "Gender": "FEM"}
        assert unmapped == []


class TestDecompose:
    def test_four_values(self, toy_dict):
        assignment, _ = decompose_tagset("N;PL;NOM;FEM", toy_dict)
        assert assignment == {"POS": "N", "Number": "PL", "Case": "NOM", "Gender": "FEM"}

    def test_null_tagset(self, toy_dict):
        assert decompose_tagset("_", toy_dict) == ({}, [])

    def test_pronoun_bundle(self, toy_dict):
        assignment, _ = decompose_tagset("3;MASC;PRO;NOM;SG", toy_dict)
        assert assignment == {
            "Person": "3", "Gender": "MASC", "POS": "PRO", "Case": "NOM", "Number": "SG",
        }

    def test_unmapped_lenient_counts(self, toy_dict):
        assignment, unmapped = decompose_tagset("N;ZZZ", toy_dict)
        assert assignment == {"POS": "N"}
        assert unmapped == ["ZZZ"]

    def test_unmapped_strict_raises(self, toy_dict):
        with pytest.raises(SchemaError, match="ZZZ"):
            decompose_tagset("N;ZZZ", toy_dict, strict=True)

    def test_order_insensitive(self, toy_dict):
        values = ["N", "PL", "NOM", "FEM"]
        expected, _ = decompose_tagset(";".join(values), toy_dict)
        for perm in itertools.permutations(values):
            got, _ = decompose_tagset(";".join(perm), toy_dict)
            assert got == expected


class TestBuildSchema:
    def test_pos_only_corpus(self):
        schema = build_schema([{"POS": "N"}, {"POS": "V"}])
        assert schema.dimensions == ["POS"]
        assert schema.labels["POS"] == ["_", "N", "V"]

    def test_union_of_dimensions(self, toy_dict):
        a, _ = decompose_tagset("N;PL;NOM;FEM", toy_dict)
        b, _ = decompose_tagset("3;MASC;PRO;NOM;SG", toy_dict)
        schema = build_schema([a, b])
        assert set(schema.dimensions) == {"POS", "Number", "Case", "Gender", "Person"}
        assert schema.dimensions[0] == "POS"

    def test_extension_fills_null(self):
        schema = build_schema([{"POS": "V"}, {"POS": "N", "Gender": "FEM"}])
        assert schema.extend({"POS": "V"}) == {"POS": "V", "Gender": "_"}

    def test_empty_corpus_rejected(self):
        with pytest.raises(SchemaError):
            build_schema([])

    def test_deterministic_serialization(self, toy_dict):
        tagsets = ["N;PL;NOM;FEM", "V", "3;MASC;PRO;NOM;SG", "_"]
        def schema_text():
            annots = [decompose_tagset(t, toy_dict)[0] for t in tagsets]
            return build_schema(annots).to_text()
        assert schema_text() == schema_text()

    def test_text_round_trip(self, toy_dict):
        a, _ = decompose_tagset("N;PL;NOM;FEM", toy_dict)
        schema = build_schema([a])
        again = FeatureSchema.from_text(schema.to_text())
        assert again.dimensions == schema.dimensions
        assert again.labels == schema.labels


class TestCompose:
    @pytest.fixture
    def schema(self, toy_dict):
        a, _ = decompose_tagset("N;PL;NOM;FEM", toy_dict)
        b, _ = decompose_tagset("3;MASC;PRO;NOM;SG", toy_dict)
        return build_schema([a, b])

    def test_null_dimension_omitted(self, schema):
        assignment = {"POS": "N", "Number": "PL", "Case": "NOM", "Gender": "FEM", "Person": "_"}
        composed = compose_prediction(assignment, schema)
        assert set(composed.split(";")) == {"N", "PL", "NOM", "FEM"}

    def test_all_null(self, schema):
        assignment = {d: "_" for d in schema.dimensions}
        assert compose_prediction(assignment, schema) == "_"

    def test_unknown_value_rejected(self, schema):
        assignment = schema.extend({"POS": "N"})
        assignment["Case"] = "XYZ"
        with pytest.raises(SchemaError):
            compose_prediction(assignment, schema)

    def test_round_trip_value_sets(self, toy_dict):
        tagsets = ["N;PL;NOM;FEM", "3;MASC;PRO;NOM;SG", "V", "N;SG;ACC", "_", "PRO;PL"]
        annots = [decompose_tagset(t, toy_dict)[0] for t in tagsets]
        schema = build_schema(annots)
        for raw, annot in zip(tagsets, annots):
            composed = compose_prediction(schema.extend(annot), schema)
            original = set() if raw == "_" else set(raw.split(";"))
            recomposed = set() if composed == "_" else set(composed.split(";"))
            assert recomposed == original
