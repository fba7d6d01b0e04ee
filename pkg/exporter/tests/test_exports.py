import numpy as np
import pytest

from sea_exporter.cli import main as cli_main
from sea_exporter.errors import ImageDecodeError, ModelLoadError, TokenizerMismatchError
from sea_exporter.exports import (
    export_llm_embedding_rows,
    export_vision_features,
    export_word_features,
    load_pixels,
)
from sea_exporter.manifest import ExportManifest, hash_word_list, load_word_list
from sea_exporter.models import (
    LlmEmbeddings,
    load_llm_embeddings,
    load_vision_text_encoder,
)


@pytest.fixture(scope="module")
def encoder(word_list_file):
    return load_vision_text_encoder("seeded-clip", load_word_list(word_list_file), seed=3)


@pytest.fixture(scope="module")
def words(word_list_file):
    return load_word_list(word_list_file)


class TestVisionExport:
    def test_one_grid_per_image_dims_match_manifest(self, encoder, image_files, tmp_path):
        manifest = export_vision_features(image_files, encoder, tmp_path)
        assert len(manifest.dims) == len(image_files)
        side = encoder.grid_side
        for shape in manifest.dims.values():
            assert shape == [side, side, encoder.projection_dim]

    def test_same_image_twice_identical(self, encoder, image_files):
        pixels = load_pixels(image_files[0], encoder.image_size)[None]
        a = encoder.patch_features(pixels)
        b = encoder.patch_features(pixels)
        assert a.tobytes() == b.tobytes()

    def test_round_trip_through_training_loader(self, encoder, image_files, tmp_path):
        manifest = export_vision_features(image_files[:2], encoder, tmp_path)
        from sea.tensorfile import load_tensors

        tensors = load_tensors(manifest.outputs["tensors"])
        for name, shape in manifest.dims.items():
            assert list(tensors[name].shape) == shape
            assert tensors[name].dtype == np.float32

    def test_bad_image_rejected(self, encoder, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not an image")
        with pytest.raises(ImageDecodeError):
            export_vision_features([bad], encoder, tmp_path)


class TestWordExport:
    def test_row_count_equals_word_count(self, encoder, words, tmp_path):
        manifest = export_word_features(words, encoder, tmp_path)
        assert manifest.dims["word_features"] == [len(words), encoder.projection_dim]

    def test_rerun_identical(self, encoder, words):
        a = encoder.word_features(words[:10])
        b = encoder.word_features(words[:10])
        assert a.tobytes() == b.tobytes()

    def test_hash_matches_training_side(self, words, word_list_file):
        from sea.labeling import WordList

        assert hash_word_list(words) == WordList.from_file(word_list_file).sha256()

    def test_manifest_detects_word_drift(self, encoder, words, tmp_path):
        manifest = export_word_features(words, encoder, tmp_path)
        drifted = list(words)
        drifted[0] = "tampered"
        assert manifest.word_list_sha256 != hash_word_list(drifted)

    def test_seeded_model_requires_word_list(self):
        with pytest.raises(ModelLoadError):
            load_vision_text_encoder("seeded-clip", [], seed=0)


class TestLlmExport:
    def test_rows_and_maps_consistent(self, words, tmp_path):
        llm = load_llm_embeddings("seeded-llm", words, seed=5)
        manifest = export_llm_embedding_rows(words, llm, tmp_path)
        from sea.tensorfile import load_tensors

        rows = load_tensors(manifest.outputs["tensors"])["token_embeddings"]
        tok_map = manifest.tokenization
        assert set(tok_map["word_token_ids"]) == set(words)
        for word, ids in tok_map["word_token_ids"].items():
            assert ids, word
            for t in ids:
                row = rows[tok_map["token_row"][str(t)]]
                assert np.array_equal(row, llm.table[t])

    def test_multi_token_words_exist(self, words):
        llm = load_llm_embeddings("seeded-llm", words, seed=5)
        assert any(len(llm.tokenize(w)) > 1 for w in words)

    def test_mean_feature_computable_from_export(self, words, tmp_path):
        llm = load_llm_embeddings("seeded-llm", words, seed=5)
        manifest = export_llm_embedding_rows(words, llm, tmp_path)
        from sea.tensorfile import load_tensors

        rows = load_tensors(manifest.outputs["tensors"])["token_embeddings"]
        ids = manifest.tokenization["word_token_ids"][words[0]]
        feature = np.mean([rows[manifest.tokenization["token_row"][str(t)]] for t in ids], axis=0)
        expected = np.mean([llm.table[t] for t in ids], axis=0)
        assert np.allclose(feature, expected, atol=0)

    def test_tokenizer_mismatch_detected(self):
        broken = LlmEmbeddings(
            tokenize=lambda w: [99],
            table=np.zeros((4, 8), np.float32),
            spec={"id": "broken"},
        )
        with pytest.raises(TokenizerMismatchError):
            broken.rows_for(["word"])


class TestCli:
    def test_full_surface(self, word_list_file, image_files, tmp_path, capsys):
        out = tmp_path / "export"
        argv_common = ["--word-list", str(word_list_file), "--seed", "3"]
        assert cli_main(
            ["vision", "--images"] + [str(p) for p in image_files[:2]]
            + argv_common + ["--out", str(out)]
        ) == 0
        assert cli_main(["words"] + argv_common + ["--out", str(out)]) == 0
        assert cli_main(["llm-embeddings", "--word-list", str(word_list_file),
                         "--seed", "3", "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert captured.count("config ") == 3
        for name in ("vision_features.sea", "word_features.sea", "llm_embeddings.sea",
                     "vision_manifest.json", "word_manifest.json", "llm_manifest.json"):
            assert (out / name).exists()
        manifest = ExportManifest.load(out / "word_manifest.json")
        assert manifest.kind == "words"

    def test_seeded_vision_without_word_list_fails(self, image_files, tmp_path, capsys):
        code = cli_main(["vision", "--images", str(image_files[0]), "--out", str(tmp_path)])
        assert code == 1
        assert "word list" in capsys.readouterr().err

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as info:
            cli_main(["words", "--bogus"])
        assert info.value.code == 2


def test_manifest_round_trip(tmp_path):
    manifest = ExportManifest(
        kind="vision", model={"id": "m"}, outputs={"tensors": "x.sea"},
        dims={"a": [2, 2]}, images=["i.png"],
    )
    manifest.save(tmp_path / "m.json")
    back = ExportManifest.load(tmp_path / "m.json")
    assert back == manifest
