import re
import struct

import numpy as np
import pytest

from itermatch.autodiff import Tensor
from itermatch.data import (RawEmbedding, load_embeddings, load_manifest,
                            make_batches, project, split_caption,
                            synth_dataset, write_embeddings, write_manifest)
from itermatch.errors import DataError


def make_file(path, instances, modality="image", d_raw=3):
    """Hand-assemble an embedding file byte by byte."""
    blob = b"LILE" + struct.pack("<H", 1)
    blob += struct.pack("<B", 0 if modality == "image" else 1)
    blob += struct.pack("<I", d_raw)
    blob += struct.pack("<I", len(instances))
    for iid, tokens in instances:
        idb = iid.encode()
        blob += struct.pack("<H", len(idb)) + idb
        blob += struct.pack("<I", tokens.shape[0])
        blob += tokens.astype("<f4").tobytes()
    path.write_bytes(blob)
    return path


class TestEmbeddingFile:
    def test_known_bytes_round_trip(self, tmp_path):
        tokens = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], dtype=np.float32)
        path = make_file(tmp_path / "one.bin", [("a", tokens)])
        loaded = load_embeddings(path)
        assert list(loaded) == ["a"]
        np.testing.assert_array_equal(loaded["a"].tokens,
                                      tokens.astype(np.float64))
        assert loaded["a"].modality == "image"

    def test_empty_instance_rejected(self, tmp_path):
        path = make_file(tmp_path / "t0.bin",
                         [("a", np.zeros((0, 3), dtype=np.float32))])
        with pytest.raises(DataError, match="t=0"):
            load_embeddings(path)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(DataError, match="magic"):
            load_embeddings(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"LILE" + struct.pack("<H", 9) + b"\x00" * 16)
        with pytest.raises(DataError, match="version"):
            load_embeddings(p)

    def test_truncated_payload(self, tmp_path):
        tokens = np.ones((2, 3), dtype=np.float32)
        path = make_file(tmp_path / "trunc.bin", [("a", tokens)])
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataError, match="truncated"):
            load_embeddings(path)

    def test_nan_payload_rejected(self, tmp_path):
        tokens = np.array([[1.0, np.nan, 3.0]], dtype=np.float32)
        path = make_file(tmp_path / "nan.bin", [("a", tokens)])
        with pytest.raises(DataError, match="NaN"):
            load_embeddings(path)

    def test_duplicate_id_rejected(self, tmp_path):
        tokens = np.ones((1, 3), dtype=np.float32)
        path = make_file(tmp_path / "dup.bin", [("a", tokens), ("a", tokens)])
        with pytest.raises(DataError, match="duplicate"):
            load_embeddings(path)

    def test_write_then_load_50_random_instances(self, tmp_path):
        rng = np.random.default_rng(0)
        embs = [
            RawEmbedding(f"id{i}", "text",
                         rng.normal(size=(rng.integers(1, 9), 6))
                         .astype(np.float32).astype(np.float64))
            for i in range(50)
        ]
        path = tmp_path / "round.bin"
        write_embeddings(path, embs, "text")
        loaded = load_embeddings(path)
        assert len(loaded) == 50
        for emb in embs:
            np.testing.assert_array_equal(loaded[emb.instance_id].tokens,
                                          emb.tokens)


class TestManifest:
    def test_round_trip_and_comments(self, tmp_path):
        from itermatch.data import PairRecord
        records = [PairRecord("i1", "c1", "train"),
                   PairRecord("i2", "c2", "val")]
        p = tmp_path / "m.tsv"
        write_manifest(p, records)
        text = p.read_text()
        p.write_text("# comment line\n" + text + "\n")
        loaded = load_manifest(p)
        assert [(r.image_id, r.caption_id, r.split) for r in loaded] == [
            ("i1", "c1", "train"), ("i2", "c2", "val")]

    def test_bad_split_rejected(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("i1\tc1\tbogus\n")
        with pytest.raises(DataError, match="split"):
            load_manifest(p)


class TestSplitCaption:
    def test_three_sentences(self):
        assert split_caption("A. B. C.") == ["A. B.", "A. C."]

    def test_single_sentence_returned_as_is(self):
        assert split_caption("Only one sentence.") == ["Only one sentence."]

    def test_no_terminal_punctuation(self):
        assert split_caption("no punctuation at all") == [
            "no punctuation at all"]

    def test_question_and_exclamation(self):
        got = split_caption("Is it red? It is! Very red.")
        assert got == ["Is it red? It is!", "Is it red? Very red."]

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            split_caption("   ")

    def test_property_against_independent_splitter(self):
        # independent splitter: character scan instead of the regex
        def scan_split(text):
            out, cur = [], ""
            i = 0
            while i < len(text):
                cur += text[i]
                if text[i] in ".!?" and (i + 1 == len(text)
                                         or text[i + 1].isspace()):
                    out.append(cur.strip())
                    cur = ""
                i += 1
            if cur.strip():
                out.append(cur.strip())
            return out

        rng = np.random.default_rng(1)
        words = ["cell", "tissue", "stain", "large", "shows", "red"]
        for _ in range(100):
            k = int(rng.integers(1, 6))
            sentences = [
                " ".join(rng.choice(words, size=rng.integers(1, 5)))
                + rng.choice([".", "!", "?"]) for _ in range(k)]
            text = " ".join(sentences)
            expected_k = len(scan_split(text))
            got = split_caption(text)
            assert len(got) == max(1, expected_k - 1)
            if expected_k >= 2:
                first = scan_split(text)[0]
                assert all(c.startswith(first) for c in got)


class TestProject:
    def test_identity_on_prenormalized_rows(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 5))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        out = project(Tensor(x), Tensor(np.eye(5)))
        np.testing.assert_allclose(out.data, x, atol=1e-9)

    def test_zero_input_gives_zero_rows(self):
        out = project(Tensor(np.zeros((3, 5))), Tensor(np.eye(5)))
        assert np.isfinite(out.data).all()
        np.testing.assert_array_equal(out.data, np.zeros((3, 5)))

    def test_rows_unit_norm(self):
        rng = np.random.default_rng(3)
        out = project(Tensor(rng.normal(size=(6, 5))),
                      Tensor(rng.normal(size=(5, 4))))
        np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0,
                                   atol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            project(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


class TestSynthDataset:
    def test_noise_zero_pairs_identical(self):
        images, texts, records, anchors = synth_dataset(0, 4, 1, 1, 6, 0.0)
        for rec in records:
            np.testing.assert_array_equal(images[rec.image_id].tokens,
                                          texts[rec.caption_id].tokens)

    def test_same_seed_identical(self):
        a = synth_dataset(7, 8, 2, 3, 5, 0.1)
        b = synth_dataset(7, 8, 2, 3, 5, 0.1)
        for ida in a[0]:
            np.testing.assert_array_equal(a[0][ida].tokens, b[0][ida].tokens)
        for idb in a[1]:
            np.testing.assert_array_equal(a[1][idb].tokens, b[1][idb].tokens)

    def test_paired_anchor_cosine_is_one(self):
        _, _, _, anchors = synth_dataset(1, 5, 2, 2, 8, 0.0)
        norms = np.linalg.norm(anchors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_invalid_sizes(self):
        with pytest.raises(DataError):
            synth_dataset(0, 1, 1, 1, 4, 0.0)
        with pytest.raises(DataError):
            synth_dataset(0, 4, 1, 1, 4, -0.1)


class TestMakeBatches:
    def _dataset(self, n, seed=0):
        return synth_dataset(seed, n, 1, 1, 4, 0.0)

    def test_short_final_batch_dropped(self):
        images, texts, records, _ = self._dataset(10)
        batches = make_batches(records, images, texts, 4, seed=0)
        assert [len(b) for b in batches] == [4, 4]

    def test_same_seed_same_order(self):
        images, texts, records, _ = self._dataset(12)
        a = make_batches(records, images, texts, 4, seed=3)
        b = make_batches(records, images, texts, 4, seed=3)
        assert [[e.instance_id for e in batch.images] for batch in a] == \
               [[e.instance_id for e in batch.images] for batch in b]

    def test_image_with_two_captions_never_doubled_in_batch(self):
        from itermatch.data import PairRecord
        images, texts, records, _ = self._dataset(8)
        # give img00000 a second caption
        extra_cap = "cap_extra"
        texts[extra_cap] = texts["cap00000"]
        records = records + [PairRecord("img00000", extra_cap, "train")]
        for seed in range(10):
            for batch in make_batches(records, images, texts, 4, seed=seed):
                ids = [e.instance_id for e in batch.images]
                assert len(ids) == len(set(ids))

    def test_too_few_pairs(self):
        images, texts, records, _ = self._dataset(2)
        with pytest.raises(DataError):
            make_batches(records[:1], images, texts, 2, seed=0)

    def test_bad_batch_size(self):
        images, texts, records, _ = self._dataset(4)
        with pytest.raises(DataError):
            make_batches(records, images, texts, 1, seed=0)
