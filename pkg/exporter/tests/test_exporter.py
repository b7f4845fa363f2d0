"""Exporter unit tests: formats, determinism, and error handling.

Every produced file must pass the codec package's own database validation,
so these tests load results through ``braincodec.load_embedding_db``.
"""

import json

import numpy as np
import pytest

from braincodec.retrieval import load_embedding_db

from embexport.cli import run
from embexport.encoders import EncoderUnavailable, HashedEncoder, get_encoder
from embexport.export import (export_caption_embeddings, export_label_embeddings,
                              load_captions, write_embd)

IMAGENET_STYLE_LABELS = [
    "sorrel horse", "capuchin", "elephant", "panda", "anemone fish",
    "airliner", "broom", "canoe", "cellphone", "coffee mug",
    "computer", "desktop computer", "digital watch", "electric guitar",
    "electric locomotive", "espresso maker", "folding chair", "golf ball",
    "grand piano", "iron", "jack-o'-lantern", "mailbag", "missile",
    "mitten", "mountain bike", "mountain tent", "pajama", "parachute",
    "pool table", "radio telescope", "reflex camera", "revolver",
    "running shoe", "banana", "pizza", "daisy", "bolete", "school bus",
    "mushroom", "pumpkin",
]


class TestHashedEncoder:
    def test_deterministic(self):
        enc = HashedEncoder(64)
        a = enc.encode(["a brown horse", "a piano"])
        b = enc.encode(["a brown horse", "a piano"])
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        enc = HashedEncoder(96)
        emb = enc.encode(IMAGENET_STYLE_LABELS)
        assert np.allclose(np.linalg.norm(emb, axis=1), 1.0)

    def test_shared_tokens_embed_closer(self):
        enc = HashedEncoder(256)
        a, b, c = enc.encode(["a sorrel horse", "a brown horse", "a digital watch"])
        assert a @ b > a @ c

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            HashedEncoder(64).encode(["ok", "  "])

    def test_st_backend_unavailable_without_model(self):
        with pytest.raises(EncoderUnavailable):
            get_encoder("st", 768, None)

    def test_st_backend_unavailable_offline(self):
        # no weights are downloadable in this environment
        with pytest.raises(EncoderUnavailable):
            get_encoder("st", 768, "definitely/not-a-local-model")


class TestLabelExport:
    def test_forty_labels_768(self, tmp_path):
        out = tmp_path / "labels.embd"
        n = export_label_embeddings(IMAGENET_STYLE_LABELS, out, HashedEncoder(768))
        assert n == 40
        db = load_embedding_db(out)
        assert len(db) == 40 and db.dim == 768
        assert db.texts == IMAGENET_STYLE_LABELS

    def test_duplicate_labels_get_distinct_ids(self, tmp_path):
        out = tmp_path / "dup.embd"
        export_label_embeddings(["piano", "piano"], out, HashedEncoder(32))
        db = load_embedding_db(out)
        assert sorted(db.class_ids) == [0, 1]
        assert np.array_equal(db.embeddings[0], db.embeddings[1])

    def test_prompt_template_changes_embeddings(self, tmp_path):
        a = tmp_path / "a.embd"
        b = tmp_path / "b.embd"
        export_label_embeddings(["horse"], a, HashedEncoder(64))
        export_label_embeddings(["horse"], b, HashedEncoder(64),
                                template="an eeg recording evoked by a {label}")
        dba, dbb = load_embedding_db(a), load_embedding_db(b)
        assert not np.array_equal(dba.embeddings, dbb.embeddings)

    def test_empty_label_list_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_label_embeddings([], tmp_path / "x.embd", HashedEncoder(32))

    def test_sidecar_records_backend(self, tmp_path):
        out = tmp_path / "labels.embd"
        export_label_embeddings(["a", "b"], out, HashedEncoder(32))
        meta = json.loads((tmp_path / "labels.embd.meta.json").read_text())
        assert meta["backend"].startswith("hashed-v1")
        assert meta["count"] == 2 and meta["dim"] == 32

    def test_no_temp_files_left(self, tmp_path):
        out = tmp_path / "labels.embd"
        export_label_embeddings(["a", "b"], out, HashedEncoder(32))
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert not leftovers


class TestCaptionExport:
    def test_caption_db_keyed_by_record_index(self, tmp_path):
        out = tmp_path / "caps.embd"
        caps = {i: f"a recording of class_{i % 5} pattern {i}" for i in range(400)}
        n = export_caption_embeddings(caps, out, HashedEncoder(512))
        assert n == 400
        db = load_embedding_db(out)
        assert len(db) == 400 and db.dim == 512
        assert list(db.class_ids) == list(range(400))

    def test_missing_row_rejected(self, tmp_path):
        caps = {0: "a", 2: "c"}
        with pytest.raises(ValueError, match="missing"):
            export_caption_embeddings(caps, tmp_path / "x.embd", HashedEncoder(32))

    def test_empty_row_rejected(self, tmp_path):
        caps = {0: "a dog", 1: "   "}
        with pytest.raises(ValueError, match="empty"):
            export_caption_embeddings(caps, tmp_path / "x.embd", HashedEncoder(32))

    def test_manifest_captions_accepted(self, tmp_path):
        manifest = {"labels": {"0": "dog"}, "split": {},
                    "captions": {"0": "a dog outside", "1": "a dog inside"}}
        path = tmp_path / "m.json"
        path.write_text(json.dumps(manifest))
        caps = load_captions(path)
        assert caps == {0: "a dog outside", 1: "a dog inside"}


class TestWriter:
    def test_zero_norm_refused(self, tmp_path):
        with pytest.raises(ValueError):
            write_embd(tmp_path / "x.embd", [0], ["t"], np.zeros((1, 8)))

    def test_duplicate_ids_refused(self, tmp_path):
        with pytest.raises(ValueError):
            write_embd(tmp_path / "x.embd", [1, 1], ["a", "b"], np.ones((2, 4)))


class TestCli:
    def test_export_labels_command(self, tmp_path, capsys):
        labels = tmp_path / "labels.txt"
        labels.write_text("\n".join(IMAGENET_STYLE_LABELS))
        out = tmp_path / "labels.embd"
        assert run(["export-labels", "--labels", str(labels),
                    "--out", str(out), "--dim", "768"]) == 0
        assert load_embedding_db(out).dim == 768
        capsys.readouterr()

    def test_export_captions_command(self, tmp_path, capsys):
        caps = tmp_path / "caps.json"
        caps.write_text(json.dumps({str(i): f"caption {i}" for i in range(10)}))
        out = tmp_path / "caps.embd"
        assert run(["export-captions", "--captions", str(caps),
                    "--out", str(out), "--dim", "512"]) == 0
        assert len(load_embedding_db(out)) == 10
        capsys.readouterr()

    def test_st_without_model_fails_cleanly(self, tmp_path, capsys):
        labels = tmp_path / "l.txt"
        labels.write_text("dog\n")
        assert run(["export-labels", "--labels", str(labels),
                    "--out", str(tmp_path / "x.embd"), "--backend", "st"]) == 2
        assert "encoder unavailable" in capsys.readouterr().err
