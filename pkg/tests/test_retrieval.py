"""Embedding database format and retrieval classification."""

import numpy as np
import pytest

from braincodec.errors import FormatError
from braincodec.retrieval import (EmbeddingDatabase, classify, load_embedding_db,
                                  save_embedding_db)


def make_db(n=40, dim=768, seed=0):
    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((n, dim))
    return EmbeddingDatabase(np.arange(n), [f"label {i}" for i in range(n)], emb)


class TestFormat:
    def test_forty_entry_db(self, tmp_path):
        db = make_db()
        path = tmp_path / "labels.embd"
        save_embedding_db(path, db)
        loaded = load_embedding_db(path)
        assert len(loaded) == 40
        assert loaded.dim == 768

    def test_round_trip_bit_identical(self, tmp_path):
        db = make_db(n=7, dim=12, seed=1)
        p1, p2 = tmp_path / "a.embd", tmp_path / "b.embd"
        save_embedding_db(p1, db)
        save_embedding_db(p2, load_embedding_db(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_duplicate_class_id_rejected(self):
        with pytest.raises(FormatError):
            EmbeddingDatabase(np.array([1, 1]), ["a", "b"], np.ones((2, 4)))

    def test_zero_norm_embedding_rejected(self):
        emb = np.ones((2, 4))
        emb[1] = 0.0
        with pytest.raises(FormatError):
            EmbeddingDatabase(np.array([0, 1]), ["a", "b"], emb)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.embd"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(FormatError):
            load_embedding_db(path)

    def test_truncated_entry_rejected(self, tmp_path):
        db = make_db(n=3, dim=8, seed=2)
        path = tmp_path / "t.embd"
        save_embedding_db(path, db)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(FormatError):
            load_embedding_db(path)

    def test_unicode_text_round_trip(self, tmp_path):
        db = EmbeddingDatabase(np.array([0, 1]), ["café", "歩行者"],
                               np.eye(2) + 0.1)
        path = tmp_path / "u.embd"
        save_embedding_db(path, db)
        assert load_embedding_db(path).texts == ["café", "歩行者"]


class TestClassify:
    def axis_db(self):
        return EmbeddingDatabase(np.array([3, 7]), ["x", "y"],
                                 np.array([[1.0, 0.0], [0.0, 1.0]]))

    def test_argmax(self):
        pred = classify(self.axis_db(), np.array([0.9, 0.1]))
        assert pred.class_id == 3

    def test_scale_invariance_exact(self):
        db = make_db(n=16, dim=24, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(25):
            q = rng.standard_normal(24)
            base = classify(db, q, k=16)
            for c in (1e-6, 0.5, 3.0, 1e6):
                scaled = classify(db, c * q, k=16)
                assert scaled.class_id == base.class_id
                assert [i for i, _ in scaled.top_k] == [i for i, _ in base.top_k]

    def test_tie_breaks_to_lowest_class_id(self):
        pred = classify(self.axis_db(), np.array([1.0, 1.0]) / np.sqrt(2))
        assert pred.class_id == 3

    def test_top_k_is_ranking_prefix(self):
        db = make_db(n=10, dim=6, seed=5)
        q = np.random.default_rng(6).standard_normal(6)
        full = classify(db, q, k=10)
        prefix = classify(db, q, k=3)
        assert prefix.top_k == full.top_k[:3]
        scores = [s for _, s in full.top_k]
        assert all(a >= b for a, b in zip(scores, scores[1:]))
        assert all(-1 - 1e-9 <= s <= 1 + 1e-9 for s in scores)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(2, 64))
            dim = int(rng.integers(2, 20))
            ids = rng.permutation(200)[:n]
            emb = rng.standard_normal((n, dim))
            db = EmbeddingDatabase(ids, [str(i) for i in ids], emb)
            q = rng.standard_normal(dim)
            # independent exhaustive scan with the same tie rule
            best, best_score = None, -2.0
            for cid, e in zip(ids, emb):
                s = float(e @ q / (np.linalg.norm(e) * np.linalg.norm(q)))
                if s > best_score or (s == best_score and cid < best):
                    best, best_score = int(cid), s
            pred = classify(db, q)
            assert pred.class_id == best
            assert abs(pred.score - best_score) < 1e-12

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            classify(self.axis_db(), np.ones(3))

    def test_zero_query_rejected(self):
        with pytest.raises(ValueError):
            classify(self.axis_db(), np.zeros(2))
