"""Embedding database and retrieval classification over decoded features.

Database file layout (little-endian):

    magic "EMBD" | version u8=1 | dim u16 | count u32
    per entry: class_id u32 | text_len u16 | UTF-8 text | dim x float32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

__all__ = [
    "EmbeddingDatabase",
    "ClassPrediction",
    "save_embedding_db",
    "load_embedding_db",
    "classify",
]

_MAGIC = b"EMBD"
_VERSION = 1
_HEADER = struct.Struct("<4sBHI")
_ENTRY_HEAD = struct.Struct("<IH")


@dataclass
class EmbeddingDatabase:
    class_ids: np.ndarray       # (N,) int64, unique
    texts: list[str]
    embeddings: np.ndarray      # (N, dim) float64

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2:
            raise ValueError("embeddings must be (N, dim)")
        n = len(self.class_ids)
        if len(self.texts) != n or self.embeddings.shape[0] != n:
            raise ValueError("entry counts disagree")
        if len(np.unique(self.class_ids)) != n:
            raise FormatError("duplicate class_id in embedding database")
        norms = np.linalg.norm(self.embeddings, axis=1)
        if n and norms.min() == 0.0:
            raise FormatError("zero-norm embedding in database")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.class_ids)

    def text_for(self, class_id: int) -> str:
        idx = np.nonzero(self.class_ids == class_id)[0]
        if not len(idx):
            raise KeyError(f"class_id {class_id} not in database")
        return self.texts[int(idx[0])]


@dataclass
class ClassPrediction:
    class_id: int
    score: float
    top_k: list[tuple[int, float]]  # (class_id, score) sorted by rank


def save_embedding_db(path, db: EmbeddingDatabase) -> None:
    if db.dim > 0xFFFF:
        raise ValueError("dim exceeds format field width")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, db.dim, len(db)))
        for cid, text, emb in zip(db.class_ids, db.texts, db.embeddings):
            raw = text.encode("utf-8")
            fh.write(_ENTRY_HEAD.pack(int(cid), len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(emb, dtype="<f4").tobytes())


def load_embedding_db(path) -> EmbeddingDatabase:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read embedding db {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise FormatError("embedding db shorter than its header")
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad embedding db magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported embedding db version {version}")
    off = _HEADER.size
    ids, texts, embs = [], [], []
    for i in range(count):
        if off + _ENTRY_HEAD.size > len(blob):
            raise FormatError(f"embedding db truncated in entry {i}")
        cid, text_len = _ENTRY_HEAD.unpack_from(blob, off)
        off += _ENTRY_HEAD.size
        if off + text_len + 4 * dim > len(blob):
            raise FormatError(f"embedding db truncated in entry {i}")
        texts.append(blob[off:off + text_len].decode("utf-8"))
        off += text_len
        embs.append(np.frombuffer(blob, dtype="<f4", count=dim, offset=off).astype(np.float64))
        off += 4 * dim
        ids.append(cid)
    if off != len(blob):
        raise FormatError("embedding db has trailing bytes")
    return EmbeddingDatabase(class_ids=np.array(ids, dtype=np.int64),
                             texts=texts, embeddings=np.array(embs).reshape(count, dim))


def classify(db: EmbeddingDatabase, feature: np.ndarray, k: int = 1) -> ClassPrediction:
    """Cosine-similarity argmax; ties broken toward the lowest class_id."""
    q = np.asarray(feature, dtype=np.float64).reshape(-1)
    if q.shape[0] != db.dim:
        raise ValueError(f"query dim {q.shape[0]} != database dim {db.dim}")
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("zero-norm query feature")
    if not 1 <= k <= len(db):
        raise ValueError(f"k must be in [1, {len(db)}]")
    emb_norms = np.linalg.norm(db.embeddings, axis=1)
    scores = (db.embeddings @ q) / (emb_norms * qn)
    # Sort by (-score, class_id): deterministic ranking with the tie rule.
    order = np.lexsort((db.class_ids, -scores))
    top = [(int(db.class_ids[i]), float(scores[i])) for i in order[:k]]
    return ClassPrediction(class_id=top[0][0], score=top[0][1], top_k=top)
