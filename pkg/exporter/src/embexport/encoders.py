"""Text-embedding backends.

Two backends are available:

* ``hashed`` (default): a deterministic feature hasher.  Every token and
  character trigram of the lowercased text seeds a Gaussian direction, and
  the embedding is their weighted, unit-normalized sum.  It needs no model
  weights, is stable across machines, and texts sharing tokens land close
  together, which is what retrieval and conditional decoding need.
* ``st``: any sentence-transformers model whose output width matches the
  requested dimension.  Raises :class:`EncoderUnavailable` when the package
  or the model cannot be loaded (for example in offline environments).
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

__all__ = ["EncoderUnavailable", "HashedEncoder", "SentenceTransformerEncoder",
           "get_encoder"]

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class EncoderUnavailable(RuntimeError):
    """The requested embedding backend cannot run in this environment."""


class HashedEncoder:
    """Deterministic hashed-feature text encoder."""

    version = "hashed-v1"

    def __init__(self, dim: int):
        if dim < 8:
            raise ValueError("dim must be at least 8")
        self.dim = dim

    @property
    def name(self) -> str:
        return f"{self.version}-d{self.dim}"

    def _direction(self, feature: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.dim}|{feature}".encode()).digest()
        seed = np.frombuffer(digest[:16], dtype=np.uint32)
        rng = np.random.default_rng(np.random.SeedSequence(seed.tolist()))
        return rng.standard_normal(self.dim)

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                raise ValueError(f"text {i} has no encodable tokens: {text!r}")
            vec = np.zeros(self.dim)
            for tok in tokens:
                vec += self._direction(f"tok:{tok}")
                padded = f"^{tok}$"
                for k in range(len(padded) - 2):
                    vec += 0.25 * self._direction(f"tri:{padded[k:k + 3]}")
            norm = np.linalg.norm(vec)
            if norm == 0.0:  # cannot happen with Gaussian directions
                raise ValueError(f"text {i} hashed to a zero vector")
            out[i] = vec / norm
        return out


class SentenceTransformerEncoder:
    """Wrapper over a pretrained sentence-transformers model."""

    def __init__(self, model_name: str, dim: int):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderUnavailable(
                "sentence-transformers is not installed; use the hashed backend "
                "or install the 'st' extra"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderUnavailable(
                f"cannot load model {model_name!r}: {exc}"
            ) from exc
        got = self._model.get_sentence_embedding_dimension()
        if got != dim:
            raise EncoderUnavailable(
                f"model {model_name!r} embeds into {got} dimensions, need {dim}"
            )
        self.dim = dim
        self.name = f"sentence-transformers:{model_name}"

    def encode(self, texts: list[str]) -> np.ndarray:
        emb = np.asarray(self._model.encode(list(texts), convert_to_numpy=True),
                         dtype=np.float64)
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        if norms.min() == 0.0:
            raise ValueError("model produced a zero-norm embedding")
        return emb / norms


def get_encoder(backend: str, dim: int, model: str | None = None):
    if backend == "hashed":
        return HashedEncoder(dim)
    if backend == "st":
        if not model:
            raise EncoderUnavailable("the st backend needs --model")
        return SentenceTransformerEncoder(model, dim)
    raise ValueError(f"unknown backend {backend!r}")
