"""Export jobs: label and caption embedding databases with provenance sidecars.

The EMBD wire format mirrors the codec package's external interface:
magic "EMBD", version u8=1, dim u16 LE, count u32 LE, then per entry
class_id u32 LE, text_len u16 LE, UTF-8 text, dim x float32 LE.
Outputs are written atomically (temp file + rename) next to a
``<name>.meta.json`` sidecar recording the backend and model identifiers.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["write_embd", "export_label_embeddings", "export_caption_embeddings",
           "DEFAULT_LABEL_TEMPLATE"]

DEFAULT_LABEL_TEMPLATE = "a photo of a {label}"

_HEADER = struct.Struct("<4sBHI")
_ENTRY_HEAD = struct.Struct("<IH")


def write_embd(path, ids, texts, embeddings) -> None:
    """Atomically write an EMBD database."""
    ids = [int(i) for i in ids]
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if len(ids) != len(texts) or len(ids) != embeddings.shape[0]:
        raise ValueError("ids, texts and embeddings must align")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    norms = np.linalg.norm(embeddings, axis=1)
    if len(ids) and norms.min() == 0.0:
        raise ValueError("refusing to write a zero-norm embedding")
    dim = embeddings.shape[1]
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(b"EMBD", 1, dim, len(ids)))
            for cid, text, emb in zip(ids, texts, embeddings):
                raw = text.encode("utf-8")
                fh.write(_ENTRY_HEAD.pack(cid, len(raw)))
                fh.write(raw)
                fh.write(np.ascontiguousarray(emb, dtype="<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _write_sidecar(path, encoder, count: int, extra: dict) -> None:
    meta = {"backend": encoder.name, "dim": encoder.dim, "count": count}
    meta.update(extra)
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def export_label_embeddings(labels: list[str], out_path, encoder,
                            template: str = DEFAULT_LABEL_TEMPLATE) -> int:
    """One entry per label, class_ids 0..n-1, texts wrapped in the prompt."""
    labels = list(labels)
    if not labels:
        raise ValueError("label list is empty")
    if any(not l.strip() for l in labels):
        raise ValueError("labels must be non-empty text")
    prompts = [template.format(label=label) for label in labels]
    embeddings = encoder.encode(prompts)
    write_embd(out_path, range(len(labels)), labels, embeddings)
    _write_sidecar(out_path, encoder, len(labels), {"template": template})
    return len(labels)


def load_captions(path) -> dict[int, str]:
    """Caption source: either {index: text} or a manifest with a captions key."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "captions" in doc:
        doc = doc["captions"]
    if not isinstance(doc, dict):
        raise ValueError("captions file must be a JSON object")
    return {int(k): str(v) for k, v in doc.items()}


def export_caption_embeddings(captions: dict[int, str], out_path, encoder) -> int:
    """One entry per record index; indices must cover 0..n-1 with no gaps."""
    if not captions:
        raise ValueError("no captions to export")
    n = max(captions) + 1
    missing = [i for i in range(n) if i not in captions]
    if missing:
        raise ValueError(f"captions missing for record indices {missing[:5]}"
                         + ("..." if len(missing) > 5 else ""))
    empty = [i for i in range(n) if not captions[i].strip()]
    if empty:
        raise ValueError(f"empty caption rows at indices {empty[:5]}"
                         + ("..." if len(empty) > 5 else ""))
    texts = [captions[i] for i in range(n)]
    embeddings = encoder.encode(texts)
    write_embd(out_path, range(n), texts, embeddings)
    _write_sidecar(out_path, encoder, n, {})
    return n
