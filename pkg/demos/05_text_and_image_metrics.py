"""Evaluation metrics walkthrough: BLEU, ROUGE-1, SSIM, and prompt fusion.

All metrics are exact, dependency-free implementations; this script shows
their behaviour on hand-checkable examples.
"""

import numpy as np

from braincodec import bleu_n, fuse_prompt, rouge1, ssim

print("=== BLEU-n (single reference, unsmoothed) ===")
pairs = [
    ("the cat", "the cat sat"),
    ("a brown horse standing on a field", "a couple of brown horses in a barn"),
    ("a plane on a runway", "a train at the station"),
]
for cand, ref in pairs:
    scores = [bleu_n(cand, ref, n) for n in (1, 2, 3, 4)]
    print(f"  '{cand}' vs '{ref}'")
    print(f"    BLEU-1..4: {[round(s, 4) for s in scores]}")

print("\n=== ROUGE-1 precision / recall / F1 ===")
for cand, ref in pairs:
    p, r, f = rouge1(cand, ref)
    print(f"  P={p:.3f} R={r:.3f} F={f:.3f}  '{cand}' vs '{ref}'")

print("\n=== SSIM on 32x32 thumbnails (8x8 uniform windows) ===")
rng = np.random.default_rng(0)
base = rng.random((32, 32, 3))
variants = {
    "identical": base.copy(),
    "small noise": np.clip(base + 0.05 * rng.standard_normal(base.shape), 0, 1),
    "heavy noise": np.clip(base + 0.4 * rng.standard_normal(base.shape), 0, 1),
    "unrelated": rng.random((32, 32, 3)),
}
for name, img in variants.items():
    print(f"  {name:12s}: SSIM = {ssim(base, img):.4f}")

print("\n=== prompt fusion (token overlap, stopwords ignored) ===")
cases = [
    ("piano", "a piano in a room"),
    ("dog", "a train on tracks"),
    ("sorrel horse", "a brown horse standing"),
]
for label, caption in cases:
    chosen = fuse_prompt(label, caption)
    kind = "caption" if chosen == caption else "label"
    print(f"  label '{label}' + caption '{caption}' -> {kind}: '{chosen}'")
