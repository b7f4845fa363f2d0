"""Task metrics: accuracy, confusion, BLEU, ROUGE-1, SSIM, prompt fusion.

Text metrics are exact token-level functions of their inputs.  The shared
tokenizer lowercases and splits on non-alphanumeric runs.  SSIM uses
sliding 8x8 uniform windows with population (1/N) statistics, K1=0.01,
K2=0.03 and unit dynamic range, averaged over windows and channels.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "tokenize",
    "top1_accuracy",
    "confusion_matrix",
    "bleu_n",
    "rouge1",
    "ssim",
    "fuse_prompt",
    "rate_accuracy_sweep",
    "MetricReport",
    "STOPWORDS",
]

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Fixed 30-word stopword list used by prompt fusion.
STOPWORDS = frozenset((
    "a", "an", "the", "and", "or", "of", "in", "on", "at", "to",
    "with", "by", "for", "from", "as", "is", "are", "was", "were", "be",
    "this", "that", "it", "its", "his", "her", "their", "our", "up", "out",
))


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _tokens(text_or_tokens) -> list[str]:
    if isinstance(text_or_tokens, str):
        return tokenize(text_or_tokens)
    return [str(t).lower() for t in text_or_tokens]


def top1_accuracy(predictions, truths) -> float:
    predictions = list(predictions)
    truths = list(truths)
    if len(predictions) != len(truths):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions, {len(truths)} truths"
        )
    if not predictions:
        raise ValueError("need at least one prediction")
    hits = sum(1 for p, t in zip(predictions, truths) if p == t)
    return hits / len(predictions)


def confusion_matrix(predictions, truths, n_classes: int | None = None) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    predictions = np.asarray(list(predictions), dtype=np.int64)
    truths = np.asarray(list(truths), dtype=np.int64)
    if predictions.shape != truths.shape:
        raise ValueError("length mismatch")
    if predictions.size == 0:
        raise ValueError("need at least one prediction")
    if n_classes is None:
        n_classes = int(max(predictions.max(), truths.max())) + 1
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, t in zip(predictions, truths):
        mat[t, p] += 1
    return mat


def _ngram_counts(tokens: list[str], k: int) -> Counter:
    return Counter(tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1))


def bleu_n(candidate, reference, n: int) -> float:
    """Single-reference BLEU-n: clipped k-gram precisions (k=1..n), geometric
    mean, times the brevity penalty.  Unsmoothed: any zero precision gives 0."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        cand_counts = _ngram_counts(cand, k)
        total = sum(cand_counts.values())
        if total == 0:
            return 0.0
        ref_counts = _ngram_counts(ref, k)
        clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    precision = math.exp(log_sum / n)
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return precision * bp


def rouge1(candidate, reference) -> tuple[float, float, float]:
    """Unigram overlap with clipping: (precision, recall, F1)."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return (0.0, 0.0, 0.0)
    overlap = sum((Counter(cand) & Counter(ref)).values())
    p = overlap / len(cand)
    r = overlap / len(ref)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return (p, r, f)


def _window_sums(a: np.ndarray, win: int) -> np.ndarray:
    """Sums over all valid win x win windows via an integral image."""
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[win:, win:] - c[:-win, win:] - c[win:, :-win] + c[:-win, :-win]


def ssim(img_a: np.ndarray, img_b: np.ndarray, win: int = 8,
         k1: float = 0.01, k2: float = 0.03, dynamic_range: float = 1.0) -> float:
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise ValueError("images must be HxW or HxWxC")
    h, w, _ = a.shape
    if h < win or w < win:
        raise ValueError(f"images smaller than the {win}x{win} window")
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    n = win * win
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = _window_sums(x, win) / n
        mu_y = _window_sums(y, win) / n
        var_x = _window_sums(x * x, win) / n - mu_x ** 2
        var_y = _window_sums(y * y, win) / n - mu_y ** 2
        cov = _window_sums(x * y, win) / n - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        vals.append(num / den)
    return float(np.mean(vals))


def fuse_prompt(label_text: str, caption_text: str) -> str:
    """Choose the caption when it shares a non-stopword token with the label."""
    if not label_text and not caption_text:
        raise ValueError("both label and caption are empty")
    label_tokens = set(tokenize(label_text)) - STOPWORDS
    caption_tokens = set(tokenize(caption_text)) - STOPWORDS
    if label_tokens & caption_tokens:
        return caption_text
    return label_text


def rate_accuracy_sweep(lambdas, run_point) -> list[tuple[float, float]]:
    """Train/evaluate one codec per lambda; returns (bps, accuracy) sorted by bps."""
    lambdas = list(lambdas)
    if len(lambdas) < 2:
        raise ValueError("a sweep needs at least two lambda values")
    points = [run_point(lam) for lam in lambdas]
    return sorted((float(b), float(a)) for b, a in points)


@dataclass
class MetricReport:
    bps_per_layer: dict[int, float] = field(default_factory=dict)
    bps_total: float = 0.0
    top1: float | None = None
    bleu: dict[int, float] = field(default_factory=dict)
    rouge1_prf: tuple[float, float, float] | None = None
    mean_ssim: float | None = None
    per_subject: dict[int, dict] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        doc = asdict(self)
        doc["bps_per_layer"] = {str(k): v for k, v in self.bps_per_layer.items()}
        doc["bleu"] = {str(k): v for k, v in self.bleu.items()}
        doc["per_subject"] = {str(k): v for k, v in self.per_subject.items()}
        return doc
