"""Per-patch semantic labels and word-list usage statistics.

Each visual patch gets the top-n words from a word list ranked by cosine
similarity against the patch feature, keeping only strictly positive scores.
A patch may end up with no labels at all; downstream sampling skips it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, WordIdOutOfRangeError
from .numerics import EmbeddingMatrix, cosine_similarity_raw

USAGE_HISTOGRAM_BINS = 20
USAGE_HISTOGRAM_RANGE = (0.0, 1.0)


@dataclass(frozen=True)
class WordList:
    """Ordered word inventory; entries are unique after lowercase+trim."""

    words: tuple

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        if len(self.words) < 1:
            raise ValueError("word list must contain at least one word")
        seen = set()
        for w in self.words:
            key = w.strip().lower()
            if not key:
                raise ValueError("word list entries must be non-empty")
            if key in seen:
                raise ValueError(f"duplicate word after normalization: {key!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def count(self) -> int:
        return len(self.words)

    def sha256(self) -> str:
        h = hashlib.sha256()
        for w in self.words:
            h.update(w.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    @classmethod
    def from_file(cls, path) -> "WordList":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(w.strip() for w in lines if w.strip()))

    def to_file(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.words), encoding="utf-8")


@dataclass(frozen=True)
class SemanticLabelSet:
    """Top-n labels of one patch: (word_id, score) with scores > 0, descending."""

    patch_index: int
    labels: tuple  # of (word_id, score)
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple((int(w), float(s)) for w, s in self.labels))
        if len(self.labels) > self.capacity:
            raise ValueError(f"{len(self.labels)} labels exceed capacity {self.capacity}")
        ids = [w for w, _ in self.labels]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate word_ids in label set")
        prev = None
        for w, s in self.labels:
            if s <= 0.0:
                raise ValueError(f"non-positive score {s} for word {w}")
            if prev is not None:
                pw, ps = prev
                if s > ps or (s == ps and w < pw):
                    raise ValueError("labels must be sorted by score desc, word_id asc")
            prev = (w, s)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def word_ids(self) -> list:
        return [w for w, _ in self.labels]

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.labels], dtype=np.float64)


def _top_n_candidates(scores_row: np.ndarray, n: int):
    """Indices of the n best scores, ties broken by ascending word id."""
    order = np.lexsort((np.arange(scores_row.shape[0]), -scores_row))
    return order[:n]


def extract_semantic_labels(
    patches: EmbeddingMatrix,
    word_embeddings: EmbeddingMatrix,
    n: int = 10,
    negate: bool = False,
) -> list:
    """Top-n positively scored labels for every patch row."""
    sets, _ = extract_with_candidates(patches, word_embeddings, n=n, negate=negate)
    return sets


def extract_with_candidates(
    patches: EmbeddingMatrix,
    word_embeddings: EmbeddingMatrix,
    n: int = 10,
    negate: bool = False,
):
    """Label sets plus the raw (pre-threshold) top-n candidate scores.

    The raw scores feed the usage report's below-zero fraction, which counts
    candidates the positivity threshold later discards.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if patches.cols != word_embeddings.cols:
        raise DimensionMismatchError(
            f"patches have {patches.cols} cols, words have {word_embeddings.cols}"
        )
    sims = cosine_similarity_raw(
        patches.data.astype(np.float64), word_embeddings.data.astype(np.float64)
    )
    np.clip(sims, -1.0, 1.0, out=sims)  # keep exact self-matches at 1.0
    if negate:
        sims = -sims
    sets = []
    raw_candidates = []
    for i in range(sims.shape[0]):
        row = sims[i]
        top = _top_n_candidates(row, n)
        raw_candidates.extend(float(row[j]) for j in top)
        kept = [(int(j), float(row[j])) for j in top if row[j] > 0.0]
        sets.append(SemanticLabelSet(patch_index=i, labels=tuple(kept), capacity=n))
    return sets, raw_candidates


@dataclass
class UsageReport:
    """Word-list statistics over a labeled corpus."""

    per_word_mean_score: np.ndarray
    utilization_rate: float
    below_zero_fraction: float
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray

    def to_dict(self) -> dict:
        return {
            "utilization_rate": self.utilization_rate,
            "below_zero_fraction": self.below_zero_fraction,
            "per_word_mean_score": [round_score(s) for s in self.per_word_mean_score],
            "histogram_counts": [int(c) for c in self.histogram_counts],
            "histogram_edges": [float(e) for e in self.histogram_edges],
        }


def vocabulary_usage_report(
    label_sets: list, raw_candidate_scores: list, word_list: WordList
) -> UsageReport:
    """Utilization, per-word mean selected score, and score distribution."""
    q = word_list.count
    totals = np.zeros(q, dtype=np.float64)
    counts = np.zeros(q, dtype=np.int64)
    selected_scores = []
    for s in label_sets:
        for w, score in s.labels:
            if w < 0 or w >= q:
                raise WordIdOutOfRangeError(f"word id {w} outside [0, {q})")
            totals[w] += score
            counts[w] += 1
            selected_scores.append(score)
    mean = np.where(counts > 0, totals / np.maximum(counts, 1), 0.0)
    utilization = float(np.count_nonzero(counts)) / q
    raw = np.asarray(raw_candidate_scores, dtype=np.float64)
    below_zero = float(np.mean(raw < 0.0)) if raw.size else 0.0
    hist, edges = np.histogram(
        np.asarray(selected_scores, dtype=np.float64),
        bins=USAGE_HISTOGRAM_BINS,
        range=USAGE_HISTOGRAM_RANGE,
    )
    return UsageReport(
        per_word_mean_score=mean,
        utilization_rate=utilization,
        below_zero_fraction=below_zero,
        histogram_counts=hist,
        histogram_edges=edges,
    )


def round_score(score: float) -> float:
    """Scores travel through JSON with 9 significant digits (exact for f32)."""
    return float(f"{float(score):.9g}")


def save_label_cache(path, label_sets: list) -> None:
    """JSON-lines cache: one {"patch": i, "labels": [[word_id, score], ...]} per patch."""
    lines = []
    for s in label_sets:
        record = {"patch": s.patch_index, "labels": [[w, round_score(x)] for w, x in s.labels]}
        lines.append(json.dumps(record, separators=(",", ":")))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_label_cache(path, capacity: int) -> list:
    sets = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        record = json.loads(line)
        sets.append(
            SemanticLabelSet(
                patch_index=int(record["patch"]),
                labels=tuple((int(w), float(s)) for w, s in record["labels"]),
                capacity=capacity,
            )
        )
    return sets
