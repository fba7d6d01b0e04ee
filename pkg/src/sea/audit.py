"""Alignment diagnostics over a trained adapter.

For each visual token the audit finds the word whose LM-side text feature is
most cosine-similar ("recalled word"), scores the recall against planted
ground truth when available, and summarizes the similarity distribution.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, EmptyScoresError, MissingGroundTruthError
from .numerics import EmbeddingMatrix, cosine_similarity_raw


@dataclass
class TokenRecord:
    patch_index: int
    recalled_word_id: int
    score: float
    ground_truth_word_id: int | None = None
    image_id: int | None = None


@dataclass
class AuditReport:
    records: list
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    top1_accuracy: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "top1_accuracy": self.top1_accuracy,
            "histogram_counts": [int(c) for c in self.histogram_counts],
            "histogram_edges": [float(e) for e in self.histogram_edges],
            "tokens": [
                {
                    "image": r.image_id,
                    "patch": r.patch_index,
                    "recalled_word_id": r.recalled_word_id,
                    "score": float(f"{r.score:.9g}"),
                    "ground_truth_word_id": r.ground_truth_word_id,
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditReport":
        return cls(
            records=[
                TokenRecord(
                    patch_index=t["patch"],
                    recalled_word_id=t["recalled_word_id"],
                    score=t["score"],
                    ground_truth_word_id=t["ground_truth_word_id"],
                    image_id=t["image"],
                )
                for t in data["tokens"]
            ],
            histogram_counts=np.asarray(data["histogram_counts"], dtype=np.int64),
            histogram_edges=np.asarray(data["histogram_edges"], dtype=np.float64),
            top1_accuracy=data["top1_accuracy"],
            metadata=data["metadata"],
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "AuditReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["image", "patch", "recalled_word_id", "score", "ground_truth_word_id"])
            for r in self.records:
                writer.writerow(
                    [r.image_id, r.patch_index, r.recalled_word_id, f"{r.score:.9g}", r.ground_truth_word_id]
                )

    def save_histogram_txt(self, path) -> None:
        """Two-column gnuplot format: bin center, count."""
        lines = ["# bin_center count"]
        centers = 0.5 * (self.histogram_edges[:-1] + self.histogram_edges[1:])
        for center, count in zip(centers, self.histogram_counts):
            lines.append(f"{center:.6f} {int(count)}")
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def recall_words(visual_tokens, word_features) -> list:
    """Per token: (argmax-cosine word_id, score); ties go to the lower id."""
    x = visual_tokens.data if isinstance(visual_tokens, EmbeddingMatrix) else np.asarray(visual_tokens)
    w = word_features.data if isinstance(word_features, EmbeddingMatrix) else np.asarray(word_features)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionMismatchError(
            f"visual tokens {x.shape} and word features {w.shape} do not align"
        )
    sims = cosine_similarity_raw(x.astype(np.float64), w.astype(np.float64))
    best = np.argmax(sims, axis=1)  # first maximum = lowest word_id on ties
    return [(int(j), float(sims[i, j])) for i, j in enumerate(best)]


def recall_accuracy(records: list) -> float:
    """Fraction of tokens whose recalled word matches the ground truth."""
    if not records:
        raise MissingGroundTruthError("no records to score")
    hits = 0
    for r in records:
        if r.ground_truth_word_id is None:
            raise MissingGroundTruthError(f"patch {r.patch_index} has no ground truth")
        hits += int(r.recalled_word_id == r.ground_truth_word_id)
    return hits / len(records)


def similarity_histogram(scores, bin_count: int, value_range=(-1.0, 1.0)):
    """Uniform-bin histogram; out-of-range scores land in the edge bins."""
    if bin_count < 1:
        raise ValueError(f"bin_count must be >= 1, got {bin_count}")
    values = np.asarray(list(scores), dtype=np.float64)
    if values.size == 0:
        raise EmptyScoresError("no scores to bin")
    lo, hi = float(value_range[0]), float(value_range[1])
    clipped = np.clip(values, lo, np.nextafter(hi, lo))  # keep hi inside the last bin
    counts, edges = np.histogram(clipped, bins=bin_count, range=(lo, hi))
    return counts, edges


def audit_visual_tokens(
    visual_tokens,
    word_features,
    ground_truth=None,
    image_ids=None,
    bin_count: int = 40,
    metadata=None,
) -> AuditReport:
    """Assemble the full report for one batch of visual tokens."""
    recalled = recall_words(visual_tokens, word_features)
    records = []
    for i, (word_id, score) in enumerate(recalled):
        records.append(
            TokenRecord(
                patch_index=i if image_ids is None else image_ids[i][1],
                image_id=None if image_ids is None else image_ids[i][0],
                recalled_word_id=word_id,
                score=score,
                ground_truth_word_id=None if ground_truth is None else int(ground_truth[i]),
            )
        )
    counts, edges = similarity_histogram([r.score for r in records], bin_count)
    accuracy = recall_accuracy(records) if ground_truth is not None else None
    return AuditReport(
        records=records,
        histogram_counts=counts,
        histogram_edges=edges,
        top1_accuracy=accuracy,
        metadata=metadata or {},
    )
