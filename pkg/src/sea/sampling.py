"""Contrastive-batch construction from labeled patch grids.

Pipeline per batch: pick one patch per k x k spatial window of every image,
drop patches with empty label sets, draw one label per surviving patch with
probability proportional to its similarity score, then keep a single patch
per label across the whole batch.  All randomness comes from streams derived
from (seed, image, patch, stage), so the result is a pure function of the
inputs and the seed no matter how the work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyLabelSetError
from .labeling import SemanticLabelSet
from .numerics import EmbeddingMatrix
from .rng import Rng


@dataclass(frozen=True)
class PatchGrid:
    """Spatial layout of one image's patch features, row-major."""

    image_id: int
    height: int
    width: int
    features: EmbeddingMatrix

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if self.features.rows != self.height * self.width:
            raise DimensionMismatchError(
                f"{self.features.rows} feature rows for a "
                f"{self.height}x{self.width} grid"
            )


@dataclass(frozen=True, eq=False)
class AlignmentPair:
    """One (visual patch, label) supervision pair."""

    image_id: int
    patch_index: int
    word_id: int
    feature: np.ndarray  # view into the grid's feature rows

    def __eq__(self, other):
        if not isinstance(other, AlignmentPair):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.patch_index == other.patch_index
            and self.word_id == other.word_id
            and np.array_equal(self.feature, other.feature)
        )

    def __hash__(self):
        return hash((self.image_id, self.patch_index, self.word_id))


def normalize_scores(label_set: SemanticLabelSet) -> np.ndarray:
    """Similarity scores rescaled to a sampling distribution (sum = 1)."""
    if len(label_set) == 0:
        raise EmptyLabelSetError(f"patch {label_set.patch_index} has no labels")
    scores = label_set.scores
    return scores / scores.sum()


def sample_label(label_set: SemanticLabelSet, rng: Rng) -> int:
    """Draw one word_id with probability proportional to its score."""
    probs = normalize_scores(label_set)
    return label_set.word_ids[rng.choice_p(probs)]


def window_subsample(grid: PatchGrid, k: int, rng: Rng) -> list:
    """One uniformly chosen patch index per k x k window, window-major order.

    Edge windows where k does not divide the grid are smaller but still
    contribute one sample, so border patches are never dropped wholesale.
    """
    if k < 1:
        raise ValueError(f"window side must be >= 1, got {k}")
    picks = []
    for wy in range(0, grid.height, k):
        for wx in range(0, grid.width, k):
            members = [
                y * grid.width + x
                for y in range(wy, min(wy + k, grid.height))
                for x in range(wx, min(wx + k, grid.width))
            ]
            if len(members) == 1:
                picks.append(members[0])
            else:
                window_rng = rng.stream("window", grid.image_id, wy, wx)
                picks.append(members[window_rng.integers(0, len(members))])
    return picks


def dedup_by_label(pairs: list, rng: Rng) -> list:
    """Keep one uniformly chosen pair per word_id, preserving relative order.

    Singleton labels consume no randomness, so the pass is idempotent.
    """
    holders = {}
    for pos, pair in enumerate(pairs):
        holders.setdefault(pair.word_id, []).append(pos)
    keep = []
    for word_id, positions in holders.items():
        if len(positions) == 1:
            keep.append(positions[0])
        else:
            pick_rng = rng.stream("dedup", word_id, len(positions))
            keep.append(positions[pick_rng.integers(0, len(positions))])
    return [pairs[pos] for pos in sorted(keep)]


def build_alignment_batch(grids: list, label_sets_per_grid: list, k: int, rng: Rng) -> list:
    """Full batch construction: window -> drop unlabeled -> draw -> dedup."""
    if len(grids) != len(label_sets_per_grid):
        raise DimensionMismatchError(
            f"{len(grids)} grids but {len(label_sets_per_grid)} label-set lists"
        )
    pairs = []
    for grid, label_sets in zip(grids, label_sets_per_grid):
        if len(label_sets) != grid.height * grid.width:
            raise DimensionMismatchError(
                f"image {grid.image_id}: {len(label_sets)} label sets for "
                f"{grid.height * grid.width} patches"
            )
        for patch_index in window_subsample(grid, k, rng):
            label_set = label_sets[patch_index]
            if len(label_set) == 0:
                continue
            draw_rng = rng.stream("label", grid.image_id, patch_index)
            word_id = sample_label(label_set, draw_rng)
            pairs.append(
                AlignmentPair(
                    image_id=grid.image_id,
                    patch_index=patch_index,
                    word_id=word_id,
                    feature=grid.features.data[patch_index],
                )
            )
    return dedup_by_label(pairs, rng)
