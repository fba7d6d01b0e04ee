"""Synthetic corpus with planted ground truth.

A seeded linear map carries each word's LM-side text feature into the vision
feature space; every patch is that mapped feature plus Gaussian noise, so a
linear adapter can provably undo the construction and recall accuracy has a
known ceiling.  Captions list each image's ground-truth words in order of
first appearance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .labeling import WordList
from .numerics import EmbeddingMatrix
from .rng import Rng
from .sampling import PatchGrid
from .tensorfile import load_tensors, save_tensors
from .toylm import BOS_ID, EmbeddingTable, TokenizerSpec, word_feature_matrix

WORDS_PER_IMAGE = 6


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    vocab_size: int
    d_v: int
    d_llm: int
    grid_height: int
    grid_width: int
    images: int
    noise_sigma: float
    seed: int

    def __post_init__(self):
        for name in ("vocab_size", "d_v", "d_llm", "grid_height", "grid_width", "images"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class Corpus:
    spec: SyntheticCorpusSpec
    word_list: WordList
    tokenizer: TokenizerSpec
    table: EmbeddingTable
    word_label_features: EmbeddingMatrix  # q x d_v, the labeling-side features
    true_map: np.ndarray  # d_v x d_llm
    grids: list
    ground_truth: list  # per image: word id per patch
    captions: list  # per image: token ids, BOS first

    @property
    def lm_word_features(self) -> np.ndarray:
        return word_feature_matrix(self.word_list.words, self.tokenizer, self.table)


def _synth_words(q: int, rng: Rng) -> WordList:
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    prefix_len = 1
    while 26**prefix_len < q:
        prefix_len += 1
    prefix_len = max(prefix_len, 2)
    words = []
    for i in range(q):
        digits = []
        v = i
        for _ in range(prefix_len):
            digits.append(alphabet[v % 26])
            v //= 26
        prefix = "".join(reversed(digits))  # unique per word
        suffix_len = 1 + (i % 4)
        suffix_ids = rng.stream("suffix", i).integers(0, 26, n=suffix_len)
        words.append(prefix + "".join(alphabet[j] for j in suffix_ids))
    return WordList(tuple(words))


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> Corpus:
    rng = Rng(spec.seed)
    word_list = _synth_words(spec.vocab_size, rng.stream("words"))
    tokenizer = TokenizerSpec()
    table = EmbeddingTable.initialize(tokenizer.vocab_size, spec.d_llm, rng.stream("table"))
    lm_features = word_feature_matrix(word_list.words, tokenizer, table)  # q x d_llm

    true_map = rng.stream("true_map").normal((spec.d_v, spec.d_llm)) / np.sqrt(spec.d_llm)
    label_features = lm_features @ true_map.T  # q x d_v
    word_label_features = EmbeddingMatrix(label_features.astype(np.float32))

    patches_per_image = spec.grid_height * spec.grid_width
    pool_size = min(spec.vocab_size, WORDS_PER_IMAGE)
    grids, ground_truth, captions = [], [], []
    for img in range(spec.images):
        pool_order = np.argsort(rng.stream("pool", img).uniform(spec.vocab_size), kind="stable")
        pool = pool_order[:pool_size]
        picks = rng.stream("gt", img).integers(0, pool_size, n=patches_per_image)
        gt = pool[picks]
        noise = rng.stream("noise", img).normal((patches_per_image, spec.d_v))
        features = label_features[gt] + spec.noise_sigma * noise
        grids.append(
            PatchGrid(
                image_id=img,
                height=spec.grid_height,
                width=spec.grid_width,
                features=EmbeddingMatrix(features.astype(np.float32)),
            )
        )
        ground_truth.append([int(w) for w in gt])
        caption = [BOS_ID]
        for w in dict.fromkeys(int(w) for w in gt):  # first-appearance order
            caption.extend(tokenizer.tokenize(word_list.words[w]))
        captions.append(caption)
    return Corpus(
        spec=spec,
        word_list=word_list,
        tokenizer=tokenizer,
        table=table,
        word_label_features=word_label_features,
        true_map=true_map,
        grids=grids,
        ground_truth=ground_truth,
        captions=captions,
    )


def save_corpus(corpus: Corpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.word_list.to_file(out / "words.txt")
    patch_features = np.stack([g.features.data for g in corpus.grids])
    save_tensors(
        out / "tensors.sea",
        {
            "patch_features": patch_features,
            "word_label_features": corpus.word_label_features.data,
            "embedding_table": corpus.table.matrix.data,
            "true_map": corpus.true_map,
        },
    )
    meta = {
        "spec": asdict(corpus.spec),
        "tokenizer": corpus.tokenizer.to_dict(),
        "word_list_sha256": corpus.word_list.sha256(),
        "images": [
            {"id": g.image_id, "ground_truth": gt, "caption_tokens": cap}
            for g, gt, cap in zip(corpus.grids, corpus.ground_truth, corpus.captions)
        ],
    }
    (out / "corpus.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_corpus(corpus_dir) -> Corpus:
    root = Path(corpus_dir)
    meta = json.loads((root / "corpus.json").read_text(encoding="utf-8"))
    spec = SyntheticCorpusSpec(**meta["spec"])
    word_list = WordList.from_file(root / "words.txt")
    if word_list.sha256() != meta["word_list_sha256"]:
        raise ValueError(f"{root}: word list drifted from the recorded hash")
    tokenizer = TokenizerSpec(**meta["tokenizer"])
    tensors = load_tensors(root / "tensors.sea")
    table = EmbeddingTable(EmbeddingMatrix(tensors["embedding_table"], provenance="exported"))
    grids, ground_truth, captions = [], [], []
    for record in meta["images"]:
        features = tensors["patch_features"][record["id"]]
        grids.append(
            PatchGrid(
                image_id=record["id"],
                height=spec.grid_height,
                width=spec.grid_width,
                features=EmbeddingMatrix(features, provenance="exported"),
            )
        )
        ground_truth.append([int(w) for w in record["ground_truth"]])
        captions.append([int(t) for t in record["caption_tokens"]])
    return Corpus(
        spec=spec,
        word_list=word_list,
        tokenizer=tokenizer,
        table=table,
        word_label_features=EmbeddingMatrix(tensors["word_label_features"], provenance="exported"),
        true_map=tensors["true_map"],
        grids=grids,
        ground_truth=ground_truth,
        captions=captions,
    )
