"""Frozen toy language-model stack: tokenizer, embedding layer, causal block.

The tokenizer splits lowercased words into fixed-length character chunks, so
multi-piece words exist by construction and a word's text feature is the mean
of its piece embeddings.  The language model is a single pre-norm transformer
block with a tied output head; it is initialized from a seed, never trained,
and exposes an exact backward pass to its *input vectors* so the generation
loss can reach the adapter through it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, TokenIdOutOfRangeError, UnknownPieceError
from .numerics import EmbeddingMatrix, gelu, gelu_grad
from .rng import Rng

PAD_ID = 0
BOS_ID = 1
SPECIAL_TOKENS = ("<pad>", "<bos>")

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class TokenizerSpec:
    """Total, deterministic chunk tokenizer over a fixed alphabet.

    The piece inventory holds every string over the alphabet with length
    1..chunk_length, so any in-alphabet word tokenizes; the final piece of a
    word is simply shorter when the length does not divide evenly.
    """

    alphabet: str = DEFAULT_ALPHABET
    chunk_length: int = 2
    unknown_policy: str = "strict"  # or "skip": drop unknown pieces

    def __post_init__(self):
        if self.chunk_length < 1:
            raise ValueError("chunk_length must be >= 1")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet must not repeat characters")
        if self.unknown_policy not in ("strict", "skip"):
            raise ValueError(f"unknown_policy must be strict|skip, got {self.unknown_policy!r}")
        pieces = list(SPECIAL_TOKENS)
        for length in range(1, self.chunk_length + 1):
            pieces.extend(_enumerate_pieces(self.alphabet, length))
        ids = {piece: i for i, piece in enumerate(pieces)}
        object.__setattr__(self, "_pieces", tuple(pieces))
        object.__setattr__(self, "_ids", ids)

    @property
    def vocab_size(self) -> int:
        return len(self._pieces)

    @property
    def pieces(self) -> tuple:
        return self._pieces

    def tokenize(self, word: str) -> list:
        """Chunk a word into piece ids; round-trip concatenation is exact."""
        if not word:
            raise ValueError("cannot tokenize an empty word")
        word = word.lower()
        ids = []
        for start in range(0, len(word), self.chunk_length):
            piece = word[start : start + self.chunk_length]
            piece_id = self._ids.get(piece)
            if piece_id is None:
                if self.unknown_policy == "skip":
                    continue
                raise UnknownPieceError(word, piece)
            ids.append(piece_id)
        if not ids:
            raise UnknownPieceError(word, word[: self.chunk_length])
        return ids

    def pieces_of(self, ids) -> list:
        return [self._pieces[i] for i in ids]

    def to_dict(self) -> dict:
        return {
            "alphabet": self.alphabet,
            "chunk_length": self.chunk_length,
            "unknown_policy": self.unknown_policy,
        }


def _enumerate_pieces(alphabet: str, length: int):
    if length == 1:
        yield from alphabet
        return
    for prefix in _enumerate_pieces(alphabet, length - 1):
        for ch in alphabet:
            yield prefix + ch


@dataclass(frozen=True)
class EmbeddingTable:
    """vocab_size x d_llm token embeddings; frozen during pre-training."""

    matrix: EmbeddingMatrix
    frozen: bool = True

    def __post_init__(self):
        self.matrix.data.flags.writeable = False

    @property
    def vocab_size(self) -> int:
        return self.matrix.rows

    @property
    def dim(self) -> int:
        return self.matrix.cols

    def rows64(self) -> np.ndarray:
        return self.matrix.data.astype(np.float64)

    @classmethod
    def initialize(cls, vocab_size: int, d_llm: int, rng: Rng) -> "EmbeddingTable":
        data = rng.stream("embedding").normal((vocab_size, d_llm)) / np.sqrt(d_llm)
        return cls(EmbeddingMatrix(data.astype(np.float32)))


def embed_tokens(ids, table: EmbeddingTable) -> EmbeddingMatrix:
    """Embedding rows for a sequence of token ids."""
    rows = _lookup_rows(ids, table)
    return EmbeddingMatrix(rows.astype(np.float32))


def _lookup_rows(ids, table: EmbeddingTable) -> np.ndarray:
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.vocab_size):
        raise TokenIdOutOfRangeError(f"token ids must lie in [0, {table.vocab_size})")
    return table.rows64()[idx]


def label_text_feature(word: str, tokenizer: TokenizerSpec, table: EmbeddingTable) -> np.ndarray:
    """Mean of the word's piece embeddings (specials never contribute)."""
    ids = tokenizer.tokenize(word)
    return _lookup_rows(ids, table).mean(axis=0)


def word_feature_matrix(words, tokenizer: TokenizerSpec, table: EmbeddingTable) -> np.ndarray:
    """Stacked label_text_feature rows for a word sequence, float64."""
    return np.stack([label_text_feature(w, tokenizer, table) for w in words])


@dataclass(frozen=True)
class ModelInput:
    """Visual tokens followed by text-token embeddings, with the boundary."""

    vectors: np.ndarray  # (length, d_llm) float64
    boundary: int  # number of leading visual tokens
    text_token_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=np.float64))
        if self.vectors.ndim != 2:
            raise DimensionMismatchError("model input vectors must be 2-D")
        if self.boundary + len(self.text_token_ids) != self.vectors.shape[0]:
            raise DimensionMismatchError("boundary + text length must equal sequence length")

    @property
    def length(self) -> int:
        return self.vectors.shape[0]


def build_model_input(visual_tokens, text_token_ids, table: EmbeddingTable) -> ModelInput:
    """Concatenate visual tokens and embedded text ids in generation order."""
    if isinstance(visual_tokens, EmbeddingMatrix):
        visual = visual_tokens.data.astype(np.float64)
    else:
        visual = np.asarray(visual_tokens, dtype=np.float64)
        if visual.size == 0:
            visual = visual.reshape(0, table.dim)
    if visual.ndim != 2 or visual.shape[1] != table.dim:
        raise DimensionMismatchError(
            f"visual tokens must be (m, {table.dim}), got {visual.shape}"
        )
    text = _lookup_rows(text_token_ids, table)
    vectors = np.concatenate([visual, text.reshape(-1, table.dim)], axis=0)
    if vectors.shape[0] < 1:
        raise DimensionMismatchError("model input must contain at least one vector")
    return ModelInput(vectors=vectors, boundary=visual.shape[0], text_token_ids=tuple(text_token_ids))


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    positions = np.arange(length, dtype=np.float64)[:, None]
    half = np.arange(0, dim, 2, dtype=np.float64)
    angles = positions / np.power(10000.0, half / dim)[None, :]
    pe = np.zeros((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim // 2])
    return pe


def _layer_norm(x: np.ndarray):
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    sigma = np.sqrt(centered.var(axis=1, keepdims=True) + 1e-6)
    return centered / sigma, sigma


def _layer_norm_backward(y: np.ndarray, sigma: np.ndarray, dy: np.ndarray) -> np.ndarray:
    mean_dy = dy.mean(axis=1, keepdims=True)
    mean_dy_y = (dy * y).mean(axis=1, keepdims=True)
    return (dy - mean_dy - y * mean_dy_y) / sigma


@dataclass(frozen=True)
class ToyLmWeights:
    """Seeded, frozen parameters of the single transformer block."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2"):
            getattr(self, name).flags.writeable = False

    @classmethod
    def initialize(cls, d_llm: int, rng: Rng, ff_multiple: int = 2) -> "ToyLmWeights":
        d_ff = ff_multiple * d_llm
        scale = 1.0 / np.sqrt(d_llm)

        def draw(name, shape, s):
            return rng.stream("lm", name).normal(shape) * s

        return cls(
            wq=draw("wq", (d_llm, d_llm), scale),
            wk=draw("wk", (d_llm, d_llm), scale),
            wv=draw("wv", (d_llm, d_llm), scale),
            wo=draw("wo", (d_llm, d_llm), scale),
            w1=draw("w1", (d_llm, d_ff), scale),
            b1=np.zeros(d_ff),
            w2=draw("w2", (d_ff, d_llm), 1.0 / np.sqrt(d_ff)),
            b2=np.zeros(d_llm),
        )

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2")}


class ToyLm:
    """Pre-norm causal block with tied output head over the embedding table."""

    def __init__(self, weights: ToyLmWeights, table: EmbeddingTable):
        if weights.wq.shape[0] != table.dim:
            raise DimensionMismatchError("weight width must match embedding dim")
        self.weights = weights
        self.table = table
        self._embed64 = table.rows64()

    @property
    def dim(self) -> int:
        return self.table.dim

    @property
    def vocab_size(self) -> int:
        return self.table.vocab_size

    def forward(self, model_input: ModelInput):
        """Logits per position plus the cache needed for the input backward."""
        w = self.weights
        if model_input.vectors.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"input dim {model_input.vectors.shape[1]} != model dim {self.dim}"
            )
        length = model_input.length
        x = model_input.vectors + sinusoidal_positions(length, self.dim)

        n1, sig1 = _layer_norm(x)
        q, k, v = n1 @ w.wq, n1 @ w.wk, n1 @ w.wv
        scores = (q @ k.T) / np.sqrt(self.dim)
        mask = np.triu(np.ones((length, length), dtype=bool), k=1)
        scores[mask] = -np.inf
        scores -= scores.max(axis=1, keepdims=True)
        attn = np.exp(scores)
        attn /= attn.sum(axis=1, keepdims=True)
        h = x + (attn @ v) @ w.wo

        n2, sig2 = _layer_norm(h)
        pre = n2 @ w.w1 + w.b1
        h2 = h + gelu(pre) @ w.w2 + w.b2

        n3, sig3 = _layer_norm(h2)
        logits = n3 @ self._embed64.T

        cache = {
            "n1": n1, "sig1": sig1, "q": q, "k": k, "v": v, "attn": attn,
            "n2": n2, "sig2": sig2, "pre": pre, "n3": n3, "sig3": sig3,
        }
        return logits, cache

    def backward_to_input(self, cache: dict, dlogits: np.ndarray) -> np.ndarray:
        """Exact gradient of sum(dlogits * logits) w.r.t. the input vectors."""
        w = self.weights
        dn3 = dlogits @ self._embed64
        dh2 = _layer_norm_backward(cache["n3"], cache["sig3"], dn3)

        dgelu_out = dh2 @ w.w2.T
        dpre = dgelu_out * gelu_grad(cache["pre"])
        dn2 = dpre @ w.w1.T
        dh = dh2 + _layer_norm_backward(cache["n2"], cache["sig2"], dn2)

        dattn_v = dh @ w.wo.T
        attn = cache["attn"]
        dattn = dattn_v @ cache["v"].T
        dv = attn.T @ dattn_v
        dscores = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
        dscores /= np.sqrt(self.dim)
        dq = dscores @ cache["k"]
        dk = dscores.T @ cache["q"]
        dn1 = dq @ w.wq.T + dk @ w.wk.T + dv @ w.wv.T
        dx = dh + _layer_norm_backward(cache["n1"], cache["sig1"], dn1)
        return dx


def lm_forward(lm: ToyLm, model_input: ModelInput) -> np.ndarray:
    """Forward-only convenience wrapper returning the logits."""
    logits, _ = lm.forward(model_input)
    return logits
