"""Dense embedding-matrix primitives.

Rows are feature vectors stored in float32; all arithmetic accumulates in
float64 before results are rounded back to storage precision.  These are the
only matrix operations the rest of the pipeline builds on, so they are kept
pure and thread-safe: no function mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteInputError, ZeroRowError

ZERO_ROW_THRESHOLD = 1e-12


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-major float32 matrix of embedding vectors.

    `provenance` records whether the rows were generated in-process
    ("synthetic") or imported from an external feature dump ("exported").
    When `normalized` is set every row is guaranteed to have unit L2 norm
    to within 1e-5.
    """

    data: np.ndarray
    provenance: str = "synthetic"
    normalized: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        object.__setattr__(self, "data", arr)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"expected 2-D data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError(f"rows and cols must be >= 1, got {arr.shape}")
        if self.provenance not in ("synthetic", "exported"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.normalized:
            norms = np.linalg.norm(arr.astype(np.float64), axis=1)
            if not np.all(np.abs(norms - 1.0) <= 1e-5):
                worst = int(np.argmax(np.abs(norms - 1.0)))
                raise ZeroRowError(worst, float(norms[worst]))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def _rows64(m) -> np.ndarray:
    data = m.data if isinstance(m, EmbeddingMatrix) else np.asarray(m)
    return data.astype(np.float64)


def _row_norms(x64: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", x64, x64))
    for i, n in enumerate(norms):
        if n < ZERO_ROW_THRESHOLD:
            raise ZeroRowError(i, float(n))
    return norms


def row_l2_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Divide each row by its L2 norm; rejects rows with norm < 1e-12."""
    x = _rows64(m)
    norms = _row_norms(x)
    out = (x / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(out, provenance=m.provenance, normalized=True)


def cosine_similarity_matrix(a: EmbeddingMatrix, b: EmbeddingMatrix) -> EmbeddingMatrix:
    """Pairwise cosine similarities: entry (i, j) = cos(a_i, b_j)."""
    if a.cols != b.cols:
        raise DimensionMismatchError(f"a has {a.cols} cols, b has {b.cols}")
    sims = cosine_similarity_raw(_rows64(a), _rows64(b))
    return EmbeddingMatrix(sims.astype(np.float32), provenance=a.provenance)


def cosine_similarity_raw(a64: np.ndarray, b64: np.ndarray) -> np.ndarray:
    """Float64 cosine-similarity core shared with the loss and audit paths."""
    na = _row_norms(a64)
    nb = _row_norms(b64)
    return (a64 / na[:, None]) @ (b64 / nb[:, None]).T


def log_softmax_rows(s: EmbeddingMatrix) -> EmbeddingMatrix:
    """Row-wise log-softmax, stable under entries up to ~1e4 via max shift."""
    x = _rows64(s)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("log_softmax_rows requires finite entries")
    out = log_softmax_raw(x)
    return EmbeddingMatrix(out.astype(np.float32), provenance=s.provenance)


def log_softmax_raw(x64: np.ndarray) -> np.ndarray:
    shifted = x64 - x64.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def logsumexp_raw(x64: np.ndarray, axis: int) -> np.ndarray:
    m = x64.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x64 - m).sum(axis=axis, keepdims=True))).squeeze(axis)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """Gaussian-error gating (tanh form), smooth everywhere."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
