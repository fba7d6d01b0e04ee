"""Trainable projector from vision-encoder features into the LM space.

Two architectures: a bare linear map for ablations and the default two-layer
perceptron with gelu gating.  Forward and backward are straight-line numpy;
gradient correctness is pinned by finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .numerics import EmbeddingMatrix, gelu, gelu_grad
from .rng import Rng

ARCHITECTURES = ("linear", "mlp2")


@dataclass
class AdapterParams:
    """Projector parameters; `w2`/`b2` are None for the linear architecture."""

    arch: str
    w1: np.ndarray  # d_v x d_h (linear: d_v x d_llm)
    b1: np.ndarray
    w2: np.ndarray | None = None  # d_h x d_llm
    b2: np.ndarray | None = None

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown adapter architecture {self.arch!r}")
        if self.arch == "mlp2" and (self.w2 is None or self.b2 is None):
            raise ValueError("mlp2 adapter requires w2 and b2")
        for t in self.tensors().values():
            if not np.all(np.isfinite(t)):
                raise ValueError("adapter parameters must be finite")

    @property
    def d_v(self) -> int:
        return self.w1.shape[0]

    @property
    def d_llm(self) -> int:
        return self.w1.shape[1] if self.arch == "linear" else self.w2.shape[1]

    def tensors(self) -> dict:
        out = {"w1": self.w1, "b1": self.b1}
        if self.arch == "mlp2":
            out["w2"] = self.w2
            out["b2"] = self.b2
        return out

    def replace_tensors(self, tensors: dict) -> "AdapterParams":
        return AdapterParams(
            arch=self.arch,
            w1=tensors["w1"],
            b1=tensors["b1"],
            w2=tensors.get("w2"),
            b2=tensors.get("b2"),
        )

    @classmethod
    def initialize(
        cls, arch: str, d_v: int, d_llm: int, rng: Rng, d_h: int | None = None
    ) -> "AdapterParams":
        """Scaled-uniform fan-in init from per-tensor streams of the seed."""
        if d_h is None:
            d_h = d_llm
        def draw(name, fan_in, shape):
            bound = 1.0 / np.sqrt(fan_in)
            return (rng.stream("adapter", name).uniform(int(np.prod(shape))) * 2.0 - 1.0).reshape(shape) * bound

        if arch == "linear":
            return cls(arch=arch, w1=draw("w1", d_v, (d_v, d_llm)), b1=np.zeros(d_llm))
        return cls(
            arch=arch,
            w1=draw("w1", d_v, (d_v, d_h)),
            b1=np.zeros(d_h),
            w2=draw("w2", d_h, (d_h, d_llm)),
            b2=np.zeros(d_llm),
        )


def _rows64(patches) -> np.ndarray:
    data = patches.data if isinstance(patches, EmbeddingMatrix) else np.asarray(patches)
    if data.ndim != 2:
        raise DimensionMismatchError("patches must be 2-D")
    return data.astype(np.float64)


def adapter_apply(params: AdapterParams, patches) -> tuple:
    """Float64 forward returning (visual_tokens, cache) for the training path."""
    x = _rows64(patches)
    if x.shape[1] != params.d_v:
        raise DimensionMismatchError(f"patches have {x.shape[1]} cols, adapter wants {params.d_v}")
    if params.arch == "linear":
        return x @ params.w1 + params.b1, {"x": x}
    pre = x @ params.w1 + params.b1
    out = gelu(pre) @ params.w2 + params.b2
    return out, {"x": x, "pre": pre}


def adapter_forward(params: AdapterParams, patches: EmbeddingMatrix) -> EmbeddingMatrix:
    """Projected visual tokens as a float32 embedding matrix."""
    out, _ = adapter_apply(params, patches)
    return EmbeddingMatrix(out.astype(np.float32), provenance=_provenance(patches))


def _provenance(patches) -> str:
    return patches.provenance if isinstance(patches, EmbeddingMatrix) else "synthetic"


def adapter_backward(params: AdapterParams, patches, upstream: np.ndarray):
    """Exact gradients: (dict of parameter grads, input grads)."""
    out, cache = adapter_apply(params, patches)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != out.shape:
        raise DimensionMismatchError(f"upstream shape {g.shape} != output shape {out.shape}")
    return adapter_backward_cached(params, cache, g)


def adapter_backward_cached(params: AdapterParams, cache: dict, upstream: np.ndarray):
    x = cache["x"]
    if params.arch == "linear":
        grads = {"w1": x.T @ upstream, "b1": upstream.sum(axis=0)}
        return grads, upstream @ params.w1.T
    pre = cache["pre"]
    hidden = gelu(pre)
    grads = {"w2": hidden.T @ upstream, "b2": upstream.sum(axis=0)}
    dhidden = upstream @ params.w2.T
    dpre = dhidden * gelu_grad(pre)
    grads["w1"] = x.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    return grads, dpre @ params.w1.T
