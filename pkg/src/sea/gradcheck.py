"""Finite-difference verification of every hand-written gradient path."""

from __future__ import annotations

import numpy as np

from .adapter import AdapterParams, adapter_apply, adapter_backward
from .losses import (
    TemperatureParam,
    alignment_loss,
    finite_difference_check,
    generation_loss,
)
from .rng import Rng
from .toylm import EmbeddingTable, ModelInput, ToyLm, ToyLmWeights

TOL_DEFAULT = 1e-4
TOL_LM = 1e-3


def check_alignment(seed: int, n: int = 6, dim: int = 8) -> dict:
    rng = Rng(seed).stream("gc-align")
    x = rng.normal((n, dim)) + 0.1
    t = rng.normal((n, dim)) + 0.1
    log_tau = rng.uniform() - 0.5
    bundle = alignment_loss(x, t, TemperatureParam(log_tau))

    err_x = finite_difference_check(
        lambda v: alignment_loss(v, t, TemperatureParam(log_tau)).value,
        x,
        bundle.gradients["visual_tokens"],
    )
    err_tau = finite_difference_check(
        lambda v: alignment_loss(x, t, TemperatureParam(float(v[0]))).value,
        np.array([log_tau]),
        np.array([bundle.gradients["log_tau"]]),
    )
    return {"alignment.visual_tokens": err_x, "alignment.log_tau": err_tau}


def check_generation(seed: int, positions: int = 5, vocab: int = 7) -> dict:
    rng = Rng(seed).stream("gc-gen")
    logits = rng.normal((positions, vocab))
    targets = rng.integers(0, vocab, n=positions)
    mask = rng.uniform(positions) < 0.7
    if not mask.any():
        mask[0] = True
    bundle = generation_loss(logits, targets, mask)
    err = finite_difference_check(
        lambda z: generation_loss(z, targets, mask).value,
        logits,
        bundle.gradients["logits"],
    )
    return {"generation.logits": err}


def check_adapter(seed: int, arch: str = "mlp2", d_v: int = 6, d_h: int = 5, d_llm: int = 4) -> dict:
    rng = Rng(seed).stream("gc-adapter", arch)
    params = AdapterParams.initialize(arch, d_v, d_llm, Rng(seed + 1), d_h=d_h)
    patches = rng.normal((3, d_v))
    upstream = rng.normal((3, d_llm))
    grads, input_grads = adapter_backward(params, patches, upstream)

    def loss_with(tensors: dict, x: np.ndarray) -> float:
        out, _ = adapter_apply(params.replace_tensors(tensors), x)
        return float((out * upstream).sum())

    errors = {}
    for name in grads:
        def fn(v, _name=name):
            tensors = {k: np.array(t) for k, t in params.tensors().items()}
            tensors[_name] = v
            return loss_with(tensors, patches)

        errors[f"adapter_{arch}.{name}"] = finite_difference_check(
            fn, params.tensors()[name], grads[name]
        )
    errors[f"adapter_{arch}.inputs"] = finite_difference_check(
        lambda v: loss_with(params.tensors(), v), patches, input_grads
    )
    return errors


def check_toylm(seed: int, length: int = 4, d_llm: int = 8) -> dict:
    rng = Rng(seed).stream("gc-lm")
    vocab = 12
    table = EmbeddingTable.initialize(vocab, d_llm, Rng(seed + 2))
    lm = ToyLm(ToyLmWeights.initialize(d_llm, Rng(seed + 3)), table)
    boundary = length - 2
    text_ids = tuple(int(i) for i in rng.integers(2, vocab, n=2))
    vectors = rng.normal((length, d_llm))
    targets = rng.integers(0, vocab, n=length)
    mask = np.zeros(length, dtype=bool)
    mask[boundary:] = True

    def build(v):
        return ModelInput(vectors=v, boundary=boundary, text_token_ids=text_ids)

    logits, cache = lm.forward(build(vectors))
    bundle = generation_loss(logits, targets, mask)
    dinputs = lm.backward_to_input(cache, bundle.gradients["logits"])
    err = finite_difference_check(
        lambda v: generation_loss(lm.forward(build(v))[0], targets, mask).value,
        vectors,
        dinputs,
    )
    return {"toylm.inputs": err}


def run_suite(seed: int = 0, instances: int = 20) -> dict:
    """Worst finite-difference error per gradient path over seeded instances."""
    worst: dict = {}
    for i in range(instances):
        for result in (
            check_alignment(seed + i),
            check_generation(seed + i),
            check_adapter(seed + i, "mlp2"),
            check_adapter(seed + i, "linear"),
            check_toylm(seed + i),
        ):
            for key, err in result.items():
                worst[key] = max(worst.get(key, 0.0), err)
    failures = [
        key
        for key, err in worst.items()
        if err >= (TOL_LM if key.startswith("toylm") else TOL_DEFAULT)
    ]
    return {"errors": worst, "failures": failures, "passed": not failures}
