"""Stage-1 pre-training loop: adapter + log-temperature under AdamW.

Only the adapter parameters and the contrastive log-temperature receive
updates; the language model, its embedding table and the patch features stay
byte-identical for the whole run.  Every random draw is keyed by (seed, step,
purpose), so a run resumed from any checkpoint continues exactly as the
uninterrupted run would have.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapter import AdapterParams, adapter_apply, adapter_backward_cached
from .errors import (
    ConfigError,
    EmptyDatasetError,
    NonFiniteGradientError,
    StepOutOfRangeError,
)
from .labeling import extract_semantic_labels
from .losses import LossBundle, TemperatureParam, alignment_loss, combined_loss, generation_loss
from .rng import Rng
from .sampling import build_alignment_batch
from .tensorfile import load_tensors, save_tensors
from .toylm import ToyLm, ToyLmWeights, build_model_input, word_feature_matrix


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    lambda_weight: float = 1.0
    top_n: int = 10
    window_k: int = 2
    batch_size: int = 8
    total_steps: int = 1000
    warmup_steps: int = 50
    base_lr: float = 1e-2
    weight_decay: float = 0.0
    adapter_arch: str = "mlp2"
    negate: bool = False
    d_h: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        if not 0 <= self.warmup_steps <= max(self.total_steps, 0):
            raise ConfigError("warmup_steps must lie in [0, total_steps]")
        if self.base_lr <= 0.0:
            raise ConfigError("base_lr must be > 0")
        if self.lambda_weight < 0.0:
            raise ConfigError("lambda_weight must be >= 0")
        if self.top_n < 1 or self.window_k < 1 or self.batch_size < 1:
            raise ConfigError("top_n, window_k and batch_size must be >= 1")
        if self.adapter_arch not in ("linear", "mlp2"):
            raise ConfigError(f"unknown adapter architecture {self.adapter_arch!r}")


@dataclass
class TrainState:
    params: dict  # adapter tensors plus "log_tau", all float64
    m: dict
    v: dict
    step: int
    arch: str

    def adapter_params(self) -> AdapterParams:
        tensors = {k: v for k, v in self.params.items() if k != "log_tau"}
        return AdapterParams(
            arch=self.arch,
            w1=tensors["w1"],
            b1=tensors["b1"],
            w2=tensors.get("w2"),
            b2=tensors.get("b2"),
        )

    def temperature(self) -> TemperatureParam:
        return TemperatureParam(log_tau=float(self.params["log_tau"]))


def init_train_state(config: TrainConfig, d_v: int, d_llm: int) -> TrainState:
    adapter = AdapterParams.initialize(
        config.adapter_arch, d_v, d_llm, Rng(config.seed), d_h=config.d_h
    )
    params = {k: v.astype(np.float64) for k, v in adapter.tensors().items()}
    params["log_tau"] = np.float64(0.0)
    zeros = {k: np.zeros_like(np.asarray(v)) for k, v in params.items()}
    return TrainState(
        params=params,
        m=zeros,
        v={k: np.copy(z) for k, z in zeros.items()},
        step=0,
        arch=config.adapter_arch,
    )


def cosine_lr(step: int, config: TrainConfig) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if step < 0 or step > config.total_steps:
        raise StepOutOfRangeError(f"step {step} outside [0, {config.total_steps}]")
    if step < config.warmup_steps:
        return config.base_lr * step / config.warmup_steps
    span = config.total_steps - config.warmup_steps
    progress = (step - config.warmup_steps) / span if span > 0 else 1.0
    return float(0.5 * config.base_lr * (1.0 + np.cos(np.pi * progress)))


def adamw_update(state: TrainState, grads: dict, lr: float, config: TrainConfig) -> TrainState:
    """One decoupled-weight-decay Adam step; never mutates on bad gradients."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"gradient {name!r} is not finite at step {state.step}")
    missing = set(state.params) - set(grads)
    if missing:
        raise NonFiniteGradientError(f"gradients missing for {sorted(missing)}")
    t = state.step + 1
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in state.params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)
        p_new = p * (1.0 - lr * config.weight_decay) - lr * update
        new_params[name] = np.float64(p_new) if np.isscalar(p) or np.ndim(p) == 0 else p_new
        new_m[name] = m
        new_v[name] = v
    return TrainState(params=new_params, m=new_m, v=new_v, step=t, arch=state.arch)


@dataclass
class FrozenStack:
    """Everything stage 1 must not touch: tokenizer, embeddings, LM, features."""

    lm: ToyLm
    lm_word_features: np.ndarray  # q x d_llm float64, targets of the alignment loss
    label_sets: dict  # image_id -> list of SemanticLabelSet

    def content_hash(self, grids) -> str:
        h = hashlib.sha256()
        h.update(self.lm.table.matrix.data.tobytes())
        for t in self.lm.weights.tensors().values():
            h.update(np.ascontiguousarray(t).tobytes())
        for g in grids:
            h.update(g.features.data.tobytes())
        return h.hexdigest()


def build_frozen_stack(corpus, config: TrainConfig) -> FrozenStack:
    """Derive the frozen LM and cache per-image label sets once, up front."""
    weights = ToyLmWeights.initialize(corpus.spec.d_llm, Rng(config.seed))
    lm = ToyLm(weights, corpus.table)
    features = word_feature_matrix(corpus.word_list.words, corpus.tokenizer, corpus.table)
    label_sets = {
        g.image_id: extract_semantic_labels(
            g.features, corpus.word_label_features, n=config.top_n, negate=config.negate
        )
        for g in corpus.grids
    }
    return FrozenStack(lm=lm, lm_word_features=features, label_sets=label_sets)


def _caption_supervision(boundary: int, caption: list, vocab: int):
    """Targets/mask under the shifted next-token convention.

    Input text slots hold the full caption (BOS first); the position holding
    caption token t is supervised to predict token t+1, the final one is not.
    """
    length = boundary + len(caption)
    targets = np.zeros(length, dtype=np.int64)
    mask = np.zeros(length, dtype=bool)
    for offset in range(len(caption) - 1):
        targets[boundary + offset] = caption[offset + 1]
        mask[boundary + offset] = True
    return targets, mask


def pretrain_step(batch: list, state: TrainState, config: TrainConfig, frozen: FrozenStack):
    """One optimization step over a batch of (grid, caption) pairs."""
    rng = Rng(config.seed).stream("train", state.step)
    params = state.adapter_params()

    # generation path: captions conditioned on the image's visual tokens
    grads_g = {k: np.zeros_like(np.asarray(v), dtype=np.float64) for k, v in state.params.items()}
    loss_g_total = 0.0
    n_images = len(batch)
    for grid, caption in batch:
        visual, cache = adapter_apply(params, grid.features)
        model_input = build_model_input(visual, caption, frozen.lm.table)
        logits, lm_cache = frozen.lm.forward(model_input)
        targets, mask = _caption_supervision(model_input.boundary, caption, frozen.lm.vocab_size)
        lg = generation_loss(logits, targets, mask)
        loss_g_total += lg.value
        dinputs = frozen.lm.backward_to_input(lm_cache, lg.gradients["logits"])
        param_grads, _ = adapter_backward_cached(params, cache, dinputs[: model_input.boundary])
        for name, g in param_grads.items():
            grads_g[name] += g / n_images
    lg_bundle = LossBundle(value=loss_g_total / n_images, gradients=grads_g)

    # alignment path: contrastive batch over windowed, deduplicated pairs
    pairs = build_alignment_batch(
        [grid for grid, _ in batch],
        [frozen.label_sets[grid.image_id] for grid, _ in batch],
        config.window_k,
        rng,
    )
    n_pairs = len(pairs)
    if n_pairs > 0:
        patch_rows = np.stack([p.feature for p in pairs])
        visual, cache = adapter_apply(params, patch_rows)
        text = frozen.lm_word_features[[p.word_id for p in pairs]]
        la = alignment_loss(visual, text, state.temperature())
        a_param_grads, _ = adapter_backward_cached(params, cache, la.gradients["visual_tokens"])
        la_bundle = LossBundle(
            value=la.value, gradients={**a_param_grads, "log_tau": la.gradients["log_tau"]}
        )
    else:
        zeros = {k: np.zeros_like(np.asarray(v)) for k, v in state.params.items()}
        la_bundle = LossBundle(value=0.0, gradients=zeros)

    if config.lambda_weight == 0.0 or n_pairs == 0:
        total = LossBundle(
            value=lg_bundle.value,
            gradients={**lg_bundle.gradients, "log_tau": np.float64(0.0)},
        )
    else:
        total = combined_loss(lg_bundle, la_bundle, config.lambda_weight)

    lr = cosine_lr(state.step, config)
    new_state = adamw_update(state, total.gradients, lr, config)
    metrics = {
        "step": state.step,
        "loss": total.value,
        "loss_g": lg_bundle.value,
        "loss_a": la_bundle.value,
        "tau": state.temperature().tau,
        "lr": lr,
        "pairs": n_pairs,
    }
    return new_state, metrics


def _epoch_order(n_images: int, epoch: int, seed: int) -> np.ndarray:
    u = Rng(seed).stream("order", epoch).uniform(n_images)
    return np.argsort(u, kind="stable")


def batch_for_step(corpus, step: int, config: TrainConfig) -> list:
    """Deterministic batch: images cycle in per-epoch shuffled order."""
    n = len(corpus.grids)
    batch = []
    for i in range(config.batch_size):
        pos = step * config.batch_size + i
        order = _epoch_order(n, pos // n, config.seed)
        image = int(order[pos % n])
        batch.append((corpus.grids[image], corpus.captions[image]))
    return batch


def checkpoint_tensors(state: TrainState) -> dict:
    tensors = {"meta.step": np.float64(state.step)}
    for group, prefix in ((state.params, "params"), (state.m, "adam_m"), (state.v, "adam_v")):
        for name, value in group.items():
            tensors[f"{prefix}.{name}"] = np.asarray(value, dtype=np.float64)
    return tensors


def save_checkpoint(path, state: TrainState) -> None:
    save_tensors(path, checkpoint_tensors(state))


def load_checkpoint(path, arch: str) -> TrainState:
    tensors = load_tensors(path)
    step = int(tensors.pop("meta.step"))
    groups = {"params": {}, "adam_m": {}, "adam_v": {}}
    for key, value in tensors.items():
        prefix, name = key.split(".", 1)
        stored = np.float64(value) if value.ndim == 0 else value
        groups[prefix][name] = stored
    return TrainState(
        params=groups["params"], m=groups["adam_m"], v=groups["adam_v"], step=step, arch=arch
    )


def run_pretraining(config: TrainConfig, corpus, out_dir, resume_from=None):
    """Train to total_steps, writing periodic checkpoints and a metrics log."""
    if not corpus.grids:
        raise EmptyDatasetError("corpus has no images")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frozen = build_frozen_stack(corpus, config)
    frozen_before = frozen.content_hash(corpus.grids)

    if resume_from is not None:
        state = load_checkpoint(resume_from, config.adapter_arch)
    else:
        state = init_train_state(config, corpus.spec.d_v, corpus.spec.d_llm)

    metrics_path = out / "metrics.jsonl"
    mode = "a" if resume_from is not None else "w"
    last_ckpt = None
    with open(metrics_path, mode, encoding="utf-8") as log:
        while state.step < config.total_steps:
            batch = batch_for_step(corpus, state.step, config)
            state, metrics = pretrain_step(batch, state, config, frozen)
            log.write(json.dumps(metrics) + "\n")
            if state.step % config.checkpoint_every == 0 or state.step == config.total_steps:
                last_ckpt = out / f"ckpt_{state.step:06d}.sea"
                save_checkpoint(last_ckpt, state)
    final = out / f"ckpt_{state.step:06d}.sea"
    if last_ckpt != final:
        save_checkpoint(final, state)
    if frozen.content_hash(corpus.grids) != frozen_before:
        raise RuntimeError("frozen components changed during training")
    return state, final
